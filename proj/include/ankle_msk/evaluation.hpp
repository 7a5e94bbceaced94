#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ankle_msk/trial.hpp"

namespace ankle_msk {

// RMSE divided by the reference range (max - min).
double nrmse(std::span<const double> pred, std::span<const double> ref);
// Squared Pearson correlation.
double r_squared(std::span<const double> pred, std::span<const double> ref);
// 1 - SS_res / SS_tot; can be negative.
double coefficient_of_determination(std::span<const double> pred, std::span<const double> ref);

enum class SegmentMethod { grf, angle, event };

struct SegmentSettings {
  double grf_threshold = 20.0;  // N, heel strike when grf_z rises through it
  double min_length_s = 0.3;    // boundaries closer than this to the previous one are ignored
};

struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

std::vector<Segment> segment_repetitions(const TrialRecording& trial, SegmentMethod method,
                                         const SegmentSettings& settings = {});
// Boundaries from a generic signal: rising crossings of `level`.
std::vector<std::size_t> rising_crossings(std::span<const double> x, double level, std::size_t min_gap);

struct RepetitionSet {
  std::vector<Segment> segments;
  std::vector<std::vector<double>> curves;  // each resampled to `points`
  std::vector<double> mean;
  std::vector<double> sd;  // sample standard deviation, 0 for a single repetition
};

std::vector<double> resample_linear(std::span<const double> curve, std::size_t points);
RepetitionSet normalize_and_average(const std::vector<std::vector<double>>& curves, std::size_t points = 101);
RepetitionSet normalize_and_average(std::span<const double> signal, const std::vector<Segment>& segments,
                                    std::size_t points = 101);

struct MetricReport {
  std::string label;
  double nrmse = 0.0;
  double r_squared = 0.0;
  std::size_t n_repetitions = 0;
  std::size_t n_samples = 0;
};

}  // namespace ankle_msk

#include "ankle_msk/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "ankle_msk/errors.hpp"

namespace ankle_msk {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size()) {
    throw InvalidInput(fmt::format("series lengths differ ({} vs {})", pred.size(), ref.size()));
  }
  if (pred.size() < 2) throw UndefinedMetric("metrics need at least 2 samples");
}

double mean_of(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

}  // namespace

double nrmse(std::span<const double> pred, std::span<const double> ref) {
  check_pair(pred, ref);
  const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw UndefinedMetric("NRMSE undefined for a constant reference");
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - ref[i];
    ss += e * e;
  }
  return std::sqrt(ss / static_cast<double>(pred.size())) / range;
}

double r_squared(std::span<const double> pred, std::span<const double> ref) {
  check_pair(pred, ref);
  const double mp = mean_of(pred);
  const double mr = mean_of(ref);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mp;
    const double dr = ref[i] - mr;
    sxy += dp * dr;
    sxx += dp * dp;
    syy += dr * dr;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedMetric("R^2 undefined for a constant series");
  return std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
}

double coefficient_of_determination(std::span<const double> pred, std::span<const double> ref) {
  check_pair(pred, ref);
  const double mr = mean_of(ref);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (ref[i] - pred[i]) * (ref[i] - pred[i]);
    ss_tot += (ref[i] - mr) * (ref[i] - mr);
  }
  if (!(ss_tot > 0.0)) throw UndefinedMetric("R^2 undefined for a constant reference");
  return 1.0 - ss_res / ss_tot;
}

std::vector<std::size_t> rising_crossings(std::span<const double> x, double level, std::size_t min_gap) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i - 1] < level && x[i] >= level) {
      if (!out.empty() && i - out.back() < min_gap) continue;
      out.push_back(i);
    }
  }
  return out;
}

std::vector<Segment> segment_repetitions(const TrialRecording& trial, SegmentMethod method,
                                         const SegmentSettings& settings) {
  const auto min_gap = static_cast<std::size_t>(std::llround(settings.min_length_s * trial.fs));
  std::vector<std::size_t> bounds;
  switch (method) {
    case SegmentMethod::grf:
      if (!trial.grf_z) throw InvalidInput("grf segmentation needs a grf_z column");
      bounds = rising_crossings(*trial.grf_z, settings.grf_threshold, min_gap);
      break;
    case SegmentMethod::angle: {
      if (trial.ankle_angle.empty()) throw InvalidInput("angle segmentation needs an ankle_angle column");
      bounds = rising_crossings(trial.ankle_angle, mean_of(trial.ankle_angle), min_gap);
      break;
    }
    case SegmentMethod::event:
      if (!trial.event) throw InvalidInput("event segmentation needs an event column");
      for (std::size_t i = 0; i < trial.event->size(); ++i) {
        if ((*trial.event)[i] != 0) bounds.push_back(i);
      }
      break;
  }
  if (bounds.size() < 2) {
    throw SegmentationFailure(fmt::format("found {} repetition boundaries, need at least 2", bounds.size()));
  }
  std::vector<Segment> segs;
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) segs.push_back({bounds[k], bounds[k + 1]});
  return segs;
}

std::vector<double> resample_linear(std::span<const double> curve, std::size_t points) {
  if (curve.empty()) throw InvalidInput("cannot resample an empty curve");
  if (points < 2) throw InvalidInput("resampling needs at least 2 points");
  std::vector<double> out(points);
  if (curve.size() == 1) {
    std::fill(out.begin(), out.end(), curve[0]);
    return out;
  }
  const double scale = static_cast<double>(curve.size() - 1) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    const double pos = static_cast<double>(i) * scale;
    const auto k = std::min(static_cast<std::size_t>(pos), curve.size() - 2);
    const double w = pos - static_cast<double>(k);
    out[i] = curve[k] + w * (curve[k + 1] - curve[k]);
  }
  return out;
}

RepetitionSet normalize_and_average(const std::vector<std::vector<double>>& curves, std::size_t points) {
  if (curves.empty()) throw InvalidInput("need at least one repetition");
  RepetitionSet set;
  for (const auto& c : curves) set.curves.push_back(resample_linear(c, points));
  const auto reps = static_cast<double>(set.curves.size());
  set.mean.assign(points, 0.0);
  set.sd.assign(points, 0.0);
  for (std::size_t i = 0; i < points; ++i) {
    double m = 0.0;
    for (const auto& c : set.curves) m += c[i];
    m /= reps;
    double ss = 0.0;
    for (const auto& c : set.curves) ss += (c[i] - m) * (c[i] - m);
    set.mean[i] = m;
    set.sd[i] = set.curves.size() > 1 ? std::sqrt(ss / (reps - 1.0)) : 0.0;
  }
  return set;
}

RepetitionSet normalize_and_average(std::span<const double> signal, const std::vector<Segment>& segments,
                                    std::size_t points) {
  std::vector<std::vector<double>> curves;
  for (const auto& s : segments) {
    if (s.begin >= s.end || s.end > signal.size()) throw InvalidInput("segment outside the signal");
    curves.emplace_back(signal.begin() + static_cast<std::ptrdiff_t>(s.begin),
                        signal.begin() + static_cast<std::ptrdiff_t>(s.end));
  }
  RepetitionSet set = normalize_and_average(curves, points);
  set.segments = segments;
  return set;
}

}  // namespace ankle_msk

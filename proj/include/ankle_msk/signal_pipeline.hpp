#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ankle_msk {

struct RawEmgSeries {
  std::vector<double> samples;  // V
  double fs = 0.0;              // Hz

  void validate() const;
};

// One second-order section, a0 normalized to 1:
//   y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2]
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  std::complex<double> response(double omega) const;  // omega in rad/sample
  std::array<std::complex<double>, 2> poles() const;
};

enum class FilterKind { highpass, lowpass };

struct FilterSpec {
  FilterKind kind = FilterKind::highpass;
  double fs = 0.0;
  double cutoff = 0.0;
  int order = 0;
  std::vector<Biquad> sections;

  std::complex<double> response(double freq_hz) const;
  double magnitude(double freq_hz) const { return std::abs(response(freq_hz)); }
  // -d(phase)/d(omega) at freq_hz, in seconds.
  double group_delay(double freq_hz) const;
};

// Butterworth designs realized as order/2 biquads through the bilinear
// transform with the cutoff pre-warped. Throws InvalidSpec on a cutoff outside
// (0, fs/2) or an odd / non-positive order.
FilterSpec design_highpass(double fs, double cutoff, int order);
FilterSpec design_lowpass(double fs, double cutoff, int order);

// Streaming transposed direct-form II cascade.
class BiquadCascade {
 public:
  BiquadCascade() = default;
  explicit BiquadCascade(const FilterSpec& spec);

  double step(double x);
  void reset();
  std::vector<double> apply(std::span<const double> x);

 private:
  std::vector<Biquad> sections_;
  std::vector<std::array<double, 2>> state_;
};

// Causal trailing mean over the last `window` samples. The first window-1
// outputs average only the samples seen so far.
class MovingAverage {
 public:
  MovingAverage() = default;
  explicit MovingAverage(std::size_t window);

  double step(double x);
  void reset();
  std::size_t window() const { return buffer_.size(); }

 private:
  std::vector<double> buffer_;
  std::size_t head_ = 0;
  std::size_t filled_ = 0;
  double sum_ = 0.0;
};

std::size_t envelope_window(double fs, double window_ms);

struct ChannelMvc {
  std::string name;
  double constant = 1e-3;  // V, envelope units
  std::array<double, 3> peaks{1e-3, 1e-3, 1e-3};

  void validate() const;
  bool operator==(const ChannelMvc&) const = default;
};

struct MvcCalibration {
  ChannelMvc ta{"emg_ta"};
  ChannelMvc gas{"emg_gas"};
  bool operator==(const MvcCalibration&) const = default;
};

struct EnvelopeSettings {
  double window_ms = 100.0;
  double peak_separation_s = 1.0;
  double peak_threshold = 0.2;  // fraction of global envelope max
};

// High-pass, full-wave rectification and trailing moving average, before
// MVC normalization.
std::vector<double> emg_envelope(const RawEmgSeries& raw, const FilterSpec& filter,
                                 double window_ms = 100.0);

// Three largest envelope peaks at least `peak_separation_s` apart and above
// the threshold. Throws CalibrationFailure naming the channel if fewer exist.
ChannelMvc calibrate_channel(const RawEmgSeries& flex, const FilterSpec& filter,
                             const std::string& channel, const EnvelopeSettings& settings = {});
MvcCalibration calibrate_mvc(const RawEmgSeries& flex_ta, const RawEmgSeries& flex_gas,
                             const FilterSpec& filter, const EnvelopeSettings& settings = {});

struct ExcitationSeries {
  std::vector<double> e;
  double fs = 0.0;
  std::size_t clamped = 0;  // samples that exceeded 1 before clamping
};

// Per-channel streaming state: raw volts in, excitation in [0, 1] out.
class EmgChannel {
 public:
  EmgChannel() = default;
  EmgChannel(const FilterSpec& filter, double window_ms, double mvc_constant);

  double step(double volts);
  double envelope_step(double volts);  // unnormalized, unclamped
  void reset();
  std::size_t clamp_count() const { return clamped_; }

 private:
  BiquadCascade highpass_;
  MovingAverage average_;
  double inv_mvc_ = 1.0;
  std::size_t clamped_ = 0;
};

ExcitationSeries process_emg(const RawEmgSeries& raw, const FilterSpec& filter,
                             const ChannelMvc& mvc, double window_ms = 100.0);

}  // namespace ankle_msk

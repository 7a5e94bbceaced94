#include "ankle_msk/signal_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "ankle_msk/errors.hpp"

namespace ankle_msk {

void RawEmgSeries::validate() const {
  if (!(fs > 0.0) || !std::isfinite(fs)) {
    throw InvalidInput(fmt::format("EMG sample rate must be positive, got {}", fs));
  }
  if (samples.empty()) throw InvalidInput("EMG series is empty");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw InvalidInput(fmt::format("EMG sample {} is not finite", i));
    }
  }
}

std::complex<double> Biquad::response(double omega) const {
  const std::complex<double> z1 = std::polar(1.0, -omega);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

std::array<std::complex<double>, 2> Biquad::poles() const {
  const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2));
  return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
}

std::complex<double> FilterSpec::response(double freq_hz) const {
  const double omega = 2.0 * std::numbers::pi * freq_hz / fs;
  std::complex<double> h{1.0, 0.0};
  for (const auto& s : sections) h *= s.response(omega);
  return h;
}

double FilterSpec::group_delay(double freq_hz) const {
  const double df = 1e-3;
  const double lo = std::arg(response(freq_hz - df));
  const double hi = std::arg(response(freq_hz + df));
  double dphi = hi - lo;
  while (dphi > std::numbers::pi) dphi -= 2.0 * std::numbers::pi;
  while (dphi < -std::numbers::pi) dphi += 2.0 * std::numbers::pi;
  return -dphi / (2.0 * std::numbers::pi * 2.0 * df);
}

namespace {

FilterSpec design_butterworth(FilterKind kind, double fs, double cutoff, int order) {
  if (!(fs > 0.0) || !std::isfinite(fs)) {
    throw InvalidSpec(fmt::format("sample rate must be positive, got {}", fs));
  }
  if (!(cutoff > 0.0) || !(cutoff < fs / 2.0)) {
    throw InvalidSpec(fmt::format("cutoff {} Hz must lie in (0, {}) Hz", cutoff, fs / 2.0));
  }
  if (order < 2 || order % 2 != 0) {
    throw InvalidSpec(fmt::format("filter order must be even and >= 2, got {}", order));
  }

  FilterSpec spec{kind, fs, cutoff, order, {}};
  const double k = std::tan(std::numbers::pi * cutoff / fs);
  const double k2 = k * k;
  for (int i = 1; i <= order / 2; ++i) {
    // Analog prototype pole pair with damping 2 sin((2i-1)pi/2n) = 1/Q.
    const double inv_q = 2.0 * std::sin((2.0 * i - 1.0) * std::numbers::pi / (2.0 * order));
    const double norm = 1.0 / (1.0 + k * inv_q + k2);
    Biquad bq;
    if (kind == FilterKind::highpass) {
      bq.b0 = norm;
      bq.b1 = -2.0 * norm;
      bq.b2 = norm;
    } else {
      bq.b0 = k2 * norm;
      bq.b1 = 2.0 * k2 * norm;
      bq.b2 = k2 * norm;
    }
    bq.a1 = 2.0 * (k2 - 1.0) * norm;
    bq.a2 = (1.0 - k * inv_q + k2) * norm;
    for (const auto& p : bq.poles()) {
      if (!(std::abs(p) < 1.0)) {
        throw InvalidSpec(fmt::format("designed section has pole magnitude {}", std::abs(p)));
      }
    }
    spec.sections.push_back(bq);
  }
  return spec;
}

}  // namespace

FilterSpec design_highpass(double fs, double cutoff, int order) {
  return design_butterworth(FilterKind::highpass, fs, cutoff, order);
}

FilterSpec design_lowpass(double fs, double cutoff, int order) {
  return design_butterworth(FilterKind::lowpass, fs, cutoff, order);
}

BiquadCascade::BiquadCascade(const FilterSpec& spec)
    : sections_(spec.sections), state_(spec.sections.size(), {0.0, 0.0}) {}

double BiquadCascade::step(double x) {
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    const Biquad& s = sections_[i];
    auto& z = state_[i];
    const double y = s.b0 * x + z[0];
    z[0] = s.b1 * x - s.a1 * y + z[1];
    z[1] = s.b2 * x - s.a2 * y;
    x = y;
  }
  return x;
}

void BiquadCascade::reset() {
  for (auto& z : state_) z = {0.0, 0.0};
}

std::vector<double> BiquadCascade::apply(std::span<const double> x) {
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [this](double v) { return step(v); });
  return y;
}

MovingAverage::MovingAverage(std::size_t window) : buffer_(std::max<std::size_t>(window, 1), 0.0) {}

double MovingAverage::step(double x) {
  const std::size_t w = buffer_.size();
  sum_ += x - buffer_[head_];
  buffer_[head_] = x;
  head_ = (head_ + 1) % w;
  if (filled_ < w) ++filled_;
  // Re-sum once per lap so the running sum cannot drift.
  if (head_ == 0) sum_ = std::accumulate(buffer_.begin(), buffer_.end(), 0.0);
  return sum_ / static_cast<double>(filled_);
}

void MovingAverage::reset() {
  std::fill(buffer_.begin(), buffer_.end(), 0.0);
  head_ = 0;
  filled_ = 0;
  sum_ = 0.0;
}

std::size_t envelope_window(double fs, double window_ms) {
  const auto w = static_cast<std::size_t>(std::llround(window_ms * 1e-3 * fs));
  return std::max<std::size_t>(w, 1);
}

void ChannelMvc::validate() const {
  if (!(constant > 0.0) || !std::isfinite(constant)) {
    throw InvalidParameter(fmt::format("MVC constant for {} must be positive, got {}", name, constant));
  }
}

std::vector<double> emg_envelope(const RawEmgSeries& raw, const FilterSpec& filter, double window_ms) {
  raw.validate();
  if (raw.fs != filter.fs) {
    throw InvalidInput(fmt::format("EMG rate {} Hz does not match filter rate {} Hz", raw.fs, filter.fs));
  }
  EmgChannel channel(filter, window_ms, 1.0);
  std::vector<double> env(raw.samples.size());
  std::transform(raw.samples.begin(), raw.samples.end(), env.begin(),
                 [&](double v) { return channel.envelope_step(v); });
  return env;
}

ChannelMvc calibrate_channel(const RawEmgSeries& flex, const FilterSpec& filter,
                             const std::string& channel, const EnvelopeSettings& settings) {
  const std::vector<double> env = emg_envelope(flex, filter, settings.window_ms);
  const double global_max = *std::max_element(env.begin(), env.end());
  const double threshold = settings.peak_threshold * global_max;
  const auto separation = static_cast<std::ptrdiff_t>(std::llround(settings.peak_separation_s * flex.fs));

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < env.size(); ++i) {
    const bool left = i == 0 || env[i] > env[i - 1];
    const bool right = i + 1 == env.size() || env[i] >= env[i + 1];
    if (left && right && env[i] >= threshold && env[i] > 0.0) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return env[a] > env[b]; });

  std::vector<std::size_t> picked;
  for (std::size_t c : candidates) {
    const bool clear = std::all_of(picked.begin(), picked.end(), [&](std::size_t p) {
      return std::abs(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(p)) >= separation;
    });
    if (clear) picked.push_back(c);
    if (picked.size() == 3) break;
  }
  if (picked.size() < 3) {
    throw CalibrationFailure(fmt::format(
        "channel {}: found {} separated envelope peaks, need 3", channel, picked.size()));
  }
  std::sort(picked.begin(), picked.end());

  ChannelMvc mvc;
  mvc.name = channel;
  for (std::size_t i = 0; i < 3; ++i) mvc.peaks[i] = env[picked[i]];
  mvc.constant = (mvc.peaks[0] + mvc.peaks[1] + mvc.peaks[2]) / 3.0;
  return mvc;
}

MvcCalibration calibrate_mvc(const RawEmgSeries& flex_ta, const RawEmgSeries& flex_gas,
                             const FilterSpec& filter, const EnvelopeSettings& settings) {
  return {calibrate_channel(flex_ta, filter, "emg_ta", settings),
          calibrate_channel(flex_gas, filter, "emg_gas", settings)};
}

EmgChannel::EmgChannel(const FilterSpec& filter, double window_ms, double mvc_constant)
    : highpass_(filter), average_(envelope_window(filter.fs, window_ms)) {
  if (!(mvc_constant > 0.0) || !std::isfinite(mvc_constant)) {
    throw InvalidParameter(fmt::format("MVC constant must be positive, got {}", mvc_constant));
  }
  inv_mvc_ = 1.0 / mvc_constant;
}

double EmgChannel::envelope_step(double volts) {
  return average_.step(std::abs(highpass_.step(volts)));
}

double EmgChannel::step(double volts) {
  const double e = envelope_step(volts) * inv_mvc_;
  if (e > 1.0) {
    ++clamped_;
    return 1.0;
  }
  return e;
}

void EmgChannel::reset() {
  highpass_.reset();
  average_.reset();
  clamped_ = 0;
}

ExcitationSeries process_emg(const RawEmgSeries& raw, const FilterSpec& filter,
                             const ChannelMvc& mvc, double window_ms) {
  raw.validate();
  if (raw.fs != filter.fs) {
    throw InvalidInput(fmt::format("EMG rate {} Hz does not match filter rate {} Hz", raw.fs, filter.fs));
  }
  mvc.validate();
  EmgChannel channel(filter, window_ms, mvc.constant);
  ExcitationSeries out;
  out.fs = raw.fs;
  out.e.reserve(raw.samples.size());
  for (double v : raw.samples) out.e.push_back(channel.step(v));
  out.clamped = channel.clamp_count();
  return out;
}

}  // namespace ankle_msk

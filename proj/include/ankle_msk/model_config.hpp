#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ankle_msk/msk_core.hpp"
#include "ankle_msk/signal_pipeline.hpp"

namespace ankle_msk {

enum class VelocityEstimator {
  backward,  // causal; the only estimator the streaming controller supports
  centered,  // offline only, one-sided at the ends
};

struct PipelineSettings {
  double highpass_hz = 40.0;
  int highpass_order = 4;
  double envelope_ms = 100.0;
  MvcCalibration mvc;
  VelocityEstimator velocity = VelocityEstimator::backward;
  double velocity_lowpass_hz = 0.0;  // 0 disables the 2nd-order low-pass

  void validate() const;
  bool operator==(const PipelineSettings&) const = default;
};

struct InputDigest {
  std::string role;
  std::string sha256;
  bool operator==(const InputDigest&) const = default;
};

struct ModelConfig {
  AnkleModel model = AnkleModel::defaults();
  PipelineSettings pipeline;
  std::vector<InputDigest> inputs;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

std::string dump_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text, const std::string& origin);
ModelConfig load_model_config(const std::filesystem::path& path);
void save_model_config(const std::filesystem::path& path, const ModelConfig& config);
// SHA-256 of the canonical document text, without input digests.
std::string model_hash(const ModelConfig& config);

std::string dump_mvc_document(const MvcCalibration& mvc, const std::vector<InputDigest>& inputs);
MvcCalibration parse_mvc_document(const std::string& text, const std::string& origin);
MvcCalibration load_mvc_document(const std::filesystem::path& path);

}  // namespace ankle_msk

#include "ankle_msk/model_config.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ankle_msk/errors.hpp"
#include "ankle_msk/hashing.hpp"
#include "ankle_msk/trial.hpp"
#include "json_doc.hpp"

namespace ankle_msk {

namespace json_doc {

namespace {

constexpr const char* kAngleConvention = "shank_foot_deg_increasing_plantarflexion";
constexpr const char* kTorqueConvention = "dorsiflexion_positive";

}  // namespace

ObjectReader::ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
  if (!j_.is_object()) throw InvalidInput(fmt::format("{}: expected an object", where_));
}

const json& ObjectReader::value(const std::string& key) {
  const auto it = j_.find(key);
  if (it == j_.end()) throw InvalidInput(fmt::format("{}: missing key '{}'", where_, key));
  seen_.insert(key);
  return *it;
}

double ObjectReader::number(const std::string& key) {
  const json& v = value(key);
  if (!v.is_number()) throw InvalidInput(fmt::format("{}.{}: expected a number", where_, key));
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw InvalidInput(fmt::format("{}.{}: not finite", where_, key));
  return d;
}

int ObjectReader::integer(const std::string& key) {
  const json& v = value(key);
  if (!v.is_number_integer()) throw InvalidInput(fmt::format("{}.{}: expected an integer", where_, key));
  return v.get<int>();
}

std::string ObjectReader::string(const std::string& key) {
  const json& v = value(key);
  if (!v.is_string()) throw InvalidInput(fmt::format("{}.{}: expected a string", where_, key));
  return v.get<std::string>();
}

bool ObjectReader::boolean(const std::string& key) {
  const json& v = value(key);
  if (!v.is_boolean()) throw InvalidInput(fmt::format("{}.{}: expected a boolean", where_, key));
  return v.get<bool>();
}

ObjectReader ObjectReader::object(const std::string& key) { return ObjectReader(value(key), where_ + "." + key); }

void ObjectReader::finish() const {
  for (const auto& [key, _] : j_.items()) {
    if (!seen_.contains(key)) throw InvalidInput(fmt::format("{}: unknown key '{}'", where_, key));
  }
}

void expect_format(ObjectReader& r, const std::string& format) {
  const std::string got = r.string("format");
  if (got != format) throw InvalidInput(fmt::format("{}: format is '{}', expected '{}'", r.where(), got, format));
  const int version = r.integer("format_version");
  if (version != kFormatVersion) {
    throw InvalidInput(fmt::format("{}: unsupported format_version {}", r.where(), version));
  }
}

json header(const std::string& format) { return json{{"format", format}, {"format_version", kFormatVersion}}; }

json inputs_to_json(const std::vector<InputDigest>& inputs) {
  json arr = json::array();
  for (const auto& in : inputs) arr.push_back({{"role", in.role}, {"sha256", in.sha256}});
  return arr;
}

std::vector<InputDigest> inputs_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw InvalidInput(fmt::format("{}: expected an array", where));
  std::vector<InputDigest> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    ObjectReader r(j[i], fmt::format("{}[{}]", where, i));
    out.push_back({r.string("role"), r.string("sha256")});
    r.finish();
  }
  return out;
}

json parse_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError(fmt::format("{}: {}", origin, e.what()));
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json muscle_to_json(const MuscleParams& m) {
  return json{{"f_max", m.f_max},     {"l_o", m.l_o},       {"r_max", m.r_max},
              {"theta_max", m.theta_max}, {"theta_ref", m.theta_ref}, {"phi_ref", m.phi_ref},
              {"l_slack", m.l_slack}, {"w", m.w},           {"v_max", m.v_max},
              {"K", m.K},             {"N", m.N},           {"eps_pe", m.eps_pe},
              {"s", m.s},             {"shape_factor", m.shape_factor}};
}

MuscleParams muscle_from_json(ObjectReader r) {
  MuscleParams m;
  m.f_max = r.number("f_max");
  m.l_o = r.number("l_o");
  m.r_max = r.number("r_max");
  m.theta_max = r.number("theta_max");
  m.theta_ref = r.number("theta_ref");
  m.phi_ref = r.number("phi_ref");
  m.l_slack = r.number("l_slack");
  m.w = r.number("w");
  m.v_max = r.number("v_max");
  m.K = r.number("K");
  m.N = r.number("N");
  m.eps_pe = r.number("eps_pe");
  m.s = r.number("s");
  m.shape_factor = r.number("shape_factor");
  r.finish();
  return m;
}

namespace {

json channel_to_json(const ChannelMvc& c) {
  return json{{"constant", c.constant}, {"peaks", json::array({c.peaks[0], c.peaks[1], c.peaks[2]})}};
}

ChannelMvc channel_from_json(ObjectReader r, const std::string& name) {
  ChannelMvc c;
  c.name = name;
  c.constant = r.number("constant");
  const json& peaks = r.value("peaks");
  if (!peaks.is_array() || peaks.size() != 3) {
    throw InvalidInput(fmt::format("{}.peaks: expected 3 numbers", r.where()));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (!peaks[i].is_number()) throw InvalidInput(fmt::format("{}.peaks[{}]: expected a number", r.where(), i));
    c.peaks[i] = peaks[i].get<double>();
  }
  r.finish();
  c.validate();
  return c;
}

}  // namespace

json mvc_to_json(const MvcCalibration& mvc) {
  return json{{"emg_ta", channel_to_json(mvc.ta)}, {"emg_gas", channel_to_json(mvc.gas)}};
}

MvcCalibration mvc_from_json(ObjectReader r) {
  MvcCalibration mvc;
  mvc.ta = channel_from_json(r.object("emg_ta"), "emg_ta");
  mvc.gas = channel_from_json(r.object("emg_gas"), "emg_gas");
  r.finish();
  return mvc;
}

json model_to_json(const ModelConfig& c) {
  json doc = header("ankle_msk.model");
  doc["conventions"] = {{"angle", kAngleConvention}, {"torque", kTorqueConvention}};
  const ActivationParams& a = c.model.activation;
  doc["activation"] = {{"alpha", a.alpha}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"delay_ms", a.delay_ms}};
  doc["muscles"] = {{"dorsiflexor", muscle_to_json(c.model.dorsiflexor)},
                    {"plantarflexor", muscle_to_json(c.model.plantarflexor)}};
  const PipelineSettings& p = c.pipeline;
  doc["pipeline"] = {{"highpass_hz", p.highpass_hz},
                     {"highpass_order", p.highpass_order},
                     {"envelope_ms", p.envelope_ms},
                     {"velocity_estimator", p.velocity == VelocityEstimator::backward ? "backward" : "centered"},
                     {"velocity_lowpass_hz", p.velocity_lowpass_hz},
                     {"mvc", mvc_to_json(p.mvc)}};
  doc["inputs"] = inputs_to_json(c.inputs);
  return doc;
}

ModelConfig model_from_json(const json& doc, const std::string& origin) {
  ObjectReader root(doc, origin);
  expect_format(root, "ankle_msk.model");
  ModelConfig c;
  {
    ObjectReader conv = root.object("conventions");
    if (conv.string("angle") != kAngleConvention || conv.string("torque") != kTorqueConvention) {
      throw InvalidInput(fmt::format("{}: unsupported angle/torque conventions", conv.where()));
    }
    conv.finish();
  }
  {
    ObjectReader a = root.object("activation");
    c.model.activation.alpha = a.number("alpha");
    c.model.activation.beta1 = a.number("beta1");
    c.model.activation.beta2 = a.number("beta2");
    c.model.activation.delay_ms = a.number("delay_ms");
    a.finish();
  }
  {
    ObjectReader m = root.object("muscles");
    c.model.dorsiflexor = muscle_from_json(m.object("dorsiflexor"));
    c.model.plantarflexor = muscle_from_json(m.object("plantarflexor"));
    m.finish();
  }
  {
    ObjectReader p = root.object("pipeline");
    c.pipeline.highpass_hz = p.number("highpass_hz");
    c.pipeline.highpass_order = p.integer("highpass_order");
    c.pipeline.envelope_ms = p.number("envelope_ms");
    const std::string est = p.string("velocity_estimator");
    if (est == "backward") {
      c.pipeline.velocity = VelocityEstimator::backward;
    } else if (est == "centered") {
      c.pipeline.velocity = VelocityEstimator::centered;
    } else {
      throw InvalidInput(fmt::format("{}.velocity_estimator: unknown value '{}'", p.where(), est));
    }
    c.pipeline.velocity_lowpass_hz = p.number("velocity_lowpass_hz");
    c.pipeline.mvc = mvc_from_json(p.object("mvc"));
    p.finish();
  }
  c.inputs = inputs_from_json(root.value("inputs"), origin + ".inputs");
  root.finish();
  c.validate();
  return c;
}

}  // namespace json_doc

void PipelineSettings::validate() const {
  if (!(highpass_hz > 0.0)) throw InvalidParameter(fmt::format("highpass_hz must be positive, got {}", highpass_hz));
  if (highpass_order < 2 || highpass_order % 2 != 0) {
    throw InvalidParameter(fmt::format("highpass_order must be even and >= 2, got {}", highpass_order));
  }
  if (!(envelope_ms > 0.0)) throw InvalidParameter(fmt::format("envelope_ms must be positive, got {}", envelope_ms));
  if (!(velocity_lowpass_hz >= 0.0)) {
    throw InvalidParameter(fmt::format("velocity_lowpass_hz must be >= 0, got {}", velocity_lowpass_hz));
  }
  mvc.ta.validate();
  mvc.gas.validate();
}

void ModelConfig::validate() const {
  model.validate();
  pipeline.validate();
}

std::string dump_model_config(const ModelConfig& config) {
  config.validate();
  return json_doc::dump(json_doc::model_to_json(config));
}

ModelConfig parse_model_config(const std::string& text, const std::string& origin) {
  return json_doc::model_from_json(json_doc::parse_text(text, origin), origin);
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  return parse_model_config(read_file(path), path.string());
}

void save_model_config(const std::filesystem::path& path, const ModelConfig& config) {
  write_file(path, dump_model_config(config));
}

std::string model_hash(const ModelConfig& config) {
  ModelConfig bare = config;
  bare.inputs.clear();
  return sha256_hex(json_doc::model_to_json(bare).dump());
}

std::string dump_mvc_document(const MvcCalibration& mvc, const std::vector<InputDigest>& inputs) {
  json_doc::json doc = json_doc::header("ankle_msk.mvc");
  doc["mvc"] = json_doc::mvc_to_json(mvc);
  doc["inputs"] = json_doc::inputs_to_json(inputs);
  return json_doc::dump(doc);
}

MvcCalibration parse_mvc_document(const std::string& text, const std::string& origin) {
  const auto doc = json_doc::parse_text(text, origin);
  json_doc::ObjectReader root(doc, origin);
  json_doc::expect_format(root, "ankle_msk.mvc");
  MvcCalibration mvc = json_doc::mvc_from_json(root.object("mvc"));
  json_doc::inputs_from_json(root.value("inputs"), origin + ".inputs");
  root.finish();
  return mvc;
}

MvcCalibration load_mvc_document(const std::filesystem::path& path) {
  return parse_mvc_document(read_file(path), path.string());
}

}  // namespace ankle_msk

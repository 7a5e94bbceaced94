// Command-line front end: mvc, fit, predict, eval, synth, serve, plus init
// (write the default model) and stream (replay a trial against a server).

#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include "ankle_msk/errors.hpp"
#include "ankle_msk/evaluation.hpp"
#include "ankle_msk/fitting.hpp"
#include "ankle_msk/hashing.hpp"
#include "ankle_msk/kernels.hpp"
#include "ankle_msk/rt_service.hpp"
#include "ankle_msk/synth.hpp"

namespace fs = std::filesystem;
using namespace ankle_msk;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultSeed = 20220711;

ModelConfig model_or_default(const std::string& path) {
  return path.empty() ? ModelConfig{} : load_model_config(path);
}

InputDigest digest(const std::string& role, const fs::path& path) { return {role, file_sha256(path)}; }

std::vector<std::string> input_comments(const std::vector<InputDigest>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) out.push_back(fmt::format("input {} sha256={}", in.role, in.sha256));
  return out;
}

const std::vector<double>* find_column(const CsvTable& t, const std::string& name) {
  for (const auto& c : t.columns) {
    if (c.name == name) return &c.values;
  }
  return nullptr;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("ankle_msk");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("ANKLE_MSK_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

// --- mvc --------------------------------------------------------------------

struct MvcArgs {
  std::vector<std::string> data;
  std::string model, out;
};

void run_mvc(const MvcArgs& a) {
  ModelConfig config = model_or_default(a.model);
  LoadOptions opts;
  opts.require_angle = false;
  const TrialRecording ta = load_trial(a.data.at(0), opts);
  const TrialRecording gas = a.data.size() > 1 ? load_trial(a.data[1], opts) : ta;
  if (ta.fs != gas.fs) throw InvalidInput("MVC recordings have different sample rates");
  const FilterSpec hp = design_highpass(ta.fs, config.pipeline.highpass_hz, config.pipeline.highpass_order);
  EnvelopeSettings env;
  env.window_ms = config.pipeline.envelope_ms;
  const MvcCalibration mvc = calibrate_mvc({ta.emg_ta, ta.fs}, {gas.emg_gas, gas.fs}, hp, env);
  spdlog::info("MVC constants: emg_ta {:.6g} V, emg_gas {:.6g} V", mvc.ta.constant, mvc.gas.constant);

  std::vector<InputDigest> inputs{digest("mvc_ta", a.data[0])};
  if (a.data.size() > 1) inputs.push_back(digest("mvc_gas", a.data[1]));
  if (a.model.empty()) {
    write_file(a.out, dump_mvc_document(mvc, inputs));
    return;
  }
  inputs.push_back(digest("base_model", a.model));
  config.pipeline.mvc = mvc;
  config.inputs = inputs;
  save_model_config(a.out, config);
}

// --- fit --------------------------------------------------------------------

struct FitArgs {
  std::vector<std::string> data;
  std::string model, out, report;
  std::uint64_t seed = kDefaultSeed;
  int starts = 64;
  int max_evals = 2000;
  unsigned threads = 0;
  bool fit_shape = false;
};

void run_fit(const FitArgs& a) {
  const ModelConfig base = model_or_default(a.model);
  std::vector<TrialRecording> trials;
  std::vector<InputDigest> inputs;
  for (const auto& p : a.data) {
    trials.push_back(load_trial(p));
    inputs.push_back({"trial", trials.back().source_sha256});
  }
  if (!a.model.empty()) inputs.push_back(digest("base_model", a.model));

  FitConfig fc;
  fc.n_starts = a.starts;
  fc.seed = a.seed;
  fc.max_evaluations = a.max_evals;
  fc.threads = a.threads;
  fc.fit_shape = a.fit_shape;
  spdlog::info("fitting {} trial(s), {} starts, seed {}, kernel {}", trials.size(), fc.n_starts, fc.seed,
               kernels::isa_name(kernels::active_isa()));
  const FitResult r = fit_trials(trials, base, fc);
  ModelConfig fitted = apply_fit(r, base);
  fitted.inputs = inputs;
  save_model_config(a.out, fitted);
  if (!a.report.empty()) write_file(a.report, dump_fit_report(r, inputs));
}

// --- predict ----------------------------------------------------------------

struct PredictArgs {
  std::string data, model, out;
};

void run_predict(const PredictArgs& a) {
  const ModelConfig config = load_model_config(a.model);
  const TrialRecording trial = load_trial(a.data);
  const Prediction p = predict_trial(trial, config);
  if (p.clamped) spdlog::warn("{} excitation samples exceeded the MVC constant and were clamped to 1", p.clamped);

  CsvTable t;
  t.comments.push_back(fmt::format("format ankle_msk.prediction {}", kFormatVersion));
  t.comments.push_back(fmt::format("model {}", model_hash(config)));
  for (const auto& c : input_comments({{"trial", trial.source_sha256}, digest("model", a.model)})) t.comments.push_back(c);
  t.columns = {{"time", trial.time}, {"tau_pred", p.tau}, {"a_ta", p.a_ta},     {"a_gas", p.a_gas},
               {"u_ta", p.u_ta},     {"u_gas", p.u_gas}, {"omega", p.omega}};
  write_csv(a.out, t);
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string data, ref, out, curves, segment, label = "trial", r2 = "pearson";
  double skip_s = 0.0;
};

json metrics_json(std::span<const double> pred, std::span<const double> ref, bool pearson) {
  return json{{"nrmse", nrmse(pred, ref)},
              {"r_squared", pearson ? r_squared(pred, ref) : coefficient_of_determination(pred, ref)},
              {"n_samples", pred.size()}};
}

void run_eval(const EvalArgs& a) {
  const std::string ref_path = a.ref.empty() ? a.data : a.ref;
  const CsvTable pred_table = read_csv(a.data);
  LoadOptions opts;
  opts.require_angle = false;
  const TrialRecording ref_trial = load_trial(ref_path, opts);
  if (!ref_trial.torque_ref) throw InvalidInput(fmt::format("{} has no ankle_torque_ref column", ref_path));

  const std::vector<double>* pred = find_column(pred_table, "tau_pred");
  if (!pred) pred = find_column(pred_table, "ankle_torque_ref");
  if (!pred) throw InvalidInput(fmt::format("{} has neither tau_pred nor ankle_torque_ref", a.data));
  const std::vector<double>& ref = *ref_trial.torque_ref;
  if (pred->size() != ref.size()) {
    throw InvalidInput(fmt::format("prediction has {} rows, reference {}", pred->size(), ref.size()));
  }
  const auto skip = std::min(ref.size(), static_cast<std::size_t>(std::llround(a.skip_s * ref_trial.fs)));
  const bool pearson = a.r2 == "pearson";

  json report{{"format", "ankle_msk.metric_report"}, {"format_version", kFormatVersion}, {"task", a.label}};
  report["r_squared_definition"] = pearson ? "squared_pearson" : "coefficient_of_determination";
  report["skip_s"] = a.skip_s;
  report["overall"] = metrics_json(std::span(*pred).subspan(skip), std::span(ref).subspan(skip), pearson);

  if (!a.segment.empty()) {
    const SegmentMethod method = a.segment == "grf" ? SegmentMethod::grf
                                 : a.segment == "angle" ? SegmentMethod::angle
                                                        : SegmentMethod::event;
    std::vector<Segment> segs;
    for (const Segment& s : segment_repetitions(ref_trial, method)) {
      if (s.begin >= skip) segs.push_back(s);
    }
    if (segs.empty()) throw SegmentationFailure("no complete repetition after the skipped interval");
    const RepetitionSet ps = normalize_and_average(*pred, segs);
    const RepetitionSet rs = normalize_and_average(ref, segs);
    json m = metrics_json(ps.mean, rs.mean, pearson);
    m["n_repetitions"] = segs.size();
    report["mean_curve"] = m;
    if (!a.curves.empty()) {
      CsvTable t;
      t.comments.push_back(fmt::format("format ankle_msk.curves {}", kFormatVersion));
      std::vector<double> pct(ps.mean.size());
      for (std::size_t i = 0; i < pct.size(); ++i) pct[i] = 100.0 * static_cast<double>(i) / static_cast<double>(pct.size() - 1);
      t.columns = {{"percent", pct}, {"pred_mean", ps.mean}, {"pred_sd", ps.sd}, {"ref_mean", rs.mean}, {"ref_sd", rs.sd}};
      for (const auto& c : input_comments({digest("prediction", a.data), digest("reference", ref_path)})) {
        t.comments.push_back(c);
      }
      write_csv(a.curves, t);
    }
  }
  json inputs = json::array();
  inputs.push_back({{"role", "prediction"}, {"sha256", file_sha256(a.data)}});
  inputs.push_back({{"role", "reference"}, {"sha256", ref_trial.source_sha256}});
  report["inputs"] = inputs;

  const auto& o = report["overall"];
  fmt::print("{}: NRMSE {:.4f}  R^2 {:.4f}  ({} samples)\n", a.label, o["nrmse"].get<double>(),
             o["r_squared"].get<double>(), o["n_samples"].get<std::size_t>());
  if (report.contains("mean_curve")) {
    const auto& m = report["mean_curve"];
    fmt::print("{} mean curve: NRMSE {:.4f}  R^2 {:.4f}  ({} repetitions)\n", a.label, m["nrmse"].get<double>(),
               m["r_squared"].get<double>(), m["n_repetitions"].get<std::size_t>());
  }
  if (!a.out.empty()) write_file(a.out, report.dump(2) + "\n");
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string model, profile, out;
  std::uint64_t seed = kDefaultSeed;
  std::optional<double> noise;
};

void run_synth(const SynthArgs& a) {
  const ModelConfig config = model_or_default(a.model);
  SyntheticProfile profile = load_profile(a.profile);
  if (a.noise) profile.noise_level = *a.noise;
  const TrialRecording trial = generate_trial(config, profile, a.seed);
  CsvTable t = trial_to_table(trial);
  t.comments.push_back(fmt::format("format ankle_msk.trial {}", kFormatVersion));
  t.comments.push_back(fmt::format("seed {}", a.seed));
  t.comments.push_back(fmt::format("model {}", model_hash(config)));
  std::vector<InputDigest> inputs{digest("profile", a.profile)};
  if (!a.model.empty()) inputs.push_back(digest("model", a.model));
  for (const auto& c : input_comments(inputs)) t.comments.push_back(c);
  write_csv(a.out, t);
}

// --- serve / stream ---------------------------------------------------------

struct ServeArgs {
  std::string model, address = "127.0.0.1", plant = "torque";
  int port = 7878;
  double rate = 1000.0;
};

void run_serve(const ServeArgs& a) {
  ServiceConfig sc;
  sc.address = a.address;
  sc.port = static_cast<std::uint16_t>(a.port);
  sc.rate_hz = a.rate;
  sc.plant.mode = a.plant == "impedance" ? PlantMode::impedance_angle : PlantMode::torque_tracking;

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Server server(model_or_default(a.model), sc);
  server.start();
  fmt::print("listening on {}:{}\n", a.address, server.port());
  std::fflush(stdout);
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {}, shutting down", sig);
  server.stop();
}

struct StreamArgs {
  std::string data, out, host = "127.0.0.1", stats;
  int port = 7878;
  double rate = 1000.0;
};

void run_stream(const StreamArgs& a) {
  const TrialRecording trial = load_trial(a.data);
  if (trial.fs != a.rate) {
    throw InvalidInput(fmt::format("trial rate {} Hz does not match --rate {} Hz", trial.fs, a.rate));
  }
  Client client(a.host, static_cast<std::uint16_t>(a.port));
  const std::string hash = client.handshake(a.rate);
  const std::size_t n = trial.size();
  std::vector<double> tau_cmd(n), tau_meas(n), theta(n), a_ta(n), a_gas(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TickOutput o = client.tick({trial.time[i], trial.emg_ta[i], trial.emg_gas[i], trial.ankle_angle[i]});
    tau_cmd[i] = o.tau_cmd;
    tau_meas[i] = o.tau_meas;
    theta[i] = o.theta_plant;
    a_ta[i] = o.a_ta;
    a_gas[i] = o.a_gas;
  }
  const SessionStats s = client.stats();
  client.close();
  fmt::print("{} ticks, {} deadline misses, {} faults, latency p50 {} us, p99 {} us, max {} us\n", s.ticks,
             s.deadline_misses, s.faults, s.p50_us, s.p99_us, s.max_us);

  CsvTable t;
  t.comments.push_back(fmt::format("format ankle_msk.stream {}", kFormatVersion));
  t.comments.push_back(fmt::format("model {}", hash));
  t.comments.push_back(fmt::format("input trial sha256={}", trial.source_sha256));
  t.columns = {{"time", trial.time}, {"tau_cmd", tau_cmd}, {"tau_meas", tau_meas},
               {"theta_plant", theta}, {"a_ta", a_ta},      {"a_gas", a_gas}};
  write_csv(a.out, t);
  if (!a.stats.empty()) write_file(a.stats, protocol::format_stats(s) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"EMG-driven musculoskeletal ankle torque model"};
  app.require_subcommand(1);

  std::string init_out;
  auto* init = app.add_subcommand("init", "Write the default model configuration");
  init->add_option("--out", init_out, "Output model file")->required();

  MvcArgs mvc;
  auto* mvc_cmd = app.add_subcommand("mvc", "Calibrate MVC constants from maximal-contraction recordings");
  mvc_cmd->add_option("--data", mvc.data, "Recording(s): one file for both channels, or TA then GAS")
      ->required()
      ->expected(1, 2)
      ->check(CLI::ExistingFile);
  mvc_cmd->add_option("--model", mvc.model, "Model to update; without it an MVC document is written");
  mvc_cmd->add_option("--out", mvc.out, "Output file")->required();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit muscle parameters to trials");
  fit_cmd->add_option("--data", fit.data, "Training trial(s)")->required()->expected(1, -1);
  fit_cmd->add_option("--model", fit.model, "Base model (defaults if omitted)");
  fit_cmd->add_option("--out", fit.out, "Fitted model file")->required();
  fit_cmd->add_option("--report", fit.report, "Fit report file");
  fit_cmd->add_option("--seed", fit.seed, "Random seed")->capture_default_str();
  fit_cmd->add_option("--starts", fit.starts, "Number of multistart points")->capture_default_str()->check(CLI::PositiveNumber);
  fit_cmd->add_option("--max-evals", fit.max_evals, "Objective evaluations per start")->capture_default_str();
  fit_cmd->add_option("--threads", fit.threads, "Worker threads (0 = all cores)");
  fit_cmd->add_flag("--fit-shape", fit.fit_shape, "Also fit the activation shape factors");

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Predict ankle torque for a trial");
  pred_cmd->add_option("--data", pred.data, "Trial file")->required();
  pred_cmd->add_option("--model", pred.model, "Model file")->required();
  pred_cmd->add_option("--out", pred.out, "Prediction CSV")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against a reference torque");
  eval_cmd->add_option("--data", ev.data, "Prediction CSV (tau_pred, else ankle_torque_ref)")->required();
  eval_cmd->add_option("--ref", ev.ref, "Reference trial (defaults to --data)");
  eval_cmd->add_option("--out", ev.out, "Metric report file");
  eval_cmd->add_option("--curves", ev.curves, "Mean and SD curves CSV (needs --segment)");
  eval_cmd->add_option("--segment", ev.segment, "Repetition segmentation")->check(CLI::IsMember({"grf", "angle", "event"}));
  eval_cmd->add_option("--skip", ev.skip_s, "Seconds excluded at the start")->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--label", ev.label, "Task label");
  eval_cmd->add_option("--r2", ev.r2, "R^2 definition")->check(CLI::IsMember({"pearson", "cod"}))->capture_default_str();

  SynthArgs syn;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic trial with known ground truth");
  synth_cmd->add_option("--profile", syn.profile, "Profile file")->required();
  synth_cmd->add_option("--model", syn.model, "Model (defaults if omitted)");
  synth_cmd->add_option("--out", syn.out, "Trial CSV")->required();
  synth_cmd->add_option("--seed", syn.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--noise", syn.noise, "Override the profile's torque noise level")->check(CLI::NonNegativeNumber);

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the streaming torque controller");
  serve_cmd->add_option("--model", serve.model, "Model (defaults if omitted)");
  serve_cmd->add_option("--port", serve.port, "TCP port (0 = any)")->capture_default_str();
  serve_cmd->add_option("--address", serve.address, "IPv4 address")->capture_default_str();
  serve_cmd->add_option("--rate", serve.rate, "Control rate in Hz")->capture_default_str();
  serve_cmd->add_option("--plant", serve.plant, "Virtual plant mode")->check(CLI::IsMember({"torque", "impedance"}));

  StreamArgs st;
  auto* stream_cmd = app.add_subcommand("stream", "Replay a trial through a running server");
  stream_cmd->add_option("--data", st.data, "Trial file")->required();
  stream_cmd->add_option("--out", st.out, "Response CSV")->required();
  stream_cmd->add_option("--stats", st.stats, "Session statistics file");
  stream_cmd->add_option("--host", st.host, "Server address")->capture_default_str();
  stream_cmd->add_option("--port", st.port, "Server port")->capture_default_str();
  stream_cmd->add_option("--rate", st.rate, "Control rate in Hz")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*init) save_model_config(init_out, ModelConfig{});
    if (*mvc_cmd) run_mvc(mvc);
    if (*fit_cmd) run_fit(fit);
    if (*pred_cmd) run_predict(pred);
    if (*eval_cmd) run_eval(ev);
    if (*synth_cmd) run_synth(syn);
    if (*serve_cmd) run_serve(serve);
    if (*stream_cmd) run_stream(st);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}

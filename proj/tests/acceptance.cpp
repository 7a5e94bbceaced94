// Acceptance checks: one PASS/FAIL line per criterion. Criteria 5, 6, 8 and
// 10 drive the command-line tool end to end.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "ankle_msk/activation.hpp"
#include "ankle_msk/evaluation.hpp"
#include "ankle_msk/hashing.hpp"
#include "ankle_msk/msk_core.hpp"
#include "ankle_msk/rt_service.hpp"
#include "ankle_msk/signal_pipeline.hpp"
#include "ankle_msk/trial.hpp"

namespace fs = std::filesystem;
using namespace ankle_msk;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kSource = ANKLE_MSK_SOURCE_DIR;
int g_failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  fmt::print("{} [{}] {}: {}\n", ok ? "PASS" : "FAIL", id, name, detail);
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = fmt::format("{} {} >>{} 2>&1", ANKLE_MSK_CLI, args, log.string());
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void cli_or_throw(const std::string& args, const fs::path& log) {
  if (const int rc = cli(args, log); rc != 0) {
    throw std::runtime_error(fmt::format("'{}' exited with {} (see {})", args, rc, log.string()));
  }
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

const std::vector<double>& column(const CsvTable& t, const std::string& name) {
  for (const auto& c : t.columns) {
    if (c.name == name) return c.values;
  }
  throw std::runtime_error("missing column " + name);
}

void guarded(int id, const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, e.what());
  }
}

// 1 -------------------------------------------------------------------------
void geometry() {
  const auto t0 = Clock::now();
  const AnkleModel m = AnkleModel::defaults();
  double worst = 0.0;
  for (const MuscleParams* mp : {&m.plantarflexor, &m.dorsiflexor}) {
    for (int i = 0; i < 200; ++i) {
      const double th = 70.0 + 60.0 * i / 199.0;
      const double h = 1e-4;
      const double fd = (mtu_length(th + h, *mp) - mtu_length(th - h, *mp)) / (2.0 * h * std::numbers::pi / 180.0);
      const double want = -mp->s * moment_arm(th, *mp);
      worst = std::max(worst, std::abs(fd - want) / std::abs(want));
    }
  }
  const double dt = seconds_since(t0);
  report(1, "geometry consistency", worst <= 1e-6 && dt < 1.0,
         fmt::format("max relative error {:.3g} over 400 points (limit 1e-6), {:.4f} s", worst, dt));
}

// 2 -------------------------------------------------------------------------
void hill_curves() {
  const MuscleParams mp = AnkleModel::defaults().plantarflexor;
  const double lo = mp.l_o;
  const double e1 = std::exp(-1.0);
  const double fl_peak = force_length(lo, mp);
  const double fl_hi = force_length(lo * 1.56, mp);
  const double fl_lo = force_length(lo * 0.44, mp);
  const double fv_ecc0 = force_velocity(0.0, mp);
  const double fv_con0 = force_velocity(-std::numeric_limits<double>::denorm_min(), mp);
  const double fv_vmax = force_velocity(mp.v_max, mp);
  const double fv_m5 = force_velocity(-5.0, mp);
  const double fv_p2 = force_velocity(2.0, mp);
  const double fpe = passive_force(lo * 1.56, mp);
  const bool ok = fl_peak == 1.0 && std::abs(fl_hi - e1) <= 1e-6 && std::abs(fl_lo - e1) <= 1e-6 &&
                  std::abs(fv_ecc0 - 1.0) < 1e-12 && std::abs(fv_con0 - 1.0) < 1e-12 &&
                  std::abs(fv_ecc0 - fv_con0) < 1e-12 && fv_vmax == 0.0 && std::abs(fv_m5 - 1.0 / 7.0) <= 1e-5 &&
                  std::abs(fv_p2 - 1.45327) <= 1e-5 && std::abs(fpe - mp.f_max) <= 1e-9 * mp.f_max;
  report(2, "Hill-curve fixtures", ok,
         fmt::format("F_l(l_o)={} F_l(1.56 l_o)={:.9f} F_l(0.44 l_o)={:.9f} F_v(0)={}|{} F_v(v_max)={} "
                     "F_v(-5)={:.8f} F_v(+2)={:.8f} F_pe(1.56 l_o)/F_max={:.12f}",
                     fl_peak, fl_hi, fl_lo, fv_ecc0, fv_con0, fv_vmax, fv_m5, fv_p2, fpe / mp.f_max));
}

// 3 -------------------------------------------------------------------------
void activation() {
  const ActivationParams p;
  auto poles = p.poles();
  double m0 = std::abs(poles[0]), m1 = std::abs(poles[1]);
  if (m0 < m1) std::swap(m0, m1);

  NeuralActivation step(p, 1000.0);
  double u_ss = 0.0;
  for (int i = 0; i < 1000; ++i) u_ss = step.step(1.0).u_raw;

  NeuralActivation imp(p, 1000.0);
  const auto d = static_cast<int>(p.delay_samples(1000.0));
  int first = -1;
  for (int i = 0; i < 200 && first < 0; ++i) {
    if (imp.step(i == 0 ? 1.0 : 0.0).u_raw != 0.0) first = i;
  }
  const bool ok = std::abs(m0 - 0.0405) <= 1e-3 && std::abs(m1 - 0.0155) <= 1e-3 &&
                  std::abs(u_ss - 1.0042) <= 1e-4 && first == d;
  report(3, "activation recursion", ok,
         fmt::format("poles {:.6f}, {:.6f}; pre-clamp steady state {:.7f}; impulse at sample {} (d = {})", m0, m1,
                     u_ss, first, d));
}

// 4 -------------------------------------------------------------------------
double script_static_torque() {
  const std::string cmd = fmt::format("python3 {} 2>/dev/null", (kSource / "tests/oracles/msk_fixtures.py").string());
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) throw std::runtime_error("cannot run the oracle script");
  std::string out;
  std::array<char, 256> buf{};
  while (fgets(buf.data(), buf.size(), pipe.get())) out += buf.data();
  const auto pos = out.find("static torque");
  if (pos == std::string::npos) throw std::runtime_error("oracle script printed no static torque");
  return std::stod(out.substr(out.find('=', out.find(')', pos)) + 1));
}

void static_torque() {
  const double lib = ankle_torque(0.0, 1.0, 90.0, 0.0, AnkleModel::defaults());
  const double script = script_static_torque();
  const bool ok = std::abs(script + 131.2) <= 0.5 && std::abs(lib + 131.2) <= 0.5 && std::abs(lib - script) <= 1e-5;
  report(4, "static torque fixture", ok,
         fmt::format("library {:.6f} N m, independent script {:.6f} N m (fixture -131.2 +/- 0.5)", lib, script));
}

// 5 -------------------------------------------------------------------------
struct RoundTripFiles {
  fs::path trial, pred, report;
};

RoundTripFiles round_trip(const fs::path& dir, const fs::path& model, double& elapsed) {
  const fs::path log = dir / "cli.log";
  RoundTripFiles f{dir / "synth.csv", dir / "pred.csv", dir / "metrics.json"};
  const auto t0 = Clock::now();
  cli_or_throw(fmt::format("synth --profile {} --model {} --seed 101 --noise 0 --out {}",
                           (kSource / "profiles/walking.json").string(), model.string(), f.trial.string()),
               log);
  cli_or_throw(fmt::format("predict --data {} --model {} --out {}", f.trial.string(), model.string(), f.pred.string()),
               log);
  cli_or_throw(fmt::format("eval --data {} --ref {} --skip 0.2 --segment grf --out {}", f.pred.string(),
                           f.trial.string(), f.report.string()),
               log);
  elapsed = seconds_since(t0);
  return f;
}

void oracle_round_trip(const fs::path& dir, const fs::path& model) {
  double dt = 0.0;
  const RoundTripFiles f = round_trip(dir, model, dt);
  const json r = read_json(f.report);
  const double e = r["overall"]["nrmse"], r2 = r["overall"]["r_squared"];
  const std::size_t n = read_csv(f.trial).columns.front().values.size();
  const bool ok = e <= 0.01 && r2 >= 0.999 && dt < 10.0 && n == 30000;
  report(5, "oracle round trip", ok,
         fmt::format("NRMSE {:.5f} (<= 0.01), R^2 {:.6f} (>= 0.999), first 200 ms skipped, {} samples, {:.2f} s", e,
                     r2, n, dt));
}

// 6 -------------------------------------------------------------------------
struct FitFiles {
  fs::path train, fitted, fit_report, heldout, pred, metrics;
};

FitFiles fit_recovery_run(const fs::path& dir, double& elapsed) {
  const fs::path log = dir / "cli.log";
  FitFiles f{dir / "train.csv",   dir / "fitted.json", dir / "fit_report.json",
             dir / "heldout.csv", dir / "heldout_pred.csv", dir / "heldout_metrics.json"};
  const auto t0 = Clock::now();
  cli_or_throw(fmt::format("synth --profile {} --seed 202 --noise 0.05 --out {}",
                           (kSource / "profiles/walking.json").string(), f.train.string()),
               log);
  cli_or_throw(fmt::format("fit --data {} --starts 64 --seed 20220711 --out {} --report {}", f.train.string(),
                           f.fitted.string(), f.fit_report.string()),
               log);
  cli_or_throw(fmt::format("synth --profile {} --seed 303 --out {}", (kSource / "profiles/heldout.json").string(),
                           f.heldout.string()),
               log);
  cli_or_throw(fmt::format("predict --data {} --model {} --out {}", f.heldout.string(), f.fitted.string(),
                           f.pred.string()),
               log);
  cli_or_throw(fmt::format("eval --data {} --ref {} --skip 0.2 --out {}", f.pred.string(), f.heldout.string(),
                           f.metrics.string()),
               log);
  elapsed = seconds_since(t0);
  return f;
}

void fit_recovery(const fs::path& dir) {
  double dt = 0.0;
  const FitFiles f = fit_recovery_run(dir, dt);
  const json r = read_json(f.metrics);
  const double e = r["overall"]["nrmse"], r2 = r["overall"]["r_squared"];

  // Fit parameter limits.
  struct Limit {
    const char* muscle;
    const char* key;
    double lo, hi;
  };
  const Limit limits[] = {{"plantarflexor", "f_max", 500, 6000}, {"plantarflexor", "l_o", 0.02, 0.06},
                          {"plantarflexor", "r_max", 0.01, 0.065}, {"plantarflexor", "theta_ref", 70, 130},
                          {"plantarflexor", "theta_max", 70, 130}, {"dorsiflexor", "f_max", 500, 4000},
                          {"dorsiflexor", "l_o", 0.02, 0.145},     {"dorsiflexor", "r_max", 0.01, 0.065},
                          {"dorsiflexor", "theta_ref", 70, 130},   {"dorsiflexor", "theta_max", 70, 130}};
  const json model = read_json(f.fitted);
  std::string outside;
  for (const auto& l : limits) {
    const double v = model["muscles"][l.muscle][l.key];
    if (!(v >= l.lo && v <= l.hi)) outside += fmt::format(" {}.{}={}", l.muscle, l.key, v);
  }
  const json fr = read_json(f.fit_report);
  const bool ok = e <= 0.05 && r2 >= 0.98 && outside.empty() && fr["starts"].size() == 64 && dt < 300.0;
  report(6, "fit recovery", ok,
         fmt::format("held-out NRMSE {:.5f} (<= 0.05), R^2 {:.6f} (>= 0.98), {} starts, parameters {}, {:.1f} s", e,
                     r2, fr["starts"].size(), outside.empty() ? "within bounds" : "outside:" + outside, dt));
}

// 7 -------------------------------------------------------------------------
void metric_fixtures() {
  std::vector<double> ref(1000), pred(1000);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    ref[i] = 30.0 * std::sin(0.013 * i) + 5.0 * std::cos(0.071 * i);
    pred[i] = ref[i] + 2.0 * std::sin(0.29 * i + 1.0);
  }
  const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
  const double c = 1.75;
  std::vector<double> shifted = ref;
  for (auto& v : shifted) v += c;
  const double e_shift = std::abs(nrmse(shifted, ref) - c / (*hi - *lo));
  std::vector<double> affine = pred;
  for (auto& v : affine) v = -3.5 * v + 12.0;
  const double e_affine = std::abs(r_squared(affine, ref) - r_squared(pred, ref));
  report(7, "metric sanity fixtures", e_shift <= 1e-12 && e_affine <= 1e-12,
         fmt::format("|nrmse(ref+c) - c/range| = {:.2e}, |R^2(a*pred+b) - R^2(pred)| = {:.2e}", e_shift, e_affine));
}

// 8 -------------------------------------------------------------------------
fs::path stream_run(const fs::path& dir, const fs::path& trial, const fs::path& model, const fs::path& stats) {
  ServiceConfig sc;
  sc.port = 0;
  Server server(load_model_config(model), sc);
  server.start();
  const fs::path out = dir / "stream.csv";
  cli_or_throw(fmt::format("stream --data {} --port {} --rate 1000 --out {} --stats {}", trial.string(),
                           server.port(), out.string(), stats.string()),
               dir / "cli.log");
  server.stop();
  return out;
}

void online_offline(const fs::path& dir, const fs::path& round_trip_dir, const fs::path& model) {
  const fs::path stats_path = dir / "stats.json";
  const fs::path out = stream_run(dir, round_trip_dir / "synth.csv", model, stats_path);
  const auto& streamed = column(read_csv(out), "tau_cmd");
  const auto& batch = column(read_csv(round_trip_dir / "pred.csv"), "tau_pred");
  double worst = streamed.size() == batch.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(streamed.size(), batch.size()); ++i) {
    worst = std::max(worst, std::abs(streamed[i] - batch[i]));
  }
  const SessionStats s = protocol::parse_stats(read_file(stats_path));
  const bool ok = worst <= 1e-9 && s.deadline_misses == 0 && s.p50_us < 100 && s.p99_us < 1000 &&
                  s.ticks == batch.size();
  report(8, "online/offline equivalence", ok,
         fmt::format("{} ticks, max |stream - batch| = {:.3g} N m, {} deadline misses, latency p50 {} us, p99 {} us",
                     s.ticks, worst, s.deadline_misses, s.p50_us, s.p99_us));
}

// 9 -------------------------------------------------------------------------
void filter_spec() {
  const FilterSpec hp = design_highpass(1000.0, 40.0, 4);
  const double h40 = hp.magnitude(40.0);
  double worst_low = 0.0;
  for (double f = 0.01; f < 5.0; f += 0.01) worst_low = std::max(worst_low, hp.magnitude(f));
  worst_low = std::max(worst_low, hp.magnitude(4.999999));
  report(9, "filter spec", std::abs(h40 - 0.7071) <= 0.007 && worst_low < 0.01,
         fmt::format("|H(40 Hz)| = {:.6f}, max |H| below 5 Hz = {:.3e}", h40, worst_low));
}

// 10 ------------------------------------------------------------------------
void determinism(const fs::path& base, const fs::path& model) {
  const fs::path a = base / "c5", b = base / "rerun5";
  const fs::path fa = base / "c6", fb = base / "rerun6";
  const fs::path sa = base / "c8", sb = base / "rerun8";
  for (const auto& d : {b, fb, sb}) fs::create_directories(d);
  double dt = 0.0;
  round_trip(b, model, dt);
  fit_recovery_run(fb, dt);
  stream_run(sb, b / "synth.csv", model, sb / "stats.json");

  const std::vector<std::pair<fs::path, fs::path>> pairs{
      {a / "synth.csv", b / "synth.csv"},          {a / "pred.csv", b / "pred.csv"},
      {a / "metrics.json", b / "metrics.json"},    {fa / "train.csv", fb / "train.csv"},
      {fa / "fitted.json", fb / "fitted.json"},    {fa / "fit_report.json", fb / "fit_report.json"},
      {fa / "heldout.csv", fb / "heldout.csv"},    {fa / "heldout_pred.csv", fb / "heldout_pred.csv"},
      {fa / "heldout_metrics.json", fb / "heldout_metrics.json"}, {sa / "stream.csv", sb / "stream.csv"}};
  std::string differ;
  for (const auto& [x, y] : pairs) {
    if (read_file(x) != read_file(y)) differ += " " + x.filename().string();
  }
  report(10, "determinism", differ.empty(),
         differ.empty() ? fmt::format("{} output files byte-identical across reruns", pairs.size())
                        : "differing files:" + differ);
}

}  // namespace

int main() {
  const fs::path base = fs::current_path() / "acceptance_run";
  fs::remove_all(base);
  for (const char* d : {"c5", "c6", "c8"}) fs::create_directories(base / d);
  const fs::path model = base / "model.json";
  save_model_config(model, ModelConfig{});

  guarded(1, "geometry consistency", geometry);
  guarded(2, "Hill-curve fixtures", hill_curves);
  guarded(3, "activation recursion", activation);
  guarded(4, "static torque fixture", static_torque);
  guarded(5, "oracle round trip", [&] { oracle_round_trip(base / "c5", model); });
  guarded(6, "fit recovery", [&] { fit_recovery(base / "c6"); });
  guarded(7, "metric sanity fixtures", metric_fixtures);
  guarded(8, "online/offline equivalence", [&] { online_offline(base / "c8", base / "c5", model); });
  guarded(9, "filter spec", filter_spec);
  guarded(10, "determinism", [&] { determinism(base, model); });

  fmt::print("{} of 10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}

#include <doctest.h>

#include <cmath>
#include <string>

#include "ankle_msk/errors.hpp"
#include "ankle_msk/hashing.hpp"
#include "ankle_msk/model_config.hpp"
#include "ankle_msk/trial.hpp"
#include "support.hpp"

using namespace ankle_msk;

TEST_CASE("minimal trial infers its rate") {
  const std::string text =
      "time,emg_ta,emg_gas,ankle_angle\n"
      "0,0.1,0.2,90\n"
      "0.001,0.1,0.2,90.5\n"
      "0.002,0.1,0.2,91\n";
  const TrialRecording t = parse_trial(text, "mem");
  CHECK(t.fs == 1000.0);
  CHECK(t.size() == 3);
  CHECK(t.ankle_angle[2] == 91.0);
  CHECK_FALSE(t.torque_ref.has_value());
  CHECK(t.source_sha256 == sha256_hex(text));
}

TEST_CASE("non-finite EMG cell is reported with line and column") {
  const std::string text =
      "time,emg_ta,emg_gas,ankle_angle\n"
      "0,0.1,0.2,90\n"
      "0.001,nan,0.2,90\n";
  try {
    parse_trial(text, "bad.csv");
    FAIL("expected a load error");
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad.csv:3") != std::string::npos);
    CHECK(msg.find("emg_ta") != std::string::npos);
  }
}

TEST_CASE("slow angle stream is interpolated onto the EMG rate") {
  std::string text = "time,emg_ta,emg_gas,ankle_angle\n";
  for (int i = 0; i <= 30; ++i) {
    const std::string angle = i % 10 == 0 ? std::to_string(80.0 + i) : "";
    text += std::to_string(i * 0.001) + ",0,0," + angle + "\n";
  }
  const TrialRecording t = parse_trial(text, "mem");
  CHECK(t.ankle_angle[0] == 80.0);
  CHECK(t.ankle_angle[10] == 90.0);
  CHECK(t.ankle_angle[5] == doctest::Approx(85.0).epsilon(1e-12));
  CHECK(t.ankle_angle[27] == doctest::Approx(107.0).epsilon(1e-12));
}

TEST_CASE("structural load errors") {
  CHECK_THROWS_AS(parse_trial("time,emg_ta,ankle_angle\n0,1,90\n0.001,1,90\n", "m"), LoadError);
  CHECK_THROWS_AS(parse_trial("time,emg_ta,emg_gas,ankle_angle\n0,1,1,90\n0.001,1,1,90\n0.003,1,1,90\n", "m"),
                  LoadError);
  CHECK_THROWS_AS(parse_trial("time,emg_ta,emg_gas,ankle_angle\n0,1,1,90\n0.001,1,1\n", "m"), LoadError);
  CHECK_THROWS_AS(parse_trial("time,emg_ta,emg_gas,ankle_angle\n0,1,1,90\n0.001,x,1,90\n", "m"), LoadError);
  CHECK_THROWS_AS(load_trial("/nonexistent/trial.csv"), LoadError);
}

TEST_CASE("angle is optional for MVC recordings") {
  LoadOptions opts;
  opts.require_angle = false;
  const TrialRecording t = parse_trial("# note\ntime,emg_ta,emg_gas\n0,1,2\n0.0005,1,2\n", "m", opts);
  CHECK(t.fs == 2000.0);
  CHECK(t.ankle_angle.empty());
}

TEST_CASE("CSV numbers round-trip exactly") {
  CsvTable t;
  t.comments = {"format x 1"};
  t.columns = {{"a", {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}}, {"b", {1, 2, 3, 4}}};
  const CsvTable back = parse_csv(format_csv(t), "mem");
  CHECK(back.comments == t.comments);
  REQUIRE(back.columns.size() == 2);
  CHECK(back.columns[0].values == t.columns[0].values);
  CHECK(back.columns[1].name == "b");
}

TEST_CASE("trial table keeps optional and extra columns") {
  std::string text = "time,emg_ta,emg_gas,ankle_angle,ankle_torque_ref,grf_z,event,tau_true\n";
  text += "0,1,2,90,3,700,1,4\n0.001,1,2,90,3,0,0,4\n";
  const TrialRecording t = parse_trial(text, "m");
  REQUIRE(t.event.has_value());
  CHECK((*t.event)[0] == 1);
  REQUIRE(t.find_extra("tau_true") != nullptr);
  const TrialRecording back = parse_trial(format_csv(trial_to_table(t)), "m2");
  CHECK(back.time == t.time);
  CHECK(*back.grf_z == *t.grf_z);
  CHECK(back.extra.size() == 1);
}

TEST_CASE("model config round trip is identity") {
  ModelConfig c;
  c.model.plantarflexor.f_max = 4321.123456789;
  c.model.dorsiflexor.shape_factor = -2.25;
  c.pipeline.mvc.ta.constant = 3.3e-4;
  c.pipeline.velocity = VelocityEstimator::centered;
  c.inputs = {{"trial", std::string(64, 'a')}};
  const std::string text = dump_model_config(c);
  const ModelConfig back = parse_model_config(text, "mem");
  CHECK(back == c);
  CHECK(dump_model_config(back) == text);
}

TEST_CASE("model config is strict") {
  const std::string good = dump_model_config(ModelConfig{});
  auto mutate = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    const auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    s.replace(pos, from.size(), to);
    return s;
  };
  CHECK_THROWS_AS(parse_model_config(mutate("\"f_max\"", "\"f_maxx\""), "m"), InvalidInput);
  CHECK_THROWS_AS(parse_model_config(mutate("\"format_version\": 1", "\"format_version\": 2"), "m"), InvalidInput);
  CHECK_THROWS_AS(parse_model_config(mutate("\"alpha\"", "\"extra\": 1, \"alpha\""), "m"), InvalidInput);
  CHECK_THROWS_AS(parse_model_config(mutate("dorsiflexion_positive", "plantarflexion_positive"), "m"), InvalidInput);
  CHECK_THROWS_AS(parse_model_config("{", "m"), LoadError);
  CHECK_THROWS_AS(load_model_config("/nonexistent/model.json"), LoadError);
}

TEST_CASE("saved config records every default explicitly") {
  const std::string text = dump_model_config(ModelConfig{});
  for (const char* key : {"alpha", "beta1", "beta2", "delay_ms", "f_max", "l_o", "r_max", "theta_max", "theta_ref",
                          "phi_ref", "l_slack", "w", "v_max", "K", "N", "eps_pe", "shape_factor", "highpass_hz",
                          "highpass_order", "envelope_ms", "velocity_estimator", "velocity_lowpass_hz", "constant",
                          "conventions", "format_version"}) {
    CHECK_MESSAGE(text.find(std::string("\"") + key + "\"") != std::string::npos, key);
  }
}

TEST_CASE("model hash ignores input digests") {
  ModelConfig a, b;
  b.inputs = {{"trial", "00"}};
  CHECK(model_hash(a) == model_hash(b));
  b.model.plantarflexor.l_o = 0.041;
  CHECK(model_hash(a) != model_hash(b));
}

TEST_CASE("MVC document round trip") {
  MvcCalibration m;
  m.ta.constant = 2e-4;
  m.ta.peaks = {1e-4, 2e-4, 3e-4};
  m.gas.constant = 5e-4;
  const MvcCalibration back = parse_mvc_document(dump_mvc_document(m, {{"mvc_ta", "ff"}}), "m");
  CHECK(back == m);
}

TEST_CASE("sha256 and atomic file writes") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto dir = test_support::scratch_dir("io");
  write_file(dir / "x.txt", "hello");
  CHECK(read_file(dir / "x.txt") == "hello");
  CHECK(file_sha256(dir / "x.txt") == sha256_hex("hello"));
}

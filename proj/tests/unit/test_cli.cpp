#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <fmt/format.h>

#include "ankle_msk/hashing.hpp"
#include "ankle_msk/synth.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ANKLE_MSK_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  const auto dir = test_support::scratch_dir("cli_usage");
  CHECK(run("", dir / "log") == 1);
  CHECK(run("bogus", dir / "log") == 1);
  CHECK(run("predict --data x.csv", dir / "log") == 1);
  CHECK(run("eval --data a.csv --segment sideways", dir / "log") == 1);
}

TEST_CASE("missing model file exits with 2 and names the path") {
  const auto dir = test_support::scratch_dir("cli_missing");
  ankle_msk::write_file(dir / "p.json", ankle_msk::dump_profile(test_support::small_profile(1.0)));
  REQUIRE(run(fmt::format("synth --profile {} --out {}", (dir / "p.json").string(), (dir / "t.csv").string()),
              dir / "log") == 0);
  const fs::path missing = dir / "no_such_model.json";
  CHECK(run(fmt::format("predict --data {} --model {} --out {}", (dir / "t.csv").string(), missing.string(),
                        (dir / "o.csv").string()),
            dir / "log") == 2);
  CHECK(ankle_msk::read_file(dir / "log").find(missing.string()) != std::string::npos);
}

TEST_CASE("eval on identical prediction and reference") {
  const auto dir = test_support::scratch_dir("cli_eval");
  ankle_msk::write_file(dir / "p.json", ankle_msk::dump_profile(test_support::small_profile(4.0)));
  const std::string t = (dir / "t.csv").string();
  REQUIRE(run(fmt::format("synth --profile {} --out {} --noise 0.05", (dir / "p.json").string(), t), dir / "log") == 0);
  REQUIRE(run(fmt::format("eval --data {} --ref {} --segment event --out {}", t, t, (dir / "r.json").string()),
              dir / "log") == 0);
  const std::string report = ankle_msk::read_file(dir / "r.json");
  CHECK(report.find("\"nrmse\": 0.0") != std::string::npos);
  CHECK(report.find("\"r_squared\": 1.0") != std::string::npos);
  CHECK(report.find("\"sha256\"") != std::string::npos);
}

TEST_CASE("init, mvc and predict outputs carry format and input hashes") {
  const auto dir = test_support::scratch_dir("cli_outputs");
  const std::string m = (dir / "m.json").string();
  REQUIRE(run("init --out " + m, dir / "log") == 0);
  ankle_msk::write_file(dir / "p.json", ankle_msk::dump_profile(test_support::small_profile(2.0)));
  const std::string t = (dir / "t.csv").string();
  REQUIRE(run(fmt::format("synth --profile {} --model {} --out {}", (dir / "p.json").string(), m, t), dir / "log") == 0);
  const std::string trial = ankle_msk::read_file(t);
  CHECK(trial.rfind("# format ankle_msk.trial 1", 0) == 0);
  CHECK(trial.find(ankle_msk::file_sha256(m)) != std::string::npos);

  const std::string pred = (dir / "pred.csv").string();
  REQUIRE(run(fmt::format("predict --data {} --model {} --out {}", t, m, pred), dir / "log") == 0);
  const std::string text = ankle_msk::read_file(pred);
  CHECK(text.find("# format ankle_msk.prediction 1") != std::string::npos);
  CHECK(text.find(ankle_msk::file_sha256(t)) != std::string::npos);

  // Three separated bursts per channel for the MVC command.
  std::ostringstream mvc;
  mvc << "time,emg_ta,emg_gas\n";
  for (int i = 0; i < 10000; ++i) {
    const bool on = (i / 1000) % 3 == 1;
    const double s = on ? std::sin(2.0 * M_PI * 100.0 * i / 1000.0) : 0.0;
    mvc << i / 1000.0 << "," << 4e-4 * s << "," << 9e-4 * s << "\n";
  }
  ankle_msk::write_file(dir / "mvc.csv", mvc.str());
  const std::string out = (dir / "m2.json").string();
  REQUIRE(run(fmt::format("mvc --data {} --model {} --out {}", (dir / "mvc.csv").string(), m, out), dir / "log") == 0);
  CHECK(ankle_msk::read_file(out).find("mvc_ta") != std::string::npos);
  CHECK(run(fmt::format("mvc --data {} --out {}", t, (dir / "mvc_doc.json").string()), dir / "log") == 2);
}

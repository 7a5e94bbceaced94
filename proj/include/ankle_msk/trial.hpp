#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ankle_msk {

inline constexpr int kFormatVersion = 1;

struct NamedColumn {
  std::string name;
  std::vector<double> values;
};

// Time-aligned recording at one uniform rate. Required columns: time,
// emg_ta, emg_gas and (for trials) ankle_angle.
struct TrialRecording {
  double fs = 0.0;
  std::vector<double> time;
  std::vector<double> emg_ta;
  std::vector<double> emg_gas;
  std::vector<double> ankle_angle;
  std::optional<std::vector<double>> torque_ref;
  std::optional<std::vector<double>> grf_z;
  std::optional<std::vector<int>> event;
  std::vector<NamedColumn> extra;  // any further numeric columns, in file order
  std::string source_sha256;       // set by load_trial

  std::size_t size() const { return time.size(); }
  const NamedColumn* find_extra(const std::string& name) const;
  void validate(bool require_angle = true) const;
};

struct LoadOptions {
  bool require_angle = true;
};

// Reads a comma-separated trial with a header row; lines starting with '#'
// are comments. Empty cells in ankle_angle, ankle_torque_ref and grf_z are
// treated as missing samples of a slower stream and filled by linear
// interpolation between present knots (held constant outside them).
TrialRecording load_trial(const std::filesystem::path& path, const LoadOptions& options = {});
TrialRecording parse_trial(const std::string& text, const std::string& origin, const LoadOptions& options = {});

// Generic CSV table used for prediction outputs and curve exports.
struct CsvTable {
  std::vector<std::string> comments;  // written as "# ..." lines
  std::vector<NamedColumn> columns;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string format_csv(const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

CsvTable trial_to_table(const TrialRecording& trial);

// 17 significant digits, so the text reads back to the identical double.
std::string format_number(double v);

}  // namespace ankle_msk

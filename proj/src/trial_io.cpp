#include "ankle_msk/trial.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string_view>

#include <fmt/format.h>

#include "ankle_msk/errors.hpp"
#include "ankle_msk/hashing.hpp"

namespace ankle_msk {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct RawCell {
  double value;
  bool present;
};

// One parsed table; blank cells are kept as "not present" so that callers can
// decide whether a column may have gaps.
struct RawTable {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<RawCell>> columns;
  std::vector<std::size_t> line_of_row;
};

RawTable parse_raw(const std::string& text, const std::string& origin) {
  RawTable t;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string_view c = line.substr(1);
      if (!c.empty() && c.front() == ' ') c.remove_prefix(1);
      t.comments.emplace_back(c);
      continue;
    }
    const auto cells = split(line);
    if (!have_header) {
      for (auto c : cells) {
        if (c.empty()) throw LoadError(fmt::format("{}:{}: empty column name in header", origin, line_no));
        if (std::find(t.header.begin(), t.header.end(), c) != t.header.end()) {
          throw LoadError(fmt::format("{}:{}: duplicate column '{}'", origin, line_no, c));
        }
        t.header.emplace_back(c);
      }
      t.columns.resize(t.header.size());
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw LoadError(fmt::format("{}:{}: expected {} cells, found {}", origin, line_no, t.header.size(),
                                  cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string_view cell = cells[c];
      if (cell.empty()) {
        t.columns[c].push_back({kMissing, false});
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw LoadError(fmt::format("{}:{}: column {}: cannot parse '{}'", origin, line_no, t.header[c], cell));
      }
      if (!std::isfinite(v)) {
        throw LoadError(fmt::format("{}:{}: column {}: value '{}' is not finite", origin, line_no, t.header[c], cell));
      }
      t.columns[c].push_back({v, true});
    }
    t.line_of_row.push_back(line_no);
  }
  if (!have_header) throw LoadError(fmt::format("{}: no header row", origin));
  return t;
}

std::ptrdiff_t column_index(const RawTable& t, std::string_view name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  return it == t.header.end() ? -1 : it - t.header.begin();
}

std::vector<double> dense_column(const RawTable& t, std::size_t c, const std::string& origin) {
  std::vector<double> out;
  out.reserve(t.columns[c].size());
  for (std::size_t r = 0; r < t.columns[c].size(); ++r) {
    if (!t.columns[c][r].present) {
      throw LoadError(fmt::format("{}:{}: column {}: missing value", origin, t.line_of_row[r], t.header[c]));
    }
    out.push_back(t.columns[c][r].value);
  }
  return out;
}

// Linear interpolation between present knots, constant outside them.
std::vector<double> interpolated_column(const RawTable& t, std::size_t c, const std::vector<double>& time,
                                        const std::string& origin) {
  const auto& cells = t.columns[c];
  std::vector<std::size_t> knots;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (cells[r].present) knots.push_back(r);
  }
  if (knots.empty()) throw LoadError(fmt::format("{}: column {} has no values", origin, t.header[c]));
  std::vector<double> out(cells.size());
  for (std::size_t r = 0; r <= knots.front(); ++r) out[r] = cells[knots.front()].value;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const std::size_t a = knots[k], b = knots[k + 1];
    const double ta = time[a], tb = time[b];
    for (std::size_t r = a; r < b; ++r) {
      const double w = (time[r] - ta) / (tb - ta);
      out[r] = cells[a].value + w * (cells[b].value - cells[a].value);
    }
  }
  for (std::size_t r = knots.back(); r < cells.size(); ++r) out[r] = cells[knots.back()].value;
  return out;
}

double infer_rate(const std::vector<double>& time, const std::string& origin) {
  if (time.size() < 2) throw LoadError(fmt::format("{}: need at least 2 rows to infer the sample rate", origin));
  const double dt = (time.back() - time.front()) / static_cast<double>(time.size() - 1);
  if (!(dt > 0.0)) throw LoadError(fmt::format("{}: time column is not increasing", origin));
  for (std::size_t i = 1; i < time.size(); ++i) {
    const double step = time[i] - time[i - 1];
    if (!(step > 0.0)) {
      throw LoadError(fmt::format("{}: time not strictly increasing at row {}", origin, i + 1));
    }
    if (std::abs(step - dt) > 1e-6 * dt) {
      throw LoadError(fmt::format("{}: non-uniform time step at row {} ({} s vs {} s)", origin, i + 1, step, dt));
    }
  }
  const double fs = 1.0 / dt;
  const double nearest = std::round(fs);
  return std::abs(fs - nearest) <= 1e-6 * fs ? nearest : fs;
}

constexpr std::string_view kKnown[] = {"time", "emg_ta", "emg_gas", "ankle_angle", "ankle_torque_ref", "grf_z",
                                      "event"};

}  // namespace

const NamedColumn* TrialRecording::find_extra(const std::string& name) const {
  for (const auto& c : extra) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

void TrialRecording::validate(bool require_angle) const {
  const std::size_t n = time.size();
  if (n < 2) throw InvalidInput("trial needs at least 2 samples");
  if (!(fs > 0.0)) throw InvalidInput("trial sample rate must be positive");
  auto check = [n](const std::vector<double>& v, const char* name) {
    if (v.size() != n) throw InvalidInput(fmt::format("column {} has {} samples, expected {}", name, v.size(), n));
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(v[i])) throw InvalidInput(fmt::format("column {} row {} is not finite", name, i));
    }
  };
  check(emg_ta, "emg_ta");
  check(emg_gas, "emg_gas");
  if (require_angle || !ankle_angle.empty()) check(ankle_angle, "ankle_angle");
  if (torque_ref) check(*torque_ref, "ankle_torque_ref");
  if (grf_z) check(*grf_z, "grf_z");
  if (event && event->size() != n) throw InvalidInput("column event has the wrong length");
}

TrialRecording parse_trial(const std::string& text, const std::string& origin, const LoadOptions& options) {
  const RawTable t = parse_raw(text, origin);
  auto need = [&](std::string_view name) {
    const auto c = column_index(t, name);
    if (c < 0) throw LoadError(fmt::format("{}: missing required column '{}'", origin, name));
    return static_cast<std::size_t>(c);
  };

  TrialRecording trial;
  trial.time = dense_column(t, need("time"), origin);
  trial.fs = infer_rate(trial.time, origin);
  trial.emg_ta = dense_column(t, need("emg_ta"), origin);
  trial.emg_gas = dense_column(t, need("emg_gas"), origin);
  if (options.require_angle || column_index(t, "ankle_angle") >= 0) {
    trial.ankle_angle = interpolated_column(t, need("ankle_angle"), trial.time, origin);
  }
  if (const auto c = column_index(t, "ankle_torque_ref"); c >= 0) {
    trial.torque_ref = interpolated_column(t, static_cast<std::size_t>(c), trial.time, origin);
  }
  if (const auto c = column_index(t, "grf_z"); c >= 0) {
    trial.grf_z = interpolated_column(t, static_cast<std::size_t>(c), trial.time, origin);
  }
  if (const auto c = column_index(t, "event"); c >= 0) {
    const auto dense = dense_column(t, static_cast<std::size_t>(c), origin);
    std::vector<int> ev(dense.size());
    std::transform(dense.begin(), dense.end(), ev.begin(), [](double v) { return static_cast<int>(std::lround(v)); });
    trial.event = std::move(ev);
  }
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (std::find(std::begin(kKnown), std::end(kKnown), t.header[c]) != std::end(kKnown)) continue;
    trial.extra.push_back({t.header[c], dense_column(t, c, origin)});
  }
  trial.source_sha256 = sha256_hex(text);
  trial.validate(options.require_angle);
  return trial;
}

TrialRecording load_trial(const std::filesystem::path& path, const LoadOptions& options) {
  return parse_trial(read_file(path), path.string(), options);
}

std::string format_number(double v) { return fmt::format("{:.17g}", v); }

std::string format_csv(const CsvTable& table) {
  std::string out;
  for (const auto& c : table.comments) out += fmt::format("# {}\n", c);
  std::size_t rows = 0;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out += ',';
    out += table.columns[c].name;
    rows = std::max(rows, table.columns[c].values.size());
  }
  out += '\n';
  for (const auto& c : table.columns) {
    if (c.values.size() != rows) throw InvalidInput(fmt::format("column {} has a different length", c.name));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      if (c) out += ',';
      out += format_number(table.columns[c].values[r]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) { write_file(path, format_csv(table)); }

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  const RawTable t = parse_raw(text, origin);
  CsvTable out;
  out.comments = t.comments;
  for (std::size_t c = 0; c < t.header.size(); ++c) out.columns.push_back({t.header[c], dense_column(t, c, origin)});
  return out;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path), path.string()); }

CsvTable trial_to_table(const TrialRecording& trial) {
  CsvTable t;
  t.columns.push_back({"time", trial.time});
  t.columns.push_back({"emg_ta", trial.emg_ta});
  t.columns.push_back({"emg_gas", trial.emg_gas});
  if (!trial.ankle_angle.empty()) t.columns.push_back({"ankle_angle", trial.ankle_angle});
  if (trial.torque_ref) t.columns.push_back({"ankle_torque_ref", *trial.torque_ref});
  if (trial.grf_z) t.columns.push_back({"grf_z", *trial.grf_z});
  if (trial.event) t.columns.push_back({"event", std::vector<double>(trial.event->begin(), trial.event->end())});
  for (const auto& e : trial.extra) t.columns.push_back(e);
  return t;
}

}  // namespace ankle_msk

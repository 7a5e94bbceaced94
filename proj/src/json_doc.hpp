#pragma once

#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ankle_msk/model_config.hpp"

namespace ankle_msk::json_doc {

using json = nlohmann::json;

// Strict object reader: every key must be consumed, unknown keys are an
// error naming the document path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where);

  double number(const std::string& key);
  int integer(const std::string& key);
  std::string string(const std::string& key);
  bool boolean(const std::string& key);
  const json& value(const std::string& key);
  ObjectReader object(const std::string& key);
  bool has(const std::string& key) const { return j_.contains(key); }
  const std::string& where() const { return where_; }
  // Throws on keys that were never read.
  void finish() const;

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void expect_format(ObjectReader& r, const std::string& format);
json header(const std::string& format);
json inputs_to_json(const std::vector<InputDigest>& inputs);
std::vector<InputDigest> inputs_from_json(const json& j, const std::string& where);
json parse_text(const std::string& text, const std::string& origin);
// 2-space indented text with a trailing newline.
std::string dump(const json& j);

json muscle_to_json(const MuscleParams& m);
MuscleParams muscle_from_json(ObjectReader r);
json mvc_to_json(const MvcCalibration& mvc);
MvcCalibration mvc_from_json(ObjectReader r);
json model_to_json(const ModelConfig& config);
ModelConfig model_from_json(const json& doc, const std::string& origin);

}  // namespace ankle_msk::json_doc

#include <charconv>
#include <set>
#include <sstream>

#include "callscape/eval.hpp"

namespace callscape {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) return out;
    line.remove_prefix(comma + 1);
  }
}

bool valid_id(std::string_view id) {
  if (id.empty()) return false;
  for (char c : id)
    if (c == ',' || c == '"' || c == '\n' || c == '\r' || c == '/') return false;
  return true;
}

void check_score(const std::string& dimension, long long value, std::optional<std::size_t> row) {
  if (value < 1 || value > 5)
    throw EvalError(EvalErrc::OutOfRange,
                    (row ? "row " + std::to_string(*row) + ": " : std::string()) + dimension + "=" +
                        std::to_string(value) + " is outside 1..5",
                    row);
}

}  // namespace

std::string_view to_string(EvalErrc code) {
  switch (code) {
    case EvalErrc::MissingScene: return "MissingScene";
    case EvalErrc::SchemaViolation: return "SchemaViolation";
    case EvalErrc::DuplicateRating: return "DuplicateRating";
    case EvalErrc::OutOfRange: return "OutOfRange";
    case EvalErrc::UnmappedItem: return "UnmappedItem";
    case EvalErrc::DegenerateSample: return "DegenerateSample";
    case EvalErrc::UnknownRater: return "UnknownRater";
    case EvalErrc::UnknownItem: return "UnknownItem";
    case EvalErrc::BlindingViolation: return "BlindingViolation";
  }
  return "Unknown";
}

json to_json(const RatingRecord& r) {
  json doc = {{"rater_id", r.rater_id}, {"item_id", r.item_id}};
  for (std::size_t d = 0; d < kRatingDimensions.size(); ++d) doc[std::string(kRatingDimensions[d])] = r.scores[d];
  return doc;
}

RatingRecord rating_from_json(const json& doc) {
  if (!doc.is_object()) throw EvalError(EvalErrc::SchemaViolation, "rating must be a JSON object");
  RatingRecord r;
  for (auto [field, target] : {std::pair{"rater_id", &r.rater_id}, std::pair{"item_id", &r.item_id}}) {
    const auto it = doc.find(field);
    if (it == doc.end() || !it->is_string() || !valid_id(it->get<std::string>()))
      throw EvalError(EvalErrc::SchemaViolation, std::string(field) + " must be a non-empty identifier");
    *target = it->get<std::string>();
  }
  for (std::size_t d = 0; d < kRatingDimensions.size(); ++d) {
    const std::string name(kRatingDimensions[d]);
    const auto it = doc.find(name);
    if (it == doc.end() || !it->is_number_integer())
      throw EvalError(EvalErrc::SchemaViolation, name + " must be an integer");
    const auto value = it->get<long long>();
    check_score(name, value, std::nullopt);
    r.scores[d] = static_cast<int>(value);
  }
  return r;
}

std::string ratings_csv_header() {
  std::string out = "rater_id,item_id";
  for (auto d : kRatingDimensions) out += "," + std::string(d);
  return out;
}

std::string to_csv_row(const RatingRecord& r) {
  std::string out = r.rater_id + "," + r.item_id;
  for (int s : r.scores) out += "," + std::to_string(s);
  return out;
}

std::string to_csv(const std::vector<RatingRecord>& records) {
  std::string out = ratings_csv_header() + "\n";
  for (const auto& r : records) out += to_csv_row(r) + "\n";
  return out;
}

std::vector<RatingRecord> ingest_ratings(std::string_view document) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= document.size();) {
    const auto nl = document.find('\n', pos);
    lines.push_back(document.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (lines.empty() || trim(lines.front()).empty())
    throw EvalError(EvalErrc::SchemaViolation, "missing header row", 1);

  // Column position of rater_id, item_id and each dimension.
  const auto header = split_fields(lines.front());
  std::vector<std::string> expected = {"rater_id", "item_id"};
  for (auto d : kRatingDimensions) expected.emplace_back(d);
  std::vector<std::size_t> column(expected.size(), header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto it = std::find(expected.begin(), expected.end(), header[i]);
    if (it == expected.end())
      throw EvalError(EvalErrc::SchemaViolation, "unexpected column '" + std::string(header[i]) + "'", 1);
    auto& slot = column[static_cast<std::size_t>(it - expected.begin())];
    if (slot != header.size()) throw EvalError(EvalErrc::SchemaViolation, "duplicate column " + *it, 1);
    slot = i;
  }
  for (std::size_t k = 0; k < expected.size(); ++k)
    if (column[k] == header.size()) throw EvalError(EvalErrc::SchemaViolation, "missing column " + expected[k], 1);

  std::vector<RatingRecord> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t row = i + 1;
    if (trim(lines[i]).empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != header.size())
      throw EvalError(EvalErrc::SchemaViolation,
                      "row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(fields.size()),
                      row);
    RatingRecord r;
    r.rater_id = std::string(fields[column[0]]);
    r.item_id = std::string(fields[column[1]]);
    if (!valid_id(r.rater_id) || !valid_id(r.item_id))
      throw EvalError(EvalErrc::SchemaViolation, "row " + std::to_string(row) + ": empty or invalid id", row);
    for (std::size_t d = 0; d < kRatingDimensions.size(); ++d) {
      const auto text = fields[column[d + 2]];
      long long value = 0;
      const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc() || end != text.data() + text.size() || text.empty())
        throw EvalError(EvalErrc::SchemaViolation,
                        "row " + std::to_string(row) + ": " + expected[d + 2] + " '" + std::string(text) +
                            "' is not an integer",
                        row);
      check_score(expected[d + 2], value, row);
      r.scores[d] = static_cast<int>(value);
    }
    if (!seen.emplace(r.rater_id, r.item_id).second)
      throw EvalError(EvalErrc::DuplicateRating,
                      "row " + std::to_string(row) + ": " + r.rater_id + " already rated " + r.item_id, row);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace callscape

#pragma once

// Blinded rating packages, rating ingestion, mean/CV aggregation, Welch
// t-tests, report tables and the HTTP API used by the review console.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "callscape/agent.hpp"
#include "callscape/http.hpp"
#include "json.hpp"

namespace callscape {

enum class EvalErrc {
  MissingScene,
  SchemaViolation,
  DuplicateRating,
  OutOfRange,
  UnmappedItem,
  DegenerateSample,
  UnknownRater,
  UnknownItem,
  BlindingViolation,
};

std::string_view to_string(EvalErrc code);

class EvalError : public std::runtime_error {
 public:
  EvalError(EvalErrc code, const std::string& what, std::optional<std::size_t> row = std::nullopt)
      : std::runtime_error(what), code_(code), row_(row) {}
  EvalErrc code() const { return code_; }
  // 1-based line number in the ratings document (header is line 1).
  std::optional<std::size_t> row() const { return row_; }

 private:
  EvalErrc code_;
  std::optional<std::size_t> row_;
};

// ---------------------------------------------------------------------------
// Ratings.

inline constexpr std::array<std::string_view, 6> kRatingDimensions = {
    "clarity", "task_fit", "spatial_organization", "cognitive_load", "visual_encodings", "correctness"};

// cognitive_load is stored as answered: 1 = most effort, 5 = least.
struct RatingRecord {
  std::string rater_id;
  std::string item_id;
  std::array<int, 6> scores{};  // kRatingDimensions order, each in [1, 5]

  bool operator==(const RatingRecord&) const = default;
};

nlohmann::json to_json(const RatingRecord& record);
// Throws EvalError(SchemaViolation | OutOfRange).
RatingRecord rating_from_json(const nlohmann::json& doc);

std::string ratings_csv_header();
std::string to_csv_row(const RatingRecord& record);
std::string to_csv(const std::vector<RatingRecord>& records);

// Comma-separated, header row with exactly the documented columns in any
// order. Throws EvalError(SchemaViolation | DuplicateRating | OutOfRange).
std::vector<RatingRecord> ingest_ratings(std::string_view document);

// ---------------------------------------------------------------------------
// Packages.

struct PackageItem {
  std::string item_id;
  std::string scene_ref;
  std::string truth_ref;
  std::string program;
  std::string source_ref;

  bool operator==(const PackageItem&) const = default;
};

struct Package {
  std::string rater_id;
  std::vector<PackageItem> items;
  std::uint64_t seed = 0;

  bool operator==(const Package&) const = default;
};

nlohmann::json to_json(const Package& package);
Package package_from_json(const nlohmann::json& doc);

struct PackageSet {
  std::uint64_t seed = 0;
  std::vector<Package> packages;
  // Blinding key, item id -> run id. Never served to raters.
  std::map<std::string, std::string> key;
};

// One package per rater. Item ids are assigned after a seeded shuffle of the
// runs; each rater then gets an independent seeded permutation. Throws
// EvalError(MissingScene) when a run has no scene, EvalError(SchemaViolation)
// for an empty or duplicated rater list, and EvalError(BlindingViolation)
// when a serialized package names a condition.
PackageSet make_packages(const std::vector<RunRecord>& runs, const std::vector<std::string>& raters,
                         std::uint64_t seed);

// Runs that produced a scene; the rest are listed in `dropped`.
std::vector<RunRecord> runs_with_scenes(const std::vector<RunRecord>& runs,
                                        std::vector<std::string>* dropped = nullptr);

// Condition words and model names found in a serialized document. Words are
// compared against alphanumeric tokens; model names and config ids as
// case-insensitive substrings.
std::vector<std::string> blinding_findings(std::string_view serialized, const std::vector<RunRecord>& runs);

// For documents holding free text (scenes, call graphs): condition keys at
// any depth, and string values containing a model name, config id or run id.
std::vector<std::string> condition_field_findings(const nlohmann::json& doc, const std::vector<RunRecord>& runs);

// Portable Fisher-Yates permutation of [0, n).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Statistics.

struct Summary {
  std::size_t n = 0;
  double mean = 0;
  double stddev = 0;  // population
  double cv = 0;      // stddev / mean; NaN when mean == 0 and stddev > 0

  bool operator==(const Summary&) const = default;
};

Summary summarize(std::span<const double> values);

struct StatTestResult {
  std::string metric;
  std::string group_a;
  std::string group_b;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  double mean_a = 0;
  double mean_b = 0;
  double t = 0;
  double df = 0;
  double p = 1;
};

// Two-sided Welch test. Throws EvalError(DegenerateSample) when a sample has
// fewer than two values or both variances are zero.
StatTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Aggregation.

inline constexpr std::string_view kAll = "ALL";

// A configuration or a marginal; kAll marks a pooled factor.
struct Condition {
  std::string program;
  std::string guidance;  // "high" | "low" | ALL
  std::string model;

  bool operator==(const Condition&) const = default;
  auto operator<=>(const Condition&) const = default;

  bool is_config() const { return program != kAll && guidance != kAll && model != kAll; }
  bool contains(const Condition& config) const;
  // "hexdump high gpt-4.1", "ALL hexdump", "ALL High Guidance", "ALL o4-mini".
  std::string label() const;
};

Condition condition_of(const RunConfig& config);

// Configs in (program, guidance, model) order, then one marginal per program,
// per guidance level and per model.
std::vector<Condition> table_conditions(const std::vector<Condition>& configs);

// Item id -> the configuration it was generated under.
using RunIndex = std::map<std::string, Condition>;

RunIndex run_index(const PackageSet& packages, const std::vector<RunRecord>& runs);

struct AggregateRow {
  Condition condition;
  Summary subjective;                  // all six dimensions pooled
  std::array<Summary, 6> dimensions;   // kRatingDimensions order
};

// Configs present in `index`, then marginals. Throws EvalError(UnmappedItem).
std::vector<AggregateRow> aggregate(const std::vector<RatingRecord>& records, const RunIndex& index);

// ---------------------------------------------------------------------------
// Report.

struct ReportDocuments {
  std::string table1_csv;
  std::string tests_csv;
  std::string dimensions_csv;
  std::string notes;
};

// Subjective columns are NA without ratings; objective columns use the
// composite of every run with metrics. Deterministic for identical inputs.
ReportDocuments report(const std::vector<RunRecord>& runs, const PackageSet& packages,
                       const std::vector<RatingRecord>& records);

// Every pairwise split of one factor for each objective metric. t, df and p
// are NaN for a degenerate sample.
std::vector<StatTestResult> condition_tests(const std::vector<RunRecord>& runs);

// ---------------------------------------------------------------------------
// Store.
//
// <runs>/eval/packages/<rater>.json, <runs>/eval/key.json and
// <runs>/eval/ratings.csv next to the agent's run store.

void write_packages(const std::filesystem::path& runs_dir, const PackageSet& packages);
PackageSet read_packages(const std::filesystem::path& runs_dir);
void write_report(const std::filesystem::path& out_dir, const ReportDocuments& documents);

std::filesystem::path default_ratings_path(const std::filesystem::path& runs_dir);
// Empty when the file does not exist.
std::vector<RatingRecord> read_ratings_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// HTTP API.

struct ApiReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Routes:
//   GET  /api/packages/{rater}   package document
//   GET  /api/scenes/{item}      scene document
//   GET  /api/truth/{item}       ground-truth call graph
//   GET  /api/source/{item}      source listing (text/plain)
//   GET  /api/progress/{rater}   {rater_id,total,rated,remaining,submitted}
//   GET  /api/ratings/{rater}    the rater's stored records
//   POST /api/ratings            one RatingRecord -> 201 | 400 | 404 | 409
// Errors are {"error":{"code","message"}}.
class EvalService {
 public:
  // Loads runs, program material and packages from a run store. Accepted
  // ratings are appended to `ratings_path`, whose existing rows are loaded.
  EvalService(const std::filesystem::path& runs_dir, std::filesystem::path ratings_path);

  ApiReply handle(std::string_view method, std::string_view path, std::string_view body = {});
  std::vector<RatingRecord> ratings() const;

 private:
  ApiReply get_package(const std::string& rater) const;
  ApiReply get_scene(const std::string& item) const;
  ApiReply get_truth(const std::string& item) const;
  ApiReply get_source(const std::string& item) const;
  ApiReply get_progress(const std::string& rater) const;
  ApiReply get_ratings(const std::string& rater) const;
  ApiReply post_rating(std::string_view body);

  struct Program {
    std::string truth;  // serialized
    std::optional<std::string> source;
  };

  const Program* program_of(const std::string& item) const;

  std::map<std::string, Package> packages_;        // by rater
  std::map<std::string, std::string> scenes_;      // item -> serialized scene
  std::map<std::string, std::string> program_of_;  // item -> program
  std::map<std::string, Program> programs_;
  std::filesystem::path ratings_path_;

  mutable std::mutex mutex_;
  std::vector<RatingRecord> ratings_;
};

void mount_eval_api(httplib::Server& http, EvalService& service);

}  // namespace callscape

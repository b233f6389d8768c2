#include <fstream>
#include <sstream>

#include "callscape/eval.hpp"

namespace callscape {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvalError(EvalErrc::SchemaViolation, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json parse(const fs::path& path) {
  try {
    return json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw EvalError(EvalErrc::SchemaViolation, path.string() + ": " + e.what());
  }
}

}  // namespace

void write_packages(const fs::path& runs_dir, const PackageSet& set) {
  const fs::path dir = runs_dir / "eval";
  fs::remove_all(dir / "packages");
  fs::create_directories(dir / "packages");
  json raters = json::array();
  for (const auto& p : set.packages) {
    raters.push_back(p.rater_id);
    write_text(dir / "packages" / (p.rater_id + ".json"), to_json(p).dump(2) + "\n");
  }
  write_text(dir / "key.json",
             json{{"seed", set.seed}, {"raters", std::move(raters)}, {"items", set.key}}.dump(2) + "\n");
}

PackageSet read_packages(const fs::path& runs_dir) {
  const fs::path dir = runs_dir / "eval";
  if (!fs::exists(dir / "key.json"))
    throw EvalError(EvalErrc::SchemaViolation, "no packages in " + runs_dir.string() + " (run 'eval packages')");
  const json key = parse(dir / "key.json");
  PackageSet set;
  try {
    set.seed = key.at("seed").get<std::uint64_t>();
    set.key = key.at("items").get<std::map<std::string, std::string>>();
    for (const auto& rater : key.at("raters"))
      set.packages.push_back(package_from_json(parse(dir / "packages" / (rater.get<std::string>() + ".json"))));
  } catch (const json::exception& e) {
    throw EvalError(EvalErrc::SchemaViolation, "key.json: " + std::string(e.what()));
  }
  return set;
}

void write_report(const fs::path& out_dir, const ReportDocuments& docs) {
  fs::create_directories(out_dir);
  write_text(out_dir / "table1.csv", docs.table1_csv);
  write_text(out_dir / "tests.csv", docs.tests_csv);
  write_text(out_dir / "dimensions.csv", docs.dimensions_csv);
  write_text(out_dir / "notes.txt", docs.notes);
}

fs::path default_ratings_path(const fs::path& runs_dir) { return runs_dir / "eval" / "ratings.csv"; }

std::vector<RatingRecord> read_ratings_file(const fs::path& path) {
  if (!fs::exists(path)) return {};
  return ingest_ratings(slurp(path));
}

}  // namespace callscape

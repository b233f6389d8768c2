// eval packages|report|serve: blinded rating packages, Table-1 report and
// the rating API.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "callscape/eval.hpp"

namespace {

using namespace callscape;
namespace fs = std::filesystem;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');)
    if (!part.empty()) out.push_back(part);
  return out;
}

std::pair<std::string, int> split_listen(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw std::runtime_error("--listen expects host:port, got '" + addr + "'");
  return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluation harness: blinded packages, ratings, statistics"};
  app.require_subcommand(1);

  std::string runs_dir, ratings_path, out_dir, raters_text, listen = "127.0.0.1:8090", static_dir;
  std::uint64_t seed = 0;
  bool drop_failed = false;

  auto* packages = app.add_subcommand("packages", "Write one blinded package per rater");
  packages->add_option("--runs", runs_dir, "Run store directory")->required();
  packages->add_option("--raters", raters_text, "Comma-separated rater ids")->required();
  packages->add_option("--seed", seed, "Permutation seed")->required();
  packages->add_flag("--drop-failed", drop_failed, "Leave out runs without a scene instead of failing");

  auto* rep = app.add_subcommand("report", "Write table1.csv, tests.csv, dimensions.csv and notes.txt");
  rep->add_option("--runs", runs_dir, "Run store directory")->required();
  rep->add_option("--ratings", ratings_path, "Ratings file (omit for objective columns only)");
  rep->add_option("--out", out_dir, "Output directory (default <runs>/eval/report)");

  auto* serve = app.add_subcommand("serve", "Serve the rating API for the review console");
  serve->add_option("--runs", runs_dir, "Run store directory")->required();
  serve->add_option("--ratings", ratings_path, "Ratings file to append to (default <runs>/eval/ratings.csv)");
  serve->add_option("--listen", listen, "host:port");
  serve->add_option("--static", static_dir, "Directory served at / (the built console)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*packages) {
      std::vector<std::string> dropped;
      auto runs = read_run_store(runs_dir);
      if (drop_failed) runs = runs_with_scenes(runs, &dropped);
      const auto set = make_packages(runs, split_list(raters_text), seed);
      write_packages(runs_dir, set);
      for (const auto& id : dropped) std::cerr << "eval: left out " << id << " (no scene)\n";
      std::cout << set.packages.size() << " packages of " << set.key.size() << " items written to "
                << (fs::path(runs_dir) / "eval") << "\n";
      return 0;
    }
    if (*rep) {
      const auto runs = read_run_store(runs_dir);
      const auto records = ratings_path.empty() ? std::vector<RatingRecord>{} : read_ratings_file(ratings_path);
      if (!ratings_path.empty() && !fs::exists(ratings_path))
        throw std::runtime_error("no ratings file at " + ratings_path);
      PackageSet set;
      if (!records.empty() || fs::exists(fs::path(runs_dir) / "eval" / "key.json")) set = read_packages(runs_dir);
      const auto docs = report(runs, set, records);
      const fs::path out = out_dir.empty() ? fs::path(runs_dir) / "eval" / "report" : fs::path(out_dir);
      write_report(out, docs);
      std::cout << docs.table1_csv;
      std::cerr << "eval: report written to " << out << "\n";
      return 0;
    }
    EvalService service(runs_dir, ratings_path.empty() ? default_ratings_path(runs_dir) : fs::path(ratings_path));
    httplib::Server http;
    mount_eval_api(http, service);
    if (!static_dir.empty() && !http.set_mount_point("/", static_dir))
      throw std::runtime_error("cannot serve " + static_dir);
    const auto [host, port] = split_listen(listen);
    std::cerr << "eval: serving " << runs_dir << " on http://" << host << ":" << port << "\n";
    if (!http.listen(host, port)) throw std::runtime_error("cannot listen on " + listen);
    return 0;
  } catch (const EvalError& e) {
    std::cerr << "eval: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "eval: " << e.what() << "\n";
    return 2;
  }
}

// metrics score|composite: objective layout measures and cohort composites.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "callscape/metrics.hpp"

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace callscape;
  CLI::App app{"Score scenes and compute cohort composite scores"};
  app.require_subcommand(1);

  std::string scene_path, truth_path, dir;

  auto* score = app.add_subcommand("score", "Print the metrics document for one scene");
  score->add_option("--scene", scene_path, "Scene document")->required();
  score->add_option("--truth", truth_path, "Call graph document")->required();

  auto* composite = app.add_subcommand("composite", "Composite scores for every metrics.json under a directory");
  composite->add_option("--dir", dir, "Run store or directory of runs")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*score) {
      const CallGraph truth = import_call_graph(slurp(truth_path));
      const Scene scene = validate_scene(slurp(scene_path), ValidationContext{&truth});
      std::cout << to_json(score_scene(scene, truth)).dump(2) << "\n";
    } else if (*composite) {
      std::vector<std::pair<std::string, MetricsReport>> cohort;
      for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().filename() != "metrics.json") continue;
        cohort.emplace_back(entry.path().parent_path().filename().string(),
                            metrics_from_json(nlohmann::json::parse(slurp(entry.path()))));
      }
      std::sort(cohort.begin(), cohort.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      std::cout << "scene_id,composite";
      for (auto name : kMetricNames) std::cout << "," << name;
      std::cout << "\n" << std::setprecision(6) << std::fixed;
      for (const auto& s : composite_scores(cohort)) {
        std::cout << s.scene_id << "," << s.value;
        for (auto name : kMetricNames) std::cout << "," << s.per_metric_normalized.at(std::string(name));
        std::cout << "\n";
      }
    }
  } catch (const SceneValidationError& e) {
    std::cout << e.to_json().dump(2) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "metrics: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

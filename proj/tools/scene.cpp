// scene validate|export|check: scene document utilities.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "callscape/gltf.hpp"
#include "callscape/scene.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace callscape;
  CLI::App app{"Validate, canonicalize and export call-graph scenes"};
  app.require_subcommand(1);

  std::string scene_path, truth_path, out_path;

  auto* validate = app.add_subcommand("validate", "Print the canonical scene or every validation error");
  validate->add_option("scene", scene_path, "Scene document")->required();
  validate->add_option("--truth", truth_path, "Call graph document for graph-aware checks");

  auto* exp = app.add_subcommand("export", "Write a .glb asset");
  exp->add_option("scene", scene_path, "Scene document")->required();
  exp->add_option("-o,--out", out_path, "Output .glb path")->required();

  auto* check = app.add_subcommand("check", "Compare a scene with its ground-truth call graph");
  check->add_option("scene", scene_path, "Scene document")->required();
  check->add_option("--truth", truth_path, "Call graph document")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    std::optional<CallGraph> truth;
    if (!truth_path.empty()) truth = import_call_graph(slurp(truth_path));
    const ValidationContext context{truth ? &*truth : nullptr};
    const Scene scene = validate_scene(slurp(scene_path), context);

    if (*validate) {
      std::cout << to_json(canonicalize(scene)).dump(2) << "\n";
    } else if (*exp) {
      const auto bytes = export_gltf(scene);
      std::ofstream out(out_path, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw std::runtime_error("cannot write " + out_path);
    } else if (*check) {
      std::cout << to_json(correctness_report(scene, *truth)).dump(2) << "\n";
    }
  } catch (const SceneValidationError& e) {
    std::cout << e.to_json().dump(2) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "scene: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#pragma once

// LLM-authored 3D call-graph scenes.
//
// Document format:
//   {"nodes":[{"id","label","position":[x,y,z],"shape","color","scale"}],
//    "edges":[{"source","target","color"?,"width"?}],
//    "slates":[{"id","text","position":[x,y,z]}],
//    "reasoning": string}

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "callscape/binary.hpp"
#include "json.hpp"

namespace callscape {

enum class Shape { Sphere, Cube, Cone, Cylinder, Torus };

std::string_view to_string(Shape shape);
std::optional<Shape> shape_from_string(std::string_view name);

inline constexpr Shape kAllShapes[] = {Shape::Sphere, Shape::Cube, Shape::Cone, Shape::Cylinder,
                                       Shape::Torus};

struct SceneNode {
  std::string id;
  std::string label;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Shape shape = Shape::Sphere;
  std::string color = "#FFFFFF";
  double scale = 1.0;

  bool operator==(const SceneNode&) const = default;
};

struct SceneEdge {
  std::string source;
  std::string target;
  std::optional<std::string> color;
  std::optional<double> width;

  bool operator==(const SceneEdge&) const = default;
};

struct Slate {
  std::string id;
  std::string text;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();

  bool operator==(const Slate&) const = default;
};

struct Scene {
  std::vector<SceneNode> nodes;
  std::vector<SceneEdge> edges;
  std::vector<Slate> slates;
  std::string reasoning;

  bool operator==(const Scene&) const = default;

  // Index into nodes, or -1.
  Eigen::Index index_of(std::string_view id) const;
  // N x 3, row i = nodes[i].position.
  Eigen::Matrix<double, Eigen::Dynamic, 3> positions() const;
  // E x 2 node indices, row j = (source, target) of edges[j].
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, 2> edge_indices() const;
};

struct ValidationIssue {
  std::string path;  // JSON pointer into the document
  std::string rule;
  std::string message;

  bool operator==(const ValidationIssue&) const = default;
};

class SceneParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SceneValidationError : public std::runtime_error {
 public:
  explicit SceneValidationError(std::vector<ValidationIssue> issues);
  const std::vector<ValidationIssue>& issues() const { return issues_; }
  bool has_rule(std::string_view rule) const;
  // {"errors":[{"path","rule","message"}]}, fed back to the model verbatim.
  nlohmann::json to_json() const;

 private:
  std::vector<ValidationIssue> issues_;
};

struct ValidationContext {
  // When set, self-loops must correspond to a self-call and a non-empty
  // graph requires at least one node.
  const CallGraph* truth = nullptr;
};

Scene validate_scene(std::string_view raw, const ValidationContext& context = {});
Scene validate_scene_document(const nlohmann::json& doc, const ValidationContext& context = {});
std::vector<ValidationIssue> scene_issues(const nlohmann::json& doc,
                                          const ValidationContext& context = {});

Scene canonicalize(Scene scene);
nlohmann::json to_json(const Scene& scene);
// Compact serialization of canonicalize(scene); byte-stable.
std::string canonical_bytes(const Scene& scene);

struct CorrectnessReport {
  std::set<std::string> missing_nodes;  // function ids
  std::set<std::string> extra_nodes;    // scene node ids
  std::set<CallEdge> missing_edges;     // function id pairs
  std::set<CallEdge> extra_edges;       // function id pairs
  double node_coverage = 1.0;
  double edge_coverage = 1.0;
};

nlohmann::json to_json(const CorrectnessReport& report);

// Scene node id -> function id, one-to-one. Passes: exact label, then
// case-insensitive label, then an address tag ("sub_<hex>" or "0x<hex>").
std::vector<std::pair<std::string, std::string>> match_nodes(const Scene& scene,
                                                             const CallGraph& truth);

CorrectnessReport correctness_report(const Scene& scene, const CallGraph& truth);

// A plain layered rendering of a call graph: one node per function, one
// edge per call, depth along -Y.
Scene scene_from_graph(const CallGraph& graph);

}  // namespace callscape

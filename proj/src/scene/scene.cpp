#include "callscape/scene.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <map>
#include <regex>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace callscape {
namespace {

using nlohmann::json;

// The JSON parser rejects literals that overflow a double. Such literals
// are swapped for a tagged string so the validator can report them as
// non-finite alongside every other problem.
constexpr char kOverflowTag = '\x01';

std::string tag_overflowing_numbers(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool in_string = false;
  for (std::size_t i = 0; i < raw.size();) {
    const char c = raw[i];
    if (in_string) {
      out += c;
      if (c == '\\' && i + 1 < raw.size()) {
        out += raw[i + 1];
        i += 2;
        continue;
      }
      if (c == '"') in_string = false;
      ++i;
      continue;
    }
    if (c == '"') {
      in_string = true;
      out += c;
      ++i;
      continue;
    }
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t end = i + 1;
      while (end < raw.size() && (std::isdigit(static_cast<unsigned char>(raw[end])) ||
                                  raw[end] == '.' || raw[end] == 'e' || raw[end] == 'E' ||
                                  raw[end] == '+' || raw[end] == '-'))
        ++end;
      const std::string token(raw.substr(i, end - i));
      errno = 0;
      const double value = std::strtod(token.c_str(), nullptr);
      if (errno == ERANGE && std::isinf(value)) {
        out += "\"\\u0001" + token + "\"";
      } else {
        out += token;
      }
      i = end;
      continue;
    }
    out += c;
    ++i;
  }
  return out;
}

bool is_overflow_tag(const json& value) {
  if (!value.is_string()) return false;
  const auto& s = value.get_ref<const std::string&>();
  return !s.empty() && s.front() == kOverflowTag;
}

bool is_hex_color(const std::string& s) {
  if (s.size() != 7 || s[0] != '#') return false;
  return std::all_of(s.begin() + 1, s.end(),
                     [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

class Checker {
 public:
  void add(std::string path, std::string rule, std::string message) {
    issues.push_back({std::move(path), std::move(rule), std::move(message)});
  }

  const json* field(const json& obj, const std::string& path, const char* key, bool required) {
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) add(path + "/" + key, "missing-field", std::string("missing field '") + key + "'");
      return nullptr;
    }
    return &*it;
  }

  std::optional<std::string> string_field(const json& obj, const std::string& path, const char* key,
                                          bool required = true) {
    const json* v = field(obj, path, key, required);
    if (!v) return std::nullopt;
    if (!v->is_string() || is_overflow_tag(*v)) {
      add(path + "/" + key, "type", std::string("'") + key + "' must be a string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  std::optional<double> number(const json& v, const std::string& path) {
    if (is_overflow_tag(v)) {
      add(path, "non-finite",
          "number " + v.get<std::string>().substr(1) + " is not a finite double");
      return std::nullopt;
    }
    if (!v.is_number()) {
      add(path, "type", "expected a number");
      return std::nullopt;
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      add(path, "non-finite", "number is not finite");
      return std::nullopt;
    }
    return d;
  }

  std::optional<double> number_field(const json& obj, const std::string& path, const char* key,
                                     bool required = true) {
    const json* v = field(obj, path, key, required);
    if (!v) return std::nullopt;
    return number(*v, path + "/" + key);
  }

  std::optional<Eigen::Vector3d> vector_field(const json& obj, const std::string& path,
                                              const char* key) {
    const json* v = field(obj, path, key, true);
    if (!v) return std::nullopt;
    const std::string p = path + "/" + key;
    if (!v->is_array()) {
      add(p, "type", std::string("'") + key + "' must be an array of 3 numbers");
      return std::nullopt;
    }
    if (v->size() != 3) {
      add(p, "arity", std::string("'") + key + "' must have exactly 3 components, got " +
                          std::to_string(v->size()));
      return std::nullopt;
    }
    Eigen::Vector3d out;
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      auto d = number((*v)[static_cast<std::size_t>(i)], p + "/" + std::to_string(i));
      if (d) {
        out[i] = *d;
      } else {
        ok = false;
      }
    }
    if (!ok) return std::nullopt;
    return out;
  }

  std::vector<ValidationIssue> issues;
};

struct Parsed {
  Scene scene;
  std::vector<ValidationIssue> issues;
};

Parsed parse_document(const json& doc, const ValidationContext& context) {
  Checker check;
  Scene scene;
  if (!doc.is_object()) {
    check.add("", "type", "scene document must be an object");
    return {std::move(scene), std::move(check.issues)};
  }

  std::unordered_map<std::string, std::size_t> node_ids;
  if (const json* nodes = check.field(doc, "", "nodes", true)) {
    if (!nodes->is_array()) {
      check.add("/nodes", "type", "'nodes' must be an array");
    } else {
      for (std::size_t i = 0; i < nodes->size(); ++i) {
        const json& n = (*nodes)[i];
        const std::string p = "/nodes/" + std::to_string(i);
        if (!n.is_object()) {
          check.add(p, "type", "node must be an object");
          continue;
        }
        SceneNode node;
        bool ok = true;
        if (auto id = check.string_field(n, p, "id")) {
          if (id->empty()) {
            check.add(p + "/id", "empty-id", "node id must not be empty");
            ok = false;
          } else if (auto [it, fresh] = node_ids.emplace(*id, i); !fresh) {
            check.add(p + "/id", "duplicate-id",
                      "node id '" + *id + "' already used by /nodes/" + std::to_string(it->second));
            ok = false;
          }
          node.id = *id;
        } else {
          ok = false;
        }
        if (auto label = check.string_field(n, p, "label")) {
          node.label = *label;
        } else {
          ok = false;
        }
        if (auto pos = check.vector_field(n, p, "position")) {
          node.position = *pos;
        } else {
          ok = false;
        }
        if (auto shape = check.string_field(n, p, "shape")) {
          if (auto s = shape_from_string(*shape)) {
            node.shape = *s;
          } else {
            check.add(p + "/shape", "bad-shape",
                      "shape '" + *shape + "' is not one of sphere, cube, cone, cylinder, torus");
            ok = false;
          }
        } else {
          ok = false;
        }
        if (auto color = check.string_field(n, p, "color")) {
          if (is_hex_color(*color)) {
            node.color = *color;
          } else {
            check.add(p + "/color", "bad-color", "color '" + *color + "' is not #RRGGBB");
            ok = false;
          }
        } else {
          ok = false;
        }
        if (auto scale = check.number_field(n, p, "scale")) {
          if (*scale > 0) {
            node.scale = *scale;
          } else {
            check.add(p + "/scale", "non-positive-scale", "scale must be > 0");
            ok = false;
          }
        } else {
          ok = false;
        }
        if (ok) scene.nodes.push_back(std::move(node));
      }
    }
  }

  std::vector<std::pair<std::size_t, SceneEdge>> self_loops;
  if (const json* edges = check.field(doc, "", "edges", false)) {
    if (!edges->is_array()) {
      check.add("/edges", "type", "'edges' must be an array");
    } else {
      for (std::size_t i = 0; i < edges->size(); ++i) {
        const json& e = (*edges)[i];
        const std::string p = "/edges/" + std::to_string(i);
        if (!e.is_object()) {
          check.add(p, "type", "edge must be an object");
          continue;
        }
        SceneEdge edge;
        bool ok = true;
        for (auto [key, slot] : {std::pair{"source", &edge.source}, std::pair{"target", &edge.target}}) {
          if (auto end = check.string_field(e, p, key)) {
            if (!node_ids.count(*end)) {
              check.add(p + "/" + key, "dangling-edge", std::string(key) + " '" + *end +
                                                            "' does not name a node");
              ok = false;
            }
            *slot = *end;
          } else {
            ok = false;
          }
        }
        if (auto color = check.string_field(e, p, "color", false)) {
          if (is_hex_color(*color)) {
            edge.color = *color;
          } else {
            check.add(p + "/color", "bad-color", "color '" + *color + "' is not #RRGGBB");
            ok = false;
          }
        } else if (e.contains("color")) {
          ok = false;
        }
        if (auto width = check.number_field(e, p, "width", false)) {
          if (*width > 0) {
            edge.width = *width;
          } else {
            check.add(p + "/width", "non-positive-width", "width must be > 0");
            ok = false;
          }
        } else if (e.contains("width")) {
          ok = false;
        }
        if (!ok) continue;
        if (edge.source == edge.target) self_loops.emplace_back(i, edge);
        scene.edges.push_back(std::move(edge));
      }
    }
  }

  std::unordered_set<std::string> slate_ids;
  if (const json* slates = check.field(doc, "", "slates", false)) {
    if (!slates->is_array()) {
      check.add("/slates", "type", "'slates' must be an array");
    } else {
      for (std::size_t i = 0; i < slates->size(); ++i) {
        const json& s = (*slates)[i];
        const std::string p = "/slates/" + std::to_string(i);
        if (!s.is_object()) {
          check.add(p, "type", "slate must be an object");
          continue;
        }
        Slate slate;
        bool ok = true;
        if (auto id = check.string_field(s, p, "id")) {
          if (!slate_ids.insert(*id).second) {
            check.add(p + "/id", "duplicate-id", "slate id '" + *id + "' is not unique");
            ok = false;
          }
          slate.id = *id;
        } else {
          ok = false;
        }
        if (auto text = check.string_field(s, p, "text")) {
          if (text->empty()) {
            check.add(p + "/text", "empty-text", "slate text must not be empty");
            ok = false;
          }
          slate.text = *text;
        } else {
          ok = false;
        }
        if (auto pos = check.vector_field(s, p, "position")) {
          slate.position = *pos;
        } else {
          ok = false;
        }
        if (ok) scene.slates.push_back(std::move(slate));
      }
    }
  }

  if (auto reasoning = check.string_field(doc, "", "reasoning", false)) {
    scene.reasoning = *reasoning;
  }

  if (context.truth) {
    const CallGraph& truth = *context.truth;
    if (!truth.nodes.empty() && node_ids.empty()) {
      check.add("/nodes", "empty-scene", "the call graph has functions but the scene has no nodes");
    }
    if (!self_loops.empty()) {
      std::map<std::string, std::string> matched;
      for (auto& [node, fn] : match_nodes(scene, truth)) matched.emplace(node, fn);
      for (const auto& [i, edge] : self_loops) {
        auto it = matched.find(edge.source);
        const bool allowed =
            it != matched.end() &&
            std::binary_search(truth.edges.begin(), truth.edges.end(), CallEdge{it->second, it->second});
        if (!allowed)
          check.add("/edges/" + std::to_string(i), "self-loop",
                    "edge from '" + edge.source + "' to itself has no matching self-call");
      }
    }
  }

  return {std::move(scene), std::move(check.issues)};
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

std::optional<std::uint64_t> parse_hex(const std::string& digits) {
  if (digits.empty() || digits.size() > 16) return std::nullopt;
  return std::stoull(digits, nullptr, 16);
}

std::vector<std::uint64_t> address_tags(const std::string& text) {
  static const std::regex kTag("(?:sub_|0x)([0-9a-fA-F]+)");
  std::vector<std::uint64_t> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kTag); it != std::sregex_iterator();
       ++it) {
    if (auto v = parse_hex((*it)[1].str())) out.push_back(*v);
  }
  return out;
}

}  // namespace

std::string_view to_string(Shape shape) {
  switch (shape) {
    case Shape::Sphere: return "sphere";
    case Shape::Cube: return "cube";
    case Shape::Cone: return "cone";
    case Shape::Cylinder: return "cylinder";
    case Shape::Torus: return "torus";
  }
  return "sphere";
}

std::optional<Shape> shape_from_string(std::string_view name) {
  for (Shape s : kAllShapes)
    if (to_string(s) == name) return s;
  return std::nullopt;
}

Eigen::Index Scene::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<Eigen::Index>(i);
  return -1;
}

Eigen::Matrix<double, Eigen::Dynamic, 3> Scene::positions() const {
  Eigen::Matrix<double, Eigen::Dynamic, 3> out(static_cast<Eigen::Index>(nodes.size()), 3);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = nodes[i].position.transpose();
  return out;
}

Eigen::Matrix<Eigen::Index, Eigen::Dynamic, 2> Scene::edge_indices() const {
  std::unordered_map<std::string_view, Eigen::Index> index;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    index.emplace(nodes[i].id, static_cast<Eigen::Index>(i));
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, 2> out(static_cast<Eigen::Index>(edges.size()), 2);
  for (std::size_t j = 0; j < edges.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    auto s = index.find(edges[j].source);
    auto t = index.find(edges[j].target);
    out(row, 0) = s == index.end() ? -1 : s->second;
    out(row, 1) = t == index.end() ? -1 : t->second;
  }
  return out;
}

SceneValidationError::SceneValidationError(std::vector<ValidationIssue> issues)
    : std::runtime_error([&] {
        std::string msg = "scene has " + std::to_string(issues.size()) + " validation error(s)";
        for (const auto& i : issues) msg += "\n  " + i.path + " [" + i.rule + "] " + i.message;
        return msg;
      }()),
      issues_(std::move(issues)) {}

bool SceneValidationError::has_rule(std::string_view rule) const {
  return std::any_of(issues_.begin(), issues_.end(), [&](const auto& i) { return i.rule == rule; });
}

nlohmann::json SceneValidationError::to_json() const {
  json errors = json::array();
  for (const auto& i : issues_)
    errors.push_back({{"path", i.path}, {"rule", i.rule}, {"message", i.message}});
  return {{"errors", errors}};
}

std::vector<ValidationIssue> scene_issues(const nlohmann::json& doc, const ValidationContext& context) {
  return parse_document(doc, context).issues;
}

Scene validate_scene_document(const nlohmann::json& doc, const ValidationContext& context) {
  auto parsed = parse_document(doc, context);
  if (!parsed.issues.empty()) throw SceneValidationError(std::move(parsed.issues));
  return std::move(parsed.scene);
}

Scene validate_scene(std::string_view raw, const ValidationContext& context) {
  json doc;
  try {
    doc = json::parse(tag_overflowing_numbers(raw));
  } catch (const json::exception& e) {
    throw SceneParseError(e.what());
  }
  return validate_scene_document(doc, context);
}

Scene canonicalize(Scene scene) {
  for (auto& n : scene.nodes) n.color = upper(n.color);
  for (auto& e : scene.edges)
    if (e.color) e.color = upper(*e.color);
  std::sort(scene.nodes.begin(), scene.nodes.end(),
            [](const SceneNode& a, const SceneNode& b) { return a.id < b.id; });
  std::sort(scene.edges.begin(), scene.edges.end(), [](const SceneEdge& a, const SceneEdge& b) {
    return std::tie(a.source, a.target, a.color, a.width) < std::tie(b.source, b.target, b.color, b.width);
  });
  std::sort(scene.slates.begin(), scene.slates.end(),
            [](const Slate& a, const Slate& b) { return a.id < b.id; });
  return scene;
}

nlohmann::json to_json(const Scene& scene) {
  json nodes = json::array();
  for (const auto& n : scene.nodes) {
    nodes.push_back({{"id", n.id},
                     {"label", n.label},
                     {"position", vec_json(n.position)},
                     {"shape", to_string(n.shape)},
                     {"color", n.color},
                     {"scale", n.scale}});
  }
  json edges = json::array();
  for (const auto& e : scene.edges) {
    json edge = {{"source", e.source}, {"target", e.target}};
    if (e.color) edge["color"] = *e.color;
    if (e.width) edge["width"] = *e.width;
    edges.push_back(std::move(edge));
  }
  json slates = json::array();
  for (const auto& s : scene.slates)
    slates.push_back({{"id", s.id}, {"text", s.text}, {"position", vec_json(s.position)}});
  return {{"nodes", nodes}, {"edges", edges}, {"slates", slates}, {"reasoning", scene.reasoning}};
}

std::string canonical_bytes(const Scene& scene) { return to_json(canonicalize(scene)).dump(); }

nlohmann::json to_json(const CorrectnessReport& report) {
  auto pairs = [](const std::set<CallEdge>& edges) {
    json out = json::array();
    for (const auto& [a, b] : edges) out.push_back({{"caller", a}, {"callee", b}});
    return out;
  };
  return {{"missing_nodes", report.missing_nodes},
          {"extra_nodes", report.extra_nodes},
          {"missing_edges", pairs(report.missing_edges)},
          {"extra_edges", pairs(report.extra_edges)},
          {"node_coverage", report.node_coverage},
          {"edge_coverage", report.edge_coverage}};
}

std::vector<std::pair<std::string, std::string>> match_nodes(const Scene& scene,
                                                             const CallGraph& truth) {
  std::vector<const SceneNode*> pending;
  for (const auto& n : scene.nodes) pending.push_back(&n);
  std::sort(pending.begin(), pending.end(),
            [](const SceneNode* a, const SceneNode* b) { return a->id < b->id; });

  std::vector<bool> taken(truth.nodes.size(), false);
  std::vector<std::pair<std::string, std::string>> out;

  auto run_pass = [&](auto&& accepts) {
    std::vector<const SceneNode*> rest;
    for (const SceneNode* n : pending) {
      bool matched = false;
      for (std::size_t t = 0; t < truth.nodes.size() && !matched; ++t) {
        if (taken[t] || !accepts(*n, truth.nodes[t])) continue;
        taken[t] = true;
        out.emplace_back(n->id, truth.nodes[t].id);
        matched = true;
      }
      if (!matched) rest.push_back(n);
    }
    pending = std::move(rest);
  };

  run_pass([](const SceneNode& n, const GraphNode& g) { return n.label == g.id; });
  run_pass([](const SceneNode& n, const GraphNode& g) { return n.label == g.name; });
  run_pass([](const SceneNode& n, const GraphNode& g) {
    const auto l = lower(n.label);
    return l == lower(g.id) || l == lower(g.name);
  });
  run_pass([](const SceneNode& n, const GraphNode& g) {
    if (g.address == 0) return false;
    for (const auto* text : {&n.label, &n.id})
      for (auto addr : address_tags(*text))
        if (addr == g.address) return true;
    return false;
  });

  std::sort(out.begin(), out.end());
  return out;
}

CorrectnessReport correctness_report(const Scene& scene, const CallGraph& truth) {
  CorrectnessReport report;
  std::map<std::string, std::string> fn_of;
  for (auto& [node, fn] : match_nodes(scene, truth)) fn_of.emplace(node, fn);

  std::set<std::string> matched_fns;
  for (const auto& [node, fn] : fn_of) matched_fns.insert(fn);
  for (const auto& n : truth.nodes)
    if (!matched_fns.count(n.id)) report.missing_nodes.insert(n.id);
  for (const auto& n : scene.nodes)
    if (!fn_of.count(n.id)) report.extra_nodes.insert(n.id);

  std::set<CallEdge> drawn;
  for (const auto& e : scene.edges) {
    auto s = fn_of.find(e.source);
    auto t = fn_of.find(e.target);
    if (s != fn_of.end() && t != fn_of.end()) drawn.emplace(s->second, t->second);
  }
  const std::set<CallEdge> expected(truth.edges.begin(), truth.edges.end());
  std::size_t hit = 0;
  for (const auto& e : expected) {
    if (drawn.count(e)) {
      ++hit;
    } else {
      report.missing_edges.insert(e);
    }
  }
  for (const auto& e : drawn)
    if (!expected.count(e)) report.extra_edges.insert(e);

  if (!truth.nodes.empty())
    report.node_coverage = static_cast<double>(matched_fns.size()) / truth.nodes.size();
  if (!expected.empty()) report.edge_coverage = static_cast<double>(hit) / expected.size();
  return report;
}

Scene scene_from_graph(const CallGraph& graph) {
  std::unordered_map<std::string, std::vector<std::string>> callees;
  for (const auto& [a, b] : graph.edges) callees[a].push_back(b);

  std::map<std::string, int> depth;
  std::deque<std::string> queue;
  for (const auto& r : graph.roots)
    if (depth.emplace(r, 0).second) queue.push_back(r);
  while (!queue.empty()) {
    const std::string id = queue.front();
    queue.pop_front();
    for (const auto& c : callees[id])
      if (depth.emplace(c, depth[id] + 1).second) queue.push_back(c);
  }
  int deepest = 0;
  for (const auto& [id, d] : depth) deepest = std::max(deepest, d);

  std::map<int, int> layer_width;
  Scene scene;
  for (const auto& n : graph.nodes) {
    auto it = depth.find(n.id);
    const int d = it == depth.end() ? deepest + 1 : it->second;
    const int column = layer_width[d]++;
    SceneNode node;
    node.id = n.id;
    node.label = n.id;
    node.position = Eigen::Vector3d(2.0 * column, -2.0 * d, 0.0);
    node.shape = n.is_import ? Shape::Cube : Shape::Sphere;
    node.color = n.is_import ? "#E0A030" : "#4080C0";
    node.scale = 0.5;
    scene.nodes.push_back(std::move(node));
  }
  for (const auto& [a, b] : graph.edges) scene.edges.push_back({a, b, std::nullopt, std::nullopt});
  scene.reasoning = "Layered call graph: depth from the roots runs downward.";
  return canonicalize(std::move(scene));
}

}  // namespace callscape

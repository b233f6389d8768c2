#include "callscape/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace callscape {
namespace {

using nlohmann::json;

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::int64_t edge_crossings(const Scene& scene) {
  return edge_crossings(scene.positions(), scene.edge_indices());
}

double spatial_dispersion(const Scene& scene) { return spatial_dispersion(scene.positions()); }

std::pair<double, double> edge_length_stats(const Scene& scene) {
  return edge_length_stats(scene.positions(), scene.edge_indices());
}

int hierarchy_depth(const Scene& input, const CallGraph& truth) {
  const Scene scene = canonicalize(input);  // nodes in id order
  const auto n = static_cast<int>(scene.nodes.size());
  if (n == 0) return 0;

  const auto edges = scene.edge_indices();
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
  std::vector<int> in_degree(static_cast<std::size_t>(n), 0);
  for (Eigen::Index j = 0; j < edges.rows(); ++j) {
    const int s = static_cast<int>(edges(j, 0)), t = static_cast<int>(edges(j, 1));
    out[static_cast<std::size_t>(s)].push_back(t);
    if (s != t) ++in_degree[static_cast<std::size_t>(t)];
  }
  for (auto& targets : out) {
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  }

  std::vector<int> roots;
  for (int i = 0; i < n; ++i)
    if (in_degree[static_cast<std::size_t>(i)] == 0) roots.push_back(i);
  if (roots.empty()) {
    int start = 0;
    for (const auto& [node, fn] : match_nodes(scene, truth)) {
      if (fn == truth.entry) {
        start = static_cast<int>(scene.index_of(node));
        break;
      }
    }
    roots.push_back(start);
  }

  // Iterative DFS; edges into a node still on the stack close a cycle and are
  // dropped. The rest form a DAG whose finishing order is a reverse topological
  // order.
  enum : std::uint8_t { kWhite, kGrey, kBlack };
  std::vector<std::uint8_t> colour(static_cast<std::size_t>(n), kWhite);
  std::vector<std::vector<int>> kept(static_cast<std::size_t>(n));
  std::vector<int> finished;
  for (int root : roots) {
    if (colour[static_cast<std::size_t>(root)] != kWhite) continue;
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    colour[static_cast<std::size_t>(root)] = kGrey;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& targets = out[static_cast<std::size_t>(v)];
      if (next == targets.size()) {
        colour[static_cast<std::size_t>(v)] = kBlack;
        finished.push_back(v);
        stack.pop_back();
        continue;
      }
      const int w = targets[next++];
      const auto c = colour[static_cast<std::size_t>(w)];
      if (c == kGrey) continue;
      kept[static_cast<std::size_t>(v)].push_back(w);
      if (c == kWhite) {
        colour[static_cast<std::size_t>(w)] = kGrey;
        stack.emplace_back(w, 0);
      }
    }
  }

  std::vector<int> longest(static_cast<std::size_t>(n), 0);
  for (int v : finished)
    for (int w : kept[static_cast<std::size_t>(v)])
      longest[static_cast<std::size_t>(v)] =
          std::max(longest[static_cast<std::size_t>(v)], longest[static_cast<std::size_t>(w)] + 1);

  int depth = 0;
  for (int r : roots) depth = std::max(depth, longest[static_cast<std::size_t>(r)]);
  return depth;
}

EncodingDiversity encoding_diversity(const Scene& scene) {
  std::set<std::string> colors;
  std::set<Shape> shapes;
  for (const auto& node : scene.nodes) {
    colors.insert(upper(node.color));
    shapes.insert(node.shape);
  }
  return {static_cast<int>(colors.size()), static_cast<int>(shapes.size())};
}

MetricsReport score_scene(const Scene& scene, const CallGraph& truth) {
  MetricsReport r;
  r.edge_crossings = edge_crossings(scene);
  r.spatial_dispersion = spatial_dispersion(scene);
  r.hierarchy_depth = hierarchy_depth(scene, truth);
  const auto diversity = encoding_diversity(scene);
  r.color_diversity = diversity.colors;
  r.shape_diversity = diversity.shapes;
  std::tie(r.edge_length_mean, r.edge_length_std) = edge_length_stats(scene);
  return r;
}

Eigen::Matrix<double, 1, 7> metric_vector(const MetricsReport& r) {
  Eigen::Matrix<double, 1, 7> v;
  v << static_cast<double>(r.edge_crossings), r.spatial_dispersion, r.hierarchy_depth,
      r.color_diversity, r.shape_diversity, r.edge_length_mean, r.edge_length_std;
  return v;
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"edge_crossings", r.edge_crossings},
          {"spatial_dispersion", r.spatial_dispersion},
          {"hierarchy_depth", r.hierarchy_depth},
          {"color_diversity", r.color_diversity},
          {"shape_diversity", r.shape_diversity},
          {"edge_length_mean", r.edge_length_mean},
          {"edge_length_std", r.edge_length_std}};
}

MetricsReport metrics_from_json(const nlohmann::json& doc) {
  auto number = [&](const char* key, bool integral) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_number() || (integral && !it->is_number_integer()))
      throw MetricsError(MetricsErrc::SchemaViolation,
                         std::string("metrics document: bad or missing '") + key + "'");
    if (it->get<double>() < 0)
      throw MetricsError(MetricsErrc::SchemaViolation,
                         std::string("metrics document: negative '") + key + "'");
    return *it;
  };
  if (!doc.is_object()) throw MetricsError(MetricsErrc::SchemaViolation, "metrics document must be an object");
  MetricsReport r;
  r.edge_crossings = number("edge_crossings", true).get<std::int64_t>();
  r.spatial_dispersion = number("spatial_dispersion", false).get<double>();
  r.hierarchy_depth = number("hierarchy_depth", true).get<int>();
  r.color_diversity = number("color_diversity", true).get<int>();
  r.shape_diversity = number("shape_diversity", true).get<int>();
  r.edge_length_mean = number("edge_length_mean", false).get<double>();
  r.edge_length_std = number("edge_length_std", false).get<double>();
  return r;
}

std::vector<CompositeScore> composite_scores(
    const std::vector<std::pair<std::string, MetricsReport>>& cohort) {
  if (cohort.size() < 2)
    throw MetricsError(MetricsErrc::CohortTooSmall,
                       "composite scores need at least 2 reports, got " + std::to_string(cohort.size()));
  Eigen::Matrix<double, Eigen::Dynamic, 7> raw(static_cast<Eigen::Index>(cohort.size()), 7);
  for (std::size_t i = 0; i < cohort.size(); ++i)
    raw.row(static_cast<Eigen::Index>(i)) = metric_vector(cohort[i].second);

  const Eigen::Matrix<double, 1, 7> lo = raw.colwise().minCoeff();
  const Eigen::Matrix<double, 1, 7> range = raw.colwise().maxCoeff() - lo;
  Eigen::Matrix<double, Eigen::Dynamic, 7> normalized(raw.rows(), 7);
  for (int k = 0; k < 7; ++k) {
    if (range[k] > 0) {
      normalized.col(k) = (raw.col(k).array() - lo[k]) / range[k];
    } else {
      normalized.col(k).setConstant(0.5);
    }
  }

  std::vector<CompositeScore> out;
  out.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto row = normalized.row(static_cast<Eigen::Index>(i));
    CompositeScore score;
    score.scene_id = cohort[i].first;
    score.value = row.mean();
    for (int k = 0; k < 7; ++k) score.per_metric_normalized.emplace(kMetricNames[static_cast<std::size_t>(k)], row[k]);
    out.push_back(std::move(score));
  }
  return out;
}

}  // namespace callscape

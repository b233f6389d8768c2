#pragma once

// Objective layout measures for a scene and the cohort composite score.
//
// The geometric kernels are templates over Eigen expressions: positions are
// N x 3 (one row per node), edges are E x 2 row indices into positions.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "callscape/scene.hpp"
#include "json.hpp"

namespace callscape {

namespace detail {

// Twice the signed area of (a, b, c).
template <typename Scalar>
Scalar orient(const Eigen::Matrix<Scalar, 2, 1>& a, const Eigen::Matrix<Scalar, 2, 1>& b,
              const Eigen::Matrix<Scalar, 2, 1>& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

template <typename Scalar>
int sign(Scalar v) {
  return (v > Scalar(0)) - (v < Scalar(0));
}

}  // namespace detail

// True when the open segments p1p2 and p3p4 cross at a single interior point.
template <typename Scalar>
bool segments_cross(const Eigen::Matrix<Scalar, 2, 1>& p1, const Eigen::Matrix<Scalar, 2, 1>& p2,
                    const Eigen::Matrix<Scalar, 2, 1>& p3, const Eigen::Matrix<Scalar, 2, 1>& p4) {
  using detail::orient;
  using detail::sign;
  const int o1 = sign(orient(p1, p2, p3)), o2 = sign(orient(p1, p2, p4));
  const int o3 = sign(orient(p3, p4, p1)), o4 = sign(orient(p3, p4, p2));
  return o1 * o2 < 0 && o3 * o4 < 0;
}

// Crossings in the plane spanned by coordinate axes (a, b).
template <typename DerivedP, typename DerivedE>
std::int64_t projected_crossings(const Eigen::MatrixBase<DerivedP>& positions,
                                 const Eigen::MatrixBase<DerivedE>& edges, int a, int b) {
  using Scalar = typename DerivedP::Scalar;
  using Point = Eigen::Matrix<Scalar, 2, 1>;
  const Eigen::Index m = edges.rows();
  std::int64_t count = 0;
  auto at = [&](Eigen::Index node) { return Point(positions(node, a), positions(node, b)); };
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto s1 = edges(i, 0), t1 = edges(i, 1);
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const auto s2 = edges(j, 0), t2 = edges(j, 1);
      if (s1 == s2 || s1 == t2 || t1 == s2 || t1 == t2) continue;
      if (segments_cross(at(s1), at(t1), at(s2), at(t2))) ++count;
    }
  }
  return count;
}

// XY crossings plus XZ crossings.
template <typename DerivedP, typename DerivedE>
std::int64_t edge_crossings(const Eigen::MatrixBase<DerivedP>& positions,
                            const Eigen::MatrixBase<DerivedE>& edges) {
  return projected_crossings(positions, edges, 0, 1) + projected_crossings(positions, edges, 0, 2);
}

// Mean Euclidean distance over unordered node pairs; 0 below two nodes.
template <typename Derived>
typename Derived::Scalar spatial_dispersion(const Eigen::MatrixBase<Derived>& positions) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = positions.rows();
  if (n < 2) return Scalar(0);
  Scalar total(0);
  for (Eigen::Index i = 0; i + 1 < n; ++i)
    total += (positions.bottomRows(n - i - 1).rowwise() - positions.row(i)).rowwise().norm().sum();
  return total / (Scalar(n) * Scalar(n - 1) / Scalar(2));
}

template <typename DerivedP, typename DerivedE>
Eigen::Matrix<typename DerivedP::Scalar, Eigen::Dynamic, 1> edge_lengths(
    const Eigen::MatrixBase<DerivedP>& positions, const Eigen::MatrixBase<DerivedE>& edges) {
  Eigen::Matrix<typename DerivedP::Scalar, Eigen::Dynamic, 1> out(edges.rows());
  for (Eigen::Index j = 0; j < edges.rows(); ++j)
    out[j] = (positions.row(edges(j, 1)) - positions.row(edges(j, 0))).norm();
  return out;
}

// (mean, population standard deviation); (0, 0) without edges.
template <typename DerivedP, typename DerivedE>
std::pair<typename DerivedP::Scalar, typename DerivedP::Scalar> edge_length_stats(
    const Eigen::MatrixBase<DerivedP>& positions, const Eigen::MatrixBase<DerivedE>& edges) {
  using Scalar = typename DerivedP::Scalar;
  if (edges.rows() == 0) return {Scalar(0), Scalar(0)};
  const auto lengths = edge_lengths(positions, edges);
  const Scalar mean = lengths.mean();
  const Scalar var = (lengths.array() - mean).square().mean();
  return {mean, std::sqrt(var)};
}

std::int64_t edge_crossings(const Scene& scene);
double spatial_dispersion(const Scene& scene);
std::pair<double, double> edge_length_stats(const Scene& scene);

// Longest root path over the scene's edges after DFS back edges are dropped.
int hierarchy_depth(const Scene& scene, const CallGraph& truth);

struct EncodingDiversity {
  int colors = 0;
  int shapes = 0;
};

EncodingDiversity encoding_diversity(const Scene& scene);

struct MetricsReport {
  std::int64_t edge_crossings = 0;
  double spatial_dispersion = 0;
  int hierarchy_depth = 0;
  int color_diversity = 0;
  int shape_diversity = 0;
  double edge_length_mean = 0;
  double edge_length_std = 0;

  bool operator==(const MetricsReport&) const = default;
};

inline constexpr std::array<std::string_view, 7> kMetricNames = {
    "edge_crossings",  "spatial_dispersion", "hierarchy_depth", "color_diversity",
    "shape_diversity", "edge_length_mean",   "edge_length_std"};

MetricsReport score_scene(const Scene& scene, const CallGraph& truth);

// Fields in kMetricNames order.
Eigen::Matrix<double, 1, 7> metric_vector(const MetricsReport& report);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& doc);

enum class MetricsErrc { CohortTooSmall, SchemaViolation };

class MetricsError : public std::runtime_error {
 public:
  MetricsError(MetricsErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  MetricsErrc code() const { return code_; }

 private:
  MetricsErrc code_;
};

struct CompositeScore {
  std::string scene_id;
  double value = 0;
  std::map<std::string, double> per_metric_normalized;
};

// Per-metric min-max normalization over the cohort; a constant metric
// contributes 0.5. value is the mean of the seven normalized values.
std::vector<CompositeScore> composite_scores(
    const std::vector<std::pair<std::string, MetricsReport>>& cohort);

}  // namespace callscape

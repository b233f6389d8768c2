#pragma once

// glTF 2.0 (.glb) export of scenes.
//
// Node 0 is an untransformed root whose extras carry the canonical scene
// document under "callscape_scene". Each scene node becomes a mesh node named
// after its label; each edge a cylinder node stretched between its endpoints;
// each slate a mesh-less node carrying its text in extras.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "callscape/scene.hpp"
#include "json.hpp"

namespace callscape {

class GltfError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using VertexMatrix = Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor>;
using TriangleMatrix = Eigen::Matrix<std::uint16_t, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct MeshData {
  VertexMatrix positions;
  VertexMatrix normals;  // unit length
  TriangleMatrix triangles;  // counter-clockwise seen from outside
};

// Unit primitives centered at the origin inside [-0.5, 0.5]^3; axial shapes
// run along +Y.
MeshData primitive_mesh(Shape shape);

inline constexpr double kDefaultEdgeWidth = 0.05;
inline constexpr const char* kDefaultEdgeColor = "#808080";

std::vector<std::uint8_t> export_gltf(const Scene& scene);

struct GlbDocument {
  nlohmann::json gltf;
  std::vector<std::uint8_t> bin;
};

GlbDocument parse_glb(std::span<const std::uint8_t> bytes);

// Recovers the canonical scene from the root node extras.
Scene scene_from_gltf(std::span<const std::uint8_t> bytes);

// sRGB "#RRGGBB" to linear RGBA.
Eigen::Vector4d linear_color(const std::string& hex);

}  // namespace callscape

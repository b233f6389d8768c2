#include "callscape/gltf.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>

#include <Eigen/Geometry>

namespace callscape {
namespace {

using nlohmann::json;

constexpr std::uint32_t kGlbMagic = 0x46546C67;  // "glTF"
constexpr std::uint32_t kChunkJson = 0x4E4F534A;
constexpr std::uint32_t kChunkBin = 0x004E4942;
constexpr int kFloat = 5126;
constexpr int kUnsignedShort = 5123;
constexpr int kArrayBuffer = 34962;
constexpr int kElementArrayBuffer = 34963;
constexpr int kSlices = 24;
constexpr int kStacks = 12;

class MeshBuilder {
 public:
  std::uint16_t vertex(const Eigen::Vector3f& p, const Eigen::Vector3f& n) {
    positions_.push_back(p);
    normals_.push_back(n.normalized());
    return static_cast<std::uint16_t>(positions_.size() - 1);
  }

  // Winding is fixed up against the vertex normals.
  void triangle(std::uint16_t a, std::uint16_t b, std::uint16_t c) {
    const Eigen::Vector3f face = (positions_[b] - positions_[a]).cross(positions_[c] - positions_[a]);
    if (face.squaredNorm() < 1e-14f) return;
    const Eigen::Vector3f n = normals_[a] + normals_[b] + normals_[c];
    if (face.dot(n) < 0) std::swap(b, c);
    triangles_.push_back({a, b, c});
  }

  MeshData finish() const {
    MeshData m;
    m.positions.resize(static_cast<Eigen::Index>(positions_.size()), 3);
    m.normals.resize(static_cast<Eigen::Index>(normals_.size()), 3);
    for (std::size_t i = 0; i < positions_.size(); ++i) {
      m.positions.row(static_cast<Eigen::Index>(i)) = positions_[i].transpose();
      m.normals.row(static_cast<Eigen::Index>(i)) = normals_[i].transpose();
    }
    m.triangles.resize(static_cast<Eigen::Index>(triangles_.size()), 3);
    for (std::size_t i = 0; i < triangles_.size(); ++i)
      for (int k = 0; k < 3; ++k) m.triangles(static_cast<Eigen::Index>(i), k) = triangles_[i][k];
    return m;
  }

 private:
  std::vector<Eigen::Vector3f> positions_;
  std::vector<Eigen::Vector3f> normals_;
  std::vector<std::array<std::uint16_t, 3>> triangles_;
};

float angle(int k, int n) { return 2.0f * std::numbers::pi_v<float> * static_cast<float>(k) / n; }

void disk(MeshBuilder& mb, float y, float sign) {
  const Eigen::Vector3f up(0, sign, 0);
  const auto center = mb.vertex({0, y, 0}, up);
  std::uint16_t prev = 0;
  for (int k = 0; k <= kSlices; ++k) {
    const float t = angle(k, kSlices);
    const auto v = mb.vertex({0.5f * std::cos(t), y, 0.5f * std::sin(t)}, up);
    if (k > 0) mb.triangle(center, prev, v);
    prev = v;
  }
}

MeshData sphere() {
  MeshBuilder mb;
  const int row = kSlices + 1;
  for (int s = 0; s <= kStacks; ++s) {
    const float phi = std::numbers::pi_v<float> * static_cast<float>(s) / kStacks;
    for (int k = 0; k <= kSlices; ++k) {
      const float t = angle(k, kSlices);
      const Eigen::Vector3f n(std::sin(phi) * std::cos(t), std::cos(phi), std::sin(phi) * std::sin(t));
      mb.vertex(0.5f * n, n);
    }
  }
  for (int s = 0; s < kStacks; ++s) {
    for (int k = 0; k < kSlices; ++k) {
      const auto a = static_cast<std::uint16_t>(s * row + k);
      const auto b = static_cast<std::uint16_t>(a + 1);
      const auto c = static_cast<std::uint16_t>(a + row);
      const auto d = static_cast<std::uint16_t>(c + 1);
      mb.triangle(a, c, b);
      mb.triangle(b, c, d);
    }
  }
  return mb.finish();
}

MeshData cube() {
  MeshBuilder mb;
  for (int axis = 0; axis < 3; ++axis) {
    for (float sign : {-1.0f, 1.0f}) {
      Eigen::Vector3f n = Eigen::Vector3f::Zero();
      n[axis] = sign;
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      std::uint16_t ids[4];
      int i = 0;
      for (float du : {-0.5f, 0.5f}) {
        for (float dv : {-0.5f, 0.5f}) {
          Eigen::Vector3f p = 0.5f * n;
          p[u] = du;
          p[v] = dv;
          ids[i++] = mb.vertex(p, n);
        }
      }
      mb.triangle(ids[0], ids[1], ids[3]);
      mb.triangle(ids[0], ids[3], ids[2]);
    }
  }
  return mb.finish();
}

MeshData cylinder() {
  MeshBuilder mb;
  std::uint16_t prev_lo = 0, prev_hi = 0;
  for (int k = 0; k <= kSlices; ++k) {
    const float t = angle(k, kSlices);
    const Eigen::Vector3f radial(std::cos(t), 0, std::sin(t));
    const auto lo = mb.vertex(0.5f * radial + Eigen::Vector3f(0, -0.5f, 0), radial);
    const auto hi = mb.vertex(0.5f * radial + Eigen::Vector3f(0, 0.5f, 0), radial);
    if (k > 0) {
      mb.triangle(prev_lo, prev_hi, hi);
      mb.triangle(prev_lo, hi, lo);
    }
    prev_lo = lo;
    prev_hi = hi;
  }
  disk(mb, -0.5f, -1.0f);
  disk(mb, 0.5f, 1.0f);
  return mb.finish();
}

MeshData cone() {
  MeshBuilder mb;
  // Slant normal for radius 0.5 over height 1.
  auto slant = [](float t) { return Eigen::Vector3f(std::cos(t), 0.5f, std::sin(t)); };
  for (int k = 0; k < kSlices; ++k) {
    const float t0 = angle(k, kSlices), t1 = angle(k + 1, kSlices);
    const auto a = mb.vertex({0.5f * std::cos(t0), -0.5f, 0.5f * std::sin(t0)}, slant(t0));
    const auto b = mb.vertex({0.5f * std::cos(t1), -0.5f, 0.5f * std::sin(t1)}, slant(t1));
    const auto apex = mb.vertex({0, 0.5f, 0}, slant(0.5f * (t0 + t1)));
    mb.triangle(a, b, apex);
  }
  disk(mb, -0.5f, -1.0f);
  return mb.finish();
}

MeshData torus() {
  constexpr float kMajor = 0.35f, kMinor = 0.15f;
  constexpr int kRing = 12;
  MeshBuilder mb;
  for (int k = 0; k <= kSlices; ++k) {
    const float u = angle(k, kSlices);
    for (int j = 0; j <= kRing; ++j) {
      const float v = angle(j, kRing);
      const Eigen::Vector3f n(std::cos(v) * std::cos(u), std::sin(v), std::cos(v) * std::sin(u));
      const Eigen::Vector3f c(kMajor * std::cos(u), 0, kMajor * std::sin(u));
      mb.vertex(c + kMinor * n, n);
    }
  }
  const int row = kRing + 1;
  for (int k = 0; k < kSlices; ++k) {
    for (int j = 0; j < kRing; ++j) {
      const auto a = static_cast<std::uint16_t>(k * row + j);
      const auto b = static_cast<std::uint16_t>(a + 1);
      const auto c = static_cast<std::uint16_t>(a + row);
      const auto d = static_cast<std::uint16_t>(c + 1);
      mb.triangle(a, c, b);
      mb.triangle(b, c, d);
    }
  }
  return mb.finish();
}

class BinaryBuffer {
 public:
  int view(const void* data, std::size_t size, int target, json& views) {
    const std::size_t offset = bytes.size();
    bytes.resize(offset + size);
    std::memcpy(bytes.data() + offset, data, size);
    while (bytes.size() % 4) bytes.push_back(0);
    views.push_back({{"buffer", 0},
                     {"byteOffset", offset},
                     {"byteLength", size},
                     {"target", target}});
    return static_cast<int>(views.size() - 1);
  }

  std::vector<std::uint8_t> bytes;
};

struct PrimitiveAccessors {
  int position;
  int normal;
  int indices;
};

json vec_array(const Eigen::Ref<const Eigen::RowVector3f>& v) {
  return json::array({static_cast<double>(v[0]), static_cast<double>(v[1]), static_cast<double>(v[2])});
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

}  // namespace

MeshData primitive_mesh(Shape shape) {
  switch (shape) {
    case Shape::Sphere: return sphere();
    case Shape::Cube: return cube();
    case Shape::Cone: return cone();
    case Shape::Cylinder: return cylinder();
    case Shape::Torus: return torus();
  }
  return sphere();
}

Eigen::Vector4d linear_color(const std::string& hex) {
  Eigen::Vector4d out(0, 0, 0, 1);
  for (int i = 0; i < 3; ++i) {
    const double c = std::stoi(hex.substr(1 + 2 * i, 2), nullptr, 16) / 255.0;
    out[i] = c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  }
  return out;
}

std::vector<std::uint8_t> export_gltf(const Scene& input) {
  const Scene scene = canonicalize(input);
  BinaryBuffer bin;
  json views = json::array(), accessors = json::array(), materials = json::array(),
       meshes = json::array(), nodes = json::array();

  std::map<Shape, PrimitiveAccessors> geometry;
  auto geometry_for = [&](Shape shape) {
    if (auto it = geometry.find(shape); it != geometry.end()) return it->second;
    const MeshData mesh = primitive_mesh(shape);
    const auto vertices = static_cast<std::size_t>(mesh.positions.rows());
    const auto indices = static_cast<std::size_t>(mesh.triangles.size());
    PrimitiveAccessors acc{};
    const int pv = bin.view(mesh.positions.data(), vertices * 3 * sizeof(float), kArrayBuffer, views);
    accessors.push_back({{"bufferView", pv},
                         {"componentType", kFloat},
                         {"count", vertices},
                         {"type", "VEC3"},
                         {"min", vec_array(mesh.positions.colwise().minCoeff())},
                         {"max", vec_array(mesh.positions.colwise().maxCoeff())}});
    acc.position = static_cast<int>(accessors.size() - 1);
    const int nv = bin.view(mesh.normals.data(), vertices * 3 * sizeof(float), kArrayBuffer, views);
    accessors.push_back({{"bufferView", nv}, {"componentType", kFloat}, {"count", vertices}, {"type", "VEC3"}});
    acc.normal = static_cast<int>(accessors.size() - 1);
    const int iv = bin.view(mesh.triangles.data(), indices * sizeof(std::uint16_t), kElementArrayBuffer, views);
    accessors.push_back(
        {{"bufferView", iv}, {"componentType", kUnsignedShort}, {"count", indices}, {"type", "SCALAR"}});
    acc.indices = static_cast<int>(accessors.size() - 1);
    geometry.emplace(shape, acc);
    return acc;
  };

  std::map<std::string, int> material_index;
  auto material_for = [&](const std::string& color) {
    if (auto it = material_index.find(color); it != material_index.end()) return it->second;
    const Eigen::Vector4d c = linear_color(color);
    materials.push_back({{"name", color},
                         {"pbrMetallicRoughness",
                          {{"baseColorFactor", {c[0], c[1], c[2], c[3]}},
                           {"metallicFactor", 0.0},
                           {"roughnessFactor", 0.8}}}});
    const int idx = static_cast<int>(materials.size() - 1);
    material_index.emplace(color, idx);
    return idx;
  };

  std::map<std::pair<std::string, std::string>, int> mesh_index;
  auto mesh_for = [&](Shape shape, const std::string& color, const std::string& role) {
    const auto key = std::make_pair(role + ":" + std::string(to_string(shape)), color);
    if (auto it = mesh_index.find(key); it != mesh_index.end()) return it->second;
    const auto acc = geometry_for(shape);
    meshes.push_back({{"name", key.first + " " + color},
                      {"primitives",
                       {{{"attributes", {{"POSITION", acc.position}, {"NORMAL", acc.normal}}},
                         {"indices", acc.indices},
                         {"material", material_for(color)}}}}});
    const int idx = static_cast<int>(meshes.size() - 1);
    mesh_index.emplace(key, idx);
    return idx;
  };

  nodes.push_back({{"name", "scene"}, {"extras", {{"callscape_scene", to_json(scene)}}}});
  json children = json::array();

  for (const auto& n : scene.nodes) {
    nodes.push_back({{"name", n.label},
                     {"mesh", mesh_for(n.shape, n.color, "node")},
                     {"translation", {n.position.x(), n.position.y(), n.position.z()}},
                     {"scale", {n.scale, n.scale, n.scale}},
                     {"extras",
                      {{"id", n.id},
                       {"label", n.label},
                       {"shape", to_string(n.shape)},
                       {"color", n.color},
                       {"scale", n.scale}}}});
    children.push_back(nodes.size() - 1);
  }

  const auto index = scene.edge_indices();
  for (std::size_t j = 0; j < scene.edges.size(); ++j) {
    const auto& e = scene.edges[j];
    const Eigen::Vector3d p = scene.nodes[static_cast<std::size_t>(index(static_cast<Eigen::Index>(j), 0))].position;
    const Eigen::Vector3d q = scene.nodes[static_cast<std::size_t>(index(static_cast<Eigen::Index>(j), 1))].position;
    const Eigen::Vector3d d = q - p;
    const double length = d.norm();
    if (length < 1e-9) continue;
    const Eigen::Vector3d mid = 0.5 * (p + q);
    const Eigen::Quaterniond rot = Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitY(), d).normalized();
    const double width = e.width.value_or(kDefaultEdgeWidth);
    const std::string color = e.color.value_or(kDefaultEdgeColor);
    nodes.push_back({{"name", e.source + " -> " + e.target},
                     {"mesh", mesh_for(Shape::Cylinder, color, "edge")},
                     {"translation", {mid.x(), mid.y(), mid.z()}},
                     {"rotation", {rot.x(), rot.y(), rot.z(), rot.w()}},
                     {"scale", {width, length, width}},
                     {"extras", {{"source", e.source}, {"target", e.target}}}});
    children.push_back(nodes.size() - 1);
  }

  for (const auto& s : scene.slates) {
    nodes.push_back({{"name", "slate " + s.id},
                     {"translation", {s.position.x(), s.position.y(), s.position.z()}},
                     {"extras", {{"slate", s.id}, {"text", s.text}}}});
    children.push_back(nodes.size() - 1);
  }
  if (!children.empty()) nodes[0]["children"] = children;

  json doc = {{"asset", {{"version", "2.0"}, {"generator", "callscape"}}},
              {"scene", 0},
              {"scenes", {{{"name", "call graph"}, {"nodes", {0}}}}},
              {"nodes", nodes}};
  if (!meshes.empty()) {
    doc["meshes"] = meshes;
    doc["materials"] = materials;
    doc["accessors"] = accessors;
    doc["bufferViews"] = views;
    doc["buffers"] = {{{"byteLength", bin.bytes.size()}}};
  }

  std::string text = doc.dump();
  while (text.size() % 4) text.push_back(' ');

  const bool has_bin = !bin.bytes.empty();
  const std::size_t total = 12 + 8 + text.size() + (has_bin ? 8 + bin.bytes.size() : 0);
  std::vector<std::uint8_t> out;
  out.reserve(total);
  put_u32(out, kGlbMagic);
  put_u32(out, 2);
  put_u32(out, static_cast<std::uint32_t>(total));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  put_u32(out, kChunkJson);
  out.insert(out.end(), text.begin(), text.end());
  if (has_bin) {
    put_u32(out, static_cast<std::uint32_t>(bin.bytes.size()));
    put_u32(out, kChunkBin);
    out.insert(out.end(), bin.bytes.begin(), bin.bytes.end());
  }
  return out;
}

GlbDocument parse_glb(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 20) throw GltfError("glb shorter than its header");
  if (get_u32(bytes, 0) != kGlbMagic) throw GltfError("bad glb magic");
  if (get_u32(bytes, 4) != 2) throw GltfError("unsupported glb version");
  if (get_u32(bytes, 8) != bytes.size()) throw GltfError("glb length field does not match");
  GlbDocument doc;
  std::size_t at = 12;
  bool seen_json = false;
  while (at + 8 <= bytes.size()) {
    const std::size_t length = get_u32(bytes, at);
    const std::uint32_t type = get_u32(bytes, at + 4);
    at += 8;
    if (at + length > bytes.size() || length % 4) throw GltfError("bad glb chunk length");
    auto body = bytes.subspan(at, length);
    if (!seen_json) {
      if (type != kChunkJson) throw GltfError("first glb chunk must be JSON");
      try {
        doc.gltf = json::parse(body.begin(), body.end());
      } catch (const json::exception& e) {
        throw GltfError(std::string("glb JSON chunk: ") + e.what());
      }
      seen_json = true;
    } else if (type == kChunkBin) {
      doc.bin.assign(body.begin(), body.end());
    }
    at += length;
  }
  if (!seen_json) throw GltfError("glb has no JSON chunk");
  if (at != bytes.size()) throw GltfError("trailing bytes after last glb chunk");
  return doc;
}

Scene scene_from_gltf(std::span<const std::uint8_t> bytes) {
  const GlbDocument doc = parse_glb(bytes);
  const json* extras = nullptr;
  try {
    extras = &doc.gltf.at("nodes").at(0).at("extras").at("callscape_scene");
  } catch (const json::exception&) {
    throw GltfError("root node carries no scene metadata");
  }
  return canonicalize(validate_scene_document(*extras));
}

}  // namespace callscape

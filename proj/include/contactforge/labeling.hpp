#pragma once

#include "contactforge/core.hpp"
#include "contactforge/mesh.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace contactforge {

/// Named distance threshold used to binarize proximity.
struct ThresholdProfile {
  std::string name;
  double threshold = 0.0; // meters

  static ThresholdProfile make(std::string name, double threshold) {
    if (!(threshold > 0.0) || !std::isfinite(threshold))
      throw std::invalid_argument("contact threshold must be positive, got " + format_double(threshold));
    return {std::move(name), threshold};
  }
  static ThresholdProfile default_profile() { return {"default", 0.010}; }
  static ThresholdProfile coarse() { return {"coarse", 0.035}; }
  static ThresholdProfile fine() { return {"fine", 0.005}; }

  static ThresholdProfile by_name(std::string_view name) {
    if (name == "default")
      return default_profile();
    if (name == "coarse")
      return coarse();
    if (name == "fine")
      return fine();
    throw std::invalid_argument("unknown threshold profile '" + std::string(name) + "'");
  }
};

struct ClosestPoint {
  Vec3 point{};
  double distance = 0.0;
};

inline ClosestPoint closest_point_on_segment(const Vec3 &p, const Vec3 &a, const Vec3 &b) {
  const Vec3 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 q = a + t * ab;
  return {q, distance(p, q)};
}

inline constexpr double kDegenerateArea = 1e-12; // m²

/// Closest point to `p` on triangle (a, b, c) by Voronoi-region
/// classification. Triangles with area at or below 1e-12 m² fall back to the
/// longest edge.
inline ClosestPoint closest_point_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
  const Vec3 ab = b - a, ac = c - a;
  if (0.5 * norm(cross(ab, ac)) <= kDegenerateArea) {
    const double lab = dot(ab, ab), lbc = squared_distance(b, c), lca = dot(ac, ac);
    if (lab >= lbc && lab >= lca)
      return closest_point_on_segment(p, a, b);
    if (lbc >= lca)
      return closest_point_on_segment(p, b, c);
    return closest_point_on_segment(p, c, a);
  }

  auto at = [&](const Vec3 &q) { return ClosestPoint{q, distance(p, q)}; };

  const Vec3 ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0)
    return at(a);

  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3)
    return at(b);

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0)
    return at(a + (d1 / (d1 - d3)) * ab);

  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6)
    return at(c);

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0)
    return at(a + (d2 / (d2 - d6)) * ac);

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return at(b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b));

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return at(a + v * ab + w * ac);
}

struct Aabb {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void expand(const Vec3 &p) {
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  }
  void expand(const Aabb &b) {
    expand(b.lo);
    expand(b.hi);
  }
  bool contains(const Aabb &b) const {
    for (int k = 0; k < 3; ++k)
      if (b.lo[k] < lo[k] || b.hi[k] > hi[k])
        return false;
    return true;
  }
  double squared_distance_to(const Vec3 &p) const {
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = std::max({lo[k] - p[k], 0.0, p[k] - hi[k]});
      d2 += d * d;
    }
    return d2;
  }
};

struct SurfaceHit {
  double distance = std::numeric_limits<double>::infinity();
  std::size_t triangle = std::numeric_limits<std::size_t>::max();
};

/// Bounding-volume hierarchy over the triangles of an interacting mesh.
/// Median split on centroids along the widest axis; leaves hold at most
/// `kLeafSize` triangles.
class TriangleBVH {
public:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    Aabb box;
    std::size_t left = 0, right = 0; // children, valid when count == 0
    std::size_t first = 0, count = 0; // range into order() for leaves
  };

  TriangleBVH() = default;

  TriangleBVH(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    for (std::size_t t = 0; t < triangles_.size(); ++t)
      for (std::size_t k = 0; k < 3; ++k)
        if (triangles_[t][k] >= vertices_.size())
          throw std::invalid_argument("triangle " + std::to_string(t) + ": index out of range");
    order_.resize(triangles_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!triangles_.empty()) {
      centroids_.reserve(triangles_.size());
      for (const auto &t : triangles_)
        centroids_.push_back((1.0 / 3.0) * (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]));
      build(0, triangles_.size());
      centroids_.clear();
      centroids_.shrink_to_fit();
    }
  }

  explicit TriangleBVH(const MeshTopology &mesh) : TriangleBVH(mesh.vertices(), mesh.triangles()) {}

  bool empty() const noexcept { return triangles_.empty(); }
  const std::vector<Node> &nodes() const noexcept { return nodes_; }
  const std::vector<std::size_t> &order() const noexcept { return order_; }
  const std::vector<Triangle> &triangles() const noexcept { return triangles_; }
  const std::vector<Vec3> &vertices() const noexcept { return vertices_; }

  Aabb triangle_box(std::size_t t) const {
    Aabb b;
    for (std::size_t k = 0; k < 3; ++k)
      b.expand(vertices_[triangles_[t][k]]);
    return b;
  }

  double triangle_distance(const Vec3 &p, std::size_t t) const {
    const auto &tri = triangles_[t];
    return closest_point_on_triangle(p, vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]).distance;
  }

  /// Exact minimum distance over all triangles, ties to the lowest index.
  SurfaceHit closest(const Vec3 &p) const {
    SurfaceHit best;
    if (empty())
      return best;
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
      const Node &node = nodes_[stack.back()];
      stack.pop_back();
      // Slack keeps equal-distance subtrees in play for tie-breaking.
      const double bound = best.distance * best.distance;
      if (node.box.squared_distance_to(p) > bound * (1.0 + 1e-12) + 1e-30)
        continue;
      if (node.count > 0) {
        for (std::size_t i = node.first; i < node.first + node.count; ++i) {
          const std::size_t t = order_[i];
          const double d = triangle_distance(p, t);
          if (d < best.distance || (d == best.distance && t < best.triangle))
            best = {d, t};
        }
        continue;
      }
      const Node &l = nodes_[node.left], &r = nodes_[node.right];
      // Visit the nearer child first.
      if (l.box.squared_distance_to(p) <= r.box.squared_distance_to(p)) {
        stack.push_back(node.right);
        stack.push_back(node.left);
      } else {
        stack.push_back(node.left);
        stack.push_back(node.right);
      }
    }
    return best;
  }

private:
  std::size_t build(std::size_t first, std::size_t count) {
    const std::size_t index = nodes_.size();
    nodes_.emplace_back();
    Aabb box, cbox;
    for (std::size_t i = first; i < first + count; ++i) {
      box.expand(triangle_box(order_[i]));
      cbox.expand(centroids_[order_[i]]);
    }
    nodes_[index].box = box;
    if (count <= kLeafSize) {
      nodes_[index].first = first;
      nodes_[index].count = count;
      return index;
    }
    int axis = 0;
    for (int k = 1; k < 3; ++k)
      if (cbox.hi[k] - cbox.lo[k] > cbox.hi[axis] - cbox.lo[axis])
        axis = k;
    const std::size_t half = count / 2;
    auto begin = order_.begin() + static_cast<std::ptrdiff_t>(first);
    std::nth_element(begin, begin + static_cast<std::ptrdiff_t>(half), begin + static_cast<std::ptrdiff_t>(count),
                     [&](std::size_t a, std::size_t b) {
                       if (centroids_[a][axis] != centroids_[b][axis])
                         return centroids_[a][axis] < centroids_[b][axis];
                       return a < b;
                     });
    const std::size_t left = build(first, half);
    const std::size_t right = build(first + half, count - half);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
  }

  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<std::size_t> order_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

inline SurfaceHit closest_surface_distance(const Vec3 &p, const TriangleBVH &bvh) { return bvh.closest(p); }

/// Linear scan over every triangle; the reference for BVH queries.
inline SurfaceHit closest_surface_distance_brute_force(const Vec3 &p, std::span<const Vec3> vertices,
                                                       std::span<const Triangle> triangles) {
  SurfaceHit best;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto &tri = triangles[t];
    const double d = closest_point_on_triangle(p, vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]).distance;
    if (d < best.distance)
      best = {d, t};
  }
  return best;
}

struct ContactLabels {
  std::vector<std::uint8_t> contact;
  std::vector<double> distance;
  bool empty_interacting_mesh = false;
};

/// Vertex v is in contact iff its closest-surface distance is <= threshold.
/// Vertices are processed in parallel; output order is by vertex index.
inline ContactLabels label_contacts(std::span<const Vec3> hand_vertices, const TriangleBVH &interacting,
                                    const ThresholdProfile &profile) {
  if (hand_vertices.empty())
    throw std::invalid_argument("label_contacts: hand mesh has no vertices");
  if (!(profile.threshold > 0.0))
    throw std::invalid_argument("label_contacts: threshold must be positive");
  ContactLabels out;
  out.contact.assign(hand_vertices.size(), 0);
  out.distance.assign(hand_vertices.size(), std::numeric_limits<double>::infinity());
  if (interacting.empty()) {
    out.empty_interacting_mesh = true;
    return out;
  }
  parallel_for(hand_vertices.size(), [&](std::size_t v) {
    const double d = interacting.closest(hand_vertices[v]).distance;
    out.distance[v] = d;
    out.contact[v] = d <= profile.threshold ? 1 : 0;
  });
  return out;
}

inline ContactLabels label_contacts(std::span<const Vec3> hand_vertices, const MeshTopology &interacting,
                                    const ThresholdProfile &profile) {
  return label_contacts(hand_vertices, TriangleBVH(interacting), profile);
}

/// `vertex_index,contact` rows.
inline std::string format_labels_csv(std::span<const std::uint8_t> contact) {
  std::string out = "vertex_index,contact\n";
  for (std::size_t v = 0; v < contact.size(); ++v)
    out += std::to_string(v) + "," + (contact[v] ? "1" : "0") + "\n";
  return out;
}

} // namespace contactforge

#pragma once

#include "contactforge/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace contactforge {

using Triangle = std::array<std::size_t, 3>;

/// Vertex positions, triangles, and the unweighted 0/1 adjacency derived from
/// triangle edges. Immutable once built.
class MeshTopology {
public:
  MeshTopology() = default;

  /// Builds adjacency from shared triangle edges. Throws std::invalid_argument
  /// naming the offending triangle for out-of-range or repeated indices.
  static MeshTopology from_triangles(std::vector<Vec3> vertices, std::vector<Triangle> triangles) {
    const std::size_t n = vertices.size();
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      const auto &tri = triangles[t];
      for (std::size_t k = 0; k < 3; ++k) {
        if (tri[k] >= n)
          throw std::invalid_argument("triangle " + std::to_string(t) + ": index " + std::to_string(tri[k]) +
                                      " out of range for " + std::to_string(n) + " vertices");
      }
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
        throw std::invalid_argument("triangle " + std::to_string(t) + ": degenerate (repeated vertex index)");
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t a = tri[k], b = tri[(k + 1) % 3];
        adj[a].push_back(b);
        adj[b].push_back(a);
      }
    }
    MeshTopology m;
    m.vertices_ = std::move(vertices);
    m.triangles_ = std::move(triangles);
    m.set_adjacency(std::move(adj));
    return m;
  }

  /// Graph-only topology (no triangles), e.g. a single edge or a chain.
  static MeshTopology from_edges(std::size_t vertex_count, std::span<const std::pair<std::size_t, std::size_t>> edges) {
    std::vector<std::vector<std::size_t>> adj(vertex_count);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [a, b] = edges[e];
      if (a >= vertex_count || b >= vertex_count || a == b)
        throw std::invalid_argument("edge " + std::to_string(e) + " is invalid");
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    MeshTopology m;
    m.vertices_.assign(vertex_count, Vec3{0.0, 0.0, 0.0});
    m.set_adjacency(std::move(adj));
    return m;
  }

  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  const std::vector<Vec3> &vertices() const noexcept { return vertices_; }
  const std::vector<Triangle> &triangles() const noexcept { return triangles_; }
  const std::vector<std::size_t> &neighbors(std::size_t v) const { return adjacency_[v]; }
  const std::vector<std::vector<std::size_t>> &adjacency() const noexcept { return adjacency_; }
  std::size_t degree(std::size_t v) const { return adjacency_[v].size(); }

  std::size_t edge_count() const noexcept {
    std::size_t twice = 0;
    for (const auto &a : adjacency_)
      twice += a.size();
    return twice / 2;
  }

  /// Vertices within `hops` graph steps of `center`, sorted.
  std::vector<std::size_t> graph_ball(std::size_t center, std::size_t hops) const {
    std::vector<std::size_t> dist(vertex_count(), std::numeric_limits<std::size_t>::max());
    std::vector<std::size_t> frontier{center}, out{center};
    dist[center] = 0;
    for (std::size_t h = 0; h < hops; ++h) {
      std::vector<std::size_t> next;
      for (std::size_t v : frontier)
        for (std::size_t u : adjacency_[v])
          if (dist[u] == std::numeric_limits<std::size_t>::max()) {
            dist[u] = h + 1;
            next.push_back(u);
            out.push_back(u);
          }
      frontier = std::move(next);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

private:
  void set_adjacency(std::vector<std::vector<std::size_t>> adj) {
    for (auto &a : adj) {
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    adjacency_ = std::move(adj);
  }

  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

inline MeshTopology build_topology(std::vector<Vec3> vertices, std::vector<Triangle> triangles) {
  return MeshTopology::from_triangles(std::move(vertices), std::move(triangles));
}

/// Drops triangles with out-of-range or repeated indices.
inline std::vector<Triangle> clean_triangles(std::span<const Triangle> triangles, std::size_t vertex_count) {
  std::vector<Triangle> out;
  for (const auto &t : triangles) {
    if (t[0] >= vertex_count || t[1] >= vertex_count || t[2] >= vertex_count)
      continue;
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      continue;
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Proxy surface

/// Subdivided icosahedron standing in for a hand surface, with two antipodal
/// caps: `tip` around +z and `dorsal` around -z.
struct ProxyMesh {
  MeshTopology topology;
  std::vector<std::size_t> tip;
  std::vector<std::size_t> dorsal;
};

inline constexpr double kProxyCapRadius = 0.4; // radians

inline std::size_t proxy_vertex_count(int subdivisions) {
  // V_k = 10 * 4^k + 2
  std::size_t v = 10;
  for (int i = 0; i < subdivisions; ++i)
    v *= 4;
  return v + 2;
}

inline ProxyMesh make_proxy_mesh(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 4)
    throw std::invalid_argument("subdivisions must be in [0, 4], got " + std::to_string(subdivisions));

  // Pole-aligned icosahedron: apex, two staggered rings at latitude atan(1/2), nadir.
  std::vector<Vec3> verts;
  verts.push_back({0.0, 0.0, 1.0});
  const double z = 1.0 / std::sqrt(5.0);
  const double r = 2.0 / std::sqrt(5.0);
  for (int i = 0; i < 5; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 5.0;
    verts.push_back({r * std::cos(a), r * std::sin(a), z});
  }
  for (int i = 0; i < 5; ++i) {
    const double a = 2.0 * std::numbers::pi * (i + 0.5) / 5.0;
    verts.push_back({r * std::cos(a), r * std::sin(a), -z});
  }
  verts.push_back({0.0, 0.0, -1.0});

  std::vector<Triangle> tris;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t u0 = 1 + i, u1 = 1 + (i + 1) % 5;
    const std::size_t l0 = 6 + i, l1 = 6 + (i + 1) % 5;
    tris.push_back({0, u0, u1});
    tris.push_back({u0, l0, u1});
    tris.push_back({u1, l0, l1});
    tris.push_back({11, l1, l0});
  }

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoint;
    auto mid = [&](std::size_t a, std::size_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end())
        return it->second;
      Vec3 m = 0.5 * (verts[a] + verts[b]);
      m = (1.0 / norm(m)) * m;
      verts.push_back(m);
      midpoint.emplace(key, verts.size() - 1);
      return verts.size() - 1;
    };
    std::vector<Triangle> next;
    next.reserve(tris.size() * 4);
    for (const auto &t : tris) {
      const std::size_t ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }

  // Outward winding.
  for (auto &t : tris) {
    const Vec3 n = cross(verts[t[1]] - verts[t[0]], verts[t[2]] - verts[t[0]]);
    if (dot(n, verts[t[0]] + verts[t[1]] + verts[t[2]]) < 0.0)
      std::swap(t[1], t[2]);
  }

  ProxyMesh out;
  const double cos_cap = std::cos(kProxyCapRadius);
  for (std::size_t v = 0; v < verts.size(); ++v) {
    if (verts[v][2] >= cos_cap)
      out.tip.push_back(v);
    else if (-verts[v][2] >= cos_cap)
      out.dorsal.push_back(v);
  }
  out.topology = MeshTopology::from_triangles(std::move(verts), std::move(tris));
  return out;
}

/// Proxy mesh whose vertex count equals `vertex_count`; throws if none does.
inline ProxyMesh proxy_mesh_for(std::size_t vertex_count) {
  for (int s = 0; s <= 4; ++s)
    if (proxy_vertex_count(s) == vertex_count)
      return make_proxy_mesh(s);
  throw std::invalid_argument("no proxy mesh with " + std::to_string(vertex_count) +
                              " vertices (valid: 12, 42, 162, 642, 2562)");
}

// ---------------------------------------------------------------------------
// Multi-level regressors

/// Compressed sparse row matrix of doubles.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_index;
  std::vector<double> values;

  static SparseMatrix identity(std::size_t n) {
    SparseMatrix m;
    m.rows = m.cols = n;
    m.row_ptr.resize(n + 1);
    m.col_index.resize(n);
    m.values.assign(n, 1.0);
    for (std::size_t i = 0; i <= n; ++i)
      m.row_ptr[i] = i;
    for (std::size_t i = 0; i < n; ++i)
      m.col_index[i] = i;
    return m;
  }

  /// Rows that uniformly average the listed column sets.
  static SparseMatrix uniform_rows(std::size_t cols, const std::vector<std::vector<std::size_t>> &members) {
    SparseMatrix m;
    m.rows = members.size();
    m.cols = cols;
    for (const auto &row : members) {
      if (row.empty())
        throw std::invalid_argument("uniform_rows: empty row");
      const double w = 1.0 / static_cast<double>(row.size());
      for (std::size_t c : row) {
        if (c >= cols)
          throw std::invalid_argument("uniform_rows: column out of range");
        m.col_index.push_back(c);
        m.values.push_back(w);
      }
      m.row_ptr.push_back(m.col_index.size());
    }
    return m;
  }

  std::vector<double> multiply(std::span<const double> x) const {
    require_same_size(x.size(), cols, "SparseMatrix::multiply");
    std::vector<double> y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        acc += values[k] * x[col_index[k]];
      y[r] = acc;
    }
    return y;
  }

  /// y = Aᵀ x
  std::vector<double> multiply_transposed(std::span<const double> x) const {
    require_same_size(x.size(), rows, "SparseMatrix::multiply_transposed");
    std::vector<double> y(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        y[col_index[k]] += values[k] * x[r];
    return y;
  }

  std::vector<std::vector<double>> to_dense() const {
    std::vector<std::vector<double>> d(rows, std::vector<double>(cols, 0.0));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        d[r][col_index[k]] += values[k];
    return d;
  }
};

/// One row-stochastic matrix per level; level 0 is the full resolution.
struct LevelRegressor {
  std::vector<std::size_t> level_sizes;
  std::vector<SparseMatrix> matrices;

  std::size_t full_size() const { return level_sizes.empty() ? 0 : level_sizes.front(); }
  std::size_t level_count() const { return matrices.size(); }
};

/// {V} followed by the coarse MANO level sizes (336, 84, 21) smaller than V.
inline std::vector<std::size_t> default_level_sizes(std::size_t vertex_count) {
  std::vector<std::size_t> sizes{vertex_count};
  for (std::size_t s : {std::size_t{336}, std::size_t{84}, std::size_t{21}})
    if (s < vertex_count)
      sizes.push_back(s);
  return sizes;
}

/// Farthest-point ordering of vertex positions starting at vertex 0. Ties go
/// to the lowest index.
inline std::vector<std::size_t> farthest_point_order(std::span<const Vec3> points, std::size_t count) {
  std::vector<std::size_t> order;
  if (points.empty() || count == 0)
    return order;
  std::vector<double> best(points.size(), std::numeric_limits<double>::infinity());
  std::size_t next = 0;
  while (order.size() < count) {
    order.push_back(next);
    double far = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      best[i] = std::min(best[i], squared_distance(points[i], points[next]));
      if (best[i] > far) {
        far = best[i];
        arg = i;
      }
    }
    next = arg;
  }
  return order;
}

/// Seeds `size` clusters by farthest-point sampling, assigns every vertex to
/// its nearest seed, and averages members uniformly. A full-size level yields
/// the identity.
inline LevelRegressor build_level_regressors(const MeshTopology &topology, std::span<const std::size_t> level_sizes) {
  const std::size_t n = topology.vertex_count();
  if (level_sizes.empty() || level_sizes.front() != n)
    throw std::invalid_argument("first level size must equal the vertex count " + std::to_string(n));
  for (std::size_t i = 0; i < level_sizes.size(); ++i) {
    if (level_sizes[i] > n)
      throw std::invalid_argument("level size " + std::to_string(level_sizes[i]) + " exceeds vertex count " +
                                  std::to_string(n));
    if (level_sizes[i] == 0)
      throw std::invalid_argument("level size must be positive");
    if (i > 0 && level_sizes[i] >= level_sizes[i - 1])
      throw std::invalid_argument("level sizes must be strictly decreasing");
  }

  LevelRegressor reg;
  reg.level_sizes.assign(level_sizes.begin(), level_sizes.end());
  reg.matrices.push_back(SparseMatrix::identity(n));
  if (level_sizes.size() == 1)
    return reg;

  const auto &pts = topology.vertices();
  const auto seeds = farthest_point_order(pts, level_sizes[1]);
  for (std::size_t l = 1; l < level_sizes.size(); ++l) {
    const std::size_t k = level_sizes[l];
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t v = 0; v < n; ++v) {
      std::size_t arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double d = squared_distance(pts[v], pts[seeds[j]]);
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      members[arg].push_back(v);
    }
    // Coincident positions can leave a seed without members.
    for (std::size_t j = 0; j < k; ++j)
      if (members[j].empty())
        members[j].push_back(seeds[j]);
    reg.matrices.push_back(SparseMatrix::uniform_rows(n, members));
  }
  return reg;
}

/// Output i is J_i × values. Level 0 reproduces the input.
inline std::vector<std::vector<double>> project_levels(std::span<const double> values, const LevelRegressor &reg) {
  require_same_size(values.size(), reg.full_size(), "project_levels");
  std::vector<std::vector<double>> out;
  out.reserve(reg.level_count());
  for (const auto &m : reg.matrices)
    out.push_back(m.multiply(values));
  return out;
}

// ---------------------------------------------------------------------------
// I/O

/// ASCII OBJ subset: `v x y z`, `f i j k` (1-based; `i/t/n` accepted), `#` comments.
inline MeshTopology parse_obj(std::string_view text, const std::string &source = "<obj>") {
  std::vector<Vec3> verts;
  std::vector<Triangle> tris;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#')
      continue;
    std::istringstream ls{std::string(sv)};
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      std::string a, b, c;
      Vec3 p{};
      if (!(ls >> a >> b >> c) || !parse_double(a, p[0]) || !parse_double(b, p[1]) || !parse_double(c, p[2]))
        throw DataError(source, line_no, "malformed vertex");
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<std::string> toks;
      std::string tok;
      while (ls >> tok)
        toks.push_back(tok);
      if (toks.size() != 3)
        throw DataError(source, line_no, "only triangular faces are supported");
      Triangle t{};
      for (std::size_t k = 0; k < 3; ++k) {
        const std::string idx = toks[k].substr(0, toks[k].find('/'));
        long long i = 0;
        if (!parse_int(idx, i) || i < 1)
          throw DataError(source, line_no, "malformed face index '" + toks[k] + "'");
        t[k] = static_cast<std::size_t>(i - 1);
      }
      tris.push_back(t);
    }
    // other records (vn, vt, o, g, s, ...) are ignored
  }
  try {
    return MeshTopology::from_triangles(std::move(verts), std::move(tris));
  } catch (const std::invalid_argument &e) {
    throw DataError(source, 0, e.what());
  }
}

inline MeshTopology load_obj(const std::filesystem::path &path) { return parse_obj(read_file(path), path.string()); }

inline std::string format_obj(const MeshTopology &mesh) {
  std::string out;
  for (const auto &v : mesh.vertices())
    out += "v " + format_double(v[0]) + " " + format_double(v[1]) + " " + format_double(v[2]) + "\n";
  for (const auto &t : mesh.triangles())
    out += "f " + std::to_string(t[0] + 1) + " " + std::to_string(t[1] + 1) + " " + std::to_string(t[2] + 1) + "\n";
  return out;
}

/// CSV triplets `level,row,col,weight` over the coarse levels.
inline std::string format_regressor_csv(const LevelRegressor &reg) {
  std::string out = "level,row,col,weight\n";
  for (std::size_t l = 0; l < reg.matrices.size(); ++l) {
    const auto &m = reg.matrices[l];
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
        out += std::to_string(l) + "," + std::to_string(r) + "," + std::to_string(m.col_index[k]) + "," +
               format_double(m.values[k]) + "\n";
  }
  return out;
}

} // namespace contactforge

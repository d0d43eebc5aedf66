#pragma once

#include "contactforge/core.hpp"
#include "contactforge/mesh.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace contactforge {

/// One hand instance: binary per-vertex contact plus the feature vector the
/// contact head consumes.
struct ContactSample {
  std::string id;
  std::vector<double> features;
  std::vector<std::uint8_t> contact;

  bool has_contact() const {
    return std::any_of(contact.begin(), contact.end(), [](std::uint8_t c) { return c != 0; });
  }
  std::size_t contact_count() const {
    return static_cast<std::size_t>(std::count(contact.begin(), contact.end(), std::uint8_t{1}));
  }

  friend bool operator==(const ContactSample &, const ContactSample &) = default;
};

struct ClassCounts {
  std::uint64_t non_contact = 0; // n_0
  std::uint64_t contact = 0;     // n_1

  friend bool operator==(const ClassCounts &, const ClassCounts &) = default;
};

/// Ordered samples plus dataset-wide statistics. Build with
/// compute_statistics(); immutable afterwards.
class ContactDataset {
public:
  ContactDataset() = default;

  const std::vector<ContactSample> &samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  std::size_t vertex_count() const noexcept { return vertex_count_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  const ContactSample &operator[](std::size_t i) const { return samples_[i]; }

  /// c̄[v] = n_{1,v} / N
  const std::vector<double> &contact_mean() const noexcept { return contact_mean_; }
  const std::vector<ClassCounts> &vertex_class_counts() const noexcept { return vertex_counts_; }
  const ClassCounts &global_class_counts() const noexcept { return global_counts_; }

  /// n_0 / n_1; +inf when no contact labels exist.
  double imbalance_ratio() const {
    if (global_counts_.contact == 0)
      return std::numeric_limits<double>::infinity();
    return static_cast<double>(global_counts_.non_contact) / static_cast<double>(global_counts_.contact);
  }

  std::size_t empty_sample_count() const {
    return static_cast<std::size_t>(
        std::count_if(samples_.begin(), samples_.end(), [](const ContactSample &s) { return !s.has_contact(); }));
  }

  double region_mean(std::span<const std::size_t> vertices) const {
    if (vertices.empty())
      return 0.0;
    double acc = 0.0;
    for (std::size_t v : vertices)
      acc += contact_mean_.at(v);
    return acc / static_cast<double>(vertices.size());
  }

  friend bool operator==(const ContactDataset &a, const ContactDataset &b) { return a.samples_ == b.samples_; }

private:
  friend ContactDataset compute_statistics(std::vector<ContactSample> samples);

  std::vector<ContactSample> samples_;
  std::size_t vertex_count_ = 0;
  std::size_t feature_dim_ = 0;
  std::vector<double> contact_mean_;
  std::vector<ClassCounts> vertex_counts_;
  ClassCounts global_counts_;
};

/// Validates samples and computes per-vertex and global class statistics.
inline ContactDataset compute_statistics(std::vector<ContactSample> samples) {
  if (samples.empty())
    throw DataError("no samples");
  const std::size_t v_count = samples.front().contact.size();
  const std::size_t dim = samples.front().features.size();
  if (v_count == 0)
    throw DataError("samples have zero vertices");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto &s = samples[i];
    if (s.contact.size() != v_count)
      throw DataError("sample " + std::to_string(i) + " ('" + s.id + "') has " + std::to_string(s.contact.size()) +
                      " vertices, expected " + std::to_string(v_count));
    if (s.features.size() != dim)
      throw DataError("sample " + std::to_string(i) + " ('" + s.id + "') has " + std::to_string(s.features.size()) +
                      " features, expected " + std::to_string(dim));
    for (std::uint8_t c : s.contact)
      if (c > 1)
        throw DataError("sample " + std::to_string(i) + " ('" + s.id + "') has a non-binary contact value");
    for (double f : s.features)
      if (!std::isfinite(f))
        throw DataError("sample " + std::to_string(i) + " ('" + s.id + "') has a non-finite feature");
  }

  ContactDataset ds;
  ds.vertex_count_ = v_count;
  ds.feature_dim_ = dim;
  std::vector<std::uint64_t> ones(v_count, 0);
  for (const auto &s : samples)
    for (std::size_t v = 0; v < v_count; ++v)
      ones[v] += s.contact[v];
  const auto n = static_cast<std::uint64_t>(samples.size());
  ds.contact_mean_.resize(v_count);
  ds.vertex_counts_.resize(v_count);
  for (std::size_t v = 0; v < v_count; ++v) {
    ds.vertex_counts_[v] = {n - ones[v], ones[v]};
    ds.contact_mean_[v] = static_cast<double>(ones[v]) / static_cast<double>(n);
    ds.global_counts_.contact += ones[v];
    ds.global_counts_.non_contact += n - ones[v];
  }
  ds.samples_ = std::move(samples);
  return ds;
}

/// Statistics recomputed over the selected samples, in the given order.
inline ContactDataset subset(const ContactDataset &ds, std::span<const std::size_t> indices) {
  std::vector<ContactSample> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices)
    picked.push_back(ds.samples().at(i));
  return compute_statistics(std::move(picked));
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

struct SyntheticConfig {
  int subdivisions = 2; // proxy mesh resolution; 2 -> V = 162
  std::size_t samples = 2000;
  std::size_t feature_dim = 16;
  double empty_fraction = 0.7;
  double tip_boost = 10.0;
  double noise = 0.1;
  std::size_t patch_hops = 2;
  std::uint64_t seed = 1;

  void validate() const {
    if (subdivisions < 0 || subdivisions > 4)
      throw std::invalid_argument("subdivisions must be in [0, 4]");
    if (samples < 100)
      throw std::invalid_argument("synthetic dataset needs at least 100 samples");
    if (feature_dim == 0)
      throw std::invalid_argument("feature dimension must be positive");
    if (!(empty_fraction >= 0.0 && empty_fraction < 1.0))
      throw std::invalid_argument("empty_fraction must be in [0, 1)");
    if (!(tip_boost >= 1.0))
      throw std::invalid_argument("tip_boost must be >= 1");
    if (!(noise >= 0.0))
      throw std::invalid_argument("noise must be >= 0");
  }
};

/// Number of all-zero samples the generator emits: round(empty_fraction * N).
inline std::size_t synthetic_empty_quota(const SyntheticConfig &cfg) {
  return static_cast<std::size_t>(std::llround(cfg.empty_fraction * static_cast<double>(cfg.samples)));
}

/// Imbalanced benchmark on the proxy mesh. A fixed quota of samples carries
/// no contact; the rest mark a graph ball around a center vertex drawn with
/// weight `tip_boost` on the tip cap and 1 elsewhere. Features are a fixed
/// random projection of the contact vector plus Gaussian noise.
inline ContactDataset generate_synthetic(const SyntheticConfig &cfg, const ProxyMesh &mesh) {
  cfg.validate();
  const std::size_t v_count = mesh.topology.vertex_count();
  const std::size_t dim = cfg.feature_dim;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Projection entries N(0, 1/d) keep feature norms O(patch size / d).
  std::vector<double> projection(dim * v_count);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double &m : projection)
    m = scale * gauss(rng);

  std::vector<std::size_t> order(cfg.samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_empty(cfg.samples, false);
  const std::size_t quota = synthetic_empty_quota(cfg);
  for (std::size_t i = 0; i < quota; ++i)
    is_empty[order[i]] = true;

  std::vector<double> weights(v_count, 1.0);
  for (std::size_t v : mesh.tip)
    weights[v] = cfg.tip_boost;
  std::discrete_distribution<std::size_t> center_dist(weights.begin(), weights.end());

  const int width = static_cast<int>(std::to_string(cfg.samples - 1).size());
  std::vector<ContactSample> samples;
  samples.reserve(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    ContactSample s;
    std::string num = std::to_string(i);
    s.id = "syn" + std::to_string(cfg.seed) + "-" + std::string(width - static_cast<int>(num.size()), '0') + num;
    s.contact.assign(v_count, 0);
    if (!is_empty[i]) {
      const std::size_t center = center_dist(rng);
      for (std::size_t v : mesh.topology.graph_ball(center, cfg.patch_hops))
        s.contact[v] = 1;
    }
    s.features.assign(dim, 0.0);
    for (std::size_t r = 0; r < dim; ++r) {
      double acc = 0.0;
      for (std::size_t v = 0; v < v_count; ++v)
        if (s.contact[v])
          acc += projection[r * v_count + v];
      s.features[r] = acc + cfg.noise * gauss(rng);
    }
    samples.push_back(std::move(s));
  }
  return compute_statistics(std::move(samples));
}

inline ContactDataset generate_synthetic(const SyntheticConfig &cfg) {
  cfg.validate();
  return generate_synthetic(cfg, make_proxy_mesh(cfg.subdivisions));
}

// ---------------------------------------------------------------------------
// Manifest: `V=<int> d=<int> N=<int>` then `id;f_1,...,f_d;c_1,...,c_V` per line.

inline std::string format_manifest(const ContactDataset &ds) {
  if (ds.size() == 0)
    throw DataError("no samples");
  std::string out = "V=" + std::to_string(ds.vertex_count()) + " d=" + std::to_string(ds.feature_dim()) +
                    " N=" + std::to_string(ds.size()) + "\n";
  for (const auto &s : ds.samples()) {
    out += s.id;
    out += ';';
    for (std::size_t k = 0; k < s.features.size(); ++k) {
      if (k)
        out += ',';
      out += format_double(s.features[k]);
    }
    out += ';';
    for (std::size_t v = 0; v < s.contact.size(); ++v) {
      if (v)
        out += ',';
      out += s.contact[v] ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline void save_manifest(const ContactDataset &ds, const std::filesystem::path &path) {
  write_file_atomic(path, format_manifest(ds));
}

inline ContactDataset parse_manifest(std::string_view text, const std::string &source = "<manifest>") {
  std::size_t line_no = 0, pos = 0;
  auto next_line = [&](std::string_view &line) {
    if (pos >= text.size())
      return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line))
    throw DataError(source, 1, "no samples");
  std::size_t v_count = 0, dim = 0, n = 0;
  {
    bool have_v = false, have_d = false, have_n = false;
    for (const auto &tok : split(trim(line), ' ')) {
      if (tok.empty())
        continue;
      const auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw DataError(source, line_no, "malformed header token '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      std::size_t value = 0;
      if (!parse_int(std::string_view(tok).substr(eq + 1), value))
        throw DataError(source, line_no, "malformed header value '" + tok + "'");
      if (key == "V") {
        v_count = value;
        have_v = true;
      } else if (key == "d") {
        dim = value;
        have_d = true;
      } else if (key == "N") {
        n = value;
        have_n = true;
      } else {
        throw DataError(source, line_no, "unknown header key '" + key + "'");
      }
    }
    if (!have_v || !have_d || !have_n)
      throw DataError(source, line_no, "header must be 'V=<int> d=<int> N=<int>'");
    if (n == 0)
      throw DataError(source, line_no, "no samples");
    if (v_count == 0)
      throw DataError(source, line_no, "V must be positive");
  }

  std::vector<ContactSample> samples;
  samples.reserve(n);
  while (next_line(line)) {
    if (trim(line).empty())
      continue;
    const auto parts = split(line, ';');
    if (parts.size() != 3)
      throw DataError(source, line_no, "expected 'id;features;contacts'");
    ContactSample s;
    s.id = std::string(trim(parts[0]));
    if (s.id.empty())
      throw DataError(source, line_no, "empty sample id");
    if (dim > 0) {
      const auto feats = split(parts[1], ',');
      if (feats.size() != dim)
        throw DataError(source, line_no,
                        "expected " + std::to_string(dim) + " features, got " + std::to_string(feats.size()));
      s.features.resize(dim);
      for (std::size_t k = 0; k < dim; ++k)
        if (!parse_double(feats[k], s.features[k]) || !std::isfinite(s.features[k]))
          throw DataError(source, line_no, "malformed feature '" + feats[k] + "'");
    } else if (!trim(parts[1]).empty()) {
      throw DataError(source, line_no, "features present but header says d=0");
    }
    const auto cs = split(parts[2], ',');
    if (cs.size() != v_count)
      throw DataError(source, line_no,
                      "expected " + std::to_string(v_count) + " contact values, got " + std::to_string(cs.size()));
    s.contact.resize(v_count);
    for (std::size_t v = 0; v < v_count; ++v) {
      const auto c = trim(cs[v]);
      if (c == "0")
        s.contact[v] = 0;
      else if (c == "1")
        s.contact[v] = 1;
      else
        throw DataError(source, line_no, "contact value must be 0 or 1, got '" + std::string(c) + "'");
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty())
    throw DataError(source, line_no, "no samples");
  if (samples.size() != n)
    throw DataError(source, line_no,
                    "header declares N=" + std::to_string(n) + " but found " + std::to_string(samples.size()));
  return compute_statistics(std::move(samples));
}

inline ContactDataset load_manifest(const std::filesystem::path &path) {
  return parse_manifest(read_file(path), path.string());
}

/// `vertex_index,mean_contact` rows.
inline std::string format_heatmap_csv(std::span<const double> mean) {
  if (mean.empty())
    throw DataError("heatmap: no vertices");
  std::string out = "vertex_index,mean_contact\n";
  for (std::size_t v = 0; v < mean.size(); ++v)
    out += std::to_string(v) + "," + format_double(mean[v]) + "\n";
  return out;
}

} // namespace contactforge

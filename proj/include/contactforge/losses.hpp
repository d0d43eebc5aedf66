#pragma once

#include "contactforge/core.hpp"
#include "contactforge/dataset.hpp"
#include "contactforge/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace contactforge {

/// Scalar loss and its gradient with respect to the per-vertex logits.
struct LossValue {
  double value = 0.0;
  std::vector<double> gradient;
};

namespace detail {

// -ln σ(u)
inline double neg_log_sigmoid(double u) { return softplus(-u); }

inline void check_labels(std::span<const double> logits, std::span<const std::uint8_t> labels, const char *what) {
  require_same_size(logits.size(), labels.size(), what);
  if (logits.empty())
    throw std::invalid_argument(std::string(what) + ": empty input");
}

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

} // namespace detail

// ---------------------------------------------------------------------------
// Binary cross-entropy family

/// Mean over vertices of w_v · ℓ_BCE(y_v, σ(z_v)); an empty weight span means w ≡ 1.
inline LossValue weighted_bce(std::span<const double> logits, std::span<const std::uint8_t> labels,
                              std::span<const double> weights) {
  detail::check_labels(logits, labels, "bce");
  if (!weights.empty())
    require_same_size(weights.size(), logits.size(), "bce weights");
  const double inv_v = 1.0 / static_cast<double>(logits.size());
  LossValue out;
  out.gradient.resize(logits.size());
  double acc = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    const double z = logits[v];
    const double w = weights.empty() ? 1.0 : weights[v];
    // ℓ = −ln σ(z) for y = 1 and −ln σ(−z) for y = 0.
    const double l = labels[v] ? detail::neg_log_sigmoid(z) : detail::neg_log_sigmoid(-z);
    const double g = labels[v] ? -sigmoid(-z) : sigmoid(z); // σ(z) − y
    acc += w * l;
    out.gradient[v] = w * g * inv_v;
  }
  out.value = acc * inv_v;
  return out;
}

inline LossValue bce(std::span<const double> logits, std::span<const std::uint8_t> labels) {
  return weighted_bce(logits, labels, {});
}

/// Focal modulation (1 − p_t)^γ on BCE, averaged over vertices. γ = 0 is BCE.
inline LossValue focal_loss(std::span<const double> logits, std::span<const std::uint8_t> labels, double gamma = 2.0) {
  detail::check_labels(logits, labels, "focal_loss");
  if (!(gamma >= 0.0))
    throw std::invalid_argument("focal_loss: gamma must be >= 0");
  const double inv_v = 1.0 / static_cast<double>(logits.size());
  LossValue out;
  out.gradient.resize(logits.size());
  double acc = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    // u is the logit of the true class, p_t = σ(u).
    const double u = labels[v] ? logits[v] : -logits[v];
    const double q = sigmoid(-u); // 1 − p_t
    const double ce = detail::neg_log_sigmoid(u);
    const double mod = std::pow(q, gamma);
    acc += mod * ce;
    // dℓ/du = −q^γ (γ p_t ce + q)
    const double dldu = gamma == 0.0 ? -q : -mod * (gamma * sigmoid(u) * ce + q);
    out.gradient[v] = (labels[v] ? dldu : -dldu) * inv_v;
  }
  out.value = acc * inv_v;
  return out;
}

// ---------------------------------------------------------------------------
// Class-balanced weighting

/// α = (1 − β) / (1 − β^n), the inverse effective number of samples.
/// A zero count is treated like a single observation (α = 1).
inline double cb_weight(double count, double beta) {
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("cb_weight: beta must be in [0, 1)");
  if (!(count >= 0.0))
    throw std::invalid_argument("cb_weight: count must be >= 0");
  if (count <= 1.0)
    return 1.0;
  if (beta == 0.0)
    return 1.0;
  // 1 − β^n = −expm1(n ln β)
  return (1.0 - beta) / -std::expm1(count * std::log(beta));
}

/// Loss β and class counts, either one global pair or one pair per vertex.
struct ClassBalanceConfig {
  double beta = 0.9999;
  ClassCounts global;
  std::vector<ClassCounts> per_vertex;

  void validate() const {
    if (!(beta >= 0.0 && beta < 1.0))
      throw std::invalid_argument("class-balance beta must be in [0, 1), got " + format_double(beta));
  }
};

inline constexpr double kDefaultLossBeta = 0.9999;

/// Class-balanced BCE with one weight per class from the global counts.
inline LossValue cb_loss(std::span<const double> logits, std::span<const std::uint8_t> labels, double beta,
                         const ClassCounts &global) {
  detail::check_labels(logits, labels, "cb_loss");
  const double a0 = cb_weight(static_cast<double>(global.non_contact), beta);
  const double a1 = cb_weight(static_cast<double>(global.contact), beta);
  std::vector<double> w(logits.size());
  for (std::size_t v = 0; v < w.size(); ++v)
    w[v] = labels[v] ? a1 : a0;
  return weighted_bce(logits, labels, w);
}

/// Vertex-level class-balanced BCE: α_{y_v,v} from the counts of class y_v at vertex v.
inline LossValue vcb_loss(std::span<const double> logits, std::span<const std::uint8_t> labels, double beta,
                          std::span<const ClassCounts> per_vertex) {
  detail::check_labels(logits, labels, "vcb_loss");
  require_same_size(per_vertex.size(), logits.size(), "vcb_loss counts");
  std::vector<double> w(logits.size());
  for (std::size_t v = 0; v < w.size(); ++v) {
    const auto n = labels[v] ? per_vertex[v].contact : per_vertex[v].non_contact;
    w[v] = cb_weight(static_cast<double>(n), beta);
  }
  return weighted_bce(logits, labels, w);
}

// ---------------------------------------------------------------------------
// Mesh priors

/// Isolation-based smoothness on the unnormalized neighbor sums:
///   p̂_v = Σ_u A_vu p_u,  q̂_v = Σ_u A_vu (1 − p_u)
///   s_v = |p_v − p̂_v| + |(1 − p_v) − q̂_v|
///   L = ln(1 + Σ s_v / (Σ n_v + ε))
/// Subgradients at the kinks are 0.
inline LossValue smoothness_loss(std::span<const double> logits, const MeshTopology &topology, double epsilon = 1e-8) {
  const std::size_t n = topology.vertex_count();
  require_same_size(logits.size(), n, "smoothness_loss");
  std::vector<double> p(n);
  for (std::size_t v = 0; v < n; ++v)
    p[v] = sigmoid(logits[v]);

  std::vector<double> sa(n), sb(n);
  double s_sum = 0.0, deg_sum = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    double ph = 0.0, qh = 0.0;
    for (std::size_t u : topology.neighbors(v)) {
      ph += p[u];
      qh += 1.0 - p[u];
    }
    const double a = p[v] - ph;
    const double b = (1.0 - p[v]) - qh;
    s_sum += std::abs(a) + std::abs(b);
    deg_sum += static_cast<double>(topology.degree(v));
    sa[v] = detail::sign(a);
    sb[v] = detail::sign(b);
  }
  const double denom = deg_sum + epsilon;
  LossValue out;
  out.value = std::log1p(s_sum / denom);
  const double outer = 1.0 / (denom + s_sum); // d/dS ln(1 + S/D)
  out.gradient.resize(n);
  for (std::size_t w = 0; w < n; ++w) {
    double ds = sa[w] - sb[w];
    for (std::size_t v : topology.neighbors(w))
      ds += sb[v] - sa[v];
    out.gradient[w] = outer * ds * p[w] * (1.0 - p[w]);
  }
  return out;
}

/// Mean absolute deviation of σ(z) from the dataset-wide contact mean.
inline LossValue regularization_loss(std::span<const double> logits, std::span<const double> contact_mean) {
  require_same_size(logits.size(), contact_mean.size(), "regularization_loss");
  if (logits.empty())
    throw std::invalid_argument("regularization_loss: empty input");
  const double inv_v = 1.0 / static_cast<double>(logits.size());
  LossValue out;
  out.gradient.resize(logits.size());
  double acc = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    if (!(contact_mean[v] >= 0.0 && contact_mean[v] <= 1.0))
      throw std::invalid_argument("regularization_loss: contact mean outside [0, 1]");
    const double p = sigmoid(logits[v]);
    const double d = p - contact_mean[v];
    acc += std::abs(d);
    out.gradient[v] = detail::sign(d) * p * (1.0 - p) * inv_v;
  }
  out.value = acc * inv_v;
  return out;
}

// ---------------------------------------------------------------------------
// Aggregate

enum class DataLossKind { bce, focal, cb, vcb };

inline std::string_view to_string(DataLossKind k) {
  switch (k) {
  case DataLossKind::bce:
    return "bce";
  case DataLossKind::focal:
    return "focal";
  case DataLossKind::cb:
    return "cb";
  case DataLossKind::vcb:
    return "vcb";
  }
  return "?";
}

inline DataLossKind parse_data_loss(std::string_view s) {
  if (s == "bce")
    return DataLossKind::bce;
  if (s == "focal")
    return DataLossKind::focal;
  if (s == "cb")
    return DataLossKind::cb;
  if (s == "vcb")
    return DataLossKind::vcb;
  throw std::invalid_argument("unknown loss '" + std::string(s) + "' (expected bce, focal, cb, vcb)");
}

struct LossWeights {
  double data = 1.0;   // multi-level contact term (VCB by default)
  double reg = 0.1;
  double smooth = 1.0;

  void validate() const {
    if (!(data >= 0.0 && reg >= 0.0 && smooth >= 0.0))
      throw std::invalid_argument("loss weights must be >= 0");
  }
};

/// Statistics the data term sees at one resolution level.
struct LevelStats {
  std::size_t level = 0;
  ClassCounts global;
  std::vector<ClassCounts> per_vertex;
};

/// Mean class-balanced weight over every vertex label counted in `stats`.
/// Dividing the CB/VCB term by this puts it on the BCE scale.
inline double mean_class_weight(const LevelStats &stats, DataLossKind kind, double beta) {
  double weighted = 0.0, labels = 0.0;
  if (kind == DataLossKind::cb) {
    const double n0 = static_cast<double>(stats.global.non_contact), n1 = static_cast<double>(stats.global.contact);
    weighted = n0 * cb_weight(n0, beta) + n1 * cb_weight(n1, beta);
    labels = n0 + n1;
  } else if (kind == DataLossKind::vcb) {
    for (const auto &c : stats.per_vertex) {
      const double n0 = static_cast<double>(c.non_contact), n1 = static_cast<double>(c.contact);
      weighted += n0 * cb_weight(n0, beta) + n1 * cb_weight(n1, beta);
      labels += n0 + n1;
    }
  } else {
    return 1.0;
  }
  return labels > 0.0 && weighted > 0.0 ? weighted / labels : 1.0;
}

/// Custom data term; receives one level's logits, binarized labels, and counts.
using DataLossFn =
    std::function<LossValue(std::span<const double>, std::span<const std::uint8_t>, const LevelStats &)>;

struct LossConfig {
  DataLossKind kind = DataLossKind::vcb;
  double beta = kDefaultLossBeta;
  double gamma = 2.0;
  double smooth_epsilon = 1e-8;
  LossWeights weights;
  // Rescale CB/VCB by 1 / mean_class_weight so one step size suits every
  // loss. Relative weights across vertices and classes are unchanged.
  bool normalize_class_weights = true;
  DataLossFn custom; // overrides `kind` when set

  void validate() const {
    if (!(beta >= 0.0 && beta < 1.0))
      throw std::invalid_argument("loss beta must be in [0, 1), got " + format_double(beta));
    if (!(gamma >= 0.0))
      throw std::invalid_argument("focal gamma must be >= 0");
    weights.validate();
  }
};

/// Everything total_loss needs beyond one sample: mesh, regressors, and
/// dataset statistics projected to each level.
struct LossContext {
  const MeshTopology *topology = nullptr;
  const LevelRegressor *regressor = nullptr;
  std::vector<double> contact_mean;
  std::vector<LevelStats> levels;

  std::size_t vertex_count() const { return contact_mean.size(); }
};

/// Per-vertex counts at coarse levels are the full-resolution counts pushed
/// through the same regressor and rounded; global counts are shared.
inline LossContext make_loss_context(const MeshTopology &topology, const LevelRegressor &regressor,
                                     const ContactDataset &stats) {
  const std::size_t n = topology.vertex_count();
  require_same_size(stats.vertex_count(), n, "loss context: dataset vs mesh");
  require_same_size(regressor.full_size(), n, "loss context: regressor vs mesh");
  LossContext ctx;
  ctx.topology = &topology;
  ctx.regressor = &regressor;
  ctx.contact_mean = stats.contact_mean();
  std::vector<double> n0(n), n1(n);
  for (std::size_t v = 0; v < n; ++v) {
    n0[v] = static_cast<double>(stats.vertex_class_counts()[v].non_contact);
    n1[v] = static_cast<double>(stats.vertex_class_counts()[v].contact);
  }
  for (std::size_t l = 0; l < regressor.level_count(); ++l) {
    const auto &J = regressor.matrices[l];
    const auto c0 = J.multiply(n0), c1 = J.multiply(n1);
    LevelStats ls;
    ls.level = l;
    ls.global = stats.global_class_counts();
    ls.per_vertex.resize(J.rows);
    for (std::size_t r = 0; r < J.rows; ++r)
      ls.per_vertex[r] = {static_cast<std::uint64_t>(std::llround(c0[r])),
                          static_cast<std::uint64_t>(std::llround(c1[r]))};
    ctx.levels.push_back(std::move(ls));
  }
  return ctx;
}

inline LossValue data_loss(const LossConfig &cfg, std::span<const double> logits, std::span<const std::uint8_t> labels,
                           const LevelStats &stats) {
  if (cfg.custom)
    return cfg.custom(logits, labels, stats);
  switch (cfg.kind) {
  case DataLossKind::bce:
    return bce(logits, labels);
  case DataLossKind::focal:
    return focal_loss(logits, labels, cfg.gamma);
  case DataLossKind::cb:
  case DataLossKind::vcb: {
    LossValue lv = cfg.kind == DataLossKind::cb ? cb_loss(logits, labels, cfg.beta, stats.global)
                                                : vcb_loss(logits, labels, cfg.beta, stats.per_vertex);
    if (cfg.normalize_class_weights) {
      const double scale = 1.0 / mean_class_weight(stats, cfg.kind, cfg.beta);
      lv.value *= scale;
      for (double &g : lv.gradient)
        g *= scale;
    }
    return lv;
  }
  }
  throw std::logic_error("unhandled loss kind");
}

struct LossReport {
  std::vector<double> level_values; // data term at each level
  double data = 0.0;                // mean over levels
  double reg = 0.0;
  double smooth = 0.0;
  double total = 0.0;
  LossWeights weights;
  std::vector<double> gradient; // d total / d logits
};

/// Weighted sum of the multi-level data term, the mean-contact regularizer,
/// and the smoothness prior. Labels are projected with each J_i and
/// re-binarized at 0.5; regularizer and smoothness act at full resolution.
inline LossReport total_loss(std::span<const double> logits, std::span<const std::uint8_t> labels,
                             const LossContext &ctx, const LossConfig &cfg) {
  const std::size_t n = ctx.vertex_count();
  require_same_size(logits.size(), n, "total_loss logits");
  require_same_size(labels.size(), n, "total_loss labels");
  if (!ctx.topology || !ctx.regressor || ctx.levels.empty())
    throw std::invalid_argument("total_loss: incomplete loss context");

  LossReport rep;
  rep.weights = cfg.weights;
  rep.gradient.assign(n, 0.0);
  const auto &reg = *ctx.regressor;
  const double level_scale = 1.0 / static_cast<double>(reg.level_count());

  std::vector<double> y(n);
  for (std::size_t v = 0; v < n; ++v)
    y[v] = labels[v] ? 1.0 : 0.0;

  for (std::size_t l = 0; l < reg.level_count(); ++l) {
    const auto &J = reg.matrices[l];
    const auto z = J.multiply(logits);
    const auto yp = J.multiply(y);
    std::vector<std::uint8_t> yl(yp.size());
    for (std::size_t r = 0; r < yp.size(); ++r)
      yl[r] = yp[r] >= 0.5 ? 1 : 0;
    const LossValue lv = data_loss(cfg, z, yl, ctx.levels[l]);
    rep.level_values.push_back(lv.value);
    rep.data += lv.value;
    const auto back = J.multiply_transposed(lv.gradient);
    for (std::size_t v = 0; v < n; ++v)
      rep.gradient[v] += cfg.weights.data * level_scale * back[v];
  }
  rep.data *= level_scale;

  const auto r = regularization_loss(logits, ctx.contact_mean);
  const auto sm = smoothness_loss(logits, *ctx.topology, cfg.smooth_epsilon);
  rep.reg = r.value;
  rep.smooth = sm.value;
  for (std::size_t v = 0; v < n; ++v)
    rep.gradient[v] += cfg.weights.reg * r.gradient[v] + cfg.weights.smooth * sm.gradient[v];
  rep.total = cfg.weights.data * rep.data + cfg.weights.reg * rep.reg + cfg.weights.smooth * rep.smooth;
  return rep;
}

} // namespace contactforge

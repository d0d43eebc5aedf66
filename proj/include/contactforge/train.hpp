#pragma once

#include "contactforge/core.hpp"
#include "contactforge/dataset.hpp"
#include "contactforge/losses.hpp"
#include "contactforge/mesh.hpp"
#include "contactforge/sampling.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace contactforge {

enum class InitMode { learned, zero, constant_no_contact, constant_full_contact, dataset_mean };

inline std::string_view to_string(InitMode m) {
  switch (m) {
  case InitMode::learned:
    return "learned";
  case InitMode::zero:
    return "zero";
  case InitMode::constant_no_contact:
    return "no_contact";
  case InitMode::constant_full_contact:
    return "full_contact";
  case InitMode::dataset_mean:
    return "dataset_mean";
  }
  return "?";
}

inline InitMode parse_init_mode(std::string_view s) {
  if (s == "learned")
    return InitMode::learned;
  if (s == "zero" || s == "none")
    return InitMode::zero;
  if (s == "no_contact")
    return InitMode::constant_no_contact;
  if (s == "full_contact")
    return InitMode::constant_full_contact;
  if (s == "dataset_mean" || s == "mean")
    return InitMode::dataset_mean;
  throw std::invalid_argument("unknown init mode '" + std::string(s) +
                              "' (expected learned, zero, no_contact, full_contact, dataset_mean)");
}

inline constexpr double kSaturatedLogit = 40.0;

/// Linear per-vertex contact head: logits = W·x + init_bias.
struct ContactHead {
  std::size_t vertex_count = 0;
  std::size_t feature_dim = 0;
  std::vector<double> weight; // V × d, row-major
  std::vector<double> init_bias;
  InitMode init_mode = InitMode::learned;

  static ContactHead zeros(std::size_t v, std::size_t d) {
    ContactHead h;
    h.vertex_count = v;
    h.feature_dim = d;
    h.weight.assign(v * d, 0.0);
    h.init_bias.assign(v, 0.0);
    return h;
  }

  std::vector<double> logits(std::span<const double> x) const {
    require_same_size(x.size(), feature_dim, "ContactHead features");
    std::vector<double> z(init_bias);
    for (std::size_t v = 0; v < vertex_count; ++v) {
      const double *row = weight.data() + v * feature_dim;
      double acc = 0.0;
      for (std::size_t k = 0; k < feature_dim; ++k)
        acc += row[k] * x[k];
      z[v] += acc;
    }
    return z;
  }

  bool finite() const {
    for (double w : weight)
      if (!std::isfinite(w))
        return false;
    for (double b : init_bias)
      if (!std::isfinite(b))
        return false;
    return true;
  }

  friend bool operator==(const ContactHead &, const ContactHead &) = default;
};

/// Head with small seeded weights and the bias prescribed by `mode`.
inline ContactHead init_head(std::size_t v, std::size_t d, InitMode mode, std::span<const double> contact_mean,
                             std::uint64_t seed, double weight_scale = 0.01) {
  ContactHead h = ContactHead::zeros(v, d);
  h.init_mode = mode;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, weight_scale);
  for (double &w : h.weight)
    w = gauss(rng);
  switch (mode) {
  case InitMode::learned:
  case InitMode::zero:
    break;
  case InitMode::constant_no_contact:
    h.init_bias.assign(v, -kSaturatedLogit);
    break;
  case InitMode::constant_full_contact:
    h.init_bias.assign(v, kSaturatedLogit);
    break;
  case InitMode::dataset_mean:
    require_same_size(contact_mean.size(), v, "dataset_mean init");
    for (std::size_t i = 0; i < v; ++i) {
      const double m = std::clamp(contact_mean[i], 1e-6, 1.0 - 1e-6);
      h.init_bias[i] = std::log(m / (1.0 - m));
    }
    break;
  }
  return h;
}

/// σ(W·x + b), always length V.
inline std::vector<double> predict(const ContactHead &head, std::span<const double> features) {
  auto z = head.logits(features);
  for (double &p : z)
    p = sigmoid(p);
  return z;
}

inline constexpr double kDecisionThreshold = 0.5;

inline std::vector<std::uint8_t> binarize(std::span<const double> probabilities, double threshold = kDecisionThreshold) {
  std::vector<std::uint8_t> out(probabilities.size());
  for (std::size_t v = 0; v < out.size(); ++v)
    out[v] = probabilities[v] >= threshold ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  InitMode init_mode = InitMode::learned;
  std::size_t steps = 2000;
  double step_size = 0.5;
  std::uint64_t seed = 1;
  LossConfig loss;
  bool resample_per_epoch = false; // redraw the plan with seed + epoch after each pass

  void validate() const {
    if (steps < 1)
      throw std::invalid_argument("steps must be >= 1");
    if (!(step_size > 0.0) || !std::isfinite(step_size))
      throw std::invalid_argument("step size must be positive");
    loss.validate();
  }
};

class TrainingDiverged : public std::runtime_error {
public:
  TrainingDiverged(std::size_t step, const std::string &what)
      : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

struct TrainResult {
  ContactHead head;
  std::vector<double> loss_curve; // total loss per step, before the update
};

/// One gradient step on total_loss for a single sample. Returns the loss report
/// evaluated before the update.
inline LossReport train_step(ContactHead &head, const ContactSample &sample, const LossContext &ctx,
                             const LossConfig &loss, double step_size, bool update_bias) {
  const auto z = head.logits(sample.features);
  LossReport rep = total_loss(z, sample.contact, ctx, loss);
  const std::size_t d = head.feature_dim;
  for (std::size_t v = 0; v < head.vertex_count; ++v) {
    const double g = rep.gradient[v];
    if (g == 0.0)
      continue;
    double *row = head.weight.data() + v * d;
    for (std::size_t k = 0; k < d; ++k)
      row[k] -= step_size * g * sample.features[k];
    if (update_bias)
      head.init_bias[v] -= step_size * g;
  }
  return rep;
}

/// Plain gradient descent, one sample per step, visiting `sequence` in order
/// and wrapping around (or redrawing from `plan` when resample_per_epoch).
inline TrainResult train(ContactHead head, const ContactDataset &data, std::span<const ResampledIndex> sequence,
                         const TrainConfig &cfg, const LossContext &ctx, const SamplingPlan *plan = nullptr) {
  cfg.validate();
  if (sequence.empty())
    throw std::invalid_argument("train: empty sampling sequence");
  require_same_size(head.vertex_count, data.vertex_count(), "train: head vs dataset vertices");
  require_same_size(head.feature_dim, data.feature_dim(), "train: head vs dataset features");
  for (const auto &r : sequence)
    if (r.sample >= data.size())
      throw std::invalid_argument("train: plan index " + std::to_string(r.sample) + " out of range");

  const bool update_bias = cfg.init_mode == InitMode::learned;
  std::vector<ResampledIndex> current(sequence.begin(), sequence.end());
  TrainResult out;
  out.loss_curve.reserve(cfg.steps);
  std::size_t epoch = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const std::size_t pos = step % current.size();
    if (pos == 0 && step > 0) {
      ++epoch;
      if (cfg.resample_per_epoch && plan)
        current = plan->redraw(current.size(), cfg.seed + epoch);
    }
    const auto rep = train_step(head, data[current[pos].sample], ctx, cfg.loss, cfg.step_size, update_bias);
    if (!std::isfinite(rep.total))
      throw TrainingDiverged(step, "loss is not finite");
    out.loss_curve.push_back(rep.total);
  }
  if (!head.finite())
    throw TrainingDiverged(cfg.steps, "parameters are not finite");
  out.head = std::move(head);
  return out;
}

/// Mean total loss of `head` over the listed samples (all when empty).
inline double mean_loss(const ContactHead &head, const ContactDataset &data, const LossContext &ctx,
                        const LossConfig &loss, std::span<const std::size_t> indices = {}) {
  double acc = 0.0;
  const std::size_t count = indices.empty() ? data.size() : indices.size();
  for (std::size_t j = 0; j < count; ++j) {
    const auto &s = data[indices.empty() ? j : indices[j]];
    acc += total_loss(head.logits(s.features), s.contact, ctx, loss).total;
  }
  return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Evaluation

enum class Aggregation { per_sample, micro };

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t evaluated_count = 0;
  std::size_t skipped_count = 0;
  bool defined = false; // false when every sample was skipped
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0;
};

inline Confusion confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  require_same_size(pred.size(), truth.size(), "confusion");
  Confusion c;
  for (std::size_t v = 0; v < pred.size(); ++v) {
    if (pred[v] && truth[v])
      ++c.tp;
    else if (pred[v])
      ++c.fp;
    else if (truth[v])
      ++c.fn;
  }
  return c;
}

inline double precision_of(const Confusion &c) {
  return c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}
inline double recall_of(const Confusion &c) {
  return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}
inline double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

/// Precision, recall, and F1 over samples whose ground truth has any contact.
/// All-zero ground-truth samples are skipped and counted.
inline EvalReport evaluate(std::span<const std::vector<std::uint8_t>> predictions,
                           std::span<const std::vector<std::uint8_t>> ground_truth,
                           Aggregation mode = Aggregation::per_sample) {
  require_same_size(predictions.size(), ground_truth.size(), "evaluate");
  EvalReport rep;
  Confusion total;
  double sp = 0.0, sr = 0.0, sf = 0.0;
  std::size_t v_count = ground_truth.empty() ? 0 : ground_truth.front().size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    require_same_size(ground_truth[i].size(), v_count, "evaluate: ground truth vertex count");
    const auto c = confusion(predictions[i], ground_truth[i]);
    if (c.tp + c.fn == 0) {
      ++rep.skipped_count;
      continue;
    }
    ++rep.evaluated_count;
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
    const double p = precision_of(c), r = recall_of(c);
    sp += p;
    sr += r;
    sf += f1_of(p, r);
  }
  if (rep.evaluated_count == 0)
    return rep;
  rep.defined = true;
  if (mode == Aggregation::micro) {
    rep.precision = precision_of(total);
    rep.recall = recall_of(total);
    rep.f1 = f1_of(rep.precision, rep.recall);
  } else {
    const double n = static_cast<double>(rep.evaluated_count);
    rep.precision = sp / n;
    rep.recall = sr / n;
    rep.f1 = sf / n;
  }
  return rep;
}

/// Thresholded head predictions against the listed samples (all when empty).
inline EvalReport evaluate_head(const ContactHead &head, const ContactDataset &data,
                                std::span<const std::size_t> indices = {}, Aggregation mode = Aggregation::per_sample,
                                double threshold = kDecisionThreshold) {
  const std::size_t count = indices.empty() ? data.size() : indices.size();
  std::vector<std::vector<std::uint8_t>> pred(count), truth(count);
  parallel_for(count, [&](std::size_t j) {
    const auto &s = data[indices.empty() ? j : indices[j]];
    pred[j] = binarize(predict(head, s.features), threshold);
    truth[j] = s.contact;
  });
  return evaluate(pred, truth, mode);
}

inline std::string format_eval_csv(const EvalReport &r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "metric,value\nprecision,%.6f\nrecall,%.6f\nf1,%.6f\nevaluated,%zu\nskipped,%zu\ndefined,%d\n",
                r.precision, r.recall, r.f1, r.evaluated_count, r.skipped_count, r.defined ? 1 : 0);
  return buf;
}

// ---------------------------------------------------------------------------
// Train/test split and ablation

/// Held-out iff the stable hash of the sample id is 0 mod 5 (about 20%).
inline bool is_test_sample(const ContactSample &s) { return stable_hash(s.id) % 5 == 0; }

struct Split {
  std::vector<std::size_t> train, test;
};

inline Split split_by_id(const ContactDataset &ds) {
  Split sp;
  for (std::size_t i = 0; i < ds.size(); ++i)
    (is_test_sample(ds[i]) ? sp.test : sp.train).push_back(i);
  if (sp.train.empty() || sp.test.empty())
    throw DataError("train/test split left one side empty");
  return sp;
}

struct AblationVariant {
  std::string name;
  bool sampling = true;
  DataLossKind loss = DataLossKind::vcb;
  InitMode init = InitMode::learned;
};

/// Balanced sampling on/off, each shipped data loss, and each init mode,
/// varied one axis at a time around the full configuration.
inline std::vector<AblationVariant> default_ablation_variants() {
  return {
      {"full", true, DataLossKind::vcb, InitMode::learned},
      {"no_sampling", false, DataLossKind::vcb, InitMode::learned},
      {"loss_bce", true, DataLossKind::bce, InitMode::learned},
      {"loss_focal", true, DataLossKind::focal, InitMode::learned},
      {"loss_cb", true, DataLossKind::cb, InitMode::learned},
      {"init_zero", true, DataLossKind::vcb, InitMode::zero},
      {"init_no_contact", true, DataLossKind::vcb, InitMode::constant_no_contact},
      {"init_full_contact", true, DataLossKind::vcb, InitMode::constant_full_contact},
      {"init_dataset_mean", true, DataLossKind::vcb, InitMode::dataset_mean},
  };
}

struct AblationConfig {
  std::size_t steps = 2000;
  double step_size = 0.5;
  std::uint64_t seed = 1;
  std::size_t bins = kDefaultBinCount;
  double curvature = kDefaultCurvature;
  double beta = kDefaultLossBeta;
  double gamma = 2.0;
  LossWeights weights;
  Aggregation aggregation = Aggregation::per_sample;
  std::vector<std::size_t> level_sizes; // empty: default_level_sizes(V)
};

struct AblationRow {
  AblationVariant variant;
  EvalReport report;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Trains one head per variant on the train split and evaluates on the
/// held-out split. `mesh` must match the dataset's vertex count.
inline std::vector<AblationRow> run_ablation(const ContactDataset &data, const MeshTopology &mesh,
                                             std::span<const AblationVariant> variants, const AblationConfig &cfg) {
  require_same_size(mesh.vertex_count(), data.vertex_count(), "run_ablation: mesh vs dataset");
  const Split sp = split_by_id(data);
  const ContactDataset train_set = subset(data, sp.train);
  const auto levels = cfg.level_sizes.empty() ? default_level_sizes(mesh.vertex_count()) : cfg.level_sizes;
  const LevelRegressor reg = build_level_regressors(mesh, levels);
  const LossContext ctx = make_loss_context(mesh, reg, train_set);

  const SamplingPlan balanced = build_sampling_plan(train_set, cfg.bins, cfg.curvature, cfg.steps, cfg.seed);
  const SamplingPlan uniform = build_uniform_plan(train_set.size(), cfg.steps, cfg.seed);

  std::vector<AblationRow> rows;
  for (const auto &var : variants) {
    TrainConfig tc;
    tc.init_mode = var.init;
    tc.steps = cfg.steps;
    tc.step_size = cfg.step_size;
    tc.seed = cfg.seed;
    tc.loss.kind = var.loss;
    tc.loss.beta = cfg.beta;
    tc.loss.gamma = cfg.gamma;
    tc.loss.weights = cfg.weights;
    const SamplingPlan &plan = var.sampling ? balanced : uniform;
    ContactHead head = init_head(data.vertex_count(), data.feature_dim(), var.init, train_set.contact_mean(), cfg.seed);
    AblationRow row;
    row.variant = var;
    row.initial_loss = mean_loss(head, train_set, ctx, tc.loss);
    auto result = train(std::move(head), train_set, plan.resampled, tc, ctx, &plan);
    row.final_loss = mean_loss(result.head, train_set, ctx, tc.loss);
    row.report = evaluate_head(result.head, data, sp.test, cfg.aggregation);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string format_ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "variant,sampling,loss,init,precision,recall,f1,evaluated,skipped\n";
  char buf[512];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%.6f,%.6f,%.6f,%zu,%zu\n", r.variant.name.c_str(),
                  r.variant.sampling ? "on" : "off", std::string(to_string(r.variant.loss)).c_str(),
                  std::string(to_string(r.variant.init)).c_str(), r.report.precision, r.report.recall, r.report.f1,
                  r.report.evaluated_count, r.report.skipped_count);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model file: "CFMODEL\0", u32 version, u32 init mode, u64 V, u64 d,
// V·d weights (row-major), V biases. Little-endian IEEE-754 binary64.

inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr char kModelMagic[8] = {'C', 'F', 'M', 'O', 'D', 'E', 'L', '\0'};

namespace detail {

template <typename UInt> void put_le(std::string &out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename UInt> UInt get_le(std::string_view in, std::size_t &pos, const std::string &source) {
  if (pos + sizeof(UInt) > in.size())
    throw DataError(source, 0, "model file truncated");
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    v |= static_cast<UInt>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(UInt);
  return v;
}

} // namespace detail

inline std::string serialize_model(const ContactHead &h) {
  std::string out(kModelMagic, sizeof(kModelMagic));
  detail::put_le<std::uint32_t>(out, kModelVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.init_mode));
  detail::put_le<std::uint64_t>(out, h.vertex_count);
  detail::put_le<std::uint64_t>(out, h.feature_dim);
  for (double w : h.weight)
    detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(w));
  for (double b : h.init_bias)
    detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(b));
  return out;
}

inline ContactHead deserialize_model(std::string_view in, const std::string &source = "<model>") {
  if (in.size() < sizeof(kModelMagic) || std::memcmp(in.data(), kModelMagic, sizeof(kModelMagic)) != 0)
    throw DataError(source, 0, "not a model file (bad magic)");
  std::size_t pos = sizeof(kModelMagic);
  const auto version = detail::get_le<std::uint32_t>(in, pos, source);
  if (version != kModelVersion)
    throw DataError(source, 0, "unsupported model version " + std::to_string(version));
  const auto mode = detail::get_le<std::uint32_t>(in, pos, source);
  if (mode > static_cast<std::uint32_t>(InitMode::dataset_mean))
    throw DataError(source, 0, "invalid init mode in model header");
  ContactHead h;
  h.init_mode = static_cast<InitMode>(mode);
  h.vertex_count = detail::get_le<std::uint64_t>(in, pos, source);
  h.feature_dim = detail::get_le<std::uint64_t>(in, pos, source);
  const std::size_t expected = pos + 8 * (h.vertex_count * h.feature_dim + h.vertex_count);
  if (in.size() != expected)
    throw DataError(source, 0, "model size mismatch: expected " + std::to_string(expected) + " bytes, got " +
                                   std::to_string(in.size()));
  h.weight.resize(h.vertex_count * h.feature_dim);
  h.init_bias.resize(h.vertex_count);
  for (double &w : h.weight)
    w = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, pos, source));
  for (double &b : h.init_bias)
    b = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, pos, source));
  return h;
}

inline void save_model(const ContactHead &h, const std::filesystem::path &path) {
  write_file_atomic(path, serialize_model(h));
}

inline ContactHead load_model(const std::filesystem::path &path) {
  return deserialize_model(read_file(path), path.string());
}

} // namespace contactforge

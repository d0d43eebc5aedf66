// contactforge: command-line front end for labeling, statistics, balanced
// sampling, training, evaluation, and ablation.

#include "contactforge/contactforge.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace cf = contactforge;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

// Output paths must land in an existing directory.
const CLI::Validator kWritablePath(
    [](std::string &path) -> std::string {
      const fs::path parent = fs::path(path).parent_path();
      if (!parent.empty() && !fs::is_directory(parent))
        return "directory does not exist: " + parent.string();
      if (fs::is_directory(path))
        return "output path is a directory: " + path;
      return {};
    },
    "PATH", "writable");

struct Options {
  bool verbose = false;

  // generate
  cf::SyntheticConfig synth;

  // shared
  std::string manifest, out, mesh, plan, model;
  std::uint64_t seed = 1;

  // label
  std::string hand, other, profile = "default";
  std::optional<double> threshold;

  // sample
  std::size_t bins = cf::kDefaultBinCount;
  double curvature = cf::kDefaultCurvature;
  std::size_t total = 0;

  // train / ablate / compare-losses
  std::string loss = "vcb";
  std::string losses = "bce,focal,cb,vcb";
  double beta = cf::kDefaultLossBeta;
  double gamma = 2.0;
  std::string init = "learned";
  std::size_t steps = 2000;
  double lr = 0.5;
  double w_data = 1.0, w_reg = 0.1, w_smooth = 1.0;
  bool raw_class_weights = false;
  bool per_epoch = false;
  bool micro = false;

  // eval
  std::string split = "all";
  double decision = cf::kDecisionThreshold;
};

cf::MeshTopology mesh_for(const Options &o, std::size_t vertex_count) {
  if (!o.mesh.empty()) {
    auto m = cf::load_obj(o.mesh);
    if (m.vertex_count() != vertex_count)
      throw cf::DataError(o.mesh, 0,
                          "mesh has " + std::to_string(m.vertex_count()) + " vertices, manifest has " +
                              std::to_string(vertex_count));
    return m;
  }
  return cf::proxy_mesh_for(vertex_count).topology;
}

cf::LossConfig loss_config(const Options &o, cf::DataLossKind kind) {
  cf::LossConfig lc;
  lc.kind = kind;
  lc.beta = o.beta;
  lc.gamma = o.gamma;
  lc.weights = {o.w_data, o.w_reg, o.w_smooth};
  lc.normalize_class_weights = !o.raw_class_weights;
  lc.validate();
  return lc;
}

cf::AblationConfig ablation_config(const Options &o) {
  cf::AblationConfig ac;
  ac.steps = o.steps;
  ac.step_size = o.lr;
  ac.seed = o.seed;
  ac.bins = o.bins;
  ac.curvature = o.curvature;
  ac.beta = o.beta;
  ac.gamma = o.gamma;
  ac.weights = {o.w_data, o.w_reg, o.w_smooth};
  ac.aggregation = o.micro ? cf::Aggregation::micro : cf::Aggregation::per_sample;
  return ac;
}

void log(const Options &o, const std::string &msg) {
  if (o.verbose)
    std::cerr << msg << "\n";
}

// ---------------------------------------------------------------------------

int cmd_generate(const Options &o) {
  cf::SyntheticConfig cfg = o.synth;
  cfg.seed = o.seed;
  const auto ds = cf::generate_synthetic(cfg);
  cf::save_manifest(ds, o.out);
  std::cout << "wrote " << ds.size() << " samples (V=" << ds.vertex_count() << ", d=" << ds.feature_dim()
            << ") to " << o.out << "\n";
  return kExitOk;
}

int cmd_label(const Options &o) {
  const auto hand = cf::load_obj(o.hand);
  const auto other = cf::load_obj(o.other);
  const cf::ThresholdProfile profile = o.threshold ? cf::ThresholdProfile::make("custom", *o.threshold)
                                                   : cf::ThresholdProfile::by_name(o.profile);
  const auto labels = cf::label_contacts(hand.vertices(), other, profile);
  if (labels.empty_interacting_mesh)
    std::cerr << "warning: interacting mesh has no triangles; all labels are 0\n";
  cf::write_file_atomic(o.out, cf::format_labels_csv(labels.contact));
  const auto n = std::count(labels.contact.begin(), labels.contact.end(), std::uint8_t{1});
  std::cout << n << " of " << labels.contact.size() << " vertices in contact (threshold " << profile.threshold
            << " m)\n";
  return kExitOk;
}

int cmd_stats(const Options &o) {
  const auto ds = cf::load_manifest(o.manifest);
  const auto &g = ds.global_class_counts();
  std::printf("N=%zu V=%zu d=%zu\n", ds.size(), ds.vertex_count(), ds.feature_dim());
  std::printf("empty_samples=%zu (%.4f)\n", ds.empty_sample_count(),
              static_cast<double>(ds.empty_sample_count()) / static_cast<double>(ds.size()));
  std::printf("vertex_labels non_contact=%llu contact=%llu\n", static_cast<unsigned long long>(g.non_contact),
              static_cast<unsigned long long>(g.contact));
  const double ratio = ds.imbalance_ratio();
  if (std::isinf(ratio))
    std::printf("imbalance_ratio=inf (no contact labels)\n");
  else
    std::printf("imbalance_ratio=%.4f:1\n", ratio);
  if (o.mesh.empty()) {
    try {
      const auto pm = cf::proxy_mesh_for(ds.vertex_count());
      std::printf("tip_mean_contact=%.6f\ndorsal_mean_contact=%.6f\n", ds.region_mean(pm.tip),
                  ds.region_mean(pm.dorsal));
    } catch (const std::invalid_argument &) {
      std::printf("tip_mean_contact=n/a\ndorsal_mean_contact=n/a\n");
    }
  }
  double overall = 0.0;
  for (double m : ds.contact_mean())
    overall += m;
  std::printf("mean_contact=%.6f\n", overall / static_cast<double>(ds.vertex_count()));
  return kExitOk;
}

int cmd_sample(const Options &o) {
  const auto ds = cf::load_manifest(o.manifest);
  const std::size_t total = o.total ? o.total : ds.size();
  const auto plan = cf::build_sampling_plan(ds, o.bins, o.curvature, total, o.seed);
  if (plan.edges.degenerate)
    std::cerr << "warning: all contact balance scores are equal; using a single bin\n";
  cf::write_file_atomic(o.out, cf::format_plan_csv(plan.resampled));
  std::cout << "bins:";
  for (const auto &b : plan.bins)
    std::cout << " " << b.size();
  std::cout << "\nwrote " << plan.resampled.size() << " draws to " << o.out << "\n";
  return kExitOk;
}

int cmd_train(const Options &o) {
  const auto ds = cf::load_manifest(o.manifest);
  const auto seq = cf::parse_plan_csv(cf::read_file(o.plan), o.plan);
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq[i].sample >= ds.size())
      throw cf::DataError(o.plan, i + 2, "sample index " + std::to_string(seq[i].sample) + " out of range");
  const auto mesh = mesh_for(o, ds.vertex_count());
  const auto reg = cf::build_level_regressors(mesh, cf::default_level_sizes(mesh.vertex_count()));
  const auto ctx = cf::make_loss_context(mesh, reg, ds);

  cf::TrainConfig tc;
  tc.init_mode = cf::parse_init_mode(o.init);
  tc.steps = o.steps;
  tc.step_size = o.lr;
  tc.seed = o.seed;
  tc.loss = loss_config(o, cf::parse_data_loss(o.loss));
  auto head = cf::init_head(ds.vertex_count(), ds.feature_dim(), tc.init_mode, ds.contact_mean(), o.seed);
  const double before = cf::mean_loss(head, ds, ctx, tc.loss);
  auto result = cf::train(std::move(head), ds, seq, tc, ctx);
  const double after = cf::mean_loss(result.head, ds, ctx, tc.loss);
  cf::save_model(result.head, o.out);
  std::printf("mean loss %.6f -> %.6f over %zu steps\nwrote %s\n", before, after, tc.steps, o.out.c_str());
  return kExitOk;
}

int cmd_eval(const Options &o) {
  const auto head = cf::load_model(o.model);
  const auto ds = cf::load_manifest(o.manifest);
  if (head.vertex_count != ds.vertex_count() || head.feature_dim != ds.feature_dim())
    throw cf::DataError(o.model, 0, "model shape (V=" + std::to_string(head.vertex_count) + ", d=" +
                                        std::to_string(head.feature_dim) + ") does not match manifest");
  std::vector<std::size_t> idx;
  if (o.split == "test" || o.split == "train") {
    const auto sp = cf::split_by_id(ds);
    idx = o.split == "test" ? sp.test : sp.train;
  }
  const auto rep = cf::evaluate_head(head, ds, idx, o.micro ? cf::Aggregation::micro : cf::Aggregation::per_sample,
                                     o.decision);
  cf::write_file_atomic(o.out, cf::format_eval_csv(rep));
  if (!rep.defined)
    std::cerr << "warning: every sample has all-zero ground truth; metrics are undefined\n";
  std::printf("precision=%.6f recall=%.6f f1=%.6f evaluated=%zu skipped=%zu\n", rep.precision, rep.recall, rep.f1,
              rep.evaluated_count, rep.skipped_count);
  return kExitOk;
}

cf::ContactDataset ablation_data(const Options &o) {
  if (!o.manifest.empty())
    return cf::load_manifest(o.manifest);
  cf::SyntheticConfig cfg; // bundled benchmark: V=162, d=16, N=2000, 70% empty, tip boost 10
  cfg.seed = o.seed;
  return cf::generate_synthetic(cfg);
}

int cmd_ablate(const Options &o) {
  const auto ds = ablation_data(o);
  const auto mesh = mesh_for(o, ds.vertex_count());
  const auto variants = cf::default_ablation_variants();
  const auto rows = cf::run_ablation(ds, mesh, variants, ablation_config(o));
  const auto csv = cf::format_ablation_csv(rows);
  cf::write_file_atomic(o.out, csv);
  std::cout << csv;
  return kExitOk;
}

int cmd_compare_losses(const Options &o) {
  const auto ds = ablation_data(o);
  const auto mesh = mesh_for(o, ds.vertex_count());
  std::vector<cf::AblationVariant> variants;
  for (const auto &name : cf::split(o.losses, ',')) {
    const auto kind = cf::parse_data_loss(cf::trim(name));
    variants.push_back({std::string(cf::to_string(kind)), true, kind, cf::InitMode::learned});
  }
  const auto rows = cf::run_ablation(ds, mesh, variants, ablation_config(o));
  const auto csv = cf::format_ablation_csv(rows);
  cf::write_file_atomic(o.out, csv);
  std::cout << csv;
  return kExitOk;
}

int cmd_export_heatmap(const Options &o) {
  const auto ds = cf::load_manifest(o.manifest);
  std::vector<double> mean;
  if (o.model.empty()) {
    mean = ds.contact_mean();
  } else {
    const auto head = cf::load_model(o.model);
    if (head.vertex_count != ds.vertex_count() || head.feature_dim != ds.feature_dim())
      throw cf::DataError(o.model, 0, "model shape does not match manifest");
    mean.assign(ds.vertex_count(), 0.0);
    for (const auto &s : ds.samples()) {
      const auto p = cf::predict(head, s.features);
      for (std::size_t v = 0; v < p.size(); ++v)
        mean[v] += p[v];
    }
    for (double &m : mean)
      m /= static_cast<double>(ds.size());
  }
  cf::write_file_atomic(o.out, cf::format_heatmap_csv(mean));
  std::cout << "wrote " << mean.size() << " vertices to " << o.out << "\n";
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"contactforge: dense contact labeling, balanced sampling, and class-balanced training"};
  app.require_subcommand(1);
  Options o;
  app.add_flag("-v,--verbose", o.verbose, "Progress messages on stderr");

  auto add_seed = [&](CLI::App *c) { c->add_option("--seed", o.seed, "Seed for every stochastic step")->capture_default_str(); };
  auto add_out = [&](CLI::App *c) { c->add_option("--out", o.out, "Output file")->required()->check(kWritablePath); };
  auto add_manifest = [&](CLI::App *c, bool required) {
    auto *opt = c->add_option("--manifest", o.manifest, "Dataset manifest")->check(CLI::ExistingFile);
    if (required)
      opt->required();
  };
  auto add_mesh = [&](CLI::App *c) {
    c->add_option("--mesh", o.mesh, "Surface mesh (OBJ); defaults to the proxy mesh matching V")
        ->check(CLI::ExistingFile);
  };
  auto add_training = [&](CLI::App *c) {
    c->add_option("--beta", o.beta, "Class-balance beta in [0, 1)")->capture_default_str();
    c->add_option("--gamma", o.gamma, "Focal gamma")->capture_default_str();
    c->add_option("--steps", o.steps, "Gradient steps")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--lr", o.lr, "Step size")->capture_default_str();
    c->add_option("--data-weight", o.w_data, "Weight of the multi-level contact loss")->capture_default_str();
    c->add_option("--reg-weight", o.w_reg, "Weight of the mean-contact regularizer")->capture_default_str();
    c->add_option("--smooth-weight", o.w_smooth, "Weight of the smoothness loss")->capture_default_str();
    c->add_flag("--raw-class-weights", o.raw_class_weights, "Do not rescale CB/VCB to the BCE scale");
  };

  auto *gen = app.add_subcommand("generate", "Write the synthetic imbalanced benchmark as a manifest");
  gen->add_option("--subdivisions", o.synth.subdivisions, "Proxy mesh subdivisions (0-4)")->capture_default_str();
  gen->add_option("--samples", o.synth.samples, "Number of samples")->capture_default_str();
  gen->add_option("--dim", o.synth.feature_dim, "Feature dimension")->capture_default_str();
  gen->add_option("--empty-fraction", o.synth.empty_fraction, "Fraction of all-zero samples")->capture_default_str();
  gen->add_option("--tip-boost", o.synth.tip_boost, "Center weight on the tip cap")->capture_default_str();
  gen->add_option("--noise", o.synth.noise, "Feature noise sigma")->capture_default_str();
  add_seed(gen);
  add_out(gen);

  auto *label = app.add_subcommand("label", "Binary contact labels from hand/interacting mesh proximity");
  label->add_option("--hand", o.hand, "Hand mesh (OBJ)")->required()->check(CLI::ExistingFile);
  label->add_option("--other", o.other, "Interacting mesh (OBJ)")->required()->check(CLI::ExistingFile);
  auto *prof = label->add_option("--profile", o.profile, "default (1 cm), coarse (3.5 cm), fine (0.5 cm)")
                   ->check(CLI::IsMember({"default", "coarse", "fine"}))
                   ->capture_default_str();
  auto *thr = label->add_option("--threshold", o.threshold, "Custom threshold in meters");
  prof->excludes(thr);
  add_out(label);

  auto *stats = app.add_subcommand("stats", "Dataset size, class imbalance, and per-region contact");
  add_manifest(stats, true);

  auto *sample = app.add_subcommand("sample", "Balanced contact sampling plan");
  add_manifest(sample, true);
  sample->add_option("--bins", o.bins, "Bin count K")->capture_default_str()->check(CLI::Range(2, 100000));
  sample->add_option("--curvature", o.curvature, "Logarithmic edge curvature")->capture_default_str();
  sample->add_option("--total", o.total, "Draws in the plan (default: N)");
  add_seed(sample);
  add_out(sample);

  auto *train = app.add_subcommand("train", "Train the per-vertex contact head");
  add_manifest(train, true);
  train->add_option("--plan", o.plan, "Sampling plan CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--loss", o.loss, "bce, focal, cb, or vcb")
      ->capture_default_str()
      ->check(CLI::IsMember({"bce", "focal", "cb", "vcb"}));
  train->add_option("--init", o.init, "learned, zero, no_contact, full_contact, dataset_mean")
      ->capture_default_str()
      ->check(CLI::IsMember({"learned", "zero", "none", "no_contact", "full_contact", "dataset_mean", "mean"}));
  add_training(train);
  add_mesh(train);
  add_seed(train);
  add_out(train);

  auto *eval = app.add_subcommand("eval", "Precision/recall/F1, skipping all-zero ground truth");
  eval->add_option("--model", o.model, "Model file")->required()->check(CLI::ExistingFile);
  add_manifest(eval, true);
  eval->add_option("--split", o.split, "all, train, or test")
      ->capture_default_str()
      ->check(CLI::IsMember({"all", "train", "test"}));
  eval->add_option("--decision-threshold", o.decision, "Probability threshold")->capture_default_str();
  eval->add_flag("--micro", o.micro, "Micro-average over vertices instead of per-sample means");
  add_out(eval);

  auto *ablate = app.add_subcommand("ablate", "Sampling, loss, and init ablation table");
  add_manifest(ablate, false);
  ablate->add_option("--bins", o.bins, "Bin count K")->capture_default_str()->check(CLI::Range(2, 100000));
  ablate->add_option("--curvature", o.curvature, "Logarithmic edge curvature")->capture_default_str();
  ablate->add_flag("--micro", o.micro, "Micro-averaged metrics");
  add_training(ablate);
  add_mesh(ablate);
  add_seed(ablate);
  add_out(ablate);

  auto *compare = app.add_subcommand("compare-losses", "Train once per data loss and tabulate metrics");
  add_manifest(compare, false);
  compare->add_option("--losses", o.losses, "Comma-separated subset of bce,focal,cb,vcb")->capture_default_str();
  compare->add_option("--bins", o.bins, "Bin count K")->capture_default_str()->check(CLI::Range(2, 100000));
  compare->add_option("--curvature", o.curvature, "Logarithmic edge curvature")->capture_default_str();
  compare->add_flag("--micro", o.micro, "Micro-averaged metrics");
  add_training(compare);
  add_mesh(compare);
  add_seed(compare);
  add_out(compare);

  auto *heat = app.add_subcommand("export-heatmap", "Per-vertex mean contact (dataset or model predictions)");
  add_manifest(heat, true);
  heat->add_option("--model", o.model, "Average model predictions instead of labels")->check(CLI::ExistingFile);
  add_out(heat);

  if (argc <= 1) {
    std::cerr << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    log(o, "running " + app.get_subcommands().front()->get_name());
    if (*gen)
      return cmd_generate(o);
    if (*label)
      return cmd_label(o);
    if (*stats)
      return cmd_stats(o);
    if (*sample)
      return cmd_sample(o);
    if (*train)
      return cmd_train(o);
    if (*eval)
      return cmd_eval(o);
    if (*ablate)
      return cmd_ablate(o);
    if (*compare)
      return cmd_compare_losses(o);
    if (*heat)
      return cmd_export_heatmap(o);
  } catch (const std::invalid_argument &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

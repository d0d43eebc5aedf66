#include "contactforge/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace contactforge;

namespace {

template <class F> std::vector<double> central_difference(F f, std::vector<double> z, double h = 1e-5) {
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double z0 = z[i];
    z[i] = z0 + h;
    const double fp = f(z);
    z[i] = z0 - h;
    const double fm = f(z);
    z[i] = z0;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

double relative_error(const std::vector<double> &a, const std::vector<double> &b) {
  double num = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0 ? 0 : std::sqrt(num) / den;
}

struct Instance {
  std::vector<double> z;
  std::vector<std::uint8_t> y;
};

Instance random_instance(std::size_t v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 2.0);
  std::bernoulli_distribution coin(0.4);
  Instance in;
  for (std::size_t i = 0; i < v; ++i) {
    in.z.push_back(g(rng));
    in.y.push_back(coin(rng) ? 1 : 0);
  }
  return in;
}

} // namespace

TEST(Bce, SingleVertexAtZero) {
  const std::vector<double> z = {0.0};
  const std::vector<std::uint8_t> y = {1};
  const auto lv = bce(z, y);
  EXPECT_NEAR(lv.value, std::log(2.0), 1e-15);
  EXPECT_NEAR(lv.gradient[0], -0.5, 1e-15);
}

TEST(Bce, SaturatedPredictionIsNearlyFree) {
  const std::vector<double> z = {40.0};
  const std::vector<std::uint8_t> y = {1};
  EXPECT_LT(bce(z, y).value, 1e-15);
  const std::vector<double> far = {-800.0};
  EXPECT_NEAR(bce(far, y).value, 800.0, 1e-9); // no overflow
}

TEST(Bce, GradientMatchesFiniteDifferences) {
  const auto in = random_instance(20, 1);
  const auto lv = bce(in.z, in.y);
  const auto fd = central_difference([&](const std::vector<double> &x) { return bce(x, in.y).value; }, in.z);
  EXPECT_LT(relative_error(lv.gradient, fd), 1e-5);
}

TEST(Bce, RejectsMismatchedInput) {
  const std::vector<double> z = {0.0, 1.0};
  const std::vector<std::uint8_t> y = {1};
  EXPECT_THROW(bce(z, y), std::invalid_argument);
}

TEST(Focal, GammaZeroIsBce) {
  const auto in = random_instance(50, 2);
  const auto f = focal_loss(in.z, in.y, 0.0), b = bce(in.z, in.y);
  EXPECT_EQ(f.value, b.value);
  EXPECT_EQ(f.gradient, b.gradient);
}

TEST(Focal, QuarterBceAtZero) {
  const std::vector<double> z = {0.0};
  const std::vector<std::uint8_t> y = {1};
  EXPECT_NEAR(focal_loss(z, y, 2.0).value, 0.25 * std::log(2.0), 1e-12);
}

TEST(Focal, GradientMatchesFiniteDifferences) {
  for (double gamma : {0.5, 1.0, 2.0, 3.7}) {
    const auto in = random_instance(40, 3);
    const auto lv = focal_loss(in.z, in.y, gamma);
    const auto fd =
        central_difference([&](const std::vector<double> &x) { return focal_loss(x, in.y, gamma).value; }, in.z);
    EXPECT_LT(relative_error(lv.gradient, fd), 1e-5) << "gamma " << gamma;
  }
}

TEST(ClassWeight, Fixtures) {
  EXPECT_EQ(cb_weight(1, 0.9), 1.0);
  EXPECT_EQ(cb_weight(1, 0.9999), 1.0);
  EXPECT_EQ(cb_weight(0, 0.99), 1.0);
  for (double n : {1.0, 2.0, 50.0, 1e6})
    EXPECT_EQ(cb_weight(n, 0.0), 1.0);
  EXPECT_NEAR(cb_weight(100, 0.99), 0.0157736753, 1e-10);
  EXPECT_NEAR(cb_weight(100, 0.99), 0.0157744, 1e-6);
  EXPECT_NEAR(cb_weight(1e4, 0.999), 0.0010000451754, 1e-13);
  EXPECT_THROW(cb_weight(10, 1.0), std::invalid_argument);
  EXPECT_THROW(cb_weight(10, -0.1), std::invalid_argument);
}

TEST(ClassWeight, ApproachesOneOverNForSmallBeta) {
  // (1 − β)/(1 − βⁿ) → 1 as β → 0, and → 1/n as β → 1.
  EXPECT_NEAR(cb_weight(50, 1e-9), 1.0, 1e-8);
  EXPECT_NEAR(cb_weight(50, 1.0 - 1e-9), 1.0 / 50.0, 1e-8);
}

TEST(CbLoss, SymmetricCountsScaleBce) {
  const auto in = random_instance(30, 4);
  const ClassCounts c{500, 500};
  const double a = cb_weight(500, 0.999);
  const auto cb = cb_loss(in.z, in.y, 0.999, c), b = bce(in.z, in.y);
  EXPECT_NEAR(cb.value, a * b.value, 1e-15);
  for (std::size_t i = 0; i < 30; ++i)
    EXPECT_NEAR(cb.gradient[i], a * b.gradient[i], 1e-15);
}

TEST(CbLoss, TinyBetaApproachesBce) {
  const auto in = random_instance(162, 5);
  const ClassCounts c{9000, 300};
  const std::vector<ClassCounts> pv(162, ClassCounts{123, 45});
  const double b = bce(in.z, in.y).value;
  EXPECT_LT(std::abs(cb_loss(in.z, in.y, 1e-9, c).value - b), 1e-6);
  EXPECT_LT(std::abs(vcb_loss(in.z, in.y, 1e-9, pv).value - b), 1e-6);
}

TEST(VcbLoss, ConstantCountsMatchCb) {
  const auto in = random_instance(162, 6);
  const ClassCounts c{1700, 90};
  const std::vector<ClassCounts> pv(162, c);
  const auto a = cb_loss(in.z, in.y, 0.9999, c), b = vcb_loss(in.z, in.y, 0.9999, pv);
  EXPECT_NEAR(a.value, b.value, 1e-12);
  for (std::size_t i = 0; i < 162; ++i)
    EXPECT_NEAR(a.gradient[i], b.gradient[i], 1e-12);
}

TEST(VcbLoss, GradientMatchesFiniteDifferences) {
  const auto in = random_instance(162, 7);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> n(0, 3000);
  std::vector<ClassCounts> pv(162);
  for (auto &c : pv)
    c = {n(rng), n(rng)};
  const auto lv = vcb_loss(in.z, in.y, 0.999, pv);
  const auto fd =
      central_difference([&](const std::vector<double> &x) { return vcb_loss(x, in.y, 0.999, pv).value; }, in.z);
  EXPECT_LT(relative_error(lv.gradient, fd), 1e-5);
}

TEST(Smoothness, Fixtures) {
  const std::pair<std::size_t, std::size_t> e[] = {{0, 1}};
  const auto pair = MeshTopology::from_edges(2, e);
  const std::vector<double> eq = {0.7, 0.7};
  EXPECT_NEAR(smoothness_loss(eq, pair).value, 0.0, 1e-12);
  const auto tri = build_topology({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  const std::vector<double> half = {0, 0, 0};
  EXPECT_NEAR(smoothness_loss(half, tri).value, std::log1p(3.0 / (6.0 + 1e-8)), 1e-15);
  EXPECT_NEAR(smoothness_loss(half, tri).value, std::log(1.5), 1e-9);
}

TEST(Smoothness, GradientAwayFromKinksOnChain) {
  const std::size_t n = 40;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t v = 0; v + 1 < n; ++v)
    edges.emplace_back(v, v + 1);
  const auto chain = MeshTopology::from_edges(n, edges);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 2.0);
  int checked = 0;
  while (checked < 20) {
    std::vector<double> z(n);
    for (double &x : z)
      x = g(rng);
    bool near_kink = false;
    for (std::size_t v = 0; v < n; ++v) {
      double ph = 0, qh = 0;
      for (std::size_t u : chain.neighbors(v)) {
        ph += sigmoid(z[u]);
        qh += 1 - sigmoid(z[u]);
      }
      near_kink |= std::abs(sigmoid(z[v]) - ph) < 1e-3 || std::abs(1 - sigmoid(z[v]) - qh) < 1e-3;
    }
    if (near_kink)
      continue;
    ++checked;
    const auto lv = smoothness_loss(z, chain);
    const auto fd = central_difference([&](const std::vector<double> &x) { return smoothness_loss(x, chain).value; }, z);
    EXPECT_LT(relative_error(lv.gradient, fd), 1e-4);
  }
}

TEST(Regularization, Fixtures) {
  const std::vector<double> mean = {0.2, 0.8};
  const std::vector<double> z = {-40.0, 40.0};
  EXPECT_NEAR(regularization_loss(z, mean).value, 0.2, 1e-15);
  const std::vector<double> at_mean = {std::log(0.2 / 0.8), std::log(0.8 / 0.2)};
  EXPECT_NEAR(regularization_loss(at_mean, mean).value, 0.0, 1e-15);
  const std::vector<double> bad = {1.5, 0.1};
  EXPECT_THROW(regularization_loss(z, bad), std::invalid_argument);
}

TEST(Losses, FiniteAndNonNegativeOnWideLogits) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  const auto pm = make_proxy_mesh(2);
  std::vector<ClassCounts> pv(162, ClassCounts{100, 3});
  for (int t = 0; t < 20; ++t) {
    auto in = random_instance(162, 100 + static_cast<std::uint64_t>(t));
    for (double &x : in.z)
      x = u(rng);
    const std::vector<double> mean(162, 0.05);
    for (double v : {bce(in.z, in.y).value, focal_loss(in.z, in.y).value, cb_loss(in.z, in.y, 0.9999, {9000, 300}).value,
                     vcb_loss(in.z, in.y, 0.9999, pv).value, smoothness_loss(in.z, pm.topology).value,
                     regularization_loss(in.z, mean).value}) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
    }
  }
}

class TotalLossTest : public ::testing::Test {
protected:
  void SetUp() override {
    SyntheticConfig cfg;
    cfg.samples = 200;
    data = generate_synthetic(cfg, proxy);
  }
  ProxyMesh proxy = make_proxy_mesh(2);
  ContactDataset data;
};

TEST_F(TotalLossTest, DataOnlySingleLevelIsVcb) {
  const std::size_t sizes[] = {162};
  const auto reg = build_level_regressors(proxy.topology, sizes);
  const auto ctx = make_loss_context(proxy.topology, reg, data);
  LossConfig cfg;
  cfg.weights = {1.0, 0.0, 0.0};
  cfg.normalize_class_weights = false;
  const auto in = random_instance(162, 10);
  const auto rep = total_loss(in.z, data[3].contact, ctx, cfg);
  const auto ref = vcb_loss(in.z, data[3].contact, cfg.beta, data.vertex_class_counts());
  EXPECT_NEAR(rep.total, ref.value, 1e-15);
  for (std::size_t v = 0; v < 162; ++v)
    EXPECT_NEAR(rep.gradient[v], ref.gradient[v], 1e-15);
}

TEST_F(TotalLossTest, NormalizationDividesByMeanWeight) {
  const std::size_t sizes[] = {162};
  const auto reg = build_level_regressors(proxy.topology, sizes);
  const auto ctx = make_loss_context(proxy.topology, reg, data);
  LossConfig raw, scaled;
  raw.weights = scaled.weights = {1.0, 0.0, 0.0};
  raw.normalize_class_weights = false;
  const auto in = random_instance(162, 11);
  const double m = mean_class_weight(ctx.levels[0], DataLossKind::vcb, raw.beta);
  EXPECT_GT(m, 0.0);
  EXPECT_LT(m, 1.0);
  EXPECT_NEAR(total_loss(in.z, data[5].contact, ctx, scaled).total,
              total_loss(in.z, data[5].contact, ctx, raw).total / m, 1e-12);
}

TEST_F(TotalLossTest, MultiLevelGradientAndDefaults) {
  const auto reg = build_level_regressors(proxy.topology, default_level_sizes(162));
  const auto ctx = make_loss_context(proxy.topology, reg, data);
  ASSERT_EQ(ctx.levels.size(), 3u);
  LossConfig cfg;
  EXPECT_EQ(cfg.weights.data, 1.0);
  EXPECT_EQ(cfg.weights.reg, 0.1);
  EXPECT_EQ(cfg.weights.smooth, 1.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto in = random_instance(162, 20 + seed);
    const auto &labels = data[seed * 7].contact;
    const auto rep = total_loss(in.z, labels, ctx, cfg);
    EXPECT_GE(rep.total, 0.0);
    EXPECT_EQ(rep.level_values.size(), 3u);
    EXPECT_NEAR(rep.total, rep.data + 0.1 * rep.reg + rep.smooth, 1e-12);
    const auto fd = central_difference(
        [&](const std::vector<double> &x) { return total_loss(x, labels, ctx, cfg).total; }, in.z);
    EXPECT_LT(relative_error(rep.gradient, fd), 1e-4);
  }
}

TEST_F(TotalLossTest, CustomDataTermIsUsed) {
  const auto reg = build_level_regressors(proxy.topology, default_level_sizes(162));
  const auto ctx = make_loss_context(proxy.topology, reg, data);
  LossConfig cfg;
  cfg.weights = {1.0, 0.0, 0.0};
  int calls = 0;
  cfg.custom = [&](std::span<const double> z, std::span<const std::uint8_t>, const LevelStats &) {
    ++calls;
    return LossValue{1.0, std::vector<double>(z.size(), 0.0)};
  };
  const auto in = random_instance(162, 30);
  EXPECT_DOUBLE_EQ(total_loss(in.z, data[0].contact, ctx, cfg).total, 1.0);
  EXPECT_EQ(calls, 3);
}

TEST(DataLossKind, Parsing) {
  EXPECT_EQ(parse_data_loss("vcb"), DataLossKind::vcb);
  EXPECT_EQ(parse_data_loss("bce"), DataLossKind::bce);
  EXPECT_EQ(to_string(DataLossKind::focal), "focal");
  EXPECT_THROW(parse_data_loss("dice"), std::invalid_argument);
}

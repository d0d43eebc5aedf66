#include "contactforge/contactforge.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace contactforge;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string &args) {
  const std::string cmd = std::string("\"") + CONTACTFORGE_CLI + "\" " + args + " 2>&1";
  Run r;
  FILE *p = popen(cmd.c_str(), "r");
  if (!p)
    return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0)
    r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("contactforge_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string &name) const { return (dir / name).string(); }

  // Small synthetic manifest shared by most tests.
  std::string manifest(std::size_t samples = 300) {
    const auto m = path("m.txt");
    const auto r = run("generate --samples " + std::to_string(samples) + " --seed 3 --out " + m);
    EXPECT_EQ(r.code, 0) << r.out;
    return m;
  }

  fs::path dir;
};

} // namespace

TEST_F(Cli, NoArgumentsPrintsUsageAndFails) {
  const auto r = run("");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("Usage"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("stats").code, 1);
  EXPECT_EQ(run("stats --manifest " + path("missing.txt")).code, 1);
  EXPECT_EQ(run("generate --bogus 1 --out " + path("x")).code, 1);
  EXPECT_EQ(run("stats --help").code, 0);
}

TEST_F(Cli, DataErrorsCarryLocation) {
  const auto m = path("bad.txt");
  write_file_atomic(m, "V=2 d=1 N=1\nx;0.5;0,2\n");
  const auto r = run("stats --manifest " + m);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("bad.txt:2"), std::string::npos) << r.out;
}

TEST_F(Cli, StatsReportsImbalanceAndRegions) {
  const auto r = run("stats --manifest " + manifest());
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char *key : {"N=300", "V=162", "imbalance_ratio=", "tip_mean_contact=", "dorsal_mean_contact="})
    EXPECT_NE(r.out.find(key), std::string::npos) << key;
}

TEST_F(Cli, PipelineTrainEvalHeatmap) {
  const auto m = manifest();
  const auto plan = path("plan.csv"), model = path("model.bin"), report = path("report.csv"), heat = path("heat.csv");
  ASSERT_EQ(run("sample --manifest " + m + " --seed 2 --out " + plan).code, 0);
  EXPECT_EQ(parse_plan_csv(read_file(plan)).size(), 300u);
  const auto tr = run("train --manifest " + m + " --plan " + plan + " --steps 200 --seed 2 --out " + model);
  ASSERT_EQ(tr.code, 0) << tr.out;
  const auto head = load_model(model);
  EXPECT_EQ(head.vertex_count, 162u);
  EXPECT_EQ(head.feature_dim, 16u);

  const auto ev = run("eval --model " + model + " --manifest " + m + " --out " + report);
  ASSERT_EQ(ev.code, 0) << ev.out;
  const auto ds = load_manifest(m);
  const std::string csv = read_file(report);
  EXPECT_NE(csv.find("skipped," + std::to_string(ds.empty_sample_count())), std::string::npos) << csv;

  ASSERT_EQ(run("export-heatmap --manifest " + m + " --out " + heat).code, 0);
  const auto rows = split(read_file(heat), '\n');
  EXPECT_EQ(rows.front(), "vertex_index,mean_contact");
  EXPECT_EQ(std::count_if(rows.begin() + 1, rows.end(), [](const std::string &s) { return !s.empty(); }), 162);
  ASSERT_EQ(run("export-heatmap --manifest " + m + " --model " + model + " --out " + heat).code, 0);
}

TEST_F(Cli, HeatmapTipExceedsDorsal) {
  const auto m = manifest(1000), heat = path("heat.csv");
  ASSERT_EQ(run("export-heatmap --manifest " + m + " --out " + heat).code, 0);
  std::vector<double> mean;
  const auto rows = split(read_file(heat), '\n');
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].empty())
      continue;
    double v = 0;
    ASSERT_TRUE(parse_double(split(rows[i], ',')[1], v));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    mean.push_back(v);
  }
  const auto pm = make_proxy_mesh(2);
  double tip = 0, dorsal = 0;
  for (std::size_t v : pm.tip)
    tip += mean[v];
  for (std::size_t v : pm.dorsal)
    dorsal += mean[v];
  EXPECT_GT(tip, dorsal);
}

TEST_F(Cli, AllZeroHeatmap) {
  const auto m = path("zero.txt"), heat = path("heat.csv");
  write_file_atomic(m, "V=3 d=1 N=2\na;0.1;0,0,0\nb;0.2;0,0,0\n");
  ASSERT_EQ(run("export-heatmap --manifest " + m + " --out " + heat).code, 0);
  EXPECT_EQ(read_file(heat), "vertex_index,mean_contact\n0,0\n1,0\n2,0\n");
}

TEST_F(Cli, LabelFromObj) {
  const auto hand = path("hand.obj"), floor = path("floor.obj"), out = path("labels.csv");
  const auto pm = make_proxy_mesh(1);
  std::vector<Vec3> verts;
  for (const auto &p : pm.topology.vertices())
    verts.push_back(0.05 * p + Vec3{0, 0, 0.055});
  write_file_atomic(hand, format_obj(build_topology(verts, pm.topology.triangles())));
  write_file_atomic(floor, "v -1 -1 0\nv 1 -1 0\nv 1 1 0\nv -1 1 0\nf 1 2 3\nf 1 3 4\n");
  const auto r = run("label --hand " + hand + " --other " + floor + " --out " + out);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto text = read_file(out);
  EXPECT_EQ(text.rfind("vertex_index,contact\n", 0), 0u);
  EXPECT_NE(text.find(",1\n"), std::string::npos);
  EXPECT_EQ(run("label --hand " + hand + " --other " + floor + " --profile fine --threshold 0.1 --out " + out).code,
            1);
}

TEST_F(Cli, AblateIsByteIdentical) {
  const auto m = manifest(300), a = path("a.csv"), b = path("b.csv");
  ASSERT_EQ(run("ablate --manifest " + m + " --steps 150 --seed 4 --out " + a).code, 0);
  ASSERT_EQ(run("ablate --manifest " + m + " --steps 150 --seed 4 --out " + b).code, 0);
  const auto first = read_file(a);
  EXPECT_EQ(first, read_file(b));
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 10);
}

TEST_F(Cli, CompareLosses) {
  const auto m = manifest(300), out = path("cmp.csv");
  const auto r = run("compare-losses --manifest " + m + " --steps 100 --losses bce,vcb --out " + out);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto text = read_file(out);
  EXPECT_NE(text.find("\nbce,on,bce,learned,"), std::string::npos);
  EXPECT_NE(text.find("\nvcb,on,vcb,learned,"), std::string::npos);
  EXPECT_EQ(run("compare-losses --manifest " + m + " --losses dice --out " + out).code, 1);
}

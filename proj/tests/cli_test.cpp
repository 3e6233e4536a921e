#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cli_support.hpp"
#include "sparklet/glm.hpp"
#include "sparklet/persistence.hpp"

namespace {

const std::string kCli = SPARKLET_CLI_PATH;

std::string path(const std::string& file) { return (cli::scratch("test") / file).string(); }

nlohmann::json reportOf(const cli::Result& r) {
  EXPECT_EQ(r.exitCode, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(cli::reportSchemaError(j), "");
  return j;
}

}  // namespace

TEST(Gen, DeterministicFiles) {
  ASSERT_EQ(cli::run(kCli, "gen linear --n 100 --d 5 --seed 7 --out " + path("a.svm")).exitCode, 0);
  ASSERT_EQ(cli::run(kCli, "gen linear --n 100 --d 5 --seed 7 --out " + path("b.svm")).exitCode, 0);
  const auto a = cli::slurp(path("a.svm"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, cli::slurp(path("b.svm")));
  ASSERT_EQ(cli::run(kCli, "gen linear --n 100 --d 5 --seed 8 --out " + path("c.svm")).exitCode, 0);
  EXPECT_NE(a, cli::slurp(path("c.svm")));
}

TEST(Gen, RatingCountNearExpectation) {
  const auto r = cli::run(kCli, "gen als --users 100 --items 80 --rank 5 --density 0.3 --out " + path("r.csv"));
  const auto report = reportOf(r);
  const auto text = cli::slurp(path("r.csv"));
  const auto lines = static_cast<double>(std::count(text.begin(), text.end(), '\n'));
  const double mean = 100 * 80 * 0.3;
  const double sigma = std::sqrt(100 * 80 * 0.3 * 0.7);
  EXPECT_LE(std::abs(lines - mean), 5 * sigma) << lines;
  EXPECT_EQ(report["metrics"]["rows"].get<double>(), lines);
}

TEST(Gen, UsageAndParamErrors) {
  auto r = cli::run(kCli, "gen linear --n 10");
  EXPECT_EQ(r.exitCode, 2);
  EXPECT_NE(r.err.find("--out"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(cli::run(kCli, "gen linear --n 0 --out " + path("z.svm")).exitCode, 1);
  EXPECT_EQ(cli::run(kCli, "gen nonsense --out " + path("z.svm")).exitCode, 1);
  EXPECT_EQ(cli::run(kCli, "").exitCode, 2);
  EXPECT_EQ(cli::run(kCli, "frobnicate").exitCode, 2);
}

TEST(Train, UnknownAlgoIsUsageError) {
  const auto r = cli::run(kCli, "train boosting --in x --model-out y");
  EXPECT_EQ(r.exitCode, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Train, RuntimeErrorsExitOne) {
  EXPECT_EQ(cli::run(kCli, "train linear --in " + path("missing.svm") + " --model-out " + path("m.json")).exitCode, 1);
  std::ofstream(path("broken.svm")) << "1 1:2\n0 x:y\n";
  const auto r = cli::run(kCli, "train linear --in " + path("broken.svm") + " --model-out " + path("m.json"));
  EXPECT_EQ(r.exitCode, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST(Train, PartitionCountDoesNotChangeWeights) {
  ASSERT_EQ(cli::run(kCli, "gen linear --n 300 --d 4 --seed 9 --out " + path("p.svm")).exitCode, 0);
  reportOf(cli::run(kCli, "train linear --in " + path("p.svm") + " --model-out " + path("p1.json") + " --partitions 1"));
  reportOf(cli::run(kCli, "train linear --in " + path("p.svm") + " --model-out " + path("p8.json") + " --partitions 8"));
  const auto a = sparklet::glmFromArtifact(sparklet::loadArtifact(path("p1.json")));
  const auto b = sparklet::glmFromArtifact(sparklet::loadArtifact(path("p8.json")));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(a.weights[j], b.weights[j], 1e-9);
  EXPECT_NEAR(a.intercept, b.intercept, 1e-9);
}

TEST(Train, SeparableLogisticAccuracy) {
  // Label is the side of a fixed hyperplane, so the data are separable.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  std::vector<sparklet::LabeledPoint> pts;
  for (int i = 0; i < 1000; ++i) {
    sparklet::DenseVector x{g(rng), g(rng), g(rng), g(rng), g(rng)};
    const double m = 1.5 * x[0] - 2.0 * x[1] + 0.5 * x[3];
    if (std::abs(m) < 0.05) continue;
    pts.push_back({m > 0 ? 1.0 : 0.0, std::move(x)});
  }
  sparklet::writeLibsvmFile(path("sep.svm"), pts);
  const auto train = reportOf(cli::run(
      kCli, "train logistic --in " + path("sep.svm") + " --model-out " + path("sep.json") + " --step 10 --iters 100"));
  EXPECT_GE(train["metrics"]["accuracy"].get<double>(), 0.99);
  const auto eval = reportOf(cli::run(kCli, "evaluate --model " + path("sep.json") + " --in " + path("sep.svm")));
  EXPECT_EQ(eval["metrics"]["accuracy"], train["metrics"]["accuracy"]);
  EXPECT_EQ(eval["config"]["modelType"], "logistic");
}

TEST(Train, ReportEchoesConfigAndLedger) {
  ASSERT_EQ(cli::run(kCli, "gen logistic --n 200 --d 3 --seed 1 --out " + path("e.svm")).exitCode, 0);
  const auto r = reportOf(cli::run(kCli, "train logistic --in " + path("e.svm") + " --model-out " + path("e.json") +
                                             " --partitions 9 --agg-depth 3 --iters 7"));
  EXPECT_EQ(r["command"], "train");
  EXPECT_EQ(r["config"]["partitions"], 9);
  EXPECT_EQ(r["config"]["aggDepth"], 3);
  EXPECT_EQ(r["config"]["iters"], 7);
  EXPECT_GT(r["ledger"]["driverInBytes"].get<std::uint64_t>(), 0u);
  // Depth 3 over 9 partitions: fan-in ceil(9^(1/3)) = 3 (engine grouping rule).
  EXPECT_LE(r["ledger"]["maxDriverInDegree"].get<std::uint64_t>(), 3u);
}

TEST(EndToEnd, EveryAlgorithm) {
  for (const auto& c : cli::algoCases()) {
    const auto data = path(c.dataFile);
    const auto model = path(c.algo + ".json");
    ASSERT_EQ(cli::run(kCli, "gen " + c.genArgs + " --out " + data).exitCode, 0) << c.algo;
    const auto train = reportOf(cli::run(kCli, "train " + c.algo + " --in " + data + " --model-out " + model + " " +
                                                   c.trainArgs));
    EXPECT_FALSE(train["metrics"].empty()) << c.algo;
    const auto eval = reportOf(cli::run(kCli, "evaluate --model " + model + " --in " + data));
    EXPECT_EQ(eval["metrics"], train["metrics"]) << c.algo;
  }
}

TEST(BenchAls, CsvShapeAndMonotoneLedger) {
  const auto r = cli::run(kCli, "bench-als --scales 1,2,4 --iters 5 --rank 5 --seed 3");
  ASSERT_EQ(r.exitCode, 0) << r.err;
  std::string error;
  const auto rows = cli::parseBenchCsv(r.out, &error);
  ASSERT_EQ(error, "");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].scale, 1);
  EXPECT_EQ(rows[2].scale, 4);
  EXPECT_LT(rows[0].ledgerBytes, rows[1].ledgerBytes);
  EXPECT_LT(rows[1].ledgerBytes, rows[2].ledgerBytes);
}

TEST(BenchAls, BlockedRoutingShipsLess) {
  const auto blocked = cli::run(kCli, "bench-als --scales 2 --iters 2 --seed 1");
  const auto naive = cli::run(kCli, "bench-als --scales 2 --iters 2 --seed 1 --naive-routing");
  std::string e1, e2;
  const auto b = cli::parseBenchCsv(blocked.out, &e1);
  const auto n = cli::parseBenchCsv(naive.out, &e2);
  ASSERT_EQ(b.size(), 1u) << e1;
  ASSERT_EQ(n.size(), 1u) << e2;
  EXPECT_LE(b[0].ledgerBytes, n[0].ledgerBytes);
}

TEST(BenchAls, BadScalesAreUsageErrors) {
  EXPECT_EQ(cli::run(kCli, "bench-als --scales 1,0").exitCode, 2);
  EXPECT_EQ(cli::run(kCli, "bench-als --scales one").exitCode, 2);
  const auto r = cli::run(kCli, "bench-als --scales 1 --iters 1 --out " + path("bench.csv"));
  EXPECT_EQ(r.exitCode, 0);
  EXPECT_TRUE(r.out.empty());
  std::string error;
  EXPECT_EQ(cli::parseBenchCsv(cli::slurp(path("bench.csv")), &error).size(), 1u) << error;
}

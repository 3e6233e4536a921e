// Acceptance gate: one check per criterion, each against an independent
// oracle and a wall-clock bound. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../als_reference.hpp"
#include "../cli_support.hpp"
#include "../model_zoo.hpp"
#include "../tree_oracle.hpp"
#include "sparklet/persistence.hpp"

using namespace sparklet;

namespace {

const std::string kCli = SPARKLET_CLI_PATH;

/// Collects failures; keeps the first few messages for the report line.
class Check {
 public:
  void expect(bool condition, const std::string& what) {
    ++total_;
    if (condition) return;
    ++failed_;
    if (messages_.size() < 3) messages_.push_back(what);
  }
  bool ok() const { return failed_ == 0; }
  std::size_t total() const { return total_; }
  std::string summary() const {
    std::string s = std::to_string(failed_) + "/" + std::to_string(total_) + " checks failed";
    for (const auto& m : messages_) s += "; " + m;
    return s;
  }

 private:
  std::size_t total_ = 0;
  std::size_t failed_ = 0;
  std::vector<std::string> messages_;
};

template <class... Parts>
std::string str(const Parts&... parts) {
  std::ostringstream o;
  o.precision(17);
  (o << ... << parts);
  return o.str();
}

// 1. Aggregation --------------------------------------------------------------

std::size_t fanInBound(std::size_t p, int depth) {
  // max(2, ceil(P^(1/depth))) computed exactly with integers.
  std::size_t s = 1;
  auto pow = [&](std::size_t b) {
    std::size_t r = 1;
    for (int i = 0; i < depth; ++i) r *= b;
    return r;
  };
  while (pow(s) < p) ++s;
  return std::max<std::size_t>(2, s);
}

void aggregation(Check& c) {
  std::mt19937_64 rng(1);
  std::vector<long> data(5000);
  for (auto& v : data) v = static_cast<long>(rng() % 2000001) - 1000000;
  long expectSum = 0;
  long expectMax = data.front();
  for (long v : data) {
    expectSum += v;
    expectMax = std::max(expectMax, v);
  }
  for (std::size_t p : {1u, 2u, 3u, 8u, 13u, 64u}) {
    for (int depth = 1; depth <= 4; ++depth) {
      Context ctx;
      auto ds = ctx.parallelize(data, p);
      const long sum = ds.treeAggregate(0L, [](long a, long x) { return a + x; }, [](long a, long b) { return a + b; },
                                        depth);
      const auto sumDegree = ctx.ledger().snapshot().maxDriverInDegree;
      ctx.ledger().reset();
      const long mx = ds.treeAggregate(
          std::numeric_limits<long>::min(), [](long a, long x) { return std::max(a, x); },
          [](long a, long b) { return std::max(a, b); }, depth);
      const auto maxDegree = ctx.ledger().snapshot().maxDriverInDegree;
      c.expect(sum == expectSum, str("sum P=", p, " depth=", depth));
      c.expect(mx == expectMax, str("max P=", p, " depth=", depth));
      c.expect(sumDegree <= fanInBound(p, depth) && maxDegree <= fanInBound(p, depth),
               str("fan-in P=", p, " depth=", depth, " got ", sumDegree));
    }
  }
}

// 2. GLM gradients -------------------------------------------------------------

double referenceLoss(GLMKind kind, const std::vector<double>& theta, const std::vector<double>& x, double y) {
  double z = theta.back();
  for (std::size_t i = 0; i < x.size(); ++i) z += theta[i] * x[i];
  if (kind == GLMKind::Linear) return 0.5 * (z - y) * (z - y);
  return std::log1p(std::exp(z)) - y * z;
}

void glmGradients(Check& c) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (GLMKind kind : {GLMKind::Linear, GLMKind::Logistic}) {
    for (int draw = 0; draw < 100; ++draw) {
      const std::size_t d = 1 + static_cast<std::size_t>(draw % 8);
      std::vector<double> theta(d + 1), x(d);
      for (auto& v : theta) v = g(rng);
      for (auto& v : x) v = g(rng);
      const double y = kind == GLMKind::Linear ? g(rng) : static_cast<double>(rng() % 2);
      const auto lg = lossGradient(kind, std::span<const double>(theta).first(d), theta[d], {y, DenseVector(x)});
      const double h = 1e-6;
      for (std::size_t i = 0; i <= d; ++i) {
        auto plus = theta, minus = theta;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (referenceLoss(kind, plus, x, y) - referenceLoss(kind, minus, x, y)) / (2 * h);
        const double analytic = i < d ? lg.gradWeights[i] : lg.gradIntercept;
        c.expect(std::abs(analytic - fd) <= 1e-5 * std::max(1.0, std::abs(fd)), str("gradient draw ", draw, " i ", i));
      }
    }
  }
  SyntheticParams p;
  p.n = 600;
  p.d = 5;
  for (GLMKind kind : {GLMKind::Linear, GLMKind::Logistic}) {
    const auto pts = genSynthetic(kind == GLMKind::Linear ? SyntheticKind::Linear : SyntheticKind::Logistic, p, 3).points;
    GDConfig cfg;
    cfg.numIters = 40;
    cfg.stepSize = 0.5;
    std::optional<GLMModel> ref;
    for (std::size_t parts : {1u, 4u, 16u}) {
      for (int depth : {1, 2, 3}) {
        Context ctx;
        cfg.aggregationDepth = depth;
        const auto m = trainGLM(ctx.parallelize(pts, parts), kind, cfg);
        if (!ref) ref = m;
        for (std::size_t j = 0; j < p.d; ++j)
          c.expect(std::abs(m.weights[j] - ref->weights[j]) <= 1e-9, str("weights P=", parts, " depth=", depth));
        c.expect(std::abs(m.intercept - ref->intercept) <= 1e-9, str("intercept P=", parts, " depth=", depth));
      }
    }
  }
}

// 3. ALS -----------------------------------------------------------------------

std::vector<Rating> randomRatings(std::uint64_t seed, std::size_t count, std::int64_t users, std::int64_t items) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(3.0, 1.0);
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  std::vector<Rating> out;
  while (out.size() < count) {
    const auto u = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(users));
    const auto i = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(items));
    if (seen.insert({u, i}).second) out.push_back({u, i, g(rng)});
  }
  return out;
}

double maxFactorDiff(const FactorTable& t, const reference::Factors& ref) {
  if (t.size() != ref.size()) return INFINITY;
  double worst = 0.0;
  for (const auto& [id, v] : ref) {
    const auto f = t.factor(id);
    for (std::size_t j = 0; j < f.size(); ++j) worst = std::max(worst, std::abs(f[j] - v[static_cast<Eigen::Index>(j)]));
  }
  return worst;
}

double alsObjective(const std::vector<Rating>& ratings, const ALSModel& m, double lambda) {
  std::map<std::int64_t, double> nu, ni;
  double loss = 0.0;
  for (const auto& r : ratings) {
    const double e = r.value - m.predict(r.user, r.item);
    loss += e * e;
    nu[r.user] += 1;
    ni[r.item] += 1;
  }
  for (const auto& [u, n] : nu) loss += lambda * n * dot(m.users.factor(u), m.users.factor(u));
  for (const auto& [i, n] : ni) loss += lambda * n * dot(m.items.factor(i), m.items.factor(i));
  return loss;
}

void als(Check& c) {
  {  // (a) blocked 4x4 vs unblocked reference
    const auto ratings = randomRatings(3, 200, 30, 25);
    Context ctx;
    ALSConfig cfg;
    cfg.rank = 4;
    cfg.numIters = 5;
    cfg.regParam = 0.1;
    cfg.seed = 8;
    cfg.numUserBlocks = 4;
    cfg.numItemBlocks = 4;
    const auto model = trainALS(ctx.parallelize(ratings, 4), cfg);
    const auto ref = reference::train(ratings, {4, 5, 0.1, false, 1.0, 8});
    const double du = maxFactorDiff(model.users, ref.users);
    const double di = maxFactorDiff(model.items, ref.items);
    c.expect(du <= 1e-6 && di <= 1e-6, str("(a) blocked vs reference diff ", std::max(du, di)));
  }
  {  // (b) objective non-increasing every half-step
    const auto ratings = randomRatings(7, 400, 40, 30);
    Context ctx;
    ALSConfig cfg;
    cfg.rank = 5;
    cfg.numIters = 5;
    cfg.regParam = 0.05;
    cfg.numUserBlocks = 3;
    cfg.numItemBlocks = 4;
    std::vector<double> trace;
    trainALS(ctx.parallelize(ratings, 4), cfg, [&](const ALSHalfStep& s) {
      trace.push_back(alsObjective(ratings, ALSModel{s.users, s.items}, cfg.regParam));
    });
    c.expect(trace.size() == 10, "(b) expected 10 half-steps");
    for (std::size_t i = 1; i < trace.size(); ++i)
      c.expect(trace[i] <= trace[i - 1] * (1 + 1e-12), str("(b) objective rose at half-step ", i));
  }
  {  // (c) low-rank recovery
    SyntheticParams p;
    p.users = 100;
    p.items = 80;
    p.rank = 5;
    p.density = 0.3;
    p.noise = 0.0;
    const auto ratings = genSynthetic(SyntheticKind::AlsRatings, p, 21).ratings;
    Context ctx;
    ALSConfig cfg;
    cfg.rank = 5;
    cfg.numIters = 5;
    cfg.regParam = 0.01;
    cfg.numUserBlocks = 4;
    cfg.numItemBlocks = 4;
    const auto model = trainALS(ctx.parallelize(ratings, 4), cfg);
    double se = 0.0;
    for (const auto& r : ratings) se += std::pow(r.value - model.predict(r.user, r.item), 2);
    const double rmse = std::sqrt(se / static_cast<double>(ratings.size()));
    c.expect(rmse <= 0.1, str("(c) rmse ", rmse));
  }
  {  // (d) blocked routing ships strictly fewer bytes on a multi-rating dataset
    std::vector<Rating> ratings;
    for (std::int64_t u = 0; u < 12; ++u)
      for (std::int64_t i = 0; i < 16; ++i)
        if ((u + i) % 3 != 0) ratings.push_back({u, i, static_cast<double>((u * i) % 5 + 1)});
    std::uint64_t bytes[2] = {0, 0};
    for (bool naive : {false, true}) {
      Context ctx;
      ALSConfig cfg;
      cfg.rank = 3;
      cfg.numIters = 2;
      cfg.numUserBlocks = 2;
      cfg.numItemBlocks = 2;
      cfg.naiveRouting = naive;
      trainALS(ctx.parallelize(ratings, 2), cfg);
      bytes[naive ? 1 : 0] = ctx.ledger().snapshot().totalBytes();
    }
    c.expect(bytes[0] < bytes[1], str("(d) blocked ", bytes[0], " naive ", bytes[1]));
  }
}

// 4. Trees ---------------------------------------------------------------------

void trees(Check& c) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Impurity imp = seed % 2 == 0 ? Impurity::Gini : Impurity::Entropy;
    const std::size_t classes = 2 + seed % 2;
    const std::size_t n = 60 + 7 * seed;  // at most 193
    const auto pts = oracle::randomClassification(seed, n, 3, classes, 4 + static_cast<int>(seed % 6));
    Context ctx;
    auto ds = ctx.parallelize(pts, 1 + seed % 7);
    ForestConfig cfg;
    cfg.impurity = imp;
    cfg.numClasses = classes;
    cfg.maxDepth = 4;
    cfg.maxBins = 32;  // >= distinct values per feature (at most 9)
    const auto tree = trainTree(ds, findSplitBins(ds, cfg.maxBins), cfg);
    const auto expected = oracle::Cart(pts, 3, {imp, classes, cfg.maxDepth, 0.0}).grow();
    const auto diff = oracle::compare(tree, expected, 1e-12);
    c.expect(diff.empty(), str("seed ", seed, ": ", diff));
  }
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<LabeledPoint> pts;
  for (int i = 0; i < 400; ++i) {
    const double a = u(rng), b = u(rng), d = u(rng);
    pts.push_back({(a > 0) != (b > 0) ? 1.0 : 0.0, DenseVector{a, b, d}});
  }
  std::optional<std::size_t> passes;
  for (std::size_t numTrees : {1u, 3u, 10u, 25u}) {
    Context ctx;
    auto ds = ctx.parallelize(pts, 4);
    ForestConfig cfg;
    cfg.numTrees = numTrees;
    cfg.maxDepth = 4;
    cfg.bootstrap = numTrees > 1;
    cfg.featureSubsetFraction = numTrees > 1 ? 0.67 : 1.0;
    cfg.seed = 5;
    const auto bins = findSplitBins(ds, 32);
    const auto before = ctx.ledger().snapshot().aggregations;
    ForestTrainingStats stats;
    trainForest(ds, bins, cfg, &stats);
    const auto measured = ctx.ledger().snapshot().aggregations - before;
    if (!passes) passes = measured;
    c.expect(measured == *passes, str("numTrees ", numTrees, " used ", measured, " passes, 1 tree used ", *passes));
  }
}

// 5. k-means -------------------------------------------------------------------

void kmeans(Check& c) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    const std::size_t d = 2 + seed % 3;
    std::vector<Vector> pts;
    for (int i = 0; i < 300; ++i) {
      DenseVector x(d);
      for (auto& v : x) v = g(rng) + (i % 4 == 0 ? 3.0 : 0.0);
      pts.emplace_back(std::move(x));
    }
    Context ctx;
    KMeansConfig cfg;
    cfg.k = 2 + seed % 6;
    cfg.maxIters = 15;
    cfg.tol = 0.0;
    cfg.seed = seed;
    KMeansHistory hist;
    trainKMeans(ctx.parallelize(pts, 1 + seed % 5), cfg, &hist);
    for (std::size_t t = 1; t < hist.costs.size(); ++t)
      c.expect(hist.costs[t] <= hist.costs[t - 1] + 1e-9, str("seed ", seed, " cost rose at iteration ", t));
  }
  {
    std::vector<Vector> pts{DenseVector{0.1, 5.0}, DenseVector{-3.0, 2.5}, DenseVector{7.0, 7.0}, DenseVector{1e-3, 0.0},
                            DenseVector{4.0, -4.0}};
    Context ctx;
    const auto m = trainKMeans(ctx.parallelize(pts, 2), pts.size(), 10, 1e-9, 3);
    c.expect(m.cost == 0.0, str("n=k cost ", m.cost));
  }
  {
    SyntheticParams p;
    p.n = 900;
    p.d = 2;
    p.k = 3;
    p.separation = 100.0;
    p.spread = 1.0;
    const auto data = genSynthetic(SyntheticKind::KMeansBlobs, p, 4);
    std::vector<Vector> pts;
    std::vector<DenseVector> means(3, DenseVector(2));
    std::vector<double> counts(3, 0.0);
    for (const auto& lp : data.points) {
      pts.push_back(lp.features);
      const auto k = static_cast<std::size_t>(lp.label);
      axpy(1.0, lp.features, means[k].span());
      counts[k] += 1;
    }
    Context ctx;
    const auto m = trainKMeans(ctx.parallelize(pts, 4), 3, 20, 1e-6, 7);
    for (std::size_t k = 0; k < 3; ++k) {
      scal(1.0 / counts[k], means[k].span());
      double best = INFINITY;
      for (const auto& center : m.centers) best = std::min(best, std::sqrt(squaredDistance(center.span(), means[k].span())));
      c.expect(best <= 0.1, str("blob ", k, " nearest center at ", best));
    }
  }
}

// 6. PCA -----------------------------------------------------------------------

void pca(Check& c) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    const std::size_t d = 2 + seed % 6;
    const std::size_t n = d + 5 + seed % 20;
    std::vector<Vector> rows;
    Eigen::MatrixXd x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      DenseVector r(d);
      for (std::size_t j = 0; j < d; ++j) {
        r[j] = g(rng) * (1.0 + 1.5 * static_cast<double>(j)) + 0.3 * static_cast<double>(j);
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
      }
      rows.emplace_back(std::move(r));
    }
    Context ctx;
    const auto m = fitPCA(ctx.parallelize(rows, 1 + seed % 4), d);
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    double worst = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const auto col = static_cast<Eigen::Index>(d - 1 - k);
      Eigen::VectorXd v = es.eigenvectors().col(col);
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v[arg] < 0) v = -v;
      worst = std::max(worst, std::abs(m.explainedVariance[k] - es.eigenvalues()[col]) /
                                  std::max(1.0, std::abs(es.eigenvalues()[col])));
      for (std::size_t i = 0; i < d; ++i)
        worst = std::max(worst, std::abs(m.components(i, k) - v[static_cast<Eigen::Index>(i)]));
    }
    c.expect(worst <= 1e-8, str("seed ", seed, " max deviation ", worst));
    double recon = 0.0;
    for (const auto& r : rows) {
      const auto back = m.reconstruct(m.project(r).span());
      recon = std::max(recon, std::sqrt(squaredDistance(back.span(), r.toDense().span())));
    }
    c.expect(recon <= 1e-6, str("seed ", seed, " reconstruction error ", recon));
  }
}

// 7. Naive Bayes ---------------------------------------------------------------

std::vector<LabeledPoint> randomCorpus(std::uint64_t seed, std::size_t n, std::size_t d, int classes) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledPoint> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
    for (std::uint32_t j = 0; j < d; ++j) {
      if (rng() % 2 == 0) {
        idx.push_back(j);
        val.push_back(static_cast<double>(1 + rng() % 5));
      }
    }
    out.push_back({static_cast<double>(rng() % static_cast<std::uint64_t>(classes)), SparseVector(d, idx, val)});
  }
  return out;
}

void naiveBayes(Check& c) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t d = 3 + seed % 5;
    const auto pts = randomCorpus(seed, 30 + seed, d, 3);
    const double lambda = seed % 2 == 0 ? 1.0 : 0.5;
    Context ctx;
    const auto m = trainNaiveBayes(ctx.parallelize(pts, 1 + seed % 6), lambda);
    std::map<double, double> counts;
    std::map<double, std::vector<double>> sums;
    for (const auto& p : pts) {
      counts[p.label] += 1;
      auto& s = sums[p.label];
      s.resize(d, 0.0);
      for (std::size_t j = 0; j < d; ++j) s[j] += p.features.get(j);
    }
    c.expect(m.labels.size() == counts.size(), str("seed ", seed, " label count"));
    std::size_t k = 0;
    for (const auto& [label, count] : counts) {
      if (k >= m.labels.size()) break;
      c.expect(m.labels[k] == label, str("seed ", seed, " label order"));
      c.expect(std::abs(m.logPriors[k] - std::log(count / static_cast<double>(pts.size()))) <= 1e-12,
               str("seed ", seed, " prior"));
      double total = 0.0;
      for (double v : sums[label]) total += v;
      for (std::size_t j = 0; j < d; ++j) {
        const double want = std::log((sums[label][j] + lambda) / (total + lambda * static_cast<double>(d)));
        c.expect(std::abs(m.logCondProb[k][j] - want) <= 1e-12, str("seed ", seed, " conditional ", k, ",", j));
      }
      ++k;
    }
    // Duplication invariance: every count doubles, every ratio is unchanged.
    auto doubled = pts;
    doubled.insert(doubled.end(), pts.begin(), pts.end());
    const auto a = trainNaiveBayes(ctx.parallelize(pts, 3), 0.0);
    const auto b = trainNaiveBayes(ctx.parallelize(doubled, 3), 0.0);
    c.expect(a.logPriors == b.logPriors && a.logCondProb == b.logCondProb, str("seed ", seed, " duplication"));
  }
}

// 8. Pipeline ------------------------------------------------------------------

void pipeline(Check& c) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<LabeledPoint> pts;
  for (int i = 0; i < 300; ++i) {
    DenseVector x{g(rng) + 3.0, g(rng), 10.0 * g(rng), g(rng)};
    pts.push_back({x[0] - 3.0 + x[1] > 0.5 ? 1.0 : 0.0, std::move(x)});
  }
  const auto table = tableFromPoints(pts);
  const auto scaler = std::make_shared<StandardScaler>("std", "features", "scaled");
  const auto pcaStage = std::make_shared<PCAEstimator>("pca", "scaled", "pcs", 3);
  const auto logit = std::make_shared<GLMEstimator>("glm", GLMKind::Logistic, PredictorColumns{"pcs", "label", "p"});
  Context ctx;
  const auto viaPipeline = fitPipeline(ctx, {scaler, pcaStage, logit}, table).transform(table);
  const auto s1 = scaler->fit(ctx, table, Params::resolve("std", scaler->paramSpecs(), {}));
  const auto t1 = s1->transform(table);
  const auto s2 = pcaStage->fit(ctx, t1, Params::resolve("pca", pcaStage->paramSpecs(), {}));
  const auto t2 = s2->transform(t1);
  const auto s3 = logit->fit(ctx, t2, Params::resolve("glm", logit->paramSpecs(), {}));
  c.expect(viaPipeline == s3->transform(t2), "pipeline output differs from manual chaining");

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticParams p;
    p.n = 300;
    p.d = 3;
    const auto data = tableFromPoints(genSynthetic(SyntheticKind::Linear, p, seed).points);
    GDConfig gd;
    gd.stepSize = 1.9e-3;  // keeps lambda = 1e3 stable, so both cells are finite
    gd.numIters = 200;
    CrossValidatorConfig cfg;
    cfg.stages = {std::make_shared<GLMEstimator>("glm", GLMKind::Linear, PredictorColumns{}, gd)};
    cfg.paramGrid = {ParamMap().set("glm", "regParam", 0.0), ParamMap().set("glm", "regParam", 1e3)};
    cfg.seed = seed;
    const auto r = crossValidate(ctx, cfg, data);
    c.expect(r.bestIndex == 0 && r.metrics[0] < r.metrics[1],
             str("seed ", seed, " picked cell ", r.bestIndex, " metrics ", r.metrics[0], " ", r.metrics[1]));
  }
}

// 9. Persistence ---------------------------------------------------------------

void persistence(Check& c) {
  Context ctx;
  const auto models = zoo::trainAll(ctx);
  std::set<std::size_t> kinds;
  const auto dir = cli::scratch("acceptance");
  for (const auto& [name, model] : models) {
    kinds.insert(model.index());
    const auto path = (dir / (name + ".json")).string();
    std::visit([&](const auto& m) { saveModel(m, path); }, model);
    const auto before = zoo::probe(model, 99);
    const auto after = zoo::probe(loadAnyModel(path), 99);
    c.expect(before.size() >= 100 && zoo::bitIdentical(before, after), name + " predictions changed after reload");
  }
  c.expect(kinds.size() == std::variant_size_v<AnyModel>, "not every model type was exercised");
}

// 10. CLI ----------------------------------------------------------------------

void endToEnd(Check& c) {
  const auto dir = cli::scratch("acceptance_cli");
  for (const auto& a : cli::algoCases()) {
    const auto data = (dir / a.dataFile).string();
    const auto model = (dir / (a.algo + ".json")).string();
    const auto gen = cli::run(kCli, "gen " + a.genArgs + " --out " + data);
    c.expect(gen.exitCode == 0, a.algo + ": gen exit " + std::to_string(gen.exitCode));
    for (const auto& args : {"train " + a.algo + " --in " + data + " --model-out " + model + " " + a.trainArgs,
                             "evaluate --model " + model + " --in " + data}) {
      const auto r = cli::run(kCli, args);
      c.expect(r.exitCode == 0, a.algo + ": exit " + std::to_string(r.exitCode) + " for '" + args + "': " + r.err);
      if (r.exitCode != 0) continue;
      std::string schema;
      try {
        schema = cli::reportSchemaError(nlohmann::json::parse(r.out));
      } catch (const std::exception& e) {
        schema = e.what();
      }
      c.expect(schema.empty(), a.algo + ": report " + schema);
    }
  }
  const auto bench = cli::run(kCli, "bench-als --scales 1,2,4 --iters 5 --rank 5 --seed 1");
  c.expect(bench.exitCode == 0, "bench-als exit " + std::to_string(bench.exitCode));
  std::string error;
  const auto rows = cli::parseBenchCsv(bench.out, &error);
  c.expect(error.empty() && rows.size() == 3, "bench-als csv: " + error);
  for (std::size_t i = 1; i < rows.size(); ++i)
    c.expect(rows[i].ledgerBytes > rows[i - 1].ledgerBytes, str("ledgerBytes not increasing at row ", i));
}

struct Criterion {
  int id;
  const char* name;
  double budgetSeconds;
  std::function<void(Check&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "aggregation equivalence", 5, aggregation},  {2, "GLM gradients and invariance", 10, glmGradients},
      {3, "ALS correctness", 30, als},                  {4, "trees vs CART oracle", 60, trees},
      {5, "k-means", 20, kmeans},                      {6, "PCA vs eigendecomposition", 10, pca},
      {7, "naive Bayes", 5, naiveBayes},               {8, "pipeline", 30, pipeline},
      {9, "persistence", 10, persistence},             {10, "end-to-end CLI", 60, endToEnd},
  };
  int failures = 0;
  for (const auto& cr : criteria) {
    Check check;
    std::string error;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.run(check);
    } catch (const std::exception& e) {
      error = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool inTime = secs < cr.budgetSeconds;
    const bool pass = error.empty() && check.ok() && inTime;
    std::string detail = error.empty() ? check.summary() : error;
    if (!inTime) detail += "; over time budget";
    std::printf("%s criterion %2d: %-30s %7.2fs (limit %3.0fs, %zu checks)%s%s\n", pass ? "PASS" : "FAIL", cr.id,
                cr.name, secs, cr.budgetSeconds, check.total(), pass ? "" : " - ", pass ? "" : detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

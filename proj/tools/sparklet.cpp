/*
Copyright 2026 The Sparklet Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

// sparklet: generate synthetic data, train and evaluate models, and run the
// ALS scaling benchmark. Reports go to stdout as one JSON object; logs go to
// stderr. Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sparklet/persistence.hpp"

namespace {

using namespace sparklet;
using json = nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

const std::vector<std::string> kAlgos{"linear", "logistic", "naive-bayes", "kmeans", "pca", "als", "tree", "forest"};

/// A usage problem found after CLI11 parsing succeeded.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void log(const std::string& msg) { std::cerr << "sparklet: " << msg << '\n'; }

class Stopwatch {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json report(const std::string& command, json config, double wallMs, json metrics, const Context& ctx) {
  return {{"command", command},
          {"config", std::move(config)},
          {"wallMs", wallMs},
          {"metrics", std::move(metrics)},
          {"ledger", ctx.ledger().snapshot().toJson()}};
}

// gen ------------------------------------------------------------------------

struct GenOptions {
  std::string kind;
  SyntheticParams params;
  std::uint64_t seed = 0;
  std::string out;
};

int runGen(const GenOptions& o) {
  const auto kind = syntheticKindFromString(o.kind);
  Stopwatch watch;
  const auto data = genSynthetic(kind, o.params, o.seed);
  std::size_t rows = 0;
  if (kind == SyntheticKind::AlsRatings) {
    writeRatingsCsvFile(o.out, data.ratings);
    rows = data.ratings.size();
  } else {
    writeLibsvmFile(o.out, data.points);
    rows = data.points.size();
  }
  log("wrote " + std::to_string(rows) + " rows to " + o.out);
  const auto& p = o.params;
  json config{{"kind", toString(kind)}, {"seed", o.seed}, {"out", o.out}, {"n", p.n}, {"d", p.d}, {"k", p.k},
              {"noise", p.noise}, {"separation", p.separation}, {"spread", p.spread}, {"users", p.users},
              {"items", p.items}, {"rank", p.rank}, {"density", p.density}, {"scale", p.userScale},
              {"wordsPerDoc", p.wordsPerDoc}};
  Context ctx;
  std::cout << report("gen", std::move(config), watch.ms(), {{"rows", rows}}, ctx).dump() << '\n';
  return 0;
}

// Metrics shared by train and evaluate ----------------------------------------

double classificationAccuracy(const std::vector<LabeledPoint>& pts, const auto& predict) {
  std::size_t hits = 0;
  for (const auto& p : pts) hits += predict(p.features) == p.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pts.size());
}

double regressionRmse(const std::vector<LabeledPoint>& pts, const auto& predict) {
  double ss = 0.0;
  for (const auto& p : pts) {
    const double e = predict(p.features) - p.label;
    ss += e * e;
  }
  return std::sqrt(ss / static_cast<double>(pts.size()));
}

json ratingMetrics(const ALSModel& m, const std::vector<Rating>& ratings) {
  double ss = 0.0;
  std::size_t seen = 0;
  for (const auto& r : ratings) {
    if (m.users.indexOf(r.user) == std::nullopt || m.items.indexOf(r.item) == std::nullopt) continue;
    const double e = m.predict(r.user, r.item) - r.value;
    ss += e * e;
    ++seen;
  }
  if (seen == 0) throw InvalidArgument("no rating in the input has a known user and item");
  return {{"rmse", std::sqrt(ss / static_cast<double>(seen))}, {"scored", seen}, {"skipped", ratings.size() - seen}};
}

json pointMetrics(const AnyModel& model, Context& ctx, const std::vector<LabeledPoint>& pts) {
  if (pts.empty()) throw EmptyInput("input has no rows");
  return std::visit(
      [&](const auto& m) -> json {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, GLMModel>) {
          if (m.kind == GLMKind::Logistic) {
            return {{"accuracy", classificationAccuracy(pts, [&](const Vector& x) { return m.classify(x); })}};
          }
          return {{"rmse", regressionRmse(pts, [&](const Vector& x) { return m.predict(x); })}};
        } else if constexpr (std::is_same_v<M, NBModel>) {
          return {{"accuracy", classificationAccuracy(pts, [&](const Vector& x) { return m.predict(x); })}};
        } else if constexpr (std::is_same_v<M, KMeansModel>) {
          std::vector<Vector> xs;
          for (const auto& p : pts) xs.push_back(p.features);
          return {{"wsse", kmeansCost(m, ctx.parallelize(std::move(xs)))}};
        } else if constexpr (std::is_same_v<M, PCAModel>) {
          double ss = 0.0;
          for (const auto& p : pts) {
            const auto back = m.reconstruct(m.project(p.features).span());
            ss += squaredDistance(back.span(), p.features.toDense().span());
          }
          double explained = 0.0;
          for (double v : m.explainedVariance) explained += v;
          return {{"reconstructionMse", ss / static_cast<double>(pts.size())}, {"explainedVariance", explained}};
        } else if constexpr (std::is_same_v<M, DecisionTree> || std::is_same_v<M, Forest>) {
          const auto predict = [&](const Vector& x) { return m.predict(x); };
          bool classifier = false;
          if constexpr (std::is_same_v<M, DecisionTree>) {
            classifier = m.isClassifier();
          } else {
            classifier = !m.trees().empty() && m.trees().front().isClassifier();
          }
          if (classifier) return {{"accuracy", classificationAccuracy(pts, predict)}};
          return {{"rmse", regressionRmse(pts, predict)}};
        } else if constexpr (std::is_same_v<M, PipelineModel>) {
          const auto out = m.transform(tableFromPoints(pts));
          const auto labels = out.numeric("label");
          const auto preds = out.numeric("prediction");
          return {{"rmse", rmse(labels, preds)}, {"accuracy", accuracy(labels, preds)}};
        } else {
          throw InvalidArgument("this model type is evaluated on ratings, not LIBSVM rows");
        }
      },
      model);
}

/// Feature count a model expects, when it has a fixed one.
std::optional<std::size_t> modelDimension(const AnyModel& model) {
  return std::visit(
      [](const auto& m) -> std::optional<std::size_t> {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, GLMModel> || std::is_same_v<M, NBModel>) {
          return m.numFeatures();
        } else if constexpr (std::is_same_v<M, KMeansModel> || std::is_same_v<M, PCAModel>) {
          return m.dim();
        } else {
          return std::nullopt;
        }
      },
      model);
}

// train ----------------------------------------------------------------------

struct TrainOptions {
  std::string algo;
  std::string in;
  std::string modelOut;
  std::size_t partitions = 4;
  int aggDepth = 0;
  std::size_t workers = 1;
  std::optional<std::size_t> dim;
  std::uint64_t seed = 0;
  // Algorithm flags; unset ones fall back to each algorithm's default.
  std::optional<int> iters;
  std::optional<double> step;
  std::optional<double> reg;
  double miniBatch = 1.0;
  double tol = -1.0;
  std::size_t k = 2;
  double smoothing = 1.0;
  std::size_t rank = 10;
  double alpha = 1.0;
  bool implicit = false;
  std::size_t userBlocks = 1;
  std::size_t itemBlocks = 1;
  std::size_t trees = 1;
  int maxDepth = 5;
  std::size_t maxBins = 32;
  std::string impurity = "gini";
  std::size_t numClasses = 2;
  double featureSubset = 1.0;
  bool bootstrap = false;
  double minInfoGain = 0.0;
};

json trainConfig(const TrainOptions& o) {
  json j{{"algo", o.algo},   {"in", o.in},          {"modelOut", o.modelOut},
         {"partitions", o.partitions}, {"aggDepth", o.aggDepth}, {"workers", o.workers},
         {"seed", o.seed}};
  if (o.dim) j["dim"] = *o.dim;
  if (o.iters) j["iters"] = *o.iters;
  if (o.step) j["step"] = *o.step;
  if (o.reg) j["reg"] = *o.reg;
  if (o.algo == "linear" || o.algo == "logistic") {
    j["miniBatch"] = o.miniBatch;
  } else if (o.algo == "naive-bayes") {
    j["smoothing"] = o.smoothing;
  } else if (o.algo == "kmeans" || o.algo == "pca") {
    j["k"] = o.k;
  } else if (o.algo == "als") {
    j.update({{"rank", o.rank}, {"alpha", o.alpha}, {"implicit", o.implicit}, {"userBlocks", o.userBlocks},
              {"itemBlocks", o.itemBlocks}});
  } else {
    j.update({{"trees", o.trees}, {"maxDepth", o.maxDepth}, {"maxBins", o.maxBins}, {"impurity", o.impurity},
              {"numClasses", o.numClasses}, {"featureSubset", o.featureSubset}, {"bootstrap", o.bootstrap},
              {"minInfoGain", o.minInfoGain}});
  }
  return j;
}

std::optional<int> depthFlag(int d) { return d > 0 ? std::optional<int>(d) : std::nullopt; }

int runTrain(const TrainOptions& o) {
  Context ctx(EngineConfig{o.workers, o.aggDepth > 0 ? o.aggDepth : 2, o.partitions});
  Stopwatch watch;
  const auto depth = depthFlag(o.aggDepth);
  AnyModel model;
  json metrics;

  if (o.algo == "als") {
    const auto ratings = readRatingsCsv(o.in);
    log("read " + std::to_string(ratings.size()) + " ratings from " + o.in);
    ALSConfig cfg;
    cfg.rank = o.rank;
    cfg.numIters = o.iters.value_or(cfg.numIters);
    cfg.regParam = o.reg.value_or(cfg.regParam);
    cfg.implicitPrefs = o.implicit;
    cfg.alpha = o.alpha;
    cfg.numUserBlocks = o.userBlocks;
    cfg.numItemBlocks = o.itemBlocks;
    cfg.seed = o.seed;
    cfg.aggregationDepth = depth;
    auto m = trainALS(ctx.parallelize(ratings, o.partitions), cfg);
    metrics = ratingMetrics(m, ratings);
    model = std::move(m);
  } else {
    auto data = readLibsvmFile(o.in, o.dim);
    log("read " + std::to_string(data.points.size()) + " rows (dim " + std::to_string(data.dim) + ") from " + o.in);
    const auto ds = ctx.parallelize(data.points, o.partitions);
    if (o.algo == "linear" || o.algo == "logistic") {
      GDConfig cfg;
      cfg.stepSize = o.step.value_or(cfg.stepSize);
      cfg.numIters = o.iters.value_or(cfg.numIters);
      cfg.miniBatchFraction = o.miniBatch;
      cfg.regParam = o.reg.value_or(cfg.regParam);
      if (o.tol >= 0.0) cfg.convergenceTol = o.tol;
      cfg.seed = o.seed;
      cfg.aggregationDepth = depth;
      model = trainGLM(ds, o.algo == "linear" ? GLMKind::Linear : GLMKind::Logistic, cfg);
    } else if (o.algo == "naive-bayes") {
      model = trainNaiveBayes(ds, o.smoothing, depth);
    } else if (o.algo == "kmeans") {
      std::vector<Vector> xs;
      for (const auto& p : data.points) xs.push_back(p.features);
      KMeansConfig cfg;
      cfg.k = o.k;
      cfg.maxIters = o.iters.value_or(cfg.maxIters);
      if (o.tol >= 0.0) cfg.tol = o.tol;
      cfg.seed = o.seed;
      cfg.aggregationDepth = depth;
      model = trainKMeans(ctx.parallelize(std::move(xs), o.partitions), cfg);
    } else if (o.algo == "pca") {
      std::vector<Vector> xs;
      for (const auto& p : data.points) xs.push_back(p.features);
      PCAConfig cfg;
      cfg.k = o.k;
      cfg.aggregationDepth = depth;
      model = fitPCA(ctx.parallelize(std::move(xs), o.partitions), cfg);
    } else {
      ForestConfig cfg;
      cfg.numTrees = o.algo == "tree" ? 1 : o.trees;
      cfg.maxDepth = o.maxDepth;
      cfg.maxBins = o.maxBins;
      cfg.impurity = impurityFromString(o.impurity);
      cfg.numClasses = o.numClasses;
      cfg.featureSubsetFraction = o.featureSubset;
      cfg.bootstrap = o.bootstrap;
      cfg.minInfoGain = o.minInfoGain;
      cfg.seed = o.seed;
      cfg.aggregationDepth = depth;
      const auto bins = findSplitBins(ds, cfg.maxBins, 1.0, cfg.seed);
      if (o.algo == "tree") {
        model = trainTree(ds, bins, cfg);
      } else {
        model = trainForest(ds, bins, cfg);
      }
    }
    metrics = pointMetrics(model, ctx, data.points);
  }

  std::visit([&](const auto& m) { saveModel(m, o.modelOut); }, model);
  log("saved model to " + o.modelOut);
  std::cout << report("train", trainConfig(o), watch.ms(), std::move(metrics), ctx).dump() << '\n';
  return 0;
}

// evaluate -------------------------------------------------------------------

struct EvaluateOptions {
  std::string model;
  std::string in;
  std::size_t partitions = 4;
};

int runEvaluate(const EvaluateOptions& o) {
  Context ctx(EngineConfig{1, 2, o.partitions});
  Stopwatch watch;
  const auto artifact = loadModel(o.model);
  const AnyModel model = modelFromArtifact(artifact);
  json metrics;
  if (const auto* als = std::get_if<ALSModel>(&model)) {
    metrics = ratingMetrics(*als, readRatingsCsv(o.in));
  } else {
    const auto data = readLibsvmFile(o.in, modelDimension(model));
    metrics = pointMetrics(model, ctx, data.points);
  }
  json config{{"model", o.model}, {"in", o.in}, {"partitions", o.partitions},
              {"modelType", toString(artifact.modelType)}};
  std::cout << report("evaluate", std::move(config), watch.ms(), std::move(metrics), ctx).dump() << '\n';
  return 0;
}

// bench-als ------------------------------------------------------------------

struct BenchOptions {
  std::string scales = "1,2,4";
  int iters = 5;
  std::size_t rank = 5;
  std::uint64_t seed = 0;
  std::size_t users = 100;
  std::size_t items = 80;
  double density = 0.3;
  std::size_t blocks = 4;
  std::size_t partitions = 4;
  bool naiveRouting = false;
  std::string out;
};

std::vector<std::size_t> parseScales(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != token.size() || v < 1) throw UsageError("--scales: '" + token + "' is not a positive integer");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw UsageError("--scales: no scales given");
  return out;
}

int runBenchAls(const BenchOptions& o) {
  const auto scales = parseScales(o.scales);
  std::ostringstream csv;
  csv << "scale,wallMs,ledgerBytes\n";
  for (std::size_t scale : scales) {
    SyntheticParams p;
    p.users = o.users;
    p.items = o.items;
    p.rank = o.rank;
    p.density = o.density;
    p.userScale = scale;
    const auto ratings = genSynthetic(SyntheticKind::AlsRatings, p, o.seed).ratings;
    Context ctx(EngineConfig{1, 2, o.partitions});
    ALSConfig cfg;
    cfg.rank = o.rank;
    cfg.numIters = o.iters;
    cfg.numUserBlocks = o.blocks;
    cfg.numItemBlocks = o.blocks;
    cfg.seed = o.seed;
    cfg.naiveRouting = o.naiveRouting;
    auto ds = ctx.parallelize(ratings, o.partitions);
    Stopwatch watch;
    trainALS(ds, cfg);
    const double ms = watch.ms();
    const auto bytes = ctx.ledger().snapshot().totalBytes();
    log("scale " + std::to_string(scale) + ": " + std::to_string(ratings.size()) + " ratings, " +
        std::to_string(bytes) + " ledger bytes");
    csv << scale << ',' << formatDouble(ms) << ',' << bytes << '\n';
  }
  if (o.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(o.out);
    if (!(f << csv.str())) throw Error("cannot write '" + o.out + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparklet: data-parallel machine learning on one machine"};
  app.require_subcommand(1, 1);

  GenOptions gen;
  auto* genCmd = app.add_subcommand("gen", "Generate a synthetic dataset");
  genCmd->add_option("kind", gen.kind, "linear | logistic | kmeans-blobs | als-ratings | counts")->required();
  genCmd->add_option("--out", gen.out, "Output file (LIBSVM, or CSV for ratings)")->required();
  genCmd->add_option("--seed", gen.seed);
  genCmd->add_option("--n", gen.params.n, "Rows");
  genCmd->add_option("--d", gen.params.d, "Features");
  genCmd->add_option("--k", gen.params.k, "Clusters or classes");
  genCmd->add_option("--noise", gen.params.noise);
  genCmd->add_option("--separation", gen.params.separation);
  genCmd->add_option("--spread", gen.params.spread);
  genCmd->add_option("--users", gen.params.users);
  genCmd->add_option("--items", gen.params.items);
  genCmd->add_option("--rank", gen.params.rank);
  genCmd->add_option("--density", gen.params.density);
  genCmd->add_option("--scale", gen.params.userScale, "Copies of every user");
  genCmd->add_option("--words-per-doc", gen.params.wordsPerDoc);

  TrainOptions train;
  auto* trainCmd = app.add_subcommand("train", "Train a model and save it");
  trainCmd->add_option("algo", train.algo)->required()->check(CLI::IsMember(kAlgos));
  trainCmd->add_option("--in", train.in, "Training data")->required();
  trainCmd->add_option("--model-out", train.modelOut, "Model file to write")->required();
  trainCmd->add_option("--partitions", train.partitions)->check(CLI::PositiveNumber);
  trainCmd->add_option("--agg-depth", train.aggDepth, "Aggregation depth (0 = engine default)")
      ->check(CLI::NonNegativeNumber);
  trainCmd->add_option("--workers", train.workers)->check(CLI::PositiveNumber);
  trainCmd->add_option("--dim", train.dim, "Feature dimension override");
  trainCmd->add_option("--seed", train.seed);
  trainCmd->add_option("--iters", train.iters);
  trainCmd->add_option("--step", train.step);
  trainCmd->add_option("--reg", train.reg);
  trainCmd->add_option("--mini-batch", train.miniBatch);
  trainCmd->add_option("--tol", train.tol);
  trainCmd->add_option("--k", train.k);
  trainCmd->add_option("--smoothing", train.smoothing);
  trainCmd->add_option("--rank", train.rank);
  trainCmd->add_option("--alpha", train.alpha);
  trainCmd->add_flag("--implicit", train.implicit);
  trainCmd->add_option("--user-blocks", train.userBlocks);
  trainCmd->add_option("--item-blocks", train.itemBlocks);
  trainCmd->add_option("--trees", train.trees);
  trainCmd->add_option("--max-depth", train.maxDepth);
  trainCmd->add_option("--max-bins", train.maxBins);
  trainCmd->add_option("--impurity", train.impurity)->check(CLI::IsMember({"gini", "entropy", "variance"}));
  trainCmd->add_option("--num-classes", train.numClasses);
  trainCmd->add_option("--feature-subset", train.featureSubset);
  trainCmd->add_flag("--bootstrap", train.bootstrap);
  trainCmd->add_option("--min-info-gain", train.minInfoGain);

  EvaluateOptions evaluate;
  auto* evalCmd = app.add_subcommand("evaluate", "Score a saved model on a dataset");
  evalCmd->add_option("--model", evaluate.model)->required();
  evalCmd->add_option("--in", evaluate.in)->required();
  evalCmd->add_option("--partitions", evaluate.partitions)->check(CLI::PositiveNumber);

  BenchOptions bench;
  auto* benchCmd = app.add_subcommand("bench-als", "ALS communication benchmark over duplicated-user datasets");
  benchCmd->add_option("--scales", bench.scales, "Comma-separated user multipliers");
  benchCmd->add_option("--iters", bench.iters)->check(CLI::PositiveNumber);
  benchCmd->add_option("--rank", bench.rank)->check(CLI::PositiveNumber);
  benchCmd->add_option("--seed", bench.seed);
  benchCmd->add_option("--users", bench.users)->check(CLI::PositiveNumber);
  benchCmd->add_option("--items", bench.items)->check(CLI::PositiveNumber);
  benchCmd->add_option("--density", bench.density);
  benchCmd->add_option("--blocks", bench.blocks, "User and item blocks")->check(CLI::PositiveNumber);
  benchCmd->add_option("--partitions", bench.partitions)->check(CLI::PositiveNumber);
  benchCmd->add_flag("--naive-routing", bench.naiveRouting, "Ship one factor copy per rating");
  benchCmd->add_option("--out", bench.out, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (genCmd->parsed()) return runGen(gen);
    if (trainCmd->parsed()) return runTrain(train);
    if (evalCmd->parsed()) return runEvaluate(evaluate);
    return runBenchAls(bench);
  } catch (const UsageError& e) {
    std::cerr << "sparklet: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "sparklet: error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "sparklet/pipeline.hpp"

using namespace sparklet;

namespace {

ColumnTable linearTable(std::uint64_t seed, std::size_t n = 300, std::size_t d = 3) {
  SyntheticParams p;
  p.n = n;
  p.d = d;
  return tableFromPoints(genSynthetic(SyntheticKind::Linear, p, seed).points);
}

// Labels are 1 iff x0 + x1 > 0.5: separable, with a nonzero offset.
ColumnTable logisticTable(std::uint64_t seed, std::size_t n = 300) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<LabeledPoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    DenseVector x{g(rng) + 3.0, g(rng), 10.0 * g(rng), g(rng)};
    const double label = x[0] - 3.0 + x[1] > 0.5 ? 1.0 : 0.0;
    pts.push_back({label, std::move(x)});
  }
  return tableFromPoints(pts);
}

std::shared_ptr<const Estimator> glm(GLMKind kind, double stepSize = 1.0, int numIters = 100) {
  GDConfig cfg;
  cfg.stepSize = stepSize;
  cfg.numIters = numIters;
  return std::make_shared<GLMEstimator>("glm", kind, PredictorColumns{}, cfg);
}

}  // namespace

TEST(ColumnTable, SchemaRules) {
  ColumnTable t;
  t.add("a", std::vector<double>{1, 2, 3});
  EXPECT_THROW(t.add("a", std::vector<double>{1, 2, 3}), SchemaError);
  EXPECT_THROW(t.add("b", std::vector<double>{1, 2}), SchemaError);
  t.add("c", std::vector<std::int64_t>{4, 5, 6});
  EXPECT_EQ(t.numeric("c"), (std::vector<double>{4, 5, 6}));
  EXPECT_THROW(t.get<Vector>("a"), SchemaError);
  EXPECT_THROW(t.column("zzz"), SchemaError);
  const std::vector<std::size_t> rows{2, 0};
  const auto s = t.select(rows);
  EXPECT_EQ(s.get<double>("a"), (std::vector<double>{3, 1}));
  EXPECT_EQ(s.names(), (std::vector<std::string>{"a", "c"}));
}

TEST(FitPipeline, EmptyPipelineIsIdentity) {
  Context ctx;
  const auto t = linearTable(1, 20);
  const auto model = fitPipeline(ctx, {}, t);
  EXPECT_TRUE(model.stages().empty());
  EXPECT_EQ(model.transform(t), t);
}

TEST(FitPipeline, StandardizerThenLogisticAddsPrediction) {
  Context ctx;
  const auto t = logisticTable(2);
  const std::vector<PipelineStage> stages{std::make_shared<StandardScaler>("std", "features", "features"),
                                          glm(GLMKind::Logistic)};
  const auto out = fitPipeline(ctx, stages, t).transform(t);
  ASSERT_TRUE(out.has("prediction"));
  const auto& pred = out.get<double>("prediction");
  EXPECT_EQ(pred.size(), t.numRows());
  for (double v : pred) EXPECT_TRUE(v == 0.0 || v == 1.0);
  EXPECT_GT(accuracy(out.numeric("label"), pred), 0.95);
}

TEST(FitPipeline, ScalerThenGlmMatchesPrescaledTable) {
  Context ctx;
  SyntheticParams p;
  p.n = 200;
  p.d = 3;
  auto points = genSynthetic(SyntheticKind::Linear, p, 3).points;
  const auto t = tableFromPoints(points);
  const std::vector<PipelineStage> stages{std::make_shared<VectorScaler>("x2", "features", "features", 2.0),
                                          glm(GLMKind::Linear, 0.2, 100)};
  const auto piped = fitPipeline(ctx, stages, t).transform(t).get<double>("prediction");

  // Manual two-step oracle: scale the points, then train directly.
  for (auto& pt : points) {
    DenseVector x = pt.features.toDense();
    scal(2.0, x.span());
    pt.features = std::move(x);
  }
  GDConfig cfg;
  cfg.stepSize = 0.2;
  cfg.numIters = 100;
  const auto model = trainGLM(ctx.parallelize(points, 7), GLMKind::Linear, cfg);
  ASSERT_EQ(piped.size(), points.size());
  for (std::size_t i = 0; i < points.size(); ++i) EXPECT_NEAR(piped[i], model.predict(points[i].features), 1e-9);
}

TEST(FitPipeline, TransformDoesNotMutateInput) {
  Context ctx;
  const auto t = logisticTable(4, 100);
  const ColumnTable copy = t;
  const std::vector<PipelineStage> stages{std::make_shared<StandardScaler>("std", "features", "features"),
                                          std::make_shared<Binarizer>("bin", "label", "flag", 0.5),
                                          glm(GLMKind::Logistic)};
  const auto model = fitPipeline(ctx, stages, t);
  EXPECT_EQ(t, copy);
  const auto out = model.transform(t);
  EXPECT_EQ(t, copy);
  EXPECT_NE(out, t);
}

TEST(FitPipeline, EqualsManualChaining) {
  Context ctx;
  const auto t = logisticTable(5);
  const auto scaler = std::make_shared<StandardScaler>("std", "features", "scaled");
  const auto pca = std::make_shared<PCAEstimator>("pca", "scaled", "pcs", 3);
  const auto logit = std::make_shared<GLMEstimator>("glm", GLMKind::Logistic, PredictorColumns{"pcs", "label", "p"});
  const std::vector<PipelineStage> stages{scaler, pca, logit};
  const auto viaPipeline = fitPipeline(ctx, stages, t).transform(t);

  const auto s1 = scaler->fit(ctx, t, Params::resolve("std", scaler->paramSpecs(), {}));
  const auto t1 = s1->transform(t);
  const auto s2 = pca->fit(ctx, t1, Params::resolve("pca", pca->paramSpecs(), {}));
  const auto t2 = s2->transform(t1);
  const auto s3 = logit->fit(ctx, t2, Params::resolve("glm", logit->paramSpecs(), {}));
  EXPECT_EQ(viaPipeline, s3->transform(t2));
}

TEST(FitPipeline, SchemaErrorsNameStageAndColumn) {
  Context ctx;
  const auto t = linearTable(6, 20);
  try {
    fitPipeline(ctx, {std::make_shared<StandardScaler>("scaler1", "nope", "out")}, t);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("scaler1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
  // Output column already present and the stage does not replace in place.
  EXPECT_THROW(fitPipeline(ctx, {std::make_shared<VectorAssembler>("asm", std::vector<std::string>{"features"}, "label")}, t),
               SchemaError);
  const auto model = fitPipeline(ctx, {glm(GLMKind::Linear)}, t);
  ColumnTable other;
  other.add("label", std::vector<double>(3, 0.0));
  EXPECT_THROW(model.transform(other), SchemaError);
}

TEST(FitPipeline, ParamOverridesAreCheckedAndFrozen) {
  Context ctx;
  const auto t = linearTable(7, 20);
  const auto scaler = std::make_shared<VectorScaler>("s", "features", "scaled", 1.0);
  const std::vector<PipelineStage> stages{scaler};

  ParamMap params;
  params.set("s", "factor", std::int64_t{3});  // integers promote to float
  const auto model = fitPipeline(ctx, stages, t, params);
  const auto out = model.transform(t);
  for (std::size_t i = 0; i < t.numRows(); ++i) {
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_EQ(out.get<Vector>("scaled")[i].get(j), 3.0 * t.get<Vector>("features")[i].get(j));
  }
  // The unfitted stage keeps its default.
  EXPECT_EQ(scaler->transform(t).get<Vector>("scaled")[0], t.get<Vector>("features")[0]);

  EXPECT_THROW(fitPipeline(ctx, stages, t, ParamMap().set("s", "factr", 2.0)), ParamError);
  EXPECT_THROW(fitPipeline(ctx, stages, t, ParamMap().set("s", "factor", std::string("big"))), ParamError);
  EXPECT_THROW(fitPipeline(ctx, {glm(GLMKind::Linear)}, t, ParamMap().set("glm", "numIters", 2.5)), ParamError);
  // Overrides for other stage ids are ignored.
  EXPECT_NO_THROW(fitPipeline(ctx, stages, t, ParamMap().set("other", "whatever", true)));
}

TEST(Transformers, BinarizerAndAssembler) {
  ColumnTable t;
  t.add("x", std::vector<double>{-1.0, 0.5, 2.0});
  t.add("v", std::vector<Vector>{DenseVector{1.0, -1.0}, SparseVector(2, {1}, {4.0}), DenseVector{0.0, 0.0}});
  t.add("i", std::vector<std::int64_t>{7, 8, 9});
  const auto b = Binarizer("b", "x", "bx", 0.5).transform(t);
  EXPECT_EQ(b.get<double>("bx"), (std::vector<double>{0.0, 0.0, 1.0}));
  const auto bv = Binarizer("b", "v", "bv", 0.0).transform(t);
  EXPECT_EQ(bv.get<Vector>("bv")[0], Vector(DenseVector{1.0, 0.0}));

  const auto a = VectorAssembler("a", {"x", "v", "i"}, "all").transform(t);
  const auto& rows = a.get<Vector>("all");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0].isSparse());
  EXPECT_EQ(rows[0].toDense(), (DenseVector{-1.0, 1.0, -1.0, 7.0}));
  EXPECT_EQ(rows[1].toDense(), (DenseVector{0.5, 0.0, 4.0, 8.0}));
  EXPECT_EQ(rows[2].toDense(), (DenseVector{2.0, 0.0, 0.0, 9.0}));
}

TEST(Transformers, StandardScalerColumnsHaveUnitVariance) {
  Context ctx;
  const auto t = linearTable(8, 500, 4);
  const auto out = fitPipeline(ctx, {std::make_shared<StandardScaler>("s", "features", "z")}, t).transform(t);
  auto ds = ctx.parallelize(out.get<Vector>("z"));
  const auto stats = colStats(ds);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(stats.mean[j], 0.0, 1e-12);
    EXPECT_NEAR(stats.variance()[j], 1.0, 1e-12);
  }
}

TEST(Folds, PartitionOfRowsBalanced) {
  for (std::size_t n : {3u, 10u, 101u, 1000u}) {
    for (std::size_t k : {2u, 3u, 7u}) {
      if (n < k) continue;
      const auto fold = assignFolds(n, k, n * 31 + k);
      std::vector<std::size_t> sizes(k, 0);
      for (auto f : fold) {
        ASSERT_LT(f, k);
        ++sizes[f];
      }
      const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
      EXPECT_LE(*hi - *lo, 1u);
    }
  }
  EXPECT_EQ(assignFolds(50, 5, 1), assignFolds(50, 5, 1));
  EXPECT_NE(assignFolds(50, 5, 1), assignFolds(50, 5, 2));
  EXPECT_THROW(assignFolds(2, 3, 0), InvalidArgument);
  EXPECT_THROW(assignFolds(10, 1, 0), InvalidArgument);
}

TEST(CrossValidate, SingleCellGrid) {
  Context ctx;
  CrossValidatorConfig cfg;
  cfg.stages = {glm(GLMKind::Linear)};
  cfg.paramGrid = {ParamMap().set("glm", "regParam", 0.1)};
  const auto r = crossValidate(ctx, cfg, linearTable(9, 60));
  EXPECT_EQ(r.bestIndex, 0u);
  ASSERT_EQ(r.metrics.size(), 1u);
  ASSERT_EQ(r.foldMetrics.size(), 1u);
  EXPECT_EQ(r.foldMetrics[0].size(), 3u);
  EXPECT_EQ(r.bestModel.stages().size(), 1u);
}

TEST(CrossValidate, MetricsMatchManualFoldOracle) {
  Context ctx;
  const auto t = linearTable(10, 120);
  CrossValidatorConfig cfg;
  cfg.stages = {glm(GLMKind::Linear, 0.5, 50)};
  cfg.paramGrid = {ParamMap().set("glm", "regParam", 0.0), ParamMap().set("glm", "regParam", 0.5),
                   ParamMap().set("glm", "regParam", 0.05)};
  cfg.numFolds = 4;
  cfg.seed = 77;
  const auto r = crossValidate(ctx, cfg, t);
  ASSERT_EQ(r.metrics.size(), 3u);

  const auto fold = assignFolds(t.numRows(), 4, 77);
  const auto& labels = t.get<double>("label");
  const auto& features = t.get<Vector>("features");
  std::size_t best = 0;
  std::vector<double> means;
  for (double lambda : {0.0, 0.5, 0.05}) {
    double sum = 0.0;
    for (std::size_t f = 0; f < 4; ++f) {
      std::vector<LabeledPoint> train;
      std::vector<double> y, yhat;
      for (std::size_t i = 0; i < t.numRows(); ++i)
        if (fold[i] != f) train.push_back({labels[i], features[i]});
      GDConfig g;
      g.stepSize = 0.5;
      g.numIters = 50;
      g.regParam = lambda;
      const auto m = trainGLM(ctx.parallelize(train), GLMKind::Linear, g);
      for (std::size_t i = 0; i < t.numRows(); ++i) {
        if (fold[i] == f) {
          y.push_back(labels[i]);
          yhat.push_back(m.predict(features[i]));
        }
      }
      double ss = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - yhat[i]) * (y[i] - yhat[i]);
      sum += std::sqrt(ss / static_cast<double>(y.size()));
    }
    means.push_back(sum / 4.0);
    if (means.back() < means[best]) best = means.size() - 1;
  }
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(r.metrics[c], means[c], 1e-9);
  EXPECT_EQ(r.bestIndex, best);
}

TEST(CrossValidate, PicksUnregularizedCellOnLinearData) {
  // With step 1.9e-3 both cells stay finite and lambda = 1e3 shrinks the
  // weights toward zero; with step 1 that cell diverges and must lose.
  for (double step : {1.9e-3, 1.0}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Context ctx;
      CrossValidatorConfig cfg;
      cfg.stages = {glm(GLMKind::Linear, step, 200)};
      cfg.paramGrid = {ParamMap().set("glm", "regParam", 0.0), ParamMap().set("glm", "regParam", 1e3)};
      cfg.seed = seed;
      const auto r = crossValidate(ctx, cfg, linearTable(seed));
      EXPECT_EQ(r.bestIndex, 0u) << "step " << step << " seed " << seed;
      EXPECT_EQ(std::get<double>(r.bestParams.entries().begin()->second), 0.0);
      if (step < 1.0) {
        EXPECT_TRUE(std::isfinite(r.metrics[1]));
        EXPECT_LT(r.metrics[0], r.metrics[1]);
      }
    }
  }
}

TEST(CrossValidate, TiesGoToEarliestCell) {
  Context ctx;
  CrossValidatorConfig cfg;
  cfg.stages = {glm(GLMKind::Linear)};
  cfg.paramGrid = {ParamMap().set("glm", "regParam", 0.1), ParamMap().set("glm", "regParam", 0.1)};
  const auto r = crossValidate(ctx, cfg, linearTable(11, 60));
  EXPECT_EQ(r.metrics[0], r.metrics[1]);
  EXPECT_EQ(r.bestIndex, 0u);
}

TEST(CrossValidate, AccuracyIsMaximized) {
  Context ctx;
  CrossValidatorConfig cfg;
  cfg.stages = {glm(GLMKind::Logistic)};
  cfg.paramGrid = {ParamMap().set("glm", "numIters", std::int64_t{1}).set("glm", "stepSize", 1e-6),
                   ParamMap().set("glm", "numIters", std::int64_t{100})};
  cfg.evaluator.metric = Metric::Accuracy;
  const auto r = crossValidate(ctx, cfg, logisticTable(12));
  EXPECT_EQ(r.bestIndex, 1u);
  EXPECT_GT(r.metrics[1], r.metrics[0]);
}

TEST(CrossValidate, Errors) {
  Context ctx;
  CrossValidatorConfig cfg;
  cfg.stages = {glm(GLMKind::Linear)};
  EXPECT_THROW(crossValidate(ctx, cfg, linearTable(1, 30)), InvalidArgument);
  cfg.paramGrid = {ParamMap()};
  cfg.numFolds = 5;
  EXPECT_THROW(crossValidate(ctx, cfg, linearTable(1, 4)), InvalidArgument);
}

TEST(Evaluate, WsseMatchesKMeansCost) {
  Context ctx;
  SyntheticParams p;
  p.n = 200;
  p.d = 2;
  const auto t = tableFromPoints(genSynthetic(SyntheticKind::KMeansBlobs, p, 13).points);
  const auto model = fitPipeline(ctx, {std::make_shared<KMeansEstimator>("km")}, t,
                                 ParamMap().set("km", "k", std::int64_t{3}));
  const auto& km = dynamic_cast<const ModelTransformer<KMeansModel>&>(*model.stages()[0]).model();
  const double wsse = evaluate(model, t, {Metric::Wsse});
  EXPECT_NEAR(wsse, kmeansCost(km, ctx.parallelize(t.get<Vector>("features"))), 1e-9 * wsse);
  EXPECT_THROW(evaluate(fitPipeline(ctx, {glm(GLMKind::Linear)}, t), t, {Metric::Wsse}), InvalidArgument);
}

TEST(Evaluate, MetricHelpers) {
  EXPECT_DOUBLE_EQ(rmse(std::vector<double>{1, 2}, std::vector<double>{1, 4}), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(accuracy(std::vector<double>{1, 0, 1, 1}, std::vector<double>{1, 1, 1, 0}), 0.5);
  EXPECT_EQ(metricFromString("wsse"), Metric::Wsse);
  EXPECT_THROW(metricFromString("auc"), InvalidArgument);
}

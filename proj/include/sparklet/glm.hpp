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

#pragma once

// Generalized linear models trained by mini-batch gradient descent. Each
// iteration broadcasts the current parameters, folds per-partition gradient
// partials, and combines them with treeAggregate.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparklet/engine.hpp"
#include "sparklet/io.hpp"
#include "sparklet/linalg.hpp"
#include "sparklet/random.hpp"

namespace sparklet {

enum class GLMKind { Linear, Logistic };

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

struct GLMModel {
  DenseVector weights;
  double intercept = 0.0;
  GLMKind kind = GLMKind::Linear;

  std::size_t numFeatures() const noexcept { return weights.size(); }

  double margin(const Vector& x) const {
    if (x.size() != weights.size()) {
      throw InvalidArgument("predict: expected " + std::to_string(weights.size()) + " features, got " +
                            std::to_string(x.size()));
    }
    return dot(x, weights.span()) + intercept;
  }

  /// Linear: wᵀx + b. Logistic: sigmoid(wᵀx + b).
  double predict(const Vector& x) const {
    const double z = margin(x);
    return kind == GLMKind::Linear ? z : sigmoid(z);
  }

  /// Logistic class label with threshold 0.5.
  double classify(const Vector& x) const { return predict(x) > 0.5 ? 1.0 : 0.0; }
};

struct GDConfig {
  double stepSize = 1.0;
  int numIters = 100;
  double miniBatchFraction = 1.0;
  double regParam = 0.0;
  double convergenceTol = 0.0;
  std::uint64_t seed = 0;
  std::optional<int> aggregationDepth;

  void validate() const {
    if (!(stepSize > 0.0)) throw InvalidArgument("stepSize must be > 0");
    if (numIters < 1) throw InvalidArgument("numIters must be >= 1");
    if (!(miniBatchFraction > 0.0 && miniBatchFraction <= 1.0)) {
      throw InvalidArgument("miniBatchFraction must be in (0, 1]");
    }
    if (!(regParam >= 0.0)) throw InvalidArgument("regParam must be >= 0");
    if (!(convergenceTol >= 0.0)) throw InvalidArgument("convergenceTol must be >= 0");
  }
};

struct GDIteration {
  int iteration = 0;
  std::uint64_t sampled = 0;
  /// Mean data loss plus (λ/2)‖w‖², at the parameters the gradient was taken at.
  double objective = 0.0;
  bool skipped = false;
};

struct GDHistory {
  std::vector<GDIteration> iterations;
  bool converged = false;
};

struct LossGradient {
  DenseVector gradWeights;
  double gradIntercept = 0.0;
  double loss = 0.0;
};

namespace detail {

inline void checkLogisticLabel(double y) {
  if (y != 0.0 && y != 1.0) throw InvalidArgument("logistic label must be 0 or 1, got " + formatDouble(y));
}

/// Adds the example's gradient into grad[0..d) (weights) and grad[d]
/// (intercept); returns the example loss.
inline double accumulateLossGradient(GLMKind kind, std::span<const double> w, double b, const Vector& x, double y,
                                     std::span<double> grad) {
  const double z = dot(x, w) + b;
  double multiplier = 0.0;
  double loss = 0.0;
  if (kind == GLMKind::Linear) {
    const double r = z - y;
    multiplier = r;
    loss = 0.5 * r * r;
  } else {
    checkLogisticLabel(y);
    multiplier = sigmoid(z) - y;
    loss = softplus(z) - y * z;
  }
  axpy(multiplier, x, grad.first(w.size()));
  grad[w.size()] += multiplier;
  return loss;
}

struct GradientAccumulator {
  std::vector<double> grad;
  double loss = 0.0;
  std::uint64_t count = 0;

  std::uint64_t wireSize() const noexcept { return 8 * (grad.size() + 2); }
};

}  // namespace detail

/// Per-example loss and gradient over (w, intercept).
inline LossGradient lossGradient(GLMKind kind, std::span<const double> w, double intercept, const LabeledPoint& example) {
  std::vector<double> grad(w.size() + 1, 0.0);
  const double loss = detail::accumulateLossGradient(kind, w, intercept, example.features, example.label, grad);
  LossGradient out;
  out.gradIntercept = grad.back();
  grad.pop_back();
  out.gradWeights = DenseVector(std::move(grad));
  out.loss = loss;
  return out;
}

/// Mini-batch gradient descent with step α/√t and L2 penalty on the weights
/// (not the intercept). Row r joins iteration t's batch iff
/// hashUniform(seed, {t, r}) < miniBatchFraction, so batches do not depend on
/// partitioning. Logistic labels of -1 are read as 0.
inline GLMModel trainGLM(const Dataset<LabeledPoint>& ds, GLMKind kind, const GDConfig& config,
                         GDHistory* history = nullptr) {
  config.validate();
  if (ds.empty()) throw EmptyInput("trainGLM: empty dataset");
  const std::size_t d = featureDimension(ds);
  Context& ctx = ds.context();

  std::vector<double> params(d + 1, 0.0);  // weights then intercept
  GDHistory local;
  GDHistory& hist = history != nullptr ? *history : local;
  hist = {};

  for (int t = 1; t <= config.numIters; ++t) {
    const auto current = ctx.broadcast(params, ds.numPartitions());
    const double fraction = config.miniBatchFraction;
    const auto iterKey = static_cast<std::uint64_t>(t);
    auto seqOp = [&](detail::GradientAccumulator& acc, const LabeledPoint& p, std::size_t row) {
      if (p.features.size() != d) {
        throw InvalidArgument("trainGLM: expected " + std::to_string(d) + " features, got " +
                              std::to_string(p.features.size()));
      }
      if (fraction < 1.0 && hashUniform(config.seed, {iterKey, row}) >= fraction) return;
      double y = p.label;
      if (kind == GLMKind::Logistic && y == -1.0) y = 0.0;
      const auto& theta = current.value();
      acc.loss += detail::accumulateLossGradient(kind, std::span<const double>(theta).first(d), theta[d],
                                                 p.features, y, acc.grad);
      ++acc.count;
    };
    auto combOp = [](detail::GradientAccumulator& a, const detail::GradientAccumulator& b) {
      for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += b.grad[i];
      a.loss += b.loss;
      a.count += b.count;
    };
    const auto acc = ds.treeAggregate(detail::GradientAccumulator{std::vector<double>(d + 1, 0.0), 0.0, 0}, seqOp,
                                      combOp, config.aggregationDepth);

    GDIteration record{t, acc.count, 0.0, acc.count == 0};
    if (acc.count == 0) {
      hist.iterations.push_back(record);
      continue;
    }
    const double m = static_cast<double>(acc.count);
    double penalty = 0.0;
    for (std::size_t i = 0; i < d; ++i) penalty += params[i] * params[i];
    record.objective = acc.loss / m + 0.5 * config.regParam * penalty;
    hist.iterations.push_back(record);

    const double step = config.stepSize / std::sqrt(static_cast<double>(t));
    double deltaNorm = 0.0;
    double newNorm = 0.0;
    for (std::size_t i = 0; i <= d; ++i) {
      const double reg = i < d ? config.regParam * params[i] : 0.0;
      const double updated = params[i] - step * (acc.grad[i] / m + reg);
      deltaNorm += (updated - params[i]) * (updated - params[i]);
      newNorm += updated * updated;
      params[i] = updated;
    }
    if (std::sqrt(deltaNorm) < config.convergenceTol * std::max(std::sqrt(newNorm), 1.0)) {
      hist.converged = true;
      break;
    }
  }

  GLMModel model;
  model.kind = kind;
  model.intercept = params[d];
  params.pop_back();
  model.weights = DenseVector(std::move(params));
  return model;
}

inline ModelArtifact toArtifact(const GLMModel& m) {
  ModelArtifact a;
  a.modelType = m.kind == GLMKind::Linear ? ModelType::Linear : ModelType::Logistic;
  a.params = {{"numFeatures", m.numFeatures()}};
  a.payload = {{"weights", encodeArray(m.weights.span())}, {"intercept", encodeDouble(m.intercept)}};
  return a;
}

inline GLMModel glmFromArtifact(const ModelArtifact& a) {
  expectModelType(a, {ModelType::Linear, ModelType::Logistic});
  GLMModel m;
  m.kind = a.modelType == ModelType::Linear ? GLMKind::Linear : GLMKind::Logistic;
  m.weights = DenseVector(decodeArray(requireField(a.payload, "weights")));
  m.intercept = decodeDouble(requireField(a.payload, "intercept"));
  return m;
}

}  // namespace sparklet

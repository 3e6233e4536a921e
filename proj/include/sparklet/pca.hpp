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

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparklet/engine.hpp"
#include "sparklet/io.hpp"
#include "sparklet/linalg.hpp"
#include "sparklet/stats.hpp"

namespace sparklet {

struct PCAModel {
  DenseVector mean;
  /// d x k, columns are principal directions with canonical sign.
  DenseMatrix components;
  /// Variance along each component, descending.
  std::vector<double> explainedVariance;

  std::size_t dim() const noexcept { return mean.size(); }
  std::size_t k() const noexcept { return components.cols(); }

  /// componentsᵀ (x − mean)
  DenseVector project(const Vector& x) const {
    if (x.size() != dim()) {
      throw InvalidArgument("PCA project: expected " + std::to_string(dim()) + " features, got " +
                            std::to_string(x.size()));
    }
    DenseVector centered = x.toDense();
    axpy(-1.0, mean.span(), centered.span());
    DenseVector out(k());
    for (std::size_t c = 0; c < k(); ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < dim(); ++i) s += components(i, c) * centered[i];
      out[c] = s;
    }
    return out;
  }

  /// mean + components · y
  DenseVector reconstruct(std::span<const double> projected) const {
    DenseVector out = mean;
    axpy(1.0, gemv(components, projected).span(), out.span());
    return out;
  }
};

struct PCAConfig {
  std::size_t k = 2;
  /// The d x d covariance lives at the driver; larger inputs are refused.
  std::size_t maxDimension = 1000;
  std::optional<int> aggregationDepth;
};

/// Sample covariance (1/(n−1))·Σ(x−μ)(x−μ)ᵀ, μ from a column-statistics pass.
inline DenseMatrix covariance(const Dataset<Vector>& ds, const DenseVector& mean, std::optional<int> depth = std::nullopt) {
  const std::size_t d = mean.size();
  const auto shippedMean = ds.context().broadcast(mean, ds.numPartitions());
  DenseMatrix g = ds.treeAggregate(
      DenseMatrix(d, d),
      [&](DenseMatrix& acc, const Vector& x) {
        if (x.size() != d) throw InvalidArgument("PCA: inconsistent feature dimension");
        DenseVector centered = x.toDense();
        axpy(-1.0, shippedMean.value().span(), centered.span());
        addOuterUpper(acc, 1.0, centered.span());
      },
      [](DenseMatrix& a, const DenseMatrix& b) {
        for (std::size_t j = 0; j < a.cols(); ++j)
          for (std::size_t i = 0; i <= j; ++i) a(i, j) += b(i, j);
      },
      depth);
  symmetrizeFromUpper(g);
  const double scale = 1.0 / static_cast<double>(ds.count() - 1);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = 0; i < d; ++i) g(i, j) *= scale;
  return g;
}

inline PCAModel fitPCA(const Dataset<Vector>& ds, const PCAConfig& cfg) {
  if (ds.count() < 2) throw InvalidArgument("PCA needs at least 2 rows");
  const auto stats = colStats(ds, cfg.aggregationDepth);
  const std::size_t d = stats.dim();
  if (cfg.k < 1 || cfg.k > d) {
    throw InvalidArgument("PCA needs 1 <= k <= d (k=" + std::to_string(cfg.k) + ", d=" + std::to_string(d) + ")");
  }
  if (d > cfg.maxDimension) {
    throw UnsupportedDimension("PCA dimension " + std::to_string(d) + " exceeds the limit of " +
                               std::to_string(cfg.maxDimension));
  }
  PCAModel model;
  model.mean = DenseVector(stats.mean);
  const auto eig = symEig(covariance(ds, model.mean, cfg.aggregationDepth));
  model.components = DenseMatrix(d, cfg.k);
  for (std::size_t c = 0; c < cfg.k; ++c) {
    for (std::size_t i = 0; i < d; ++i) model.components(i, c) = eig.vectors(i, c);
    model.explainedVariance.push_back(std::max(0.0, eig.values[c]));
  }
  return model;
}

inline PCAModel fitPCA(const Dataset<Vector>& ds, std::size_t k) { return fitPCA(ds, PCAConfig{k, 1000, std::nullopt}); }

inline ModelArtifact toArtifact(const PCAModel& m) {
  ModelArtifact a;
  a.modelType = ModelType::Pca;
  a.params = {{"k", m.k()}, {"numFeatures", m.dim()}};
  a.payload = {{"mean", encodeArray(m.mean.span())},
               {"components", encodeArray(m.components.values())},
               {"explainedVariance", encodeArray(m.explainedVariance)}};
  return a;
}

inline PCAModel pcaFromArtifact(const ModelArtifact& a) {
  expectModelType(a, {ModelType::Pca});
  PCAModel m;
  const auto k = requireAs<std::size_t>(a.params, "k");
  m.mean = DenseVector(decodeArray(requireField(a.payload, "mean")));
  auto comps = decodeArray(requireField(a.payload, "components"));
  if (comps.size() != m.mean.size() * k) throw ParseError("PCA components have the wrong size");
  m.components = DenseMatrix(m.mean.size(), k, std::move(comps));
  m.explainedVariance = decodeArray(requireField(a.payload, "explainedVariance"));
  return m;
}

}  // namespace sparklet

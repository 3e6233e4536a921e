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

// k-means (Lloyd's algorithm). Centers are broadcast every iteration and the
// per-cluster (sum, count) partials are combined with treeAggregate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "sparklet/engine.hpp"
#include "sparklet/io.hpp"
#include "sparklet/linalg.hpp"
#include "sparklet/random.hpp"

namespace sparklet {

struct KMeansModel {
  std::vector<DenseVector> centers;
  /// Training WSSSE at the final centers.
  double cost = 0.0;

  std::size_t k() const noexcept { return centers.size(); }
  std::size_t dim() const noexcept { return centers.empty() ? 0 : centers.front().size(); }

  /// Nearest center index; ties go to the lower index.
  std::size_t predict(const Vector& x) const;
};

struct KMeansConfig {
  std::size_t k = 2;
  int maxIters = 20;
  double tol = 1e-4;
  std::uint64_t seed = 0;
  std::optional<int> aggregationDepth;

  void validate() const {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    if (maxIters < 1) throw InvalidArgument("maxIters must be >= 1");
    if (!(tol >= 0.0)) throw InvalidArgument("tol must be >= 0");
  }
};

struct KMeansHistory {
  /// costs[t] is the WSSSE of the centers entering iteration t; the last entry
  /// is the cost of the returned centers.
  std::vector<double> costs;
  int iterations = 0;
  bool converged = false;
  std::size_t reseeded = 0;
};

namespace detail {

inline constexpr std::size_t kInitSampleCap = 5000;

inline double squaredNorm(const Vector& x) {
  double s = 0.0;
  x.forEachActive([&](std::size_t, double v) { s += v * v; });
  return s;
}

/// Nearest center by ‖x‖² + ‖c‖² − 2xᵀc (clamped at 0); returns (index, exact squared distance).
inline std::pair<std::size_t, double> nearestCenter(const std::vector<DenseVector>& centers,
                                                    const std::vector<double>& centerNorms, const Vector& x) {
  if (x.size() != centers.front().size()) {
    throw InvalidArgument("k-means: expected " + std::to_string(centers.front().size()) + " features, got " +
                          std::to_string(x.size()));
  }
  const double xNorm = squaredNorm(x);
  std::size_t best = 0;
  double bestDist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double dist = std::max(0.0, xNorm + centerNorms[c] - 2.0 * dot(x, centers[c].span()));
    if (dist < bestDist) {
      bestDist = dist;
      best = c;
    }
  }
  // Cost uses the exact distance so coincident points contribute exactly 0.
  double exact = 0.0;
  const auto& center = centers[best];
  if (x.isSparse()) {
    exact = centerNorms[best];
    x.forEachActive([&](std::size_t j, double v) { exact += (v - center[j]) * (v - center[j]) - center[j] * center[j]; });
    exact = std::max(0.0, exact);
  } else {
    exact = squaredDistance(x.dense().span(), center.span());
  }
  return {best, exact};
}

inline std::vector<double> norms(const std::vector<DenseVector>& centers) {
  std::vector<double> out;
  out.reserve(centers.size());
  for (const auto& c : centers) out.push_back(dot(c, c));
  return out;
}

struct LloydAccumulator {
  std::vector<double> sums;  // k * d
  std::vector<std::uint64_t> counts;
  double cost = 0.0;

  std::uint64_t wireSize() const noexcept { return 8 * (sums.size() + counts.size() + 1); }
};

/// Candidate for reseeding an empty cluster: farther first, then lower row.
struct FarPoint {
  double dist = 0.0;
  std::size_t row = 0;
  DenseVector point;

  std::uint64_t wireSize() const noexcept { return 16 + point.wireSize(); }
};

inline bool fartherThan(const FarPoint& a, const FarPoint& b) {
  return a.dist > b.dist || (a.dist == b.dist && a.row < b.row);
}

/// k-means++ seeding on a row-keyed sample of about min(5000, n) points.
inline std::vector<DenseVector> kmeansPlusPlus(const Dataset<Vector>& ds, std::size_t k, std::uint64_t seed,
                                               std::optional<int> depth) {
  const double n = static_cast<double>(ds.count());
  const double fraction = std::min(1.0, static_cast<double>(kInitSampleCap) / n);
  auto collectSample = [&](double f) {
    using Rows = std::vector<std::pair<std::size_t, DenseVector>>;
    Rows rows = ds.treeAggregate(
        Rows{},
        [&](Rows& acc, const Vector& x, std::size_t row) {
          if (f < 1.0 && hashUniform(seed, {0x6b6dULL, row}) >= f) return;
          acc.emplace_back(row, x.toDense());
        },
        [](Rows& a, const Rows& b) { a.insert(a.end(), b.begin(), b.end()); }, depth);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return rows;
  };
  auto sample = collectSample(fraction);
  if (sample.size() < k) sample = collectSample(1.0);

  auto rng = keyedEngine(seed, {0x6b6d2b2bULL});
  std::vector<DenseVector> centers;
  std::vector<bool> chosen(sample.size(), false);
  const std::size_t first = static_cast<std::size_t>(rng() % sample.size());
  centers.push_back(sample[first].second);
  chosen[first] = true;
  std::vector<double> d2(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) d2[i] = squaredDistance(sample[i].second.span(), centers[0].span());

  while (centers.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = sample.size();
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double running = 0.0;
      for (std::size_t i = 0; i < sample.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        running += d2[i];
        pick = i;
        if (running > target) break;
      }
    } else {
      for (std::size_t i = 0; i < sample.size(); ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    chosen[pick] = true;
    centers.push_back(sample[pick].second);
    for (std::size_t i = 0; i < sample.size(); ++i)
      d2[i] = std::min(d2[i], squaredDistance(sample[i].second.span(), centers.back().span()));
  }
  return centers;
}

}  // namespace detail

inline std::size_t KMeansModel::predict(const Vector& x) const {
  if (centers.empty()) throw InvalidArgument("k-means model has no centers");
  return detail::nearestCenter(centers, detail::norms(centers), x).first;
}

/// Within-set sum of squared distances to the nearest center.
inline double kmeansCost(const KMeansModel& model, const Dataset<Vector>& ds, std::optional<int> depth = std::nullopt) {
  if (model.centers.empty()) throw InvalidArgument("k-means model has no centers");
  const auto centers = ds.context().broadcast(model.centers, ds.numPartitions());
  const auto centerNorms = detail::norms(model.centers);
  return ds.treeAggregate(
      0.0,
      [&](double acc, const Vector& x) { return acc + detail::nearestCenter(centers.value(), centerNorms, x).second; },
      [](double a, double b) { return a + b; }, depth);
}

/// Lloyd iterations from a k-means++ start until the largest center movement
/// drops below tol or maxIters is reached. An empty cluster is reseeded to
/// the point farthest from its assigned center.
inline KMeansModel trainKMeans(const Dataset<Vector>& ds, const KMeansConfig& cfg, KMeansHistory* history = nullptr) {
  cfg.validate();
  if (ds.count() < cfg.k) {
    throw InvalidArgument("k-means needs n >= k (n=" + std::to_string(ds.count()) + ", k=" + std::to_string(cfg.k) + ")");
  }
  Context& ctx = ds.context();
  KMeansHistory local;
  KMeansHistory& hist = history != nullptr ? *history : local;
  hist = {};

  std::vector<DenseVector> centers = detail::kmeansPlusPlus(ds, cfg.k, cfg.seed, cfg.aggregationDepth);
  const std::size_t k = cfg.k;
  const std::size_t d = centers.front().size();

  for (int iter = 0; iter < cfg.maxIters; ++iter) {
    const auto shipped = ctx.broadcast(centers, ds.numPartitions());
    const auto centerNorms = detail::norms(centers);
    auto acc = ds.treeAggregate(
        detail::LloydAccumulator{std::vector<double>(k * d, 0.0), std::vector<std::uint64_t>(k, 0), 0.0},
        [&](detail::LloydAccumulator& a, const Vector& x) {
          const auto [c, dist] = detail::nearestCenter(shipped.value(), centerNorms, x);
          axpy(1.0, x, std::span<double>(a.sums).subspan(c * d, d));
          ++a.counts[c];
          a.cost += dist;
        },
        [](detail::LloydAccumulator& a, const detail::LloydAccumulator& b) {
          for (std::size_t i = 0; i < a.sums.size(); ++i) a.sums[i] += b.sums[i];
          for (std::size_t i = 0; i < a.counts.size(); ++i) a.counts[i] += b.counts[i];
          a.cost += b.cost;
        },
        cfg.aggregationDepth);
    hist.costs.push_back(acc.cost);
    hist.iterations = iter + 1;

    std::vector<DenseVector> next(k, DenseVector(d));
    std::vector<std::size_t> empty;
    for (std::size_t c = 0; c < k; ++c) {
      if (acc.counts[c] == 0) {
        empty.push_back(c);
        continue;
      }
      const double inv = 1.0 / static_cast<double>(acc.counts[c]);
      for (std::size_t j = 0; j < d; ++j) next[c][j] = acc.sums[c * d + j] * inv;
    }

    if (!empty.empty()) {
      const std::size_t want = empty.size();
      using Far = std::vector<detail::FarPoint>;
      auto keepTop = [want](Far& v) {
        std::sort(v.begin(), v.end(), detail::fartherThan);
        if (v.size() > want) v.resize(want);
      };
      Far far = ds.treeAggregate(
          Far{},
          [&](Far& a, const Vector& x, std::size_t row) {
            const auto [c, dist] = detail::nearestCenter(shipped.value(), centerNorms, x);
            (void)c;
            a.push_back({dist, row, x.toDense()});
            if (a.size() > 4 * want + 16) keepTop(a);
          },
          [&](Far& a, const Far& b) {
            a.insert(a.end(), b.begin(), b.end());
            keepTop(a);
          },
          cfg.aggregationDepth);
      keepTop(far);
      for (std::size_t i = 0; i < empty.size(); ++i) next[empty[i]] = far[i].point;
      hist.reseeded += empty.size();
    }

    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c)
      movement = std::max(movement, std::sqrt(squaredDistance(next[c].span(), centers[c].span())));
    centers = std::move(next);
    if (movement < cfg.tol) {
      hist.converged = true;
      break;
    }
  }

  KMeansModel model{std::move(centers), 0.0};
  model.cost = kmeansCost(model, ds, cfg.aggregationDepth);
  hist.costs.push_back(model.cost);
  return model;
}

inline KMeansModel trainKMeans(const Dataset<Vector>& ds, std::size_t k, int maxIters, double tol, std::uint64_t seed) {
  return trainKMeans(ds, KMeansConfig{k, maxIters, tol, seed, std::nullopt});
}

inline ModelArtifact toArtifact(const KMeansModel& m) {
  ModelArtifact a;
  a.modelType = ModelType::KMeans;
  a.params = {{"k", m.k()}, {"numFeatures", m.dim()}};
  auto centers = nlohmann::json::array();
  for (const auto& c : m.centers) centers.push_back(encodeArray(c.span()));
  a.payload = {{"centers", centers}, {"cost", encodeDouble(m.cost)}};
  return a;
}

inline KMeansModel kmeansFromArtifact(const ModelArtifact& a) {
  expectModelType(a, {ModelType::KMeans});
  KMeansModel m;
  const auto& centers = requireField(a.payload, "centers");
  if (!centers.is_array() || centers.empty()) throw ParseError("k-means payload needs centers");
  for (const auto& c : centers) m.centers.emplace_back(decodeArray(c));
  for (const auto& c : m.centers)
    if (c.size() != m.centers.front().size()) throw ParseError("k-means centers have mixed dimensions");
  m.cost = decodeDouble(requireField(a.payload, "cost"));
  return m;
}

}  // namespace sparklet

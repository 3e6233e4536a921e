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

// Blocked alternating least squares for explicit and implicit feedback.
//
// Users and items are split into blocks by `id mod numBlocks`. Routing tables
// built once up front tell every source block which of its factors each
// destination block needs, so a factor crosses a block boundary at most once
// per half-step no matter how many ratings connect it to that block.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sparklet/engine.hpp"
#include "sparklet/io.hpp"
#include "sparklet/linalg.hpp"
#include "sparklet/random.hpp"

namespace sparklet {

struct ALSConfig {
  std::size_t rank = 10;
  int numIters = 10;
  double regParam = 0.1;
  bool implicitPrefs = false;
  double alpha = 1.0;
  std::size_t numUserBlocks = 1;
  std::size_t numItemBlocks = 1;
  std::uint64_t seed = 0;
  /// Ship one factor copy per rating instead of per (entity, destination
  /// block). Results are identical; only the ledger differs.
  bool naiveRouting = false;
  std::optional<int> aggregationDepth;

  void validate() const {
    if (rank < 1) throw InvalidArgument("rank must be >= 1");
    if (numIters < 1) throw InvalidArgument("numIters must be >= 1");
    if (!(regParam >= 0.0)) throw InvalidArgument("regParam must be >= 0");
    if (!(alpha >= 0.0)) throw InvalidArgument("alpha must be >= 0");
    if (numUserBlocks < 1 || numItemBlocks < 1) throw InvalidArgument("block counts must be >= 1");
  }
};

/// Factors of one side (users or items), ids ascending.
class FactorTable {
 public:
  FactorTable() = default;
  FactorTable(std::size_t rank, std::vector<std::int64_t> ids, std::vector<double> factors)
      : rank_(rank), ids_(std::move(ids)), factors_(std::move(factors)) {
    if (factors_.size() != ids_.size() * rank_) throw InvalidArgument("factor table: size mismatch");
    if (!std::is_sorted(ids_.begin(), ids_.end()) || std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end()) {
      throw InvalidArgument("factor table: ids must be strictly increasing");
    }
  }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::int64_t>& ids() const noexcept { return ids_; }
  const std::vector<double>& values() const noexcept { return factors_; }

  std::optional<std::size_t> indexOf(std::int64_t id) const noexcept {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids_.begin());
  }

  bool contains(std::int64_t id) const noexcept { return indexOf(id).has_value(); }

  std::span<const double> at(std::size_t index) const noexcept {
    return std::span<const double>(factors_).subspan(index * rank_, rank_);
  }
  std::span<double> at(std::size_t index) noexcept { return std::span<double>(factors_).subspan(index * rank_, rank_); }

  std::span<const double> factor(std::int64_t id) const {
    auto idx = indexOf(id);
    if (!idx) throw MissingEntity("unknown entity id " + std::to_string(id));
    return at(*idx);
  }

  std::uint64_t wireSize() const noexcept { return 8 * (ids_.size() + factors_.size()); }

  friend bool operator==(const FactorTable&, const FactorTable&) = default;

 private:
  std::size_t rank_ = 0;
  std::vector<std::int64_t> ids_;
  std::vector<double> factors_;
};

struct ALSModel {
  FactorTable users;
  FactorTable items;

  double predict(std::int64_t user, std::int64_t item) const { return dot(users.factor(user), items.factor(item)); }

  /// Top K items by score, ties to the lower item id. K beyond the item count
  /// returns every item.
  std::vector<std::pair<std::int64_t, double>> recommendTopK(std::int64_t user, std::size_t k) const {
    const auto x = users.factor(user);
    std::vector<std::pair<std::int64_t, double>> scored;
    scored.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) scored.emplace_back(items.ids()[i], dot(x, items.at(i)));
    const auto better = [](const auto& a, const auto& b) {
      return a.second > b.second || (a.second == b.second && a.first < b.first);
    };
    const std::size_t keep = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
    scored.resize(keep);
    return scored;
  }
};

// ---------------------------------------------------------------------------
// Routing tables
// ---------------------------------------------------------------------------

struct InLink {
  std::size_t srcBlock = 0;
  std::int64_t srcId = 0;
  double value = 0.0;
};

/// Routing for one half-step direction (source side -> destination side).
struct LinkTables {
  std::size_t numSrcBlocks = 1;
  std::size_t numDstBlocks = 1;
  /// outLinks[src][dst]: distinct source ids (ascending) needed by block dst.
  std::vector<std::vector<std::vector<std::int64_t>>> outLinks;
  /// inIds[dst]: destination entities of the block (ascending).
  std::vector<std::vector<std::int64_t>> inIds;
  /// inLinks[dst][e]: ratings of entity inIds[dst][e], ordered by (srcBlock, srcId).
  std::vector<std::vector<std::vector<InLink>>> inLinks;
  /// ratingCounts[src][dst]: ratings connecting the two blocks.
  std::vector<std::vector<std::uint64_t>> ratingCounts;

  std::uint64_t shippedFactorCount() const noexcept {
    std::uint64_t total = 0;
    for (const auto& row : outLinks)
      for (const auto& ids : row) total += ids.size();
    return total;
  }

  std::uint64_t naiveFactorCount() const noexcept {
    std::uint64_t total = 0;
    for (const auto& row : ratingCounts)
      for (auto c : row) total += c;
    return total;
  }
};

inline std::size_t blockOf(std::int64_t id, std::size_t numBlocks) noexcept {
  return static_cast<std::size_t>(id) % numBlocks;
}

/// Routing from `srcOf` entities to `dstOf` entities.
template <class SrcOf, class DstOf>
LinkTables buildDirectedLinks(std::span<const Rating> ratings, std::size_t numSrcBlocks, std::size_t numDstBlocks,
                              SrcOf srcOf, DstOf dstOf) {
  LinkTables t;
  t.numSrcBlocks = numSrcBlocks;
  t.numDstBlocks = numDstBlocks;
  t.outLinks.assign(numSrcBlocks, std::vector<std::vector<std::int64_t>>(numDstBlocks));
  t.ratingCounts.assign(numSrcBlocks, std::vector<std::uint64_t>(numDstBlocks, 0));
  t.inIds.assign(numDstBlocks, {});
  t.inLinks.assign(numDstBlocks, {});

  std::vector<std::vector<std::pair<std::int64_t, InLink>>> byDst(numDstBlocks);
  for (const auto& r : ratings) {
    const std::int64_t src = srcOf(r);
    const std::int64_t dst = dstOf(r);
    if (src < 0 || dst < 0) throw InvalidArgument("ALS entity ids must be non-negative");
    const std::size_t sb = blockOf(src, numSrcBlocks);
    const std::size_t db = blockOf(dst, numDstBlocks);
    t.outLinks[sb][db].push_back(src);
    ++t.ratingCounts[sb][db];
    byDst[db].push_back({dst, InLink{sb, src, r.value}});
  }
  for (auto& row : t.outLinks) {
    for (auto& ids : row) {
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    }
  }
  for (std::size_t db = 0; db < numDstBlocks; ++db) {
    auto& entries = byDst[db];
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      if (a.second.srcBlock != b.second.srcBlock) return a.second.srcBlock < b.second.srcBlock;
      return a.second.srcId < b.second.srcId;
    });
    for (const auto& [dst, link] : entries) {
      if (t.inIds[db].empty() || t.inIds[db].back() != dst) {
        t.inIds[db].push_back(dst);
        t.inLinks[db].emplace_back();
      }
      t.inLinks[db].back().push_back(link);
    }
  }
  return t;
}

/// (userLinks, itemLinks): userLinks routes user factors to item blocks (used
/// when solving items), itemLinks routes item factors to user blocks.
inline std::pair<LinkTables, LinkTables> buildLinkTables(std::span<const Rating> ratings, std::size_t numUserBlocks,
                                                         std::size_t numItemBlocks) {
  if (numUserBlocks < 1 || numItemBlocks < 1) throw InvalidArgument("block counts must be >= 1");
  auto user = [](const Rating& r) { return r.user; };
  auto item = [](const Rating& r) { return r.item; };
  return {buildDirectedLinks(ratings, numUserBlocks, numItemBlocks, user, item),
          buildDirectedLinks(ratings, numItemBlocks, numUserBlocks, item, user)};
}

// ---------------------------------------------------------------------------
// Normal equations
// ---------------------------------------------------------------------------

/// Least-squares solve for one entity given its neighbours' factors (rows of
/// `neighbors`, rank k each) and the matching rating values.
///  explicit: (YᵀY + λ·n·I) x = Yᵀr, n = number of ratings
///  implicit: (G + Yᵀ(C−I)Y + λI) x = YᵀC·p, c = 1 + α·r, p = [r > 0],
///            G = Gram of all source factors
inline DenseVector solveNormalEquation(std::size_t k, double regParam, bool implicitPrefs, double alpha,
                                       std::span<const double> neighbors, std::span<const double> values,
                                       const DenseMatrix* globalGram = nullptr) {
  if (neighbors.size() != values.size() * k) throw InvalidArgument("solveNormalEquation: neighbour/value size mismatch");
  if (!implicitPrefs && values.empty()) throw InvalidArgument("solveNormalEquation: explicit solve needs a rating");
  if (implicitPrefs && (globalGram == nullptr || globalGram->rows() != k || globalGram->cols() != k)) {
    throw InvalidArgument("solveNormalEquation: implicit solve needs a k x k global Gram matrix");
  }
  DenseMatrix a(k, k);
  DenseVector b(k);
  for (std::size_t r = 0; r < values.size(); ++r) {
    const auto y = neighbors.subspan(r * k, k);
    const double v = values[r];
    if (implicitPrefs) {
      const double c = 1.0 + alpha * v;
      const double p = v > 0.0 ? 1.0 : 0.0;
      addOuterUpper(a, c - 1.0, y);
      axpy(c * p, y, b.span());
    } else {
      addOuterUpper(a, 1.0, y);
      axpy(v, y, b.span());
    }
  }
  symmetrizeFromUpper(a);
  const double ridge = implicitPrefs ? regParam : regParam * static_cast<double>(values.size());
  for (std::size_t i = 0; i < k; ++i) {
    a(i, i) += ridge;
    if (implicitPrefs)
      for (std::size_t j = 0; j < k; ++j) a(i, j) += (*globalGram)(i, j);
  }
  return choleskySolve(a, b);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class ALSSide { Users, Items };

/// State after one half-step; `solved` names the side just updated.
struct ALSHalfStep {
  int iteration = 0;
  ALSSide solved = ALSSide::Items;
  const FactorTable& users;
  const FactorTable& items;
  /// Factor bytes routed between blocks in this half-step.
  std::uint64_t shippedBytes = 0;
};

namespace detail {

inline FactorTable initFactors(std::vector<std::int64_t> ids, std::size_t rank, std::uint64_t seed, ALSSide side) {
  std::vector<double> values(ids.size() * rank);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rank));
  for (std::size_t e = 0; e < ids.size(); ++e) {
    auto rng = keyedEngine(seed, {static_cast<std::uint64_t>(side), static_cast<std::uint64_t>(ids[e])});
    for (std::size_t j = 0; j < rank; ++j) values[e * rank + j] = uniform01(rng) * scale;
  }
  return FactorTable(rank, std::move(ids), std::move(values));
}

inline std::vector<std::int64_t> allIds(const LinkTables& incoming) {
  std::vector<std::int64_t> ids;
  for (const auto& block : incoming.inIds) ids.insert(ids.end(), block.begin(), block.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Gram of all source factors, one partial per source block, combined by tree aggregation.
inline DenseMatrix sourceGram(Context& ctx, const FactorTable& src, std::size_t numSrcBlocks, std::optional<int> depth) {
  const std::size_t k = src.rank();
  std::vector<std::vector<std::size_t>> rowsByBlock(numSrcBlocks);
  for (std::size_t i = 0; i < src.size(); ++i) rowsByBlock[blockOf(src.ids()[i], numSrcBlocks)].push_back(i);
  auto blocks = ctx.parallelize(std::move(rowsByBlock), numSrcBlocks);
  auto g = blocks.treeAggregate(
      DenseMatrix(k, k),
      [&](DenseMatrix& acc, const std::vector<std::size_t>& rows) {
        for (std::size_t i : rows) addOuterUpper(acc, 1.0, src.at(i));
      },
      [](DenseMatrix& a, const DenseMatrix& b) {
        for (std::size_t j = 0; j < a.cols(); ++j)
          for (std::size_t i = 0; i <= j; ++i) a(i, j) += b(i, j);
      },
      depth);
  symmetrizeFromUpper(g);
  return g;
}

/// Ships source factors per the routing tables, then solves every
/// destination entity. Returns the bytes routed.
inline std::uint64_t halfStep(Context& ctx, const ALSConfig& cfg, const LinkTables& links, const FactorTable& src,
                              FactorTable& dst) {
  const std::size_t k = cfg.rank;
  const std::uint64_t factorBytes = 8 * (k + 1);  // id + factor

  std::uint64_t shipped = 0;
  for (std::size_t sb = 0; sb < links.numSrcBlocks; ++sb)
    for (std::size_t db = 0; db < links.numDstBlocks; ++db) {
      const std::uint64_t copies = cfg.naiveRouting ? links.ratingCounts[sb][db] : links.outLinks[sb][db].size();
      shipped += copies * factorBytes;
    }
  ctx.ledger().chargeInterPartition(shipped);

  std::optional<DenseMatrix> gram;
  if (cfg.implicitPrefs) gram = sourceGram(ctx, src, links.numSrcBlocks, cfg.aggregationDepth);

  ctx.parallelFor(links.numDstBlocks, [&](std::size_t db) {
    // Received messages: per source block, the factors listed in outLinks.
    std::unordered_map<std::int64_t, std::span<const double>> received;
    for (std::size_t sb = 0; sb < links.numSrcBlocks; ++sb)
      for (std::int64_t id : links.outLinks[sb][db]) received.emplace(id, src.factor(id));

    std::vector<double> neighbors;
    std::vector<double> values;
    for (std::size_t e = 0; e < links.inIds[db].size(); ++e) {
      const auto& ratingLinks = links.inLinks[db][e];
      neighbors.clear();
      values.clear();
      for (const auto& link : ratingLinks) {
        const auto y = received.at(link.srcId);
        neighbors.insert(neighbors.end(), y.begin(), y.end());
        values.push_back(link.value);
      }
      const auto x = solveNormalEquation(k, cfg.regParam, cfg.implicitPrefs, cfg.alpha, neighbors, values,
                                         gram ? &*gram : nullptr);
      const auto index = *dst.indexOf(links.inIds[db][e]);
      std::copy(x.begin(), x.end(), dst.at(index).begin());
    }
  });
  return shipped;
}

}  // namespace detail

/// Alternates item and user solves for cfg.numIters iterations (items first).
/// `onHalfStep`, when set, observes the factors after every half-step.
inline ALSModel trainALS(const Dataset<Rating>& ratings, const ALSConfig& cfg,
                         const std::function<void(const ALSHalfStep&)>& onHalfStep = {}) {
  cfg.validate();
  if (ratings.empty()) throw EmptyInput("trainALS: empty ratings");
  Context& ctx = ratings.context();
  const auto all = ratings.toVector();
  // Both routing tables are built from one shuffle of the ratings to their blocks.
  ctx.ledger().chargeInterPartition(2 * wireSize(all));
  auto [userLinks, itemLinks] = buildLinkTables(all, cfg.numUserBlocks, cfg.numItemBlocks);

  ALSModel model;
  model.users = detail::initFactors(detail::allIds(itemLinks), cfg.rank, cfg.seed, ALSSide::Users);
  model.items = detail::initFactors(detail::allIds(userLinks), cfg.rank, cfg.seed, ALSSide::Items);

  for (int it = 1; it <= cfg.numIters; ++it) {
    auto bytes = detail::halfStep(ctx, cfg, userLinks, model.users, model.items);
    if (onHalfStep) onHalfStep(ALSHalfStep{it, ALSSide::Items, model.users, model.items, bytes});
    bytes = detail::halfStep(ctx, cfg, itemLinks, model.items, model.users);
    if (onHalfStep) onHalfStep(ALSHalfStep{it, ALSSide::Users, model.users, model.items, bytes});
  }
  return model;
}

inline ModelArtifact toArtifact(const ALSModel& m) {
  ModelArtifact a;
  a.modelType = ModelType::Als;
  a.params = {{"rank", m.users.rank()}};
  auto side = [](const FactorTable& t) {
    return nlohmann::json{{"ids", t.ids()}, {"factors", encodeArray(t.values())}};
  };
  a.payload = {{"users", side(m.users)}, {"items", side(m.items)}};
  return a;
}

inline ALSModel alsFromArtifact(const ModelArtifact& a) {
  expectModelType(a, {ModelType::Als});
  const auto rank = requireAs<std::size_t>(a.params, "rank");
  auto side = [rank](const nlohmann::json& j) {
    try {
      return FactorTable(rank, requireAs<std::vector<std::int64_t>>(j, "ids"), decodeArray(requireField(j, "factors")));
    } catch (const InvalidArgument& e) {
      throw ParseError(std::string("ALS payload: ") + e.what());
    }
  };
  return ALSModel{side(requireField(a.payload, "users")), side(requireField(a.payload, "items"))};
}

}  // namespace sparklet

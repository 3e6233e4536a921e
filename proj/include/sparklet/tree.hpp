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

// Decision trees and random forests over quantile-binned continuous features.
//
// Features are discretized once into at most maxBins intervals. Trees grow
// level by level: every level runs ONE aggregation that collects per
// (tree, node, feature, bin) sufficient statistics for all frontier nodes of
// all trees, so the number of passes is bounded by maxDepth + 1 regardless of
// forest size, and per-level communication depends only on the frontier
// shape, never on the number of examples.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sparklet/engine.hpp"
#include "sparklet/io.hpp"
#include "sparklet/linalg.hpp"
#include "sparklet/random.hpp"

namespace sparklet {

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

struct BinSpec {
  /// Per feature, strictly increasing thresholds; feature f has
  /// thresholds[f].size() + 1 bins.
  std::vector<std::vector<double>> thresholds;

  std::size_t numFeatures() const noexcept { return thresholds.size(); }
  std::size_t numBins(std::size_t f) const noexcept { return thresholds[f].size() + 1; }

  /// Number of thresholds strictly below x.
  std::uint32_t binOf(std::size_t f, double x) const noexcept {
    const auto& t = thresholds[f];
    return static_cast<std::uint32_t>(std::lower_bound(t.begin(), t.end(), x) - t.begin());
  }
};

namespace detail {

inline constexpr std::size_t kBinningSampleCap = 10000;

/// Thresholds for one feature from its sampled values (sorted in place).
inline std::vector<double> thresholdsFromSample(std::vector<double>& values, std::size_t maxBins) {
  std::sort(values.begin(), values.end());
  std::vector<double> distinct;
  for (double v : values)
    if (distinct.empty() || v != distinct.back()) distinct.push_back(v);

  std::vector<double> out;
  if (distinct.size() <= maxBins) {
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) out.push_back(distinct[i] + (distinct[i + 1] - distinct[i]) / 2.0);
    return out;
  }
  const double last = static_cast<double>(values.size() - 1);
  for (std::size_t i = 1; i < maxBins; ++i) {
    const double pos = static_cast<double>(i) / static_cast<double>(maxBins) * last;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    const double q = values[lo] + frac * (values[hi] - values[lo]);
    if (out.empty() || q > out.back()) out.push_back(q);
  }
  return out;
}

}  // namespace detail

/// Quantile thresholds per feature from a seeded sample of about
/// min(10000, sampleFraction·n) rows. A feature with at most maxBins distinct
/// sampled values gets midpoints between consecutive values instead.
inline BinSpec findSplitBins(const Dataset<LabeledPoint>& ds, std::size_t maxBins, double sampleFraction = 1.0,
                             std::uint64_t seed = 0) {
  if (maxBins < 2) throw InvalidArgument("maxBins must be >= 2");
  if (!(sampleFraction > 0.0 && sampleFraction <= 1.0)) throw InvalidArgument("sampleFraction must be in (0, 1]");
  if (ds.empty()) throw EmptyInput("findSplitBins: empty dataset");
  const std::size_t d = featureDimension(ds);
  const double n = static_cast<double>(ds.count());
  const double fraction = std::min(sampleFraction, static_cast<double>(detail::kBinningSampleCap) / n);

  using Columns = std::vector<std::vector<double>>;
  Columns sample = ds.treeAggregate(
      Columns(d),
      [&](Columns& cols, const LabeledPoint& p, std::size_t row) {
        if (p.features.size() != d) throw InvalidArgument("findSplitBins: inconsistent feature dimension");
        if (fraction < 1.0 && hashUniform(seed, {row}) >= fraction) return;
        for (std::size_t f = 0; f < d; ++f) cols[f].push_back(p.features.get(f));
      },
      [](Columns& a, const Columns& b) {
        for (std::size_t f = 0; f < a.size(); ++f) a[f].insert(a[f].end(), b[f].begin(), b[f].end());
      });

  BinSpec spec;
  spec.thresholds.reserve(d);
  for (auto& column : sample) spec.thresholds.push_back(detail::thresholdsFromSample(column, maxBins));
  return spec;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

enum class Impurity { Gini, Entropy, Variance };

inline std::string toString(Impurity i) {
  switch (i) {
    case Impurity::Gini: return "gini";
    case Impurity::Entropy: return "entropy";
    case Impurity::Variance: return "variance";
  }
  return "unknown";
}

inline Impurity impurityFromString(std::string_view name) {
  if (name == "gini") return Impurity::Gini;
  if (name == "entropy") return Impurity::Entropy;
  if (name == "variance") return Impurity::Variance;
  throw InvalidArgument("unknown impurity '" + std::string(name) + "'");
}

/// x[feature] <= threshold goes left. `bin` is the threshold's index in the
/// feature's BinSpec list.
struct Split {
  std::uint32_t feature = 0;
  double threshold = 0.0;
  std::uint32_t bin = 0;

  friend bool operator==(const Split&, const Split&) = default;
};

struct TreeNode {
  /// Breadth-first id: root 1, children 2i and 2i+1.
  std::uint64_t id = 1;
  bool leaf = true;
  double prediction = 0.0;
  double impurity = 0.0;
  /// Weighted example count reaching the node.
  double count = 0.0;
  // Internal nodes only.
  Split split;
  double gain = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::vector<TreeNode> nodes, Impurity impurity, std::size_t numClasses)
      : nodes_(std::move(nodes)), impurity_(impurity), numClasses_(numClasses) {}

  /// nodes()[0] is the root.
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  Impurity impurity() const noexcept { return impurity_; }
  std::size_t numClasses() const noexcept { return numClasses_; }
  bool isClassifier() const noexcept { return impurity_ != Impurity::Variance; }

  double predict(const Vector& x) const {
    const TreeNode* node = &nodes_.front();
    while (!node->leaf) {
      if (node->split.feature >= x.size()) throw InvalidArgument("predictTree: feature index out of range");
      node = &nodes_[static_cast<std::size_t>(x.get(node->split.feature) <= node->split.threshold ? node->left : node->right)];
    }
    return node->prediction;
  }

  int depth() const {
    int best = 0;
    for (const auto& n : nodes_) best = std::max(best, static_cast<int>(std::bit_width(n.id)) - 1);
    return best;
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
  Impurity impurity_ = Impurity::Gini;
  std::size_t numClasses_ = 2;
};

class Forest {
 public:
  Forest() = default;
  explicit Forest(std::vector<DecisionTree> trees) : trees_(std::move(trees)) {}

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }

  /// Majority vote (ties to the lowest label) or mean for regression.
  double predict(const Vector& x) const {
    if (trees_.empty()) throw InvalidArgument("empty forest");
    const auto& first = trees_.front();
    if (!first.isClassifier()) {
      double s = 0.0;
      for (const auto& t : trees_) s += t.predict(x);
      return s / static_cast<double>(trees_.size());
    }
    std::vector<std::size_t> votes(first.numClasses(), 0);
    for (const auto& t : trees_) ++votes[static_cast<std::size_t>(t.predict(x))];
    return static_cast<double>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }

  friend bool operator==(const Forest&, const Forest&) = default;

 private:
  std::vector<DecisionTree> trees_;
};

struct ForestConfig {
  std::size_t numTrees = 1;
  int maxDepth = 5;
  std::size_t maxBins = 32;
  Impurity impurity = Impurity::Gini;
  /// Classification labels must be integers in [0, numClasses).
  std::size_t numClasses = 2;
  double featureSubsetFraction = 1.0;
  bool bootstrap = false;
  double minInfoGain = 0.0;
  std::uint64_t seed = 0;
  std::optional<int> aggregationDepth;

  bool isClassification() const noexcept { return impurity != Impurity::Variance; }

  void validate() const {
    if (numTrees < 1) throw InvalidArgument("numTrees must be >= 1");
    if (maxDepth < 0) throw InvalidArgument("maxDepth must be >= 0");
    if (maxBins < 2) throw InvalidArgument("maxBins must be >= 2");
    if (isClassification() && numClasses < 1) throw InvalidArgument("numClasses must be >= 1");
    if (!(featureSubsetFraction > 0.0 && featureSubsetFraction <= 1.0)) {
      throw InvalidArgument("featureSubsetFraction must be in (0, 1]");
    }
    if (!(minInfoGain >= 0.0)) throw InvalidArgument("minInfoGain must be >= 0");
  }
};

struct ForestTrainingStats {
  /// Statistics-aggregation passes (one per grown level).
  std::size_t levelPasses = 0;
  /// Ledger bytes (all counters) spent on each level.
  std::vector<std::uint64_t> bytesPerLevel;
};

// ---------------------------------------------------------------------------
// Impurity arithmetic on aggregated statistics
// ---------------------------------------------------------------------------

namespace detail {

/// Classification stats are per-class weights; regression stats are
/// (count, sum, sumSq).
inline std::size_t statsWidth(const ForestConfig& cfg) { return cfg.isClassification() ? cfg.numClasses : 3; }

inline double statsCount(Impurity kind, const double* s, std::size_t width) {
  if (kind == Impurity::Variance) return s[0];
  double n = 0.0;
  for (std::size_t c = 0; c < width; ++c) n += s[c];
  return n;
}

inline double impurityOf(Impurity kind, const double* s, std::size_t width) {
  const double n = statsCount(kind, s, width);
  if (n <= 0.0) return 0.0;
  switch (kind) {
    case Impurity::Gini: {
      double sumSq = 0.0;
      for (std::size_t c = 0; c < width; ++c) sumSq += (s[c] / n) * (s[c] / n);
      return 1.0 - sumSq;
    }
    case Impurity::Entropy: {
      double h = 0.0;
      for (std::size_t c = 0; c < width; ++c) {
        if (s[c] <= 0.0) continue;
        const double p = s[c] / n;
        h -= p * std::log2(p);
      }
      return h;
    }
    case Impurity::Variance: {
      const double mean = s[1] / n;
      return std::max(0.0, s[2] / n - mean * mean);
    }
  }
  return 0.0;
}

inline double predictionOf(Impurity kind, const double* s, std::size_t width) {
  if (kind == Impurity::Variance) return s[0] > 0.0 ? s[1] / s[0] : 0.0;
  std::size_t best = 0;
  for (std::size_t c = 1; c < width; ++c)
    if (s[c] > s[best]) best = c;
  return static_cast<double>(best);
}

struct BinnedPoint {
  double label = 0.0;
  std::vector<std::uint32_t> bins;

  std::uint64_t wireSize() const noexcept { return 8 + 4 * bins.size(); }
};

/// Frontier node being grown in the current level.
struct FrontierSlot {
  std::size_t tree = 0;
  std::uint64_t node = 1;
  int depth = 0;
  std::vector<std::uint32_t> features;
  /// Start of each selected feature's bin block in the flat stats array.
  std::vector<std::size_t> featureOffsets;
};

/// Routing state shipped to the workers at the start of each level.
struct LevelPlan {
  std::vector<std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>>> splits;
  std::vector<std::unordered_map<std::uint64_t, std::size_t>> slotOf;
  std::vector<FrontierSlot> slots;

  std::uint64_t wireSize() const noexcept {
    std::uint64_t bytes = 0;
    for (const auto& t : splits) bytes += 16 * t.size();
    for (const auto& s : slots) bytes += 16 + 4 * s.features.size();
    return bytes;
  }
};

inline std::vector<std::uint32_t> selectFeatures(const ForestConfig& cfg, std::size_t d, std::size_t tree,
                                                 std::uint64_t node) {
  std::vector<std::uint32_t> all(d);
  std::iota(all.begin(), all.end(), 0u);
  if (cfg.featureSubsetFraction >= 1.0) return all;
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.featureSubsetFraction * static_cast<double>(d))));
  auto rng = keyedEngine(cfg.seed, {0x5eedf00dULL, tree, node});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (d - i));
    std::swap(all[i], all[j]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

struct SplitChoice {
  bool valid = false;
  std::uint32_t feature = 0;
  std::uint32_t bin = 0;
  double gain = 0.0;
};

/// Best split of one node from its per-bin statistics. Scans features and
/// thresholds in ascending order and keeps strict improvements, so equal
/// gains resolve to the lower feature, then the lower threshold.
inline SplitChoice bestSplit(const ForestConfig& cfg, const BinSpec& bins, const FrontierSlot& slot,
                             const double* stats, const std::vector<double>& total, double parentImpurity) {
  const std::size_t width = statsWidth(cfg);
  const double n = statsCount(cfg.impurity, total.data(), width);
  SplitChoice best;
  std::vector<double> left(width);
  std::vector<double> right(width);
  for (std::size_t fi = 0; fi < slot.features.size(); ++fi) {
    const std::uint32_t f = slot.features[fi];
    const double* block = stats + slot.featureOffsets[fi];
    std::fill(left.begin(), left.end(), 0.0);
    for (std::size_t b = 0; b + 1 < bins.numBins(f); ++b) {
      for (std::size_t c = 0; c < width; ++c) left[c] += block[b * width + c];
      for (std::size_t c = 0; c < width; ++c) right[c] = total[c] - left[c];
      const double nl = statsCount(cfg.impurity, left.data(), width);
      const double nr = statsCount(cfg.impurity, right.data(), width);
      if (nl <= 0.0 || nr <= 0.0) continue;
      const double gain = parentImpurity - (nl / n) * impurityOf(cfg.impurity, left.data(), width) -
                          (nr / n) * impurityOf(cfg.impurity, right.data(), width);
      if (!best.valid || gain > best.gain) best = {true, f, static_cast<std::uint32_t>(b), gain};
    }
  }
  return best;
}

/// Converts the id-keyed nodes of one tree into breadth-first flat storage.
inline DecisionTree flattenTree(const std::unordered_map<std::uint64_t, TreeNode>& byId, const ForestConfig& cfg) {
  std::vector<TreeNode> flat;
  std::vector<std::uint64_t> queue{1};
  std::unordered_map<std::uint64_t, std::int32_t> indexOf;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const TreeNode& n = byId.at(queue[q]);
    indexOf[n.id] = static_cast<std::int32_t>(flat.size());
    flat.push_back(n);
    if (!n.leaf) {
      queue.push_back(2 * n.id);
      queue.push_back(2 * n.id + 1);
    }
  }
  for (auto& n : flat) {
    if (n.leaf) continue;
    n.left = indexOf.at(2 * n.id);
    n.right = indexOf.at(2 * n.id + 1);
  }
  return DecisionTree(std::move(flat), cfg.impurity, cfg.isClassification() ? cfg.numClasses : 0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Grows all trees in lockstep: one statistics aggregation per level covers
/// every frontier node of every tree. Bootstrap uses Poisson(1) weights keyed
/// by (seed, tree, row); per-node feature subsets are keyed by (seed, tree,
/// node id).
inline Forest trainForest(const Dataset<LabeledPoint>& ds, const BinSpec& bins, const ForestConfig& cfg,
                          ForestTrainingStats* stats = nullptr) {
  cfg.validate();
  if (ds.empty()) throw EmptyInput("trainForest: empty dataset");
  const std::size_t d = featureDimension(ds);
  if (bins.numFeatures() != d) {
    throw InvalidArgument("trainForest: bin spec has " + std::to_string(bins.numFeatures()) + " features, data has " +
                          std::to_string(d));
  }
  Context& ctx = ds.context();
  const std::size_t width = detail::statsWidth(cfg);
  const bool classification = cfg.isClassification();

  const auto binned = ds.mapPartitions([&](std::span<const LabeledPoint> part) {
    std::vector<detail::BinnedPoint> out;
    out.reserve(part.size());
    std::vector<std::uint32_t> zeroBins(d);
    for (std::size_t f = 0; f < d; ++f) zeroBins[f] = bins.binOf(f, 0.0);
    for (const auto& p : part) {
      if (p.features.size() != d) throw InvalidArgument("trainForest: inconsistent feature dimension");
      if (classification) {
        const double y = p.label;
        if (!(y >= 0.0) || y != std::floor(y) || y >= static_cast<double>(cfg.numClasses)) {
          throw InvalidArgument("classification impurity '" + toString(cfg.impurity) +
                                "' needs integer labels in [0, " + std::to_string(cfg.numClasses) + "), got " +
                                formatDouble(y));
        }
      } else if (!std::isfinite(p.label)) {
        throw InvalidArgument("regression label must be finite");
      }
      detail::BinnedPoint bp{p.label, zeroBins};
      p.features.forEachActive([&](std::size_t f, double v) { bp.bins[f] = bins.binOf(f, v); });
      out.push_back(std::move(bp));
    }
    return out;
  });

  std::vector<std::unordered_map<std::uint64_t, TreeNode>> grown(cfg.numTrees);
  detail::LevelPlan plan;
  plan.splits.resize(cfg.numTrees);
  std::vector<std::pair<std::size_t, std::uint64_t>> frontier;
  for (std::size_t t = 0; t < cfg.numTrees; ++t) frontier.emplace_back(t, 1);
  ForestTrainingStats local;
  ForestTrainingStats& record = stats != nullptr ? *stats : local;
  record = {};

  for (int depth = 0; !frontier.empty(); ++depth) {
    plan.slots.clear();
    plan.slotOf.assign(cfg.numTrees, {});
    std::size_t flatSize = 0;
    for (const auto& [tree, node] : frontier) {
      detail::FrontierSlot slot{tree, node, depth, detail::selectFeatures(cfg, d, tree, node), {}};
      for (std::uint32_t f : slot.features) {
        slot.featureOffsets.push_back(flatSize);
        flatSize += bins.numBins(f) * width;
      }
      plan.slotOf[tree][node] = plan.slots.size();
      plan.slots.push_back(std::move(slot));
    }

    const auto before = ctx.ledger().snapshot().totalBytes();
    const auto shipped = ctx.broadcast(plan, ds.numPartitions());
    const std::size_t numTrees = cfg.numTrees;
    const bool bootstrap = cfg.bootstrap;
    const std::uint64_t seed = cfg.seed;
    auto seqOp = [&](std::vector<double>& acc, const detail::BinnedPoint& p, std::size_t row) {
      const auto& lp = shipped.value();
      for (std::size_t t = 0; t < numTrees; ++t) {
        std::uint64_t id = 1;
        const auto& splits = lp.splits[t];
        for (auto it = splits.find(id); it != splits.end(); it = splits.find(id)) {
          id = 2 * id + (p.bins[it->second.first] > it->second.second ? 1 : 0);
        }
        const auto slotIt = lp.slotOf[t].find(id);
        if (slotIt == lp.slotOf[t].end()) continue;
        const double w = bootstrap ? static_cast<double>(hashPoisson1(seed, {t, row})) : 1.0;
        if (w == 0.0) continue;
        const auto& slot = lp.slots[slotIt->second];
        for (std::size_t fi = 0; fi < slot.features.size(); ++fi) {
          double* cell = acc.data() + slot.featureOffsets[fi] + p.bins[slot.features[fi]] * width;
          if (classification) {
            cell[static_cast<std::size_t>(p.label)] += w;
          } else {
            cell[0] += w;
            cell[1] += w * p.label;
            cell[2] += w * p.label * p.label;
          }
        }
      }
    };
    auto combOp = [](std::vector<double>& a, const std::vector<double>& b) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    const std::vector<double> levelStats =
        binned.treeAggregate(std::vector<double>(flatSize, 0.0), seqOp, combOp, cfg.aggregationDepth);
    ++record.levelPasses;
    record.bytesPerLevel.push_back(ctx.ledger().snapshot().totalBytes() - before);

    std::vector<std::pair<std::size_t, std::uint64_t>> next;
    for (const auto& slot : plan.slots) {
      const double* base = levelStats.data();
      std::vector<double> total(width, 0.0);
      const std::uint32_t f0 = slot.features.front();
      for (std::size_t b = 0; b < bins.numBins(f0); ++b)
        for (std::size_t c = 0; c < width; ++c) total[c] += base[slot.featureOffsets.front() + b * width + c];

      TreeNode node;
      node.id = slot.node;
      node.count = detail::statsCount(cfg.impurity, total.data(), width);
      node.impurity = detail::impurityOf(cfg.impurity, total.data(), width);
      node.prediction = detail::predictionOf(cfg.impurity, total.data(), width);

      if (slot.depth < cfg.maxDepth && node.impurity > 0.0) {
        const auto choice = detail::bestSplit(cfg, bins, slot, base, total, node.impurity);
        if (choice.valid && choice.gain > 0.0 && choice.gain >= cfg.minInfoGain) {
          node.leaf = false;
          node.gain = choice.gain;
          node.split = {choice.feature, bins.thresholds[choice.feature][choice.bin], choice.bin};
          plan.splits[slot.tree][slot.node] = {choice.feature, choice.bin};
          next.emplace_back(slot.tree, 2 * slot.node);
          next.emplace_back(slot.tree, 2 * slot.node + 1);
        }
      }
      grown[slot.tree][slot.node] = node;
    }
    frontier = std::move(next);
  }

  std::vector<DecisionTree> trees;
  trees.reserve(cfg.numTrees);
  for (const auto& byId : grown) trees.push_back(detail::flattenTree(byId, cfg));
  return Forest(std::move(trees));
}

/// Single tree: a one-tree forest with the given configuration.
inline DecisionTree trainTree(const Dataset<LabeledPoint>& ds, const BinSpec& bins, ForestConfig cfg,
                              ForestTrainingStats* stats = nullptr) {
  cfg.numTrees = 1;
  return trainForest(ds, bins, cfg, stats).trees().front();
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json treeToJson(const DecisionTree& t) {
  auto nodes = nlohmann::json::array();
  for (const auto& n : t.nodes()) {
    nlohmann::json j = {{"id", n.id},
                        {"leaf", n.leaf},
                        {"prediction", encodeDouble(n.prediction)},
                        {"impurity", encodeDouble(n.impurity)},
                        {"count", encodeDouble(n.count)}};
    if (!n.leaf) {
      j["feature"] = n.split.feature;
      j["threshold"] = encodeDouble(n.split.threshold);
      j["bin"] = n.split.bin;
      j["gain"] = encodeDouble(n.gain);
      j["left"] = n.left;
      j["right"] = n.right;
    }
    nodes.push_back(std::move(j));
  }
  return {{"impurity", toString(t.impurity())}, {"numClasses", t.numClasses()}, {"nodes", nodes}};
}

inline DecisionTree treeFromJson(const nlohmann::json& j) {
  const Impurity impurity = impurityFromString(requireAs<std::string>(j, "impurity"));
  const auto numClasses = requireAs<std::size_t>(j, "numClasses");
  const auto& nodes = requireField(j, "nodes");
  if (!nodes.is_array() || nodes.empty()) throw ParseError("tree needs a non-empty node array");
  std::vector<TreeNode> flat;
  for (const auto& nj : nodes) {
    TreeNode n;
    n.id = requireAs<std::uint64_t>(nj, "id");
    n.leaf = requireAs<bool>(nj, "leaf");
    n.prediction = decodeDouble(requireField(nj, "prediction"));
    n.impurity = decodeDouble(requireField(nj, "impurity"));
    n.count = decodeDouble(requireField(nj, "count"));
    if (!n.leaf) {
      n.split.feature = requireAs<std::uint32_t>(nj, "feature");
      n.split.threshold = decodeDouble(requireField(nj, "threshold"));
      n.split.bin = requireAs<std::uint32_t>(nj, "bin");
      n.gain = decodeDouble(requireField(nj, "gain"));
      n.left = requireAs<std::int32_t>(nj, "left");
      n.right = requireAs<std::int32_t>(nj, "right");
    }
    flat.push_back(n);
  }
  for (const auto& n : flat) {
    if (n.leaf) continue;
    const auto size = static_cast<std::int32_t>(flat.size());
    if (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size) throw ParseError("tree child index out of range");
  }
  return DecisionTree(std::move(flat), impurity, numClasses);
}

}  // namespace detail

inline ModelArtifact toArtifact(const DecisionTree& t) {
  ModelArtifact a;
  a.modelType = ModelType::Tree;
  a.params = {{"impurity", toString(t.impurity())}, {"depth", t.depth()}};
  a.payload = {{"tree", detail::treeToJson(t)}};
  return a;
}

inline DecisionTree treeFromArtifact(const ModelArtifact& a) {
  expectModelType(a, {ModelType::Tree});
  return detail::treeFromJson(requireField(a.payload, "tree"));
}

inline ModelArtifact toArtifact(const Forest& f) {
  ModelArtifact a;
  a.modelType = ModelType::Forest;
  auto trees = nlohmann::json::array();
  for (const auto& t : f.trees()) trees.push_back(detail::treeToJson(t));
  a.params = {{"numTrees", f.trees().size()}};
  a.payload = {{"trees", trees}};
  return a;
}

inline Forest forestFromArtifact(const ModelArtifact& a) {
  expectModelType(a, {ModelType::Forest});
  const auto& trees = requireField(a.payload, "trees");
  if (!trees.is_array() || trees.empty()) throw ParseError("forest needs a non-empty tree array");
  std::vector<DecisionTree> out;
  for (const auto& t : trees) out.push_back(detail::treeFromJson(t));
  return Forest(std::move(out));
}

}  // namespace sparklet

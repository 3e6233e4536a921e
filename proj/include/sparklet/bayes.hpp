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
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparklet/engine.hpp"
#include "sparklet/io.hpp"
#include "sparklet/linalg.hpp"

namespace sparklet {

/// Multinomial naive Bayes.
struct NBModel {
  std::vector<double> labels;  // ascending
  std::vector<double> logPriors;
  std::vector<std::vector<double>> logCondProb;  // [class][feature]
  double smoothing = 1.0;

  std::size_t numFeatures() const noexcept { return logCondProb.empty() ? 0 : logCondProb.front().size(); }

  /// Class score logPrior(c) + Σ_j x_j·logCondProb(c, j); zero entries are
  /// skipped. Terms are summed in sorted order so the score does not depend on
  /// feature order and mirror-image inputs tie exactly.
  double score(std::size_t c, const Vector& x) const {
    std::vector<double> terms{logPriors[c]};
    x.forEachActive([&](std::size_t j, double v) {
      if (v != 0.0) terms.push_back(v * logCondProb[c][j]);
    });
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
  }

  /// Highest-scoring label; ties go to the lowest label.
  double predict(const Vector& x) const {
    if (x.size() != numFeatures()) {
      throw InvalidArgument("predictNB: expected " + std::to_string(numFeatures()) + " features, got " +
                            std::to_string(x.size()));
    }
    std::size_t best = 0;
    double bestScore = score(0, x);
    for (std::size_t c = 1; c < labels.size(); ++c) {
      const double s = score(c, x);
      if (s > bestScore) {
        bestScore = s;
        best = c;
      }
    }
    return labels[best];
  }
};

namespace detail {

struct ClassTotals {
  double count = 0.0;
  std::vector<double> featureSums;
};

struct NBAccumulator {
  std::map<double, ClassTotals> classes;

  std::uint64_t wireSize() const noexcept {
    std::uint64_t total = 0;
    for (const auto& [label, t] : classes) total += 16 + 8 * t.featureSums.size();
    return total;
  }
};

}  // namespace detail

/// One aggregation pass of per-class counts and feature sums.
/// With smoothing 0, a feature never seen in a class gets log-probability -inf.
inline NBModel trainNaiveBayes(const Dataset<LabeledPoint>& ds, double smoothing = 1.0,
                               std::optional<int> depth = std::nullopt) {
  if (!(smoothing >= 0.0)) throw InvalidArgument("naive Bayes smoothing must be >= 0");
  if (ds.empty()) throw EmptyInput("trainNaiveBayes: empty dataset");
  const std::size_t d = featureDimension(ds);

  auto acc = ds.treeAggregate(
      detail::NBAccumulator{},
      [d](detail::NBAccumulator& a, const LabeledPoint& p) {
        if (p.features.size() != d) {
          throw InvalidArgument("trainNaiveBayes: expected " + std::to_string(d) + " features, got " +
                                std::to_string(p.features.size()));
        }
        auto& totals = a.classes[p.label];
        if (totals.featureSums.empty()) totals.featureSums.assign(d, 0.0);
        totals.count += 1.0;
        p.features.forEachActive([&](std::size_t j, double v) {
          if (v < 0.0) throw InvalidArgument("naive Bayes requires non-negative features, got " + formatDouble(v));
          totals.featureSums[j] += v;
        });
      },
      [](detail::NBAccumulator& a, const detail::NBAccumulator& b) {
        for (const auto& [label, t] : b.classes) {
          auto& mine = a.classes[label];
          if (mine.featureSums.empty()) mine.featureSums.assign(t.featureSums.size(), 0.0);
          mine.count += t.count;
          for (std::size_t j = 0; j < t.featureSums.size(); ++j) mine.featureSums[j] += t.featureSums[j];
        }
      },
      depth);

  double n = 0.0;
  for (const auto& [label, t] : acc.classes) n += t.count;

  NBModel model;
  model.smoothing = smoothing;
  for (const auto& [label, t] : acc.classes) {
    model.labels.push_back(label);
    model.logPriors.push_back(std::log(t.count / n));
    double mass = 0.0;
    for (double s : t.featureSums) mass += s;
    const double denom = mass + smoothing * static_cast<double>(d);
    if (denom <= 0.0) {
      throw InvalidArgument("naive Bayes: class " + formatDouble(label) + " has no feature mass and smoothing is 0");
    }
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) row[j] = std::log((t.featureSums[j] + smoothing) / denom);
    model.logCondProb.push_back(std::move(row));
  }
  return model;
}

inline ModelArtifact toArtifact(const NBModel& m) {
  ModelArtifact a;
  a.modelType = ModelType::NaiveBayes;
  a.params = {{"smoothing", encodeDouble(m.smoothing)}, {"numFeatures", m.numFeatures()}};
  auto rows = nlohmann::json::array();
  for (const auto& r : m.logCondProb) rows.push_back(encodeArray(r));
  a.payload = {{"labels", encodeArray(m.labels)}, {"logPriors", encodeArray(m.logPriors)}, {"logCondProb", rows}};
  return a;
}

inline NBModel naiveBayesFromArtifact(const ModelArtifact& a) {
  expectModelType(a, {ModelType::NaiveBayes});
  NBModel m;
  m.smoothing = decodeDouble(requireField(a.params, "smoothing"));
  m.labels = decodeArray(requireField(a.payload, "labels"));
  m.logPriors = decodeArray(requireField(a.payload, "logPriors"));
  const auto& rows = requireField(a.payload, "logCondProb");
  if (!rows.is_array()) throw ParseError("logCondProb must be an array");
  for (const auto& r : rows) m.logCondProb.push_back(decodeArray(r));
  if (m.labels.empty() || m.labels.size() != m.logPriors.size() || m.labels.size() != m.logCondProb.size()) {
    throw ParseError("naive Bayes payload has inconsistent class counts");
  }
  return m;
}

}  // namespace sparklet

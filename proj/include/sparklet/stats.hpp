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
#include <limits>
#include <string>
#include <vector>

#include "sparklet/engine.hpp"
#include "sparklet/linalg.hpp"

namespace sparklet {

/// Per-column summary. Variance is the sample variance (n-1); 0 when n < 2.
struct SummaryStats {
  std::uint64_t count = 0;
  std::vector<double> mean;
  std::vector<double> m2;
  std::vector<double> min;
  std::vector<double> max;
  std::vector<std::uint64_t> nnz;

  std::size_t dim() const noexcept { return mean.size(); }

  std::vector<double> variance() const {
    std::vector<double> out(dim(), 0.0);
    if (count < 2) return out;
    for (std::size_t j = 0; j < dim(); ++j) out[j] = m2[j] / static_cast<double>(count - 1);
    return out;
  }
};

/// One-pass mergeable column accumulator. Only nonzero entries are folded;
/// the implicit zeros are merged in at finalize, so sparse rows never get
/// densified.
class ColumnStatsAccumulator {
 public:
  void add(const Vector& row) {
    if (!initialized_) init(row.size());
    if (row.size() != dim_) {
      throw InvalidArgument("colStats: mixed dimensions (" + std::to_string(dim_) + " vs " +
                            std::to_string(row.size()) + ")");
    }
    ++rows_;
    row.forEachActive([&](std::size_t j, double v) {
      if (v == 0.0) return;
      const double k = static_cast<double>(++nz_[j]);
      const double delta = v - mean_[j];
      mean_[j] += delta / k;
      m2_[j] += delta * (v - mean_[j]);
      min_[j] = std::min(min_[j], v);
      max_[j] = std::max(max_[j], v);
    });
  }

  void merge(const ColumnStatsAccumulator& other) {
    if (!other.initialized_) return;
    if (!initialized_) {
      *this = other;
      return;
    }
    if (other.dim_ != dim_) {
      throw InvalidArgument("colStats: mixed dimensions (" + std::to_string(dim_) + " vs " +
                            std::to_string(other.dim_) + ")");
    }
    rows_ += other.rows_;
    for (std::size_t j = 0; j < dim_; ++j) {
      mergeMoments(nz_[j], mean_[j], m2_[j], other.nz_[j], other.mean_[j], other.m2_[j]);
      min_[j] = std::min(min_[j], other.min_[j]);
      max_[j] = std::max(max_[j], other.max_[j]);
    }
  }

  SummaryStats finalize() const {
    if (rows_ == 0) throw EmptyInput("colStats: empty dataset");
    SummaryStats s;
    s.count = rows_;
    s.mean.resize(dim_);
    s.m2.resize(dim_);
    s.min.resize(dim_);
    s.max.resize(dim_);
    s.nnz.resize(dim_);
    for (std::size_t j = 0; j < dim_; ++j) {
      std::uint64_t n = nz_[j];
      double mean = mean_[j];
      double m2 = m2_[j];
      double lo = min_[j];
      double hi = max_[j];
      const std::uint64_t zeros = rows_ - nz_[j];
      if (zeros > 0) {
        mergeMoments(n, mean, m2, zeros, 0.0, 0.0);
        lo = std::min(lo, 0.0);
        hi = std::max(hi, 0.0);
      }
      s.nnz[j] = nz_[j];
      s.m2[j] = std::max(0.0, m2);
      s.min[j] = lo;
      s.max[j] = hi;
      s.mean[j] = std::clamp(mean, lo, hi);
    }
    return s;
  }

  std::uint64_t wireSize() const noexcept { return 8 * (1 + 5 * dim_); }

 private:
  void init(std::size_t d) {
    initialized_ = true;
    dim_ = d;
    nz_.assign(d, 0);
    mean_.assign(d, 0.0);
    m2_.assign(d, 0.0);
    min_.assign(d, std::numeric_limits<double>::infinity());
    max_.assign(d, -std::numeric_limits<double>::infinity());
  }

  // Chan et al. pairwise update of (count, mean, M2).
  static void mergeMoments(std::uint64_t& na, double& meanA, double& m2A, std::uint64_t nb, double meanB,
                           double m2B) {
    if (nb == 0) return;
    if (na == 0) {
      na = nb;
      meanA = meanB;
      m2A = m2B;
      return;
    }
    const double a = static_cast<double>(na);
    const double b = static_cast<double>(nb);
    const double n = a + b;
    const double delta = meanB - meanA;
    meanA += delta * (b / n);
    m2A += m2B + delta * delta * (a * b / n);
    na += nb;
  }

  bool initialized_ = false;
  std::size_t dim_ = 0;
  std::uint64_t rows_ = 0;
  std::vector<std::uint64_t> nz_;
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::vector<double> min_;
  std::vector<double> max_;
};

/// Column statistics over a dataset of vectors in one aggregation pass.
inline SummaryStats colStats(const Dataset<Vector>& ds, std::optional<int> depth = std::nullopt) {
  if (ds.empty()) throw EmptyInput("colStats: empty dataset");
  auto acc = ds.treeAggregate(
      ColumnStatsAccumulator{}, [](ColumnStatsAccumulator& a, const Vector& row) { a.add(row); },
      [](ColumnStatsAccumulator& a, const ColumnStatsAccumulator& b) { a.merge(b); }, depth);
  return acc.finalize();
}

}  // namespace sparklet

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
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sparklet/error.hpp"

namespace sparklet {

class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t size, double fill = 0.0) : values_(size, fill) {}
  explicit DenseVector(std::vector<double> values) : values_(std::move(values)) {}
  DenseVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<const double> span() const noexcept { return values_; }
  std::span<double> span() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }
  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }

  std::uint64_t wireSize() const noexcept { return 8 * values_.size(); }

  friend bool operator==(const DenseVector&, const DenseVector&) = default;

 private:
  std::vector<double> values_;
};

class SparseVector {
 public:
  SparseVector() = default;

  /// Indices must be strictly increasing and below `size`.
  SparseVector(std::size_t size, std::vector<std::uint32_t> indices, std::vector<double> values)
      : size_(size), indices_(std::move(indices)), values_(std::move(values)) {
    if (indices_.size() != values_.size()) throw InvalidArgument("sparse vector: indices/values length mismatch");
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      if (indices_[i] >= size_) throw InvalidArgument("sparse vector: index " + std::to_string(indices_[i]) + " out of range");
      if (i > 0 && indices_[i] <= indices_[i - 1]) throw InvalidArgument("sparse vector: indices not strictly increasing");
    }
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t nnz() const noexcept { return indices_.size(); }
  const std::vector<std::uint32_t>& indices() const noexcept { return indices_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double get(std::size_t i) const noexcept {
    auto it = std::lower_bound(indices_.begin(), indices_.end(), i);
    return it != indices_.end() && *it == i ? values_[static_cast<std::size_t>(it - indices_.begin())] : 0.0;
  }

  // 4-byte index plus 8-byte value per stored entry.
  std::uint64_t wireSize() const noexcept { return 12 * indices_.size(); }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
};

/// Either a dense or a sparse vector.
class Vector {
 public:
  Vector() = default;
  Vector(DenseVector v) : storage_(std::move(v)) {}
  Vector(SparseVector v) : storage_(std::move(v)) {}

  bool isSparse() const noexcept { return std::holds_alternative<SparseVector>(storage_); }
  const DenseVector& dense() const { return std::get<DenseVector>(storage_); }
  const SparseVector& sparse() const { return std::get<SparseVector>(storage_); }

  std::size_t size() const noexcept {
    return std::visit([](const auto& v) { return v.size(); }, storage_);
  }

  double get(std::size_t i) const noexcept {
    if (const auto* d = std::get_if<DenseVector>(&storage_)) return (*d)[i];
    return std::get<SparseVector>(storage_).get(i);
  }

  /// Calls f(index, value) for each stored entry in index order.
  template <class F>
  void forEachActive(F&& f) const {
    if (const auto* d = std::get_if<DenseVector>(&storage_)) {
      for (std::size_t i = 0; i < d->size(); ++i) f(i, (*d)[i]);
    } else {
      const auto& s = std::get<SparseVector>(storage_);
      for (std::size_t k = 0; k < s.nnz(); ++k) f(static_cast<std::size_t>(s.indices()[k]), s.values()[k]);
    }
  }

  DenseVector toDense() const {
    if (const auto* d = std::get_if<DenseVector>(&storage_)) return *d;
    DenseVector out(size());
    forEachActive([&](std::size_t i, double v) { out[i] = v; });
    return out;
  }

  std::uint64_t wireSize() const noexcept {
    return std::visit([](const auto& v) { return v.wireSize(); }, storage_);
  }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::variant<DenseVector, SparseVector> storage_;
};

/// Column-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> columnMajor)
      : rows_(rows), cols_(cols), values_(std::move(columnMajor)) {
    if (values_.size() != rows_ * cols_) throw InvalidArgument("dense matrix: values length != rows*cols");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  /// Row-major literal, convenient for small fixed matrices.
  static DenseMatrix fromRows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    DenseMatrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw InvalidArgument("dense matrix: ragged rows");
      std::size_t j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return values_[j * rows_ + i]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return values_[j * rows_ + i]; }
  const std::vector<double>& values() const noexcept { return values_; }

  DenseVector column(std::size_t j) const {
    return DenseVector(std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(j * rows_),
                                           values_.begin() + static_cast<std::ptrdiff_t>((j + 1) * rows_)));
  }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t j = 0; j < cols_; ++j)
      for (std::size_t i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
    return t;
  }

  std::uint64_t wireSize() const noexcept { return 8 * values_.size(); }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Level-1 kernels
// ---------------------------------------------------------------------------

namespace detail {
inline void requireSameSize(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw InvalidArgument(std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
  }
}

inline double dotSparseDense(const SparseVector& s, std::span<const double> d) {
  double sum = 0.0;
  for (std::size_t k = 0; k < s.nnz(); ++k) sum += s.values()[k] * d[s.indices()[k]];
  return sum;
}

inline double dotSparseSparse(const SparseVector& a, const SparseVector& b) {
  double sum = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.nnz() && j < b.nnz()) {
    if (a.indices()[i] == b.indices()[j]) {
      sum += a.values()[i++] * b.values()[j++];
    } else if (a.indices()[i] < b.indices()[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return sum;
}
}  // namespace detail

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::requireSameSize(a.size(), b.size(), "dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double dot(const DenseVector& a, const DenseVector& b) { return dot(a.span(), b.span()); }

inline double dot(const Vector& a, const Vector& b) {
  detail::requireSameSize(a.size(), b.size(), "dot");
  if (!a.isSparse() && !b.isSparse()) return dot(a.dense(), b.dense());
  if (a.isSparse() && b.isSparse()) return detail::dotSparseSparse(a.sparse(), b.sparse());
  if (a.isSparse()) return detail::dotSparseDense(a.sparse(), b.dense().span());
  return detail::dotSparseDense(b.sparse(), a.dense().span());
}

inline double dot(const Vector& a, std::span<const double> b) {
  detail::requireSameSize(a.size(), b.size(), "dot");
  if (a.isSparse()) return detail::dotSparseDense(a.sparse(), b);
  return dot(a.dense().span(), b);
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  detail::requireSameSize(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void axpy(double alpha, const Vector& x, std::span<double> y) {
  detail::requireSameSize(x.size(), y.size(), "axpy");
  x.forEachActive([&](std::size_t i, double v) { y[i] += alpha * v; });
}

inline void scal(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline double squaredDistance(std::span<const double> a, std::span<const double> b) {
  detail::requireSameSize(a.size(), b.size(), "squaredDistance");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Level-2/3 kernels
// ---------------------------------------------------------------------------

/// A * x
inline DenseVector gemv(const DenseMatrix& a, std::span<const double> x) {
  detail::requireSameSize(a.cols(), x.size(), "gemv");
  DenseVector y(a.rows());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] += a(i, j) * xj;
  }
  return y;
}

/// G += alpha * x xᵀ, upper triangle only; call symmetrizeFromUpper() once done.
inline void addOuterUpper(DenseMatrix& g, double alpha, std::span<const double> x) {
  detail::requireSameSize(g.rows(), x.size(), "addOuter");
  detail::requireSameSize(g.cols(), x.size(), "addOuter");
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double axj = alpha * x[j];
    if (axj == 0.0) continue;
    for (std::size_t i = 0; i <= j; ++i) g(i, j) += x[i] * axj;
  }
}

inline void symmetrizeFromUpper(DenseMatrix& g) {
  for (std::size_t j = 0; j < g.cols(); ++j)
    for (std::size_t i = j + 1; i < g.rows(); ++i) g(i, j) = g(j, i);
}

/// Σ x xᵀ over the given rows. Output is bitwise symmetric.
inline DenseMatrix gram(std::span<const DenseVector> rows, std::size_t dim) {
  DenseMatrix g(dim, dim);
  for (const auto& r : rows) addOuterUpper(g, 1.0, r.span());
  symmetrizeFromUpper(g);
  return g;
}

/// Solves A x = b for symmetric positive definite A (lower triangle read).
inline DenseVector choleskySolve(const DenseMatrix& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  detail::requireSameSize(a.rows(), a.cols(), "choleskySolve");
  detail::requireSameSize(n, b.size(), "choleskySolve");
  double maxDiag = 0.0;
  for (std::size_t i = 0; i < n; ++i) maxDiag = std::max(maxDiag, std::abs(a(i, i)));
  const double pivotFloor = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * maxDiag;

  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > pivotFloor)) {
      throw SingularMatrix("choleskySolve: non-positive pivot at column " + std::to_string(j));
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }

  DenseVector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * y[k];
    y[i] = v / l(i, i);
  }
  DenseVector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double v = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) v -= l(k, ii) * x[k];
    x[ii] = v / l(ii, ii);
  }
  return x;
}

inline DenseVector choleskySolve(const DenseMatrix& a, const DenseVector& b) { return choleskySolve(a, b.span()); }

struct EigenDecomposition {
  /// Descending.
  std::vector<double> values;
  /// Orthonormal columns, matching `values`; largest-magnitude entry positive.
  DenseMatrix vectors;
};

/// Flips the sign of column j so its largest-magnitude entry (lowest index on
/// ties) is positive.
inline void canonicalizeColumnSign(DenseMatrix& m, std::size_t j) {
  std::size_t best = 0;
  double bestAbs = -1.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (std::abs(m(i, j)) > bestAbs) {
      bestAbs = std::abs(m(i, j));
      best = i;
    }
  }
  if (m.rows() > 0 && m(best, j) < 0.0) {
    for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) = -m(i, j);
  }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Sweeps until the
/// off-diagonal Frobenius norm drops below 1e-12·‖A‖F, at most 64 sweeps.
inline EigenDecomposition symEig(const DenseMatrix& input) {
  const std::size_t n = input.rows();
  detail::requireSameSize(input.rows(), input.cols(), "symEig");
  double maxAbs = 0.0;
  for (double v : input.values()) maxAbs = std::max(maxAbs, std::abs(v));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = j + 1; i < n; ++i)
      if (std::abs(input(i, j) - input(j, i)) > 1e-10 * std::max(1.0, maxAbs)) {
        throw InvalidArgument("symEig: matrix is not symmetric");
      }

  DenseMatrix a = input;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = j + 1; i < n; ++i) a(i, j) = a(j, i) = 0.5 * (input(i, j) + input(j, i));
  DenseMatrix v = DenseMatrix::identity(n);

  double frob = 0.0;
  for (double x : a.values()) frob += x * x;
  frob = std::sqrt(frob);
  auto offNorm = [&] {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < 64 && offNorm() > 1e-12 * frob; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigenDecomposition out{std::vector<double>(n), DenseMatrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    canonicalizeColumnSign(out.vectors, j);
  }
  return out;
}

}  // namespace sparklet

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

// Estimator/transformer pipelines over a small named-column table, plus
// grid-search cross-validation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sparklet/bayes.hpp"
#include "sparklet/cluster.hpp"
#include "sparklet/engine.hpp"
#include "sparklet/glm.hpp"
#include "sparklet/io.hpp"
#include "sparklet/linalg.hpp"
#include "sparklet/pca.hpp"
#include "sparklet/random.hpp"
#include "sparklet/stats.hpp"
#include "sparklet/tree.hpp"

namespace sparklet {

// ---------------------------------------------------------------------------
// ColumnTable
// ---------------------------------------------------------------------------

using Column = std::variant<std::vector<double>, std::vector<Vector>, std::vector<std::int64_t>>;

inline const char* columnTypeName(const Column& c) {
  switch (c.index()) {
    case 0: return "float";
    case 1: return "vector";
    default: return "integer";
  }
}

inline std::size_t columnLength(const Column& c) {
  return std::visit([](const auto& v) { return v.size(); }, c);
}

/// Named columns of equal length, in insertion order. Plain value type.
class ColumnTable {
 public:
  ColumnTable() = default;

  std::size_t numRows() const noexcept { return rows_; }
  std::size_t numColumns() const noexcept { return columns_.size(); }
  bool has(const std::string& name) const { return find(name) != nullptr; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, col] : columns_) out.push_back(name);
    return out;
  }

  /// Adds a column; the name must be new and the length must match.
  ColumnTable& add(std::string name, Column column) {
    if (has(name)) throw SchemaError("column '" + name + "' already exists");
    checkLength(name, column);
    if (columns_.empty()) rows_ = columnLength(column);
    columns_.emplace_back(std::move(name), std::move(column));
    return *this;
  }

  /// Adds or overwrites a column.
  ColumnTable& set(std::string name, Column column) {
    for (auto& [n, col] : columns_) {
      if (n == name) {
        if (columns_.size() > 1) checkLength(name, column);
        col = std::move(column);
        if (columns_.size() == 1) rows_ = columnLength(col);
        return *this;
      }
    }
    return add(std::move(name), std::move(column));
  }

  const Column& column(const std::string& name) const {
    const Column* c = find(name);
    if (c == nullptr) throw SchemaError("missing column '" + name + "'");
    return *c;
  }

  template <class T>
  const std::vector<T>& get(const std::string& name) const {
    const Column& c = column(name);
    const auto* v = std::get_if<std::vector<T>>(&c);
    if (v == nullptr) throw SchemaError("column '" + name + "' has type " + columnTypeName(c));
    return *v;
  }

  /// Reads a numeric column as doubles (float or integer columns).
  std::vector<double> numeric(const std::string& name) const {
    const Column& c = column(name);
    if (const auto* d = std::get_if<std::vector<double>>(&c)) return *d;
    if (const auto* i = std::get_if<std::vector<std::int64_t>>(&c)) return {i->begin(), i->end()};
    throw SchemaError("column '" + name + "' is not numeric");
  }

  /// Rows at the given indices, in that order.
  ColumnTable select(std::span<const std::size_t> rows) const {
    ColumnTable out;
    for (const auto& [name, col] : columns_) {
      out.add(name, std::visit(
                        [&](const auto& v) -> Column {
                          std::remove_cvref_t<decltype(v)> picked;
                          picked.reserve(rows.size());
                          for (std::size_t r : rows) picked.push_back(v.at(r));
                          return picked;
                        },
                        col));
    }
    if (columns_.empty()) out.rows_ = 0;
    return out;
  }

  bool operator==(const ColumnTable& other) const {
    return rows_ == other.rows_ && columns_ == other.columns_;
  }

 private:
  const Column* find(const std::string& name) const {
    for (const auto& [n, col] : columns_)
      if (n == name) return &col;
    return nullptr;
  }

  void checkLength(const std::string& name, const Column& column) const {
    if (!columns_.empty() && columnLength(column) != rows_) {
      throw SchemaError("column '" + name + "' has " + std::to_string(columnLength(column)) + " rows, table has " +
                        std::to_string(rows_));
    }
  }

  std::vector<std::pair<std::string, Column>> columns_;
  std::size_t rows_ = 0;
};

/// Builds a table with "label" (float) and "features" (vector) columns.
inline ColumnTable tableFromPoints(std::span<const LabeledPoint> points, const std::string& labelCol = "label",
                                   const std::string& featuresCol = "features") {
  std::vector<double> labels;
  std::vector<Vector> features;
  for (const auto& p : points) {
    labels.push_back(p.label);
    features.push_back(p.features);
  }
  ColumnTable t;
  t.add(labelCol, std::move(labels));
  t.add(featuresCol, std::move(features));
  return t;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

using ParamValue = std::variant<double, std::int64_t, bool, std::string>;

enum class ParamType { Float, Integer, Bool, String };

inline const char* toString(ParamType t) {
  switch (t) {
    case ParamType::Float: return "float";
    case ParamType::Integer: return "integer";
    case ParamType::Bool: return "bool";
    case ParamType::String: return "string";
  }
  return "?";
}

struct ParamSpec {
  std::string name;
  ParamType type;
  ParamValue defaultValue;
};

/// (stageId, paramName) -> value overrides, applied at fit time.
class ParamMap {
 public:
  ParamMap& set(const std::string& stageId, const std::string& name, ParamValue value) {
    values_[{stageId, name}] = std::move(value);
    return *this;
  }

  /// Entries of `other` win.
  ParamMap merged(const ParamMap& other) const {
    ParamMap out = *this;
    for (const auto& [key, v] : other.values_) out.values_[key] = v;
    return out;
  }

  const std::map<std::pair<std::string, std::string>, ParamValue>& entries() const noexcept { return values_; }
  bool empty() const noexcept { return values_.empty(); }

 private:
  std::map<std::pair<std::string, std::string>, ParamValue> values_;
};

/// A stage's parameters after defaults and overrides are merged and checked.
class Params {
 public:
  Params() = default;

  static Params resolve(const std::string& stageId, const std::vector<ParamSpec>& specs, const ParamMap& overrides) {
    Params out;
    for (const auto& s : specs) out.values_[s.name] = s.defaultValue;
    for (const auto& [key, value] : overrides.entries()) {
      if (key.first != stageId) continue;
      const auto spec = std::find_if(specs.begin(), specs.end(), [&](const ParamSpec& s) { return s.name == key.second; });
      if (spec == specs.end()) throw ParamError("stage '" + stageId + "' has no parameter '" + key.second + "'");
      out.values_[key.second] = coerce(stageId, *spec, value);
    }
    return out;
  }

  double getDouble(const std::string& name) const { return std::get<double>(values_.at(name)); }
  std::int64_t getInt(const std::string& name) const { return std::get<std::int64_t>(values_.at(name)); }
  bool getBool(const std::string& name) const { return std::get<bool>(values_.at(name)); }
  const std::string& getString(const std::string& name) const { return std::get<std::string>(values_.at(name)); }

 private:
  static ParamValue coerce(const std::string& stageId, const ParamSpec& spec, const ParamValue& v) {
    const bool ok = (spec.type == ParamType::Float && (std::holds_alternative<double>(v) ||
                                                        std::holds_alternative<std::int64_t>(v))) ||
                    (spec.type == ParamType::Integer && std::holds_alternative<std::int64_t>(v)) ||
                    (spec.type == ParamType::Bool && std::holds_alternative<bool>(v)) ||
                    (spec.type == ParamType::String && std::holds_alternative<std::string>(v));
    if (!ok) {
      throw ParamError("stage '" + stageId + "' parameter '" + spec.name + "' expects " + toString(spec.type));
    }
    if (spec.type == ParamType::Float && std::holds_alternative<std::int64_t>(v)) {
      return static_cast<double>(std::get<std::int64_t>(v));
    }
    return v;
  }

  std::map<std::string, ParamValue> values_;
};

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

class Transformer;
using TransformerPtr = std::shared_ptr<const Transformer>;

class Stage {
 public:
  explicit Stage(std::string id) : id_(std::move(id)) {}
  virtual ~Stage() = default;

  const std::string& id() const noexcept { return id_; }
  virtual std::vector<ParamSpec> paramSpecs() const { return {}; }

 private:
  std::string id_;
};

class Transformer : public Stage {
 public:
  using Stage::Stage;

  /// Returns a new table; the input is never modified.
  virtual ColumnTable transform(const ColumnTable& table) const = 0;

  /// Copy with fit-time parameter overrides applied. Stateless transformers
  /// with parameters override this.
  virtual TransformerPtr configured(const Params&) const = 0;

  virtual nlohmann::json toRecord() const = 0;
};

class Estimator : public Stage {
 public:
  using Stage::Stage;
  virtual TransformerPtr fit(Context& ctx, const ColumnTable& table, const Params& params) const = 0;
};

using PipelineStage = std::variant<TransformerPtr, std::shared_ptr<const Estimator>>;

namespace detail {

inline void requireInput(const std::string& stage, const ColumnTable& t, const std::string& col) {
  if (!t.has(col)) throw SchemaError("stage '" + stage + "': missing input column '" + col + "'");
}

inline void requireFreshOutput(const std::string& stage, const ColumnTable& t, const std::string& col, bool replace) {
  if (!replace && t.has(col)) throw SchemaError("stage '" + stage + "': output column '" + col + "' already exists");
}

inline std::vector<Vector> featureColumn(const std::string& stage, const ColumnTable& t, const std::string& col) {
  requireInput(stage, t, col);
  try {
    return t.get<Vector>(col);
  } catch (const SchemaError& e) {
    throw SchemaError("stage '" + stage + "': " + e.what());
  }
}

inline Dataset<LabeledPoint> labeledDataset(Context& ctx, const std::string& stage, const ColumnTable& t,
                                            const std::string& featuresCol, const std::string& labelCol) {
  const auto features = featureColumn(stage, t, featuresCol);
  requireInput(stage, t, labelCol);
  const auto labels = t.numeric(labelCol);
  std::vector<LabeledPoint> points;
  points.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) points.push_back({labels[i], features[i]});
  return ctx.parallelize(std::move(points));
}

inline Dataset<Vector> vectorDataset(Context& ctx, const std::string& stage, const ColumnTable& t,
                                     const std::string& featuresCol) {
  return ctx.parallelize(featureColumn(stage, t, featuresCol));
}

inline std::optional<int> depthParam(const Params& p) {
  const auto d = p.getInt("aggregationDepth");
  return d > 0 ? std::optional<int>(static_cast<int>(d)) : std::nullopt;
}

}  // namespace detail

/// Feature column in, one float column out, computed row by row.
class PredictionTransformer : public Transformer {
 public:
  PredictionTransformer(std::string id, std::string featuresCol, std::string outputCol)
      : Transformer(std::move(id)), featuresCol_(std::move(featuresCol)), outputCol_(std::move(outputCol)) {}

  const std::string& featuresCol() const noexcept { return featuresCol_; }
  const std::string& outputCol() const noexcept { return outputCol_; }

  ColumnTable transform(const ColumnTable& table) const override {
    const auto features = detail::featureColumn(id(), table, featuresCol_);
    detail::requireFreshOutput(id(), table, outputCol_, false);
    std::vector<double> out;
    out.reserve(features.size());
    for (const auto& x : features) out.push_back(predictRow(x));
    ColumnTable result = table;
    result.add(outputCol_, std::move(out));
    return result;
  }

  TransformerPtr configured(const Params&) const override { return nullptr; }

  virtual double predictRow(const Vector& x) const = 0;

 protected:
  nlohmann::json baseRecord(const std::string& kind) const {
    return {{"stage", kind}, {"id", id()}, {"featuresCol", featuresCol_}, {"outputCol", outputCol_}};
  }

 private:
  std::string featuresCol_;
  std::string outputCol_;
};

/// Wraps a trained model so it can sit in a pipeline.
template <class Model>
class ModelTransformer final : public PredictionTransformer {
 public:
  ModelTransformer(std::string id, std::string featuresCol, std::string outputCol, Model model)
      : PredictionTransformer(std::move(id), std::move(featuresCol), std::move(outputCol)), model_(std::move(model)) {}

  const Model& model() const noexcept { return model_; }

  double predictRow(const Vector& x) const override {
    if constexpr (std::is_same_v<Model, GLMModel>) {
      return model_.kind == GLMKind::Logistic ? model_.classify(x) : model_.predict(x);
    } else if constexpr (std::is_same_v<Model, KMeansModel>) {
      return static_cast<double>(model_.predict(x));
    } else {
      return model_.predict(x);
    }
  }

  nlohmann::json toRecord() const override {
    auto r = baseRecord("model");
    r["model"] = toJson(toArtifact(model_));
    return r;
  }

 private:
  Model model_;
};

// Built-in feature transformers -------------------------------------------

/// Multiplies a vector column by a constant ("factor").
class VectorScaler final : public Transformer {
 public:
  VectorScaler(std::string id, std::string inputCol, std::string outputCol, double factor = 1.0)
      : Transformer(std::move(id)), inputCol_(std::move(inputCol)), outputCol_(std::move(outputCol)), factor_(factor) {}

  std::vector<ParamSpec> paramSpecs() const override { return {{"factor", ParamType::Float, factor_}}; }

  TransformerPtr configured(const Params& p) const override {
    return std::make_shared<VectorScaler>(id(), inputCol_, outputCol_, p.getDouble("factor"));
  }

  ColumnTable transform(const ColumnTable& table) const override {
    auto column = detail::featureColumn(id(), table, inputCol_);
    detail::requireFreshOutput(id(), table, outputCol_, outputCol_ == inputCol_);
    for (auto& x : column) {
      if (x.isSparse()) {
        auto values = x.sparse().values();
        for (auto& v : values) v *= factor_;
        x = SparseVector(x.size(), x.sparse().indices(), std::move(values));
      } else {
        DenseVector d = x.dense();
        scal(factor_, d.span());
        x = std::move(d);
      }
    }
    ColumnTable out = table;
    out.set(outputCol_, std::move(column));
    return out;
  }

  nlohmann::json toRecord() const override {
    return {{"stage", "vector-scaler"}, {"id", id()}, {"inputCol", inputCol_}, {"outputCol", outputCol_},
            {"factor", encodeDouble(factor_)}};
  }

 private:
  std::string inputCol_;
  std::string outputCol_;
  double factor_;
};

/// 1.0 where value > threshold, else 0.0. Works on float and vector columns.
class Binarizer final : public Transformer {
 public:
  Binarizer(std::string id, std::string inputCol, std::string outputCol, double threshold = 0.0)
      : Transformer(std::move(id)), inputCol_(std::move(inputCol)), outputCol_(std::move(outputCol)),
        threshold_(threshold) {}

  std::vector<ParamSpec> paramSpecs() const override { return {{"threshold", ParamType::Float, threshold_}}; }

  TransformerPtr configured(const Params& p) const override {
    return std::make_shared<Binarizer>(id(), inputCol_, outputCol_, p.getDouble("threshold"));
  }

  ColumnTable transform(const ColumnTable& table) const override {
    detail::requireInput(id(), table, inputCol_);
    detail::requireFreshOutput(id(), table, outputCol_, outputCol_ == inputCol_);
    const Column& in = table.column(inputCol_);
    Column out;
    if (std::holds_alternative<std::vector<Vector>>(in)) {
      std::vector<Vector> rows;
      for (const auto& x : std::get<std::vector<Vector>>(in)) {
        DenseVector d(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) d[j] = x.get(j) > threshold_ ? 1.0 : 0.0;
        rows.emplace_back(std::move(d));
      }
      out = std::move(rows);
    } else {
      std::vector<double> rows;
      for (double v : table.numeric(inputCol_)) rows.push_back(v > threshold_ ? 1.0 : 0.0);
      out = std::move(rows);
    }
    ColumnTable result = table;
    result.set(outputCol_, std::move(out));
    return result;
  }

  nlohmann::json toRecord() const override {
    return {{"stage", "binarizer"}, {"id", id()}, {"inputCol", inputCol_}, {"outputCol", outputCol_},
            {"threshold", encodeDouble(threshold_)}};
  }

 private:
  std::string inputCol_;
  std::string outputCol_;
  double threshold_;
};

/// Concatenates numeric and vector columns into one vector column. The
/// output is sparse when any input vector is sparse.
class VectorAssembler final : public Transformer {
 public:
  VectorAssembler(std::string id, std::vector<std::string> inputCols, std::string outputCol)
      : Transformer(std::move(id)), inputCols_(std::move(inputCols)), outputCol_(std::move(outputCol)) {}

  TransformerPtr configured(const Params&) const override { return nullptr; }

  ColumnTable transform(const ColumnTable& table) const override {
    for (const auto& c : inputCols_) detail::requireInput(id(), table, c);
    detail::requireFreshOutput(id(), table, outputCol_, false);
    const std::size_t n = table.numRows();
    bool sparse = false;
    for (const auto& c : inputCols_) {
      if (const auto* v = std::get_if<std::vector<Vector>>(&table.column(c))) {
        for (const auto& x : *v) sparse = sparse || x.isSparse();
      }
    }
    std::vector<Vector> rows;
    rows.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<std::uint32_t> idx;
      std::vector<double> vals;
      std::size_t offset = 0;
      auto push = [&](std::size_t j, double v) {
        if (!sparse || v != 0.0) {
          idx.push_back(static_cast<std::uint32_t>(offset + j));
          vals.push_back(v);
        }
      };
      for (const auto& c : inputCols_) {
        const Column& col = table.column(c);
        if (const auto* v = std::get_if<std::vector<Vector>>(&col)) {
          const Vector& x = (*v)[r];
          if (sparse) {
            x.forEachActive(push);
          } else {
            for (std::size_t j = 0; j < x.size(); ++j) push(j, x.get(j));
          }
          offset += x.size();
        } else if (const auto* d = std::get_if<std::vector<double>>(&col)) {
          push(0, (*d)[r]);
          offset += 1;
        } else {
          push(0, static_cast<double>(std::get<std::vector<std::int64_t>>(col)[r]));
          offset += 1;
        }
      }
      if (sparse) {
        rows.emplace_back(SparseVector(offset, std::move(idx), std::move(vals)));
      } else {
        rows.emplace_back(DenseVector(std::move(vals)));
      }
    }
    ColumnTable out = table;
    out.add(outputCol_, std::move(rows));
    return out;
  }

  nlohmann::json toRecord() const override {
    return {{"stage", "vector-assembler"}, {"id", id()}, {"inputCols", inputCols_}, {"outputCol", outputCol_}};
  }

 private:
  std::vector<std::string> inputCols_;
  std::string outputCol_;
};

/// Fitted standard scaler: (x − mean)/std per column; columns with zero
/// variance map to 0.
class StandardScalerModel final : public Transformer {
 public:
  StandardScalerModel(std::string id, std::string inputCol, std::string outputCol, std::vector<double> mean,
                      std::vector<double> stddev, bool withMean, bool withStd)
      : Transformer(std::move(id)), inputCol_(std::move(inputCol)), outputCol_(std::move(outputCol)),
        mean_(std::move(mean)), std_(std::move(stddev)), withMean_(withMean), withStd_(withStd) {}

  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stddev() const noexcept { return std_; }

  TransformerPtr configured(const Params&) const override { return nullptr; }

  ColumnTable transform(const ColumnTable& table) const override {
    auto column = detail::featureColumn(id(), table, inputCol_);
    detail::requireFreshOutput(id(), table, outputCol_, outputCol_ == inputCol_);
    for (auto& x : column) {
      if (x.size() != mean_.size()) throw InvalidArgument("standard scaler: dimension mismatch");
      DenseVector d = x.toDense();
      for (std::size_t j = 0; j < d.size(); ++j) {
        double v = d[j];
        if (withMean_) v -= mean_[j];
        if (withStd_) v = std_[j] > 0.0 ? v / std_[j] : 0.0;
        d[j] = v;
      }
      x = std::move(d);
    }
    ColumnTable out = table;
    out.set(outputCol_, std::move(column));
    return out;
  }

  nlohmann::json toRecord() const override {
    return {{"stage", "standard-scaler"}, {"id", id()},         {"inputCol", inputCol_},
            {"outputCol", outputCol_},    {"withMean", withMean_}, {"withStd", withStd_},
            {"mean", encodeArray(mean_)}, {"std", encodeArray(std_)}};
  }

 private:
  std::string inputCol_;
  std::string outputCol_;
  std::vector<double> mean_;
  std::vector<double> std_;
  bool withMean_;
  bool withStd_;
};

class StandardScaler final : public Estimator {
 public:
  StandardScaler(std::string id, std::string inputCol, std::string outputCol)
      : Estimator(std::move(id)), inputCol_(std::move(inputCol)), outputCol_(std::move(outputCol)) {}

  std::vector<ParamSpec> paramSpecs() const override {
    return {{"withMean", ParamType::Bool, true}, {"withStd", ParamType::Bool, true}};
  }

  TransformerPtr fit(Context& ctx, const ColumnTable& table, const Params& p) const override {
    detail::requireFreshOutput(id(), table, outputCol_, outputCol_ == inputCol_);
    const auto stats = colStats(detail::vectorDataset(ctx, id(), table, inputCol_));
    auto var = stats.variance();
    std::vector<double> sd(var.size());
    for (std::size_t j = 0; j < var.size(); ++j) sd[j] = std::sqrt(var[j]);
    return std::make_shared<StandardScalerModel>(id(), inputCol_, outputCol_, stats.mean, std::move(sd),
                                                 p.getBool("withMean"), p.getBool("withStd"));
  }

 private:
  std::string inputCol_;
  std::string outputCol_;
};

// Learning estimators -------------------------------------------------------

struct PredictorColumns {
  std::string featuresCol = "features";
  std::string labelCol = "label";
  std::string predictionCol = "prediction";
};

class GLMEstimator final : public Estimator {
 public:
  GLMEstimator(std::string id, GLMKind kind, PredictorColumns cols = {}, GDConfig defaults = {})
      : Estimator(std::move(id)), kind_(kind), cols_(std::move(cols)), defaults_(defaults) {}

  std::vector<ParamSpec> paramSpecs() const override {
    return {{"stepSize", ParamType::Float, defaults_.stepSize},
            {"numIters", ParamType::Integer, std::int64_t{defaults_.numIters}},
            {"miniBatchFraction", ParamType::Float, defaults_.miniBatchFraction},
            {"regParam", ParamType::Float, defaults_.regParam},
            {"convergenceTol", ParamType::Float, defaults_.convergenceTol},
            {"seed", ParamType::Integer, static_cast<std::int64_t>(defaults_.seed)},
            {"aggregationDepth", ParamType::Integer, std::int64_t{defaults_.aggregationDepth.value_or(0)}}};
  }

  TransformerPtr fit(Context& ctx, const ColumnTable& table, const Params& p) const override {
    detail::requireFreshOutput(id(), table, cols_.predictionCol, false);
    GDConfig cfg;
    cfg.stepSize = p.getDouble("stepSize");
    cfg.numIters = static_cast<int>(p.getInt("numIters"));
    cfg.miniBatchFraction = p.getDouble("miniBatchFraction");
    cfg.regParam = p.getDouble("regParam");
    cfg.convergenceTol = p.getDouble("convergenceTol");
    cfg.seed = static_cast<std::uint64_t>(p.getInt("seed"));
    cfg.aggregationDepth = detail::depthParam(p);
    auto model = trainGLM(detail::labeledDataset(ctx, id(), table, cols_.featuresCol, cols_.labelCol), kind_, cfg);
    return std::make_shared<ModelTransformer<GLMModel>>(id(), cols_.featuresCol, cols_.predictionCol, std::move(model));
  }

 private:
  GLMKind kind_;
  PredictorColumns cols_;
  GDConfig defaults_;
};

class NaiveBayesEstimator final : public Estimator {
 public:
  explicit NaiveBayesEstimator(std::string id, PredictorColumns cols = {}, double smoothing = 1.0)
      : Estimator(std::move(id)), cols_(std::move(cols)), smoothing_(smoothing) {}

  std::vector<ParamSpec> paramSpecs() const override {
    return {{"smoothing", ParamType::Float, smoothing_}, {"aggregationDepth", ParamType::Integer, std::int64_t{0}}};
  }

  TransformerPtr fit(Context& ctx, const ColumnTable& table, const Params& p) const override {
    detail::requireFreshOutput(id(), table, cols_.predictionCol, false);
    auto model = trainNaiveBayes(detail::labeledDataset(ctx, id(), table, cols_.featuresCol, cols_.labelCol),
                                 p.getDouble("smoothing"), detail::depthParam(p));
    return std::make_shared<ModelTransformer<NBModel>>(id(), cols_.featuresCol, cols_.predictionCol, std::move(model));
  }

 private:
  PredictorColumns cols_;
  double smoothing_;
};

class KMeansEstimator final : public Estimator {
 public:
  explicit KMeansEstimator(std::string id, PredictorColumns cols = {}, KMeansConfig defaults = {})
      : Estimator(std::move(id)), cols_(std::move(cols)), defaults_(defaults) {}

  std::vector<ParamSpec> paramSpecs() const override {
    return {{"k", ParamType::Integer, static_cast<std::int64_t>(defaults_.k)},
            {"maxIters", ParamType::Integer, std::int64_t{defaults_.maxIters}},
            {"tol", ParamType::Float, defaults_.tol},
            {"seed", ParamType::Integer, static_cast<std::int64_t>(defaults_.seed)},
            {"aggregationDepth", ParamType::Integer, std::int64_t{defaults_.aggregationDepth.value_or(0)}}};
  }

  TransformerPtr fit(Context& ctx, const ColumnTable& table, const Params& p) const override {
    detail::requireFreshOutput(id(), table, cols_.predictionCol, false);
    const auto k = p.getInt("k");
    if (k < 1) throw ParamError("stage '" + id() + "': k must be >= 1");
    KMeansConfig cfg{static_cast<std::size_t>(k), static_cast<int>(p.getInt("maxIters")), p.getDouble("tol"),
                     static_cast<std::uint64_t>(p.getInt("seed")), detail::depthParam(p)};
    auto model = trainKMeans(detail::vectorDataset(ctx, id(), table, cols_.featuresCol), cfg);
    return std::make_shared<ModelTransformer<KMeansModel>>(id(), cols_.featuresCol, cols_.predictionCol,
                                                           std::move(model));
  }

 private:
  PredictorColumns cols_;
  KMeansConfig defaults_;
};

class ForestEstimator final : public Estimator {
 public:
  explicit ForestEstimator(std::string id, PredictorColumns cols = {}, ForestConfig defaults = {})
      : Estimator(std::move(id)), cols_(std::move(cols)), defaults_(defaults) {}

  std::vector<ParamSpec> paramSpecs() const override {
    return {{"numTrees", ParamType::Integer, static_cast<std::int64_t>(defaults_.numTrees)},
            {"maxDepth", ParamType::Integer, std::int64_t{defaults_.maxDepth}},
            {"maxBins", ParamType::Integer, static_cast<std::int64_t>(defaults_.maxBins)},
            {"impurity", ParamType::String, toString(defaults_.impurity)},
            {"numClasses", ParamType::Integer, static_cast<std::int64_t>(defaults_.numClasses)},
            {"featureSubsetFraction", ParamType::Float, defaults_.featureSubsetFraction},
            {"bootstrap", ParamType::Bool, defaults_.bootstrap},
            {"minInfoGain", ParamType::Float, defaults_.minInfoGain},
            {"seed", ParamType::Integer, static_cast<std::int64_t>(defaults_.seed)},
            {"aggregationDepth", ParamType::Integer, std::int64_t{defaults_.aggregationDepth.value_or(0)}}};
  }

  TransformerPtr fit(Context& ctx, const ColumnTable& table, const Params& p) const override {
    detail::requireFreshOutput(id(), table, cols_.predictionCol, false);
    for (const char* name : {"numTrees", "maxBins", "numClasses"})
      if (p.getInt(name) < 0) throw ParamError("stage '" + id() + "': " + name + " must be >= 0");
    ForestConfig cfg;
    cfg.numTrees = static_cast<std::size_t>(p.getInt("numTrees"));
    cfg.maxDepth = static_cast<int>(p.getInt("maxDepth"));
    cfg.maxBins = static_cast<std::size_t>(p.getInt("maxBins"));
    try {
      cfg.impurity = impurityFromString(p.getString("impurity"));
    } catch (const InvalidArgument& e) {
      throw ParamError("stage '" + id() + "': " + e.what());
    }
    cfg.numClasses = static_cast<std::size_t>(p.getInt("numClasses"));
    cfg.featureSubsetFraction = p.getDouble("featureSubsetFraction");
    cfg.bootstrap = p.getBool("bootstrap");
    cfg.minInfoGain = p.getDouble("minInfoGain");
    cfg.seed = static_cast<std::uint64_t>(p.getInt("seed"));
    cfg.aggregationDepth = detail::depthParam(p);
    const auto ds = detail::labeledDataset(ctx, id(), table, cols_.featuresCol, cols_.labelCol);
    const auto bins = findSplitBins(ds, cfg.maxBins, 1.0, cfg.seed);
    auto model = trainForest(ds, bins, cfg);
    return std::make_shared<ModelTransformer<Forest>>(id(), cols_.featuresCol, cols_.predictionCol, std::move(model));
  }

 private:
  PredictorColumns cols_;
  ForestConfig defaults_;
};

/// Fitted PCA as a vector-to-vector transformer.
class PCATransformer final : public Transformer {
 public:
  PCATransformer(std::string id, std::string inputCol, std::string outputCol, PCAModel model)
      : Transformer(std::move(id)), inputCol_(std::move(inputCol)), outputCol_(std::move(outputCol)),
        model_(std::move(model)) {}

  const PCAModel& model() const noexcept { return model_; }

  TransformerPtr configured(const Params&) const override { return nullptr; }

  ColumnTable transform(const ColumnTable& table) const override {
    const auto column = detail::featureColumn(id(), table, inputCol_);
    detail::requireFreshOutput(id(), table, outputCol_, outputCol_ == inputCol_);
    std::vector<Vector> out;
    out.reserve(column.size());
    for (const auto& x : column) out.emplace_back(model_.project(x));
    ColumnTable result = table;
    result.set(outputCol_, std::move(out));
    return result;
  }

  nlohmann::json toRecord() const override {
    return {{"stage", "pca"}, {"id", id()}, {"inputCol", inputCol_}, {"outputCol", outputCol_},
            {"model", toJson(toArtifact(model_))}};
  }

 private:
  std::string inputCol_;
  std::string outputCol_;
  PCAModel model_;
};

class PCAEstimator final : public Estimator {
 public:
  PCAEstimator(std::string id, std::string inputCol, std::string outputCol, std::size_t k)
      : Estimator(std::move(id)), inputCol_(std::move(inputCol)), outputCol_(std::move(outputCol)), k_(k) {}

  std::vector<ParamSpec> paramSpecs() const override {
    return {{"k", ParamType::Integer, static_cast<std::int64_t>(k_)}};
  }

  TransformerPtr fit(Context& ctx, const ColumnTable& table, const Params& p) const override {
    detail::requireFreshOutput(id(), table, outputCol_, outputCol_ == inputCol_);
    if (p.getInt("k") < 1) throw ParamError("stage '" + id() + "': k must be >= 1");
    auto model = fitPCA(detail::vectorDataset(ctx, id(), table, inputCol_), static_cast<std::size_t>(p.getInt("k")));
    return std::make_shared<PCATransformer>(id(), inputCol_, outputCol_, std::move(model));
  }

 private:
  std::string inputCol_;
  std::string outputCol_;
  std::size_t k_;
};

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Fitted pipeline: transformers applied in order.
class PipelineModel {
 public:
  PipelineModel() = default;
  explicit PipelineModel(std::vector<TransformerPtr> stages) : stages_(std::move(stages)) {}

  const std::vector<TransformerPtr>& stages() const noexcept { return stages_; }

  ColumnTable transform(const ColumnTable& table) const {
    ColumnTable current = table;
    for (const auto& s : stages_) current = s->transform(current);
    return current;
  }

 private:
  std::vector<TransformerPtr> stages_;
};

inline PipelineModel fitPipeline(Context& ctx, const std::vector<PipelineStage>& stages, const ColumnTable& table,
                                 const ParamMap& params = {}) {
  std::vector<TransformerPtr> fitted;
  ColumnTable current = table;
  for (const auto& stage : stages) {
    TransformerPtr t;
    if (const auto* tr = std::get_if<TransformerPtr>(&stage)) {
      const Transformer& base = **tr;
      t = base.configured(Params::resolve(base.id(), base.paramSpecs(), params));
      if (t == nullptr) t = *tr;
    } else {
      const Estimator& est = *std::get<std::shared_ptr<const Estimator>>(stage);
      t = est.fit(ctx, current, Params::resolve(est.id(), est.paramSpecs(), params));
    }
    // Run the last stage too so its column contract is checked at fit time.
    current = t->transform(current);
    fitted.push_back(std::move(t));
  }
  return PipelineModel(std::move(fitted));
}

inline PipelineModel fitPipeline(Context& ctx, const std::vector<PipelineStage>& stages, const ColumnTable& table,
                                 const ParamMap& params, const ParamMap& overrides) {
  return fitPipeline(ctx, stages, table, params.merged(overrides));
}

// ---------------------------------------------------------------------------
// Evaluation and cross-validation
// ---------------------------------------------------------------------------

enum class Metric { Rmse, Accuracy, Wsse };

inline std::string toString(Metric m) {
  switch (m) {
    case Metric::Rmse: return "rmse";
    case Metric::Accuracy: return "accuracy";
    case Metric::Wsse: return "wsse";
  }
  return "?";
}

inline Metric metricFromString(std::string_view name) {
  if (name == "rmse") return Metric::Rmse;
  if (name == "accuracy") return Metric::Accuracy;
  if (name == "wsse") return Metric::Wsse;
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

inline bool lowerIsBetter(Metric m) noexcept { return m != Metric::Accuracy; }

inline double rmse(std::span<const double> labels, std::span<const double> predictions) {
  if (labels.size() != predictions.size()) throw InvalidArgument("rmse: length mismatch");
  if (labels.empty()) throw EmptyInput("rmse: no rows");
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += (labels[i] - predictions[i]) * (labels[i] - predictions[i]);
  return std::sqrt(s / static_cast<double>(labels.size()));
}

inline double accuracy(std::span<const double> labels, std::span<const double> predictions) {
  if (labels.size() != predictions.size()) throw InvalidArgument("accuracy: length mismatch");
  if (labels.empty()) throw EmptyInput("accuracy: no rows");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[i] == predictions[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

struct EvaluatorConfig {
  Metric metric = Metric::Rmse;
  std::string labelCol = "label";
  std::string predictionCol = "prediction";
};

/// Scores a fitted pipeline on a table. WSSSE uses the last k-means stage's
/// centers and its feature column.
inline double evaluate(const PipelineModel& model, const ColumnTable& table, const EvaluatorConfig& cfg) {
  const ColumnTable out = model.transform(table);
  if (cfg.metric == Metric::Wsse) {
    const ModelTransformer<KMeansModel>* km = nullptr;
    for (const auto& s : model.stages())
      if (const auto* k = dynamic_cast<const ModelTransformer<KMeansModel>*>(s.get())) km = k;
    if (km == nullptr) throw InvalidArgument("wsse evaluation needs a k-means stage");
    const auto& features = out.get<Vector>(km->featuresCol());
    const auto& assigned = out.get<double>(km->outputCol());
    double total = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const auto& center = km->model().centers.at(static_cast<std::size_t>(assigned[i]));
      const DenseVector x = features[i].toDense();
      total += squaredDistance(x.span(), center.span());
    }
    return total;
  }
  const auto labels = out.numeric(cfg.labelCol);
  const auto predictions = out.numeric(cfg.predictionCol);
  return cfg.metric == Metric::Rmse ? rmse(labels, predictions) : accuracy(labels, predictions);
}

/// Fold of each row: rows ordered by a seeded hash of their index, then
/// dealt round-robin, so fold sizes differ by at most one.
inline std::vector<std::size_t> assignFolds(std::size_t n, std::size_t numFolds, std::uint64_t seed) {
  if (numFolds < 2) throw InvalidArgument("numFolds must be >= 2");
  if (n < numFolds) {
    throw InvalidArgument("cross-validation needs n >= numFolds (n=" + std::to_string(n) +
                          ", numFolds=" + std::to_string(numFolds) + ")");
  }
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i) keyed[i] = {mixKeys(seed, {0xf01dULL, i}), i};
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> fold(n);
  for (std::size_t r = 0; r < n; ++r) fold[keyed[r].second] = r % numFolds;
  return fold;
}

struct CrossValidatorConfig {
  std::vector<PipelineStage> stages;
  std::vector<ParamMap> paramGrid;
  EvaluatorConfig evaluator;
  std::size_t numFolds = 3;
  std::uint64_t seed = 0;
  /// Applied under every grid cell.
  ParamMap baseParams;
};

struct CrossValidationResult {
  std::size_t bestIndex = 0;
  ParamMap bestParams;
  PipelineModel bestModel;
  /// Mean held-out metric per grid cell.
  std::vector<double> metrics;
  /// foldMetrics[cell][fold]
  std::vector<std::vector<double>> foldMetrics;
};

inline CrossValidationResult crossValidate(Context& ctx, const CrossValidatorConfig& cfg, const ColumnTable& table) {
  if (cfg.paramGrid.empty()) throw InvalidArgument("cross-validation needs a non-empty parameter grid");
  const std::size_t n = table.numRows();
  const auto fold = assignFolds(n, cfg.numFolds, cfg.seed);

  std::vector<ColumnTable> trainSets;
  std::vector<ColumnTable> validationSets;
  for (std::size_t f = 0; f < cfg.numFolds; ++f) {
    std::vector<std::size_t> train;
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? valid : train).push_back(i);
    trainSets.push_back(table.select(train));
    validationSets.push_back(table.select(valid));
  }

  CrossValidationResult result;
  for (const auto& cell : cfg.paramGrid) {
    std::vector<double> perFold;
    for (std::size_t f = 0; f < cfg.numFolds; ++f) {
      const auto model = fitPipeline(ctx, cfg.stages, trainSets[f], cfg.baseParams, cell);
      perFold.push_back(evaluate(model, validationSets[f], cfg.evaluator));
    }
    double mean = 0.0;
    for (double m : perFold) mean += m;
    result.metrics.push_back(mean / static_cast<double>(perFold.size()));
    result.foldMetrics.push_back(std::move(perFold));
  }

  // A NaN cell (diverged fit) never wins over a number.
  const bool lower = lowerIsBetter(cfg.evaluator.metric);
  for (std::size_t i = 1; i < result.metrics.size(); ++i) {
    const double m = result.metrics[i];
    const double best = result.metrics[result.bestIndex];
    if (std::isnan(m)) continue;
    if (std::isnan(best) || (lower ? m < best : m > best)) result.bestIndex = i;
  }
  result.bestParams = cfg.paramGrid[result.bestIndex];
  result.bestModel = fitPipeline(ctx, cfg.stages, table, cfg.baseParams, result.bestParams);
  return result;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline ModelArtifact toArtifact(const PipelineModel& m) {
  ModelArtifact a;
  a.modelType = ModelType::Pipeline;
  auto stages = nlohmann::json::array();
  for (const auto& s : m.stages()) stages.push_back(s->toRecord());
  a.params = {{"numStages", m.stages().size()}};
  a.payload = {{"stages", stages}};
  return a;
}

inline TransformerPtr transformerFromRecord(const nlohmann::json& r) {
  const auto kind = requireAs<std::string>(r, "stage");
  const auto id = requireAs<std::string>(r, "id");
  if (kind == "vector-scaler") {
    return std::make_shared<VectorScaler>(id, requireAs<std::string>(r, "inputCol"),
                                          requireAs<std::string>(r, "outputCol"),
                                          decodeDouble(requireField(r, "factor")));
  }
  if (kind == "binarizer") {
    return std::make_shared<Binarizer>(id, requireAs<std::string>(r, "inputCol"), requireAs<std::string>(r, "outputCol"),
                                       decodeDouble(requireField(r, "threshold")));
  }
  if (kind == "vector-assembler") {
    return std::make_shared<VectorAssembler>(id, requireAs<std::vector<std::string>>(r, "inputCols"),
                                             requireAs<std::string>(r, "outputCol"));
  }
  if (kind == "standard-scaler") {
    return std::make_shared<StandardScalerModel>(
        id, requireAs<std::string>(r, "inputCol"), requireAs<std::string>(r, "outputCol"),
        decodeArray(requireField(r, "mean")), decodeArray(requireField(r, "std")), requireAs<bool>(r, "withMean"),
        requireAs<bool>(r, "withStd"));
  }
  if (kind == "pca") {
    return std::make_shared<PCATransformer>(id, requireAs<std::string>(r, "inputCol"),
                                            requireAs<std::string>(r, "outputCol"),
                                            pcaFromArtifact(artifactFromJson(requireField(r, "model"))));
  }
  if (kind == "model") {
    const auto features = requireAs<std::string>(r, "featuresCol");
    const auto output = requireAs<std::string>(r, "outputCol");
    const auto artifact = artifactFromJson(requireField(r, "model"));
    switch (artifact.modelType) {
      case ModelType::Linear:
      case ModelType::Logistic:
        return std::make_shared<ModelTransformer<GLMModel>>(id, features, output, glmFromArtifact(artifact));
      case ModelType::NaiveBayes:
        return std::make_shared<ModelTransformer<NBModel>>(id, features, output, naiveBayesFromArtifact(artifact));
      case ModelType::KMeans:
        return std::make_shared<ModelTransformer<KMeansModel>>(id, features, output, kmeansFromArtifact(artifact));
      case ModelType::Forest:
        return std::make_shared<ModelTransformer<Forest>>(id, features, output, forestFromArtifact(artifact));
      case ModelType::Tree:
        return std::make_shared<ModelTransformer<DecisionTree>>(id, features, output, treeFromArtifact(artifact));
      default: break;
    }
    throw ParseError("pipeline stage '" + id + "' holds unsupported model type '" + toString(artifact.modelType) + "'");
  }
  throw ParseError("unknown pipeline stage kind '" + kind + "'");
}

inline PipelineModel pipelineFromArtifact(const ModelArtifact& a) {
  expectModelType(a, {ModelType::Pipeline});
  const auto& stages = requireField(a.payload, "stages");
  if (!stages.is_array()) throw ParseError("pipeline stages must be an array");
  std::vector<TransformerPtr> out;
  for (const auto& s : stages) out.push_back(transformerFromRecord(s));
  return PipelineModel(std::move(out));
}

}  // namespace sparklet

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

// Data ingest and export: LIBSVM text, rating CSV, synthetic generators, and
// the versioned JSON model artifact.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sparklet/engine.hpp"
#include "sparklet/error.hpp"
#include "sparklet/linalg.hpp"
#include "sparklet/random.hpp"

namespace sparklet {

struct LabeledPoint {
  double label = 0.0;
  Vector features;

  std::uint64_t wireSize() const noexcept { return 8 + features.wireSize(); }
  friend bool operator==(const LabeledPoint&, const LabeledPoint&) = default;
};

struct Rating {
  std::int64_t user = 0;
  std::int64_t item = 0;
  double value = 0.0;

  std::uint64_t wireSize() const noexcept { return 8 + 8 + 8; }
  friend bool operator==(const Rating&, const Rating&) = default;
};

/// Feature dimension of the first example; throws EmptyInput on an empty dataset.
inline std::size_t featureDimension(const Dataset<LabeledPoint>& ds) {
  for (std::size_t p = 0; p < ds.numPartitions(); ++p) {
    auto part = ds.partition(p);
    if (!part.empty()) return part.front().features.size();
  }
  throw EmptyInput("empty dataset");
}

/// Shortest text that parses back to the same double, at most 17 significant digits.
inline std::string formatDouble(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parseNumber(std::string_view token) {
  if (token.empty()) return std::nullopt;
  if (token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parseInteger(std::string_view token) {
  if (token.empty()) return std::nullopt;
  if (token.front() == '+') token.remove_prefix(1);
  Int v{};
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LIBSVM
// ---------------------------------------------------------------------------

struct LibsvmData {
  std::vector<LabeledPoint> points;
  std::size_t dim = 0;
};

/// Parses `label idx:val ...` lines with 1-based ascending indices into
/// 0-based sparse vectors. `#` starts a comment; blank lines are skipped.
/// Every vector gets size `dim` (max index seen, or the override).
inline LibsvmData parseLibsvm(std::istream& in, std::optional<std::size_t> dimOverride = std::nullopt) {
  struct Row {
    double label;
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
  };
  std::vector<Row> rows;
  std::size_t maxIndex = 0;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;

    Row row{};
    std::istringstream tokens{std::string(view)};
    std::string tok;
    tokens >> tok;
    auto label = detail::parseNumber(tok);
    if (!label) throw ParseError("non-numeric label '" + tok + "'", lineNo);
    row.label = *label;
    std::uint64_t prev = 0;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError("expected idx:value, got '" + tok + "'", lineNo);
      auto index = detail::parseInteger<std::uint64_t>(std::string_view(tok).substr(0, colon));
      if (!index) throw ParseError("non-numeric index in '" + tok + "'", lineNo);
      if (*index == 0) throw ParseError("index 0 is invalid (indices are 1-based)", lineNo);
      if (*index <= prev) throw ParseError("indices must be strictly ascending at '" + tok + "'", lineNo);
      if (*index > std::numeric_limits<std::uint32_t>::max()) throw ParseError("index too large", lineNo);
      auto value = detail::parseNumber(std::string_view(tok).substr(colon + 1));
      if (!value) throw ParseError("non-numeric value in '" + tok + "'", lineNo);
      prev = *index;
      row.idx.push_back(static_cast<std::uint32_t>(*index - 1));
      row.val.push_back(*value);
    }
    maxIndex = std::max<std::size_t>(maxIndex, prev);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyInput("LIBSVM input contains no examples");
  std::size_t dim = maxIndex;
  if (dimOverride) {
    if (*dimOverride < maxIndex) {
      throw InvalidArgument("dimension override " + std::to_string(*dimOverride) + " is below max index " +
                            std::to_string(maxIndex));
    }
    dim = *dimOverride;
  }
  LibsvmData out;
  out.dim = dim;
  out.points.reserve(rows.size());
  for (auto& r : rows) out.points.push_back({r.label, SparseVector(dim, std::move(r.idx), std::move(r.val))});
  return out;
}

inline LibsvmData readLibsvmFile(const std::string& path, std::optional<std::size_t> dimOverride = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parseLibsvm(in, dimOverride);
}

/// Reads a LIBSVM file into a dataset; returns the inferred dimension alongside.
inline std::pair<Dataset<LabeledPoint>, std::size_t> readLibsvm(Context& ctx, const std::string& path,
                                                                std::optional<std::size_t> numPartitions = std::nullopt,
                                                                std::optional<std::size_t> dimOverride = std::nullopt) {
  auto data = readLibsvmFile(path, dimOverride);
  const std::size_t dim = data.dim;
  return {ctx.parallelize(std::move(data.points), numPartitions), dim};
}

/// Writes stored nonzero entries with 1-based indices.
inline void writeLibsvm(std::ostream& out, std::span<const LabeledPoint> points) {
  for (const auto& p : points) {
    out << formatDouble(p.label);
    p.features.forEachActive([&](std::size_t i, double v) {
      if (v != 0.0) out << ' ' << (i + 1) << ':' << formatDouble(v);
    });
    out << '\n';
  }
}

inline void writeLibsvmFile(const std::string& path, std::span<const LabeledPoint> points) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  writeLibsvm(out, points);
}

// ---------------------------------------------------------------------------
// Ratings CSV: user,item,value
// ---------------------------------------------------------------------------

inline std::vector<Rating> parseRatingsCsv(std::istream& in) {
  std::vector<Rating> out;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    if (lineNo == 1 && view == "user,item,value") continue;
    std::array<std::string_view, 3> fields{};
    std::size_t start = 0;
    for (std::size_t f = 0; f < 3; ++f) {
      const auto comma = view.find(',', start);
      if ((f < 2) == (comma == std::string_view::npos)) throw ParseError("expected user,item,value", lineNo);
      fields[f] = detail::trim(view.substr(start, f < 2 ? comma - start : std::string_view::npos));
      start = comma + 1;
    }
    auto user = detail::parseInteger<std::int64_t>(fields[0]);
    auto item = detail::parseInteger<std::int64_t>(fields[1]);
    auto value = detail::parseNumber(fields[2]);
    if (!user || !item || !value) throw ParseError("malformed rating", lineNo);
    if (*user < 0 || *item < 0) throw ParseError("entity ids must be non-negative", lineNo);
    out.push_back({*user, *item, *value});
  }
  if (out.empty()) throw EmptyInput("ratings input contains no rows");
  return out;
}

inline std::vector<Rating> readRatingsCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parseRatingsCsv(in);
}

inline void writeRatingsCsv(std::ostream& out, std::span<const Rating> ratings) {
  for (const auto& r : ratings) out << r.user << ',' << r.item << ',' << formatDouble(r.value) << '\n';
}

inline void writeRatingsCsvFile(const std::string& path, std::span<const Rating> ratings) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  writeRatingsCsv(out, ratings);
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

enum class SyntheticKind { Linear, Logistic, KMeansBlobs, AlsRatings, Counts };

inline std::string toString(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::Linear: return "linear";
    case SyntheticKind::Logistic: return "logistic";
    case SyntheticKind::KMeansBlobs: return "kmeans-blobs";
    case SyntheticKind::AlsRatings: return "als-ratings";
    case SyntheticKind::Counts: return "counts";
  }
  return "unknown";
}

inline SyntheticKind syntheticKindFromString(std::string_view name) {
  if (name == "linear") return SyntheticKind::Linear;
  if (name == "logistic") return SyntheticKind::Logistic;
  if (name == "kmeans-blobs" || name == "kmeans" || name == "blobs") return SyntheticKind::KMeansBlobs;
  if (name == "als-ratings" || name == "als") return SyntheticKind::AlsRatings;
  if (name == "counts") return SyntheticKind::Counts;
  throw InvalidArgument("unknown synthetic kind '" + std::string(name) + "'");
}

struct SyntheticParams {
  std::size_t n = 1000;
  std::size_t d = 10;
  std::size_t k = 3;
  double noise = 0.1;
  // kmeans-blobs
  double separation = 10.0;
  double spread = 1.0;
  // als-ratings
  std::size_t users = 100;
  std::size_t items = 80;
  std::size_t rank = 5;
  double density = 0.3;
  /// Replicates every user this many times with fresh ids and identical rows.
  std::size_t userScale = 1;
  // counts
  std::size_t wordsPerDoc = 30;
};

struct SyntheticData {
  std::vector<LabeledPoint> points;
  std::vector<Rating> ratings;
  /// Ground truth: regression/logistic weights (one row), blob centers, or
  /// user then item factors for ratings.
  std::vector<DenseVector> truth;
  std::vector<DenseVector> itemTruth;
};

namespace detail {

inline void validate(SyntheticKind kind, const SyntheticParams& p) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("synthetic generator: ") + what);
  };
  require(p.noise >= 0.0 && std::isfinite(p.noise), "noise must be >= 0");
  switch (kind) {
    case SyntheticKind::Linear:
    case SyntheticKind::Logistic:
      require(p.n > 0, "n must be > 0");
      require(p.d > 0, "d must be > 0");
      break;
    case SyntheticKind::KMeansBlobs:
      require(p.n > 0, "n must be > 0");
      require(p.d > 0, "d must be > 0");
      require(p.k > 0, "k must be > 0");
      require(p.spread >= 0.0, "spread must be >= 0");
      require(p.separation > 0.0, "separation must be > 0");
      break;
    case SyntheticKind::AlsRatings:
      require(p.users > 0 && p.items > 0, "users and items must be > 0");
      require(p.rank > 0, "rank must be > 0");
      require(p.density > 0.0 && p.density <= 1.0, "density must be in (0, 1]");
      require(p.userScale > 0, "scale must be > 0");
      break;
    case SyntheticKind::Counts:
      require(p.n > 0, "n must be > 0");
      require(p.d > 0, "d must be > 0");
      require(p.k > 0, "k must be > 0");
      require(p.wordsPerDoc > 0, "words per document must be > 0");
      break;
  }
}

inline DenseVector randomNormalVector(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  DenseVector v(d);
  for (auto& x : v) x = scale * standardNormal(rng);
  return v;
}

}  // namespace detail

/// Deterministic synthetic datasets given `seed`.
///  - linear: x ~ U(-1,1)^d, y = wᵀx + noise·N(0,1), w ~ N(0,1)^d
///  - logistic: x ~ N(0,1)^d, y ~ Bernoulli(sigmoid(wᵀx)), w ~ N(0,4)^d
///  - kmeans-blobs: k Gaussian clusters (stddev `spread`) whose centers are at
///    least `separation` apart; label = cluster index, rows round-robin
///  - als-ratings: U·Vᵀ + noise with U,V ~ N(0,1)/sqrt(rank), each cell
///    observed with probability `density`
///  - counts: multinomial word counts per class for naive Bayes
inline SyntheticData genSynthetic(SyntheticKind kind, const SyntheticParams& p, std::uint64_t seed) {
  detail::validate(kind, p);
  auto rng = keyedEngine(seed, {static_cast<std::uint64_t>(kind)});
  SyntheticData out;
  switch (kind) {
    case SyntheticKind::Linear: {
      const DenseVector w = detail::randomNormalVector(rng, p.d);
      out.truth.push_back(w);
      out.points.reserve(p.n);
      for (std::size_t i = 0; i < p.n; ++i) {
        DenseVector x(p.d);
        for (auto& v : x) v = 2.0 * uniform01(rng) - 1.0;
        double y = dot(w, x);
        if (p.noise > 0.0) y += p.noise * standardNormal(rng);
        out.points.push_back({y, std::move(x)});
      }
      break;
    }
    case SyntheticKind::Logistic: {
      const DenseVector w = detail::randomNormalVector(rng, p.d, 2.0);
      out.truth.push_back(w);
      out.points.reserve(p.n);
      for (std::size_t i = 0; i < p.n; ++i) {
        DenseVector x = detail::randomNormalVector(rng, p.d);
        const double prob = 1.0 / (1.0 + std::exp(-dot(w, x)));
        const double y = uniform01(rng) < prob ? 1.0 : 0.0;
        out.points.push_back({y, std::move(x)});
      }
      break;
    }
    case SyntheticKind::KMeansBlobs: {
      for (std::size_t c = 0; c < p.k; ++c) {
        DenseVector center(p.d);
        center[0] = p.separation * static_cast<double>(c);
        for (std::size_t j = 1; j < p.d; ++j) center[j] = p.separation * (2.0 * uniform01(rng) - 1.0);
        out.truth.push_back(std::move(center));
      }
      out.points.reserve(p.n);
      for (std::size_t i = 0; i < p.n; ++i) {
        const std::size_t c = i % p.k;
        DenseVector x = out.truth[c];
        for (auto& v : x) v += p.spread * standardNormal(rng);
        out.points.push_back({static_cast<double>(c), std::move(x)});
      }
      break;
    }
    case SyntheticKind::AlsRatings: {
      const double scale = 1.0 / std::sqrt(static_cast<double>(p.rank));
      for (std::size_t u = 0; u < p.users; ++u) out.truth.push_back(detail::randomNormalVector(rng, p.rank, scale));
      for (std::size_t i = 0; i < p.items; ++i) out.itemTruth.push_back(detail::randomNormalVector(rng, p.rank, scale));
      std::vector<Rating> base;
      for (std::size_t u = 0; u < p.users; ++u) {
        for (std::size_t i = 0; i < p.items; ++i) {
          if (uniform01(rng) >= p.density) continue;
          double value = dot(out.truth[u], out.itemTruth[i]);
          if (p.noise > 0.0) value += p.noise * standardNormal(rng);
          base.push_back({static_cast<std::int64_t>(u), static_cast<std::int64_t>(i), value});
        }
      }
      out.ratings.reserve(base.size() * p.userScale);
      for (std::size_t copy = 0; copy < p.userScale; ++copy) {
        const auto shift = static_cast<std::int64_t>(copy * p.users);
        for (const auto& r : base) out.ratings.push_back({r.user + shift, r.item, r.value});
      }
      break;
    }
    case SyntheticKind::Counts: {
      std::vector<std::vector<double>> cdf(p.k, std::vector<double>(p.d));
      for (std::size_t c = 0; c < p.k; ++c) {
        double total = 0.0;
        for (std::size_t j = 0; j < p.d; ++j) {
          // Each class favours a distinct slice of the vocabulary.
          const double weight = uniform01(rng) + (j % p.k == c ? 4.0 : 0.0);
          total += weight;
          cdf[c][j] = total;
        }
        for (auto& v : cdf[c]) v /= total;
        cdf[c].back() = 1.0;
      }
      out.points.reserve(p.n);
      for (std::size_t i = 0; i < p.n; ++i) {
        const std::size_t c = i % p.k;
        std::vector<double> counts(p.d, 0.0);
        for (std::size_t w = 0; w < p.wordsPerDoc; ++w) {
          const double u = uniform01(rng);
          const auto it = std::upper_bound(cdf[c].begin(), cdf[c].end(), u);
          counts[std::min<std::size_t>(static_cast<std::size_t>(it - cdf[c].begin()), p.d - 1)] += 1.0;
        }
        std::vector<std::uint32_t> idx;
        std::vector<double> val;
        for (std::size_t j = 0; j < p.d; ++j)
          if (counts[j] != 0.0) {
            idx.push_back(static_cast<std::uint32_t>(j));
            val.push_back(counts[j]);
          }
        out.points.push_back({static_cast<double>(c), SparseVector(p.d, std::move(idx), std::move(val))});
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model artifact
// ---------------------------------------------------------------------------

enum class ModelType { Linear, Logistic, NaiveBayes, KMeans, Pca, Als, Tree, Forest, Pipeline };

inline std::string toString(ModelType t) {
  switch (t) {
    case ModelType::Linear: return "linear";
    case ModelType::Logistic: return "logistic";
    case ModelType::NaiveBayes: return "naive-bayes";
    case ModelType::KMeans: return "kmeans";
    case ModelType::Pca: return "pca";
    case ModelType::Als: return "als";
    case ModelType::Tree: return "tree";
    case ModelType::Forest: return "forest";
    case ModelType::Pipeline: return "pipeline";
  }
  return "unknown";
}

inline ModelType modelTypeFromString(std::string_view name) {
  for (auto t : {ModelType::Linear, ModelType::Logistic, ModelType::NaiveBayes, ModelType::KMeans, ModelType::Pca,
                 ModelType::Als, ModelType::Tree, ModelType::Forest, ModelType::Pipeline}) {
    if (toString(t) == name) return t;
  }
  throw ParseError("unknown modelType '" + std::string(name) + "'");
}

inline constexpr std::string_view kModelFormatVersion = "1.0";

struct ModelArtifact {
  std::string formatVersion{kModelFormatVersion};
  ModelType modelType = ModelType::Linear;
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json payload = nlohmann::json::object();
};

// JSON has no encoding for non-finite numbers; they travel as strings.
inline nlohmann::json encodeDouble(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double decodeDouble(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ParseError("expected a number, got " + j.dump());
}

inline nlohmann::json encodeArray(std::span<const double> values) {
  auto arr = nlohmann::json::array();
  for (double v : values) arr.push_back(encodeDouble(v));
  return arr;
}

inline std::vector<double> decodeArray(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("expected an array, got " + j.dump().substr(0, 40));
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(decodeDouble(e));
  return out;
}

/// Field access that reports schema problems as ParseError.
inline const nlohmann::json& requireField(const nlohmann::json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  return obj.at(key);
}

template <class T>
T requireAs(const nlohmann::json& obj, const char* key) {
  try {
    return requireField(obj, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("field '") + key + "': " + e.what());
  }
}

inline nlohmann::json toJson(const ModelArtifact& a) {
  return {{"formatVersion", a.formatVersion},
          {"modelType", toString(a.modelType)},
          {"params", a.params},
          {"payload", a.payload}};
}

inline ModelArtifact artifactFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("model artifact must be a JSON object");
  ModelArtifact a;
  a.formatVersion = requireAs<std::string>(j, "formatVersion");
  if (a.formatVersion != kModelFormatVersion) {
    throw UnsupportedVersion("unsupported model format version '" + a.formatVersion + "'");
  }
  a.modelType = modelTypeFromString(requireAs<std::string>(j, "modelType"));
  a.params = requireField(j, "params");
  a.payload = requireField(j, "payload");
  if (!a.params.is_object() || !a.payload.is_object()) throw ParseError("params and payload must be objects");
  return a;
}

inline void saveArtifact(const ModelArtifact& a, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << toJson(a).dump(1) << '\n';
}

inline ModelArtifact parseArtifact(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model file is not valid JSON: ") + e.what());
  }
  return artifactFromJson(j);
}

inline ModelArtifact loadArtifact(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parseArtifact(buffer.str());
}

inline void expectModelType(const ModelArtifact& a, std::initializer_list<ModelType> allowed) {
  for (auto t : allowed)
    if (a.modelType == t) return;
  throw ParseError("unexpected modelType '" + toString(a.modelType) + "'");
}

}  // namespace sparklet

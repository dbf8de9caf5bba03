#pragma once

// Feature encoding and the classifiers: the all-actionable strawman, the
// repeat-label dummy, k-nearest neighbours, and a linear max-margin model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wtriage/dataset.hpp"
#include "wtriage/features.hpp"
#include "wtriage/util.hpp"

namespace wtriage {

enum class FeatureSet { All, LeakedOnly, WithoutLeaked };

inline const char* to_string(FeatureSet s) {
  switch (s) {
    case FeatureSet::All: return "all";
    case FeatureSet::LeakedOnly: return "leaked";
    case FeatureSet::WithoutLeaked: return "no-leaked";
  }
  return "?";
}

inline std::optional<FeatureSet> parse_feature_set(std::string_view s) {
  if (s == "all") return FeatureSet::All;
  if (s == "leaked") return FeatureSet::LeakedOnly;
  if (s == "no-leaked") return FeatureSet::WithoutLeaked;
  return std::nullopt;
}

inline bool uses_feature(FeatureSet set, std::size_t f) {
  switch (set) {
    case FeatureSet::All: return true;
    case FeatureSet::LeakedOnly: return kFeatures[f].leaked;
    case FeatureSet::WithoutLeaked: return !kFeatures[f].leaked;
  }
  return true;
}

struct EncodedMatrix {
  std::vector<std::string> columns;  // manifest
  std::vector<std::vector<double>> rows;
  std::vector<WarningKey> keys;
  std::vector<Label> labels;

  std::size_t size() const { return rows.size(); }
};

/// Numeric columns are z-scored with training statistics; categorical columns
/// become one-hot blocks over the training vocabulary (unseen values encode
/// as all zeros).
class Encoder {
 public:
  struct Column {
    std::size_t feature = 0;
    bool categorical = false;
    std::string value;  // one-hot value for categorical columns
    double mean = 0;
    double scale = 1;
  };

  static Encoder fit(const std::vector<LabeledInstance>& train, FeatureSet set = FeatureSet::All) {
    if (train.empty()) throw ModelError("cannot fit an encoder on an empty training set");
    Encoder e;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      if (!uses_feature(set, f)) continue;
      if (kFeatures[f].kind == FeatureKind::Numeric) {
        double sum = 0;
        for (const auto& i : train) sum += std::get<double>(i.features.values[f]);
        const double mean = sum / static_cast<double>(train.size());
        double ss = 0;
        for (const auto& i : train) {
          const double d = std::get<double>(i.features.values[f]) - mean;
          ss += d * d;
        }
        const double sd = std::sqrt(ss / static_cast<double>(train.size()));
        e.columns_.push_back(Column{f, false, {}, mean, sd > 0 ? sd : 1.0});
      } else {
        std::set<std::string> vocab;
        for (const auto& i : train) vocab.insert(std::get<std::string>(i.features.values[f]));
        for (const auto& v : vocab) e.columns_.push_back(Column{f, true, v, 0, 1});
      }
    }
    for (const auto& c : e.columns_)
      e.manifest_.push_back(c.categorical ? std::string(kFeatures[c.feature].name) + "=" + c.value
                                          : std::string(kFeatures[c.feature].name));
    return e;
  }

  const std::vector<std::string>& manifest() const { return manifest_; }
  const std::vector<Column>& columns() const { return columns_; }

  std::vector<double> encode(const FeatureVector& v) const {
    std::vector<double> row(columns_.size(), 0.0);
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      const auto& col = columns_[c];
      const auto& value = v.values[col.feature];
      if (col.categorical)
        row[c] = std::get<std::string>(value) == col.value ? 1.0 : 0.0;
      else
        row[c] = (std::get<double>(value) - col.mean) / col.scale;
    }
    return row;
  }

  EncodedMatrix transform(const std::vector<LabeledInstance>& instances) const {
    EncodedMatrix m;
    m.columns = manifest_;
    m.rows.reserve(instances.size());
    for (const auto& i : instances) {
      m.rows.push_back(encode(i.features));
      m.keys.push_back(i.key);
      m.labels.push_back(i.label);
    }
    return m;
  }

 private:
  std::vector<Column> columns_;
  std::vector<std::string> manifest_;
};

inline std::pair<EncodedMatrix, EncodedMatrix> encode(const std::vector<LabeledInstance>& train,
                                                      const std::vector<LabeledInstance>& test,
                                                      FeatureSet set = FeatureSet::All) {
  const Encoder e = Encoder::fit(train, set);
  return {e.transform(train), e.transform(test)};
}

// --- models ------------------------------------------------------------------

enum class ModelKind { ConstantActionable, RepeatLabel, KNN, LinearMargin };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ConstantActionable: return "constant";
    case ModelKind::RepeatLabel: return "repeat";
    case ModelKind::KNN: return "knn";
    case ModelKind::LinearMargin: return "linear";
  }
  return "?";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
  if (s == "constant") return ModelKind::ConstantActionable;
  if (s == "repeat") return ModelKind::RepeatLabel;
  if (s == "knn") return ModelKind::KNN;
  if (s == "linear") return ModelKind::LinearMargin;
  return std::nullopt;
}

struct ModelSpec {
  ModelKind kind = ModelKind::LinearMargin;
  std::size_t k = 1;        // KNN
  double lambda = 1e-3;     // LinearMargin regularization
  std::size_t epochs = 50;  // LinearMargin passes over the data
  std::uint64_t seed = 0;

  bool operator==(const ModelSpec&) const = default;
};

struct BucketEntry {
  WarningKey key;
  Label label = Label::FalseAlarm;
  bool operator==(const BucketEntry&) const = default;
};

struct Model {
  ModelSpec spec;
  std::vector<std::string> manifest;
  // LinearMargin: weights over the manifest, then the bias.
  std::vector<double> weights;
  double bias = 0;
  // KNN: the training matrix.
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  std::vector<WarningKey> keys;
  // RepeatLabel: training labels by (class name, bug pattern).
  std::map<std::pair<std::string, std::string>, std::vector<BucketEntry>> buckets;

  bool operator==(const Model&) const = default;
};

namespace detail {

inline double dot(const std::vector<double>& w, const std::vector<double>& x) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
  return s;
}

/// L2-regularized hinge loss minimized by stochastic subgradient steps of
/// size 1/(lambda t), with projection onto the ball of radius 1/sqrt(lambda).
/// The bias rides along as a constant input of 1.
inline void fit_linear_margin(Model& m, const EncodedMatrix& train) {
  const std::size_t d = train.columns.size();
  std::vector<double> w(d + 1, 0.0);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(m.spec.seed);
  const double lambda = m.spec.lambda;
  const double radius = 1.0 / std::sqrt(lambda);
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < m.spec.epochs; ++epoch) {
    rng.shuffle(order);
    for (auto i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const auto& x = train.rows[i];
      const double y = train.labels[i] == Label::Actionable ? 1.0 : -1.0;
      const double margin = y * (dot(w, x) + w[d]);
      const double shrink = 1.0 - eta * lambda;
      for (auto& wi : w) wi *= shrink;
      if (margin < 1.0) {
        for (std::size_t j = 0; j < d; ++j) w[j] += eta * y * x[j];
        w[d] += eta * y;
      }
      double norm2 = 0;
      for (auto wi : w) norm2 += wi * wi;
      if (norm2 > radius * radius) {
        const double s = radius / std::sqrt(norm2);
        for (auto& wi : w) wi *= s;
      }
    }
  }
  m.bias = w[d];
  w.pop_back();
  m.weights = std::move(w);
}

inline void check_manifest(const Model& m, const EncodedMatrix& x) {
  if (m.manifest == x.columns) return;
  for (const auto& c : m.manifest)
    if (std::find(x.columns.begin(), x.columns.end(), c) == x.columns.end())
      throw ModelError("feature column '" + c + "' missing from the input manifest");
  throw ModelError("input manifest does not match the model's manifest");
}

}  // namespace detail

inline Model fit(const ModelSpec& spec, const EncodedMatrix& train) {
  if (train.size() == 0) throw ModelError("cannot fit on an empty training set");
  for (auto l : train.labels)
    if (l == Label::Unknown) throw ModelError("training labels must be Actionable or FalseAlarm");
  Model m;
  m.spec = spec;
  m.manifest = train.columns;
  switch (spec.kind) {
    case ModelKind::ConstantActionable:
      break;
    case ModelKind::RepeatLabel:
      for (std::size_t i = 0; i < train.size(); ++i)
        m.buckets[{train.keys[i].class_name, train.keys[i].bug_pattern}].push_back(
            BucketEntry{train.keys[i], train.labels[i]});
      for (auto& [k, v] : m.buckets)
        std::sort(v.begin(), v.end(), [](const BucketEntry& a, const BucketEntry& b) { return a.key < b.key; });
      break;
    case ModelKind::KNN:
      if (spec.k < 1 || spec.k > train.size())
        throw ModelError("k must be between 1 and the training set size");
      m.rows = train.rows;
      m.labels = train.labels;
      m.keys = train.keys;
      break;
    case ModelKind::LinearMargin: {
      const bool has_a = std::count(train.labels.begin(), train.labels.end(), Label::Actionable) > 0;
      const bool has_f = std::count(train.labels.begin(), train.labels.end(), Label::FalseAlarm) > 0;
      if (!has_a) throw ModelError("linear model needs at least one Actionable training instance");
      if (!has_f) throw ModelError("linear model needs at least one FalseAlarm training instance");
      if (!(spec.lambda > 0) || spec.epochs == 0) throw ModelError("linear model needs lambda > 0 and epochs > 0");
      detail::fit_linear_margin(m, train);
      break;
    }
  }
  return m;
}

/// Real-valued score; higher means more likely actionable.
inline double score(const Model& m, const EncodedMatrix& x, std::size_t row) {
  detail::check_manifest(m, x);
  switch (m.spec.kind) {
    case ModelKind::ConstantActionable:
      return 1.0;
    case ModelKind::RepeatLabel: {
      const auto& key = x.keys.at(row);
      auto it = m.buckets.find({key.class_name, key.bug_pattern});
      if (it == m.buckets.end()) return 0.0;
      const auto& bucket = it->second;
      std::size_t pick = 0;
      if (bucket.size() > 1) {
        // Seeded per instance, so a prediction does not depend on what else
        // gets scored.
        const std::uint64_t h = splitmix64(m.spec.seed ^ fnv1a(key.to_string()));
        pick = static_cast<std::size_t>(h % bucket.size());
      }
      return bucket[pick].label == Label::Actionable ? 1.0 : 0.0;
    }
    case ModelKind::KNN: {
      const auto& q = x.rows.at(row);
      std::vector<std::pair<double, std::size_t>> dist(m.rows.size());
      for (std::size_t i = 0; i < m.rows.size(); ++i) {
        double s = 0;
        const auto& r = m.rows[i];
        for (std::size_t j = 0; j < q.size(); ++j) {
          const double d = r[j] - q[j];
          s += d * d;
        }
        dist[i] = {s, i};
      }
      auto closer = [&](const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
        if (a.first != b.first) return a.first < b.first;
        if (m.keys[a.second] != m.keys[b.second]) return m.keys[a.second] < m.keys[b.second];
        return a.second < b.second;
      };
      const std::size_t k = m.spec.k;
      std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end(), closer);
      std::size_t actionable = 0;
      for (std::size_t i = 0; i < k; ++i) actionable += m.labels[dist[i].second] == Label::Actionable;
      return static_cast<double>(actionable) / static_cast<double>(k);
    }
    case ModelKind::LinearMargin:
      return detail::dot(m.weights, x.rows.at(row)) + m.bias;
  }
  return 0;
}

inline Label label_for_score(const Model& m, double s) {
  switch (m.spec.kind) {
    case ModelKind::ConstantActionable: return Label::Actionable;
    case ModelKind::RepeatLabel: return s > 0.5 ? Label::Actionable : Label::FalseAlarm;
    case ModelKind::KNN: return s >= 0.5 ? Label::Actionable : Label::FalseAlarm;  // ties go to Actionable
    case ModelKind::LinearMargin: return s >= 0.0 ? Label::Actionable : Label::FalseAlarm;
  }
  return Label::FalseAlarm;
}

inline Label predict(const Model& m, const EncodedMatrix& x, std::size_t row) {
  return label_for_score(m, score(m, x, row));
}

inline std::vector<double> score_all(const Model& m, const EncodedMatrix& x) {
  detail::check_manifest(m, x);
  std::vector<double> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = score(m, x, i);
  return s;
}

// --- persistence ----------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json key_json(const WarningKey& k) {
  nlohmann::ordered_json j;
  j["bug_pattern"] = k.bug_pattern;
  j["file_path"] = k.file_path;
  j["package"] = k.package;
  j["class"] = k.class_name;
  if (k.method) j["method"] = *k.method;
  return j;
}

inline WarningKey key_from_json(const nlohmann::json& j) {
  WarningKey k{j.at("bug_pattern").get<std::string>(), j.at("file_path").get<std::string>(),
               j.at("package").get<std::string>(), j.at("class").get<std::string>(), std::nullopt};
  if (j.contains("method")) k.method = j.at("method").get<std::string>();
  return k;
}

inline Label label_from_json(const nlohmann::json& j) {
  auto l = parse_label(j.get<std::string>());
  if (!l) throw ModelError("bad label in model file");
  return *l;
}

}  // namespace detail

inline constexpr int kModelFormatVersion = 1;

inline std::string save_model(const Model& m) {
  nlohmann::ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = to_string(m.spec.kind);
  j["k"] = m.spec.k;
  j["lambda"] = m.spec.lambda;
  j["epochs"] = m.spec.epochs;
  j["seed"] = m.spec.seed;
  j["manifest"] = m.manifest;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  switch (m.spec.kind) {
    case ModelKind::ConstantActionable:
      break;
    case ModelKind::LinearMargin:
      params["weights"] = m.weights;
      params["bias"] = m.bias;
      break;
    case ModelKind::KNN: {
      params["rows"] = m.rows;
      auto labels = nlohmann::ordered_json::array();
      auto keys = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < m.labels.size(); ++i) {
        labels.push_back(to_string(m.labels[i]));
        keys.push_back(detail::key_json(m.keys[i]));
      }
      params["labels"] = labels;
      params["keys"] = keys;
      break;
    }
    case ModelKind::RepeatLabel: {
      auto buckets = nlohmann::ordered_json::array();
      for (const auto& [bk, entries] : m.buckets)
        for (const auto& e : entries) {
          auto entry = detail::key_json(e.key);
          entry["label"] = to_string(e.label);
          buckets.push_back(entry);
        }
      params["entries"] = buckets;
      break;
    }
  }
  j["parameters"] = params;
  return j.dump(1) + "\n";
}

inline Model load_model(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != kModelFormatVersion)
      throw ModelError("unsupported model format version");
    Model m;
    auto kind = parse_model_kind(j.at("kind").get<std::string>());
    if (!kind) throw ModelError("unknown model kind");
    m.spec.kind = *kind;
    m.spec.k = j.at("k").get<std::size_t>();
    m.spec.lambda = j.at("lambda").get<double>();
    m.spec.epochs = j.at("epochs").get<std::size_t>();
    m.spec.seed = j.at("seed").get<std::uint64_t>();
    m.manifest = j.at("manifest").get<std::vector<std::string>>();
    const auto& p = j.at("parameters");
    switch (m.spec.kind) {
      case ModelKind::ConstantActionable:
        break;
      case ModelKind::LinearMargin:
        m.weights = p.at("weights").get<std::vector<double>>();
        m.bias = p.at("bias").get<double>();
        if (m.weights.size() != m.manifest.size()) throw ModelError("weight count does not match manifest");
        break;
      case ModelKind::KNN:
        m.rows = p.at("rows").get<std::vector<std::vector<double>>>();
        for (const auto& l : p.at("labels")) m.labels.push_back(detail::label_from_json(l));
        for (const auto& k : p.at("keys")) m.keys.push_back(detail::key_from_json(k));
        if (m.rows.size() != m.labels.size() || m.rows.size() != m.keys.size())
          throw ModelError("inconsistent KNN parameters");
        break;
      case ModelKind::RepeatLabel:
        for (const auto& e : p.at("entries")) {
          BucketEntry b{detail::key_from_json(e), detail::label_from_json(e.at("label"))};
          m.buckets[{b.key.class_name, b.key.bug_pattern}].push_back(std::move(b));
        }
        break;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace wtriage

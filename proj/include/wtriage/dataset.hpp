#pragma once

// Train/test datasets built from one project history, with or without the
// train/test duplication of the original construction, and their audits.

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wtriage/features.hpp"
#include "wtriage/history.hpp"
#include "wtriage/oracle.hpp"
#include "wtriage/timeline.hpp"

namespace wtriage {

struct LabeledInstance {
  WarningKey key;
  FeatureVector features;
  Label label = Label::Unknown;
  RevisionId origin_rev;

  bool operator==(const LabeledInstance&) const = default;
};

struct DatasetMeta {
  RevisionId train_rev;
  RevisionId test_rev;
  RevisionId ref_rev;
  LeakMode mode;
  bool dedup = false;
  std::size_t unknown_train = 0;
  std::size_t unknown_test = 0;
  std::size_t dedup_removed = 0;
  std::vector<std::string> notices;

  bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
  std::vector<LabeledInstance> train;
  std::vector<LabeledInstance> test;
  DatasetMeta meta;

  bool operator==(const Dataset&) const = default;
};

struct BuildOptions {
  ExtractionOptions extraction;
};

namespace detail {

inline std::vector<LabeledInstance> labeled_instances(const std::vector<LabeledWarning>& labels,
                                                      const ExtractionResult& features, const RevisionId& rev,
                                                      std::size_t& unknown) {
  if (!features.errors.empty()) {
    std::string msg = "missing static attributes at '" + rev + "':";
    for (const auto& e : features.errors) {
      msg += " " + e.key.to_string() + " [";
      for (std::size_t i = 0; i < e.missing.size(); ++i) msg += (i ? "," : "") + e.missing[i];
      msg += "]";
    }
    throw FeatureError(msg);
  }
  std::vector<LabeledInstance> out;
  for (const auto& l : labels) {
    if (l.label == Label::Unknown) {
      ++unknown;
      continue;
    }
    out.push_back(LabeledInstance{l.key, features.vectors.at(l.key), l.label, rev});
  }
  return out;
}

}  // namespace detail

/// Train holds every labeled warning at the training revision. Test holds
/// every labeled warning at the testing revision, or with `dedup` only those
/// first seen after the training revision. Labels come from the closed-warning
/// heuristic against `ref_rev`; unknowns are dropped and counted.
inline Dataset build_dataset(const ProjectHistory& h, const RevisionId& train_rev, const RevisionId& test_rev,
                             const RevisionId& ref_rev, const LeakMode& mode, bool dedup,
                             const BuildOptions& opts = {}) {
  if (h.empty()) throw UsageError("history is empty; nothing to build");
  const auto train_pos = h.position(train_rev);
  const auto test_pos = h.position(test_rev);
  const auto ref_pos = h.position(ref_rev);
  if (!(train_pos < test_pos && test_pos < ref_pos))
    throw OrderingError("revisions must satisfy train < test < reference");

  const LabelOptions label_opts{opts.extraction.bridge_renames};
  const auto train_labels = heuristic_label(h, train_rev, ref_rev, label_opts);
  const auto test_labels = heuristic_label(h, test_rev, ref_rev, label_opts);
  const std::optional<RevisionId> feature_ref =
      mode.kind == LeakMode::Kind::Leaky ? std::optional<RevisionId>(ref_rev) : std::nullopt;
  const auto train_features = extract_golden(h, train_rev, mode, feature_ref, opts.extraction);
  const auto test_features = extract_golden(h, test_rev, mode, feature_ref, opts.extraction);

  Dataset d;
  d.meta.train_rev = train_rev;
  d.meta.test_rev = test_rev;
  d.meta.ref_rev = ref_rev;
  d.meta.mode = mode;
  d.meta.dedup = dedup;
  d.train = detail::labeled_instances(train_labels, train_features, train_rev, d.meta.unknown_train);
  auto test = detail::labeled_instances(test_labels, test_features, test_rev, d.meta.unknown_test);

  if (dedup) {
    const ProjectHistory upto_test = truncate_history(h, test_rev);
    const HistoryIndex idx(upto_test, IndexOptions{opts.extraction.bridge_renames});
    const std::size_t t = idx.position(test_rev);
    std::set<WarningKey> train_keys;
    for (const auto& inst : d.train) train_keys.insert(inst.key);
    for (auto& inst : test) {
      auto id = idx.find_at(inst.key, t);
      if (id && idx.first_seen(*id) > train_pos && !train_keys.count(inst.key))
        d.test.push_back(std::move(inst));
      else
        ++d.meta.dedup_removed;
    }
  } else {
    d.test = std::move(test);
  }
  if (d.test.empty()) d.meta.notices.push_back("test set is empty");
  if (d.meta.unknown_train + d.meta.unknown_test > 0)
    d.meta.notices.push_back("dropped " + std::to_string(d.meta.unknown_train) + " train and " +
                             std::to_string(d.meta.unknown_test) + " test warnings labeled Unknown");
  return d;
}

struct DuplicationReport {
  std::size_t test_size = 0;
  std::size_t duplicated = 0;
  double rate = 0;
  std::vector<WarningKey> duplicated_keys;
};

inline DuplicationReport audit_duplication(const Dataset& d) {
  std::set<WarningKey> train_keys;
  for (const auto& i : d.train) train_keys.insert(i.key);
  DuplicationReport r;
  r.test_size = d.test.size();
  for (const auto& i : d.test) {
    if (!train_keys.count(i.key)) continue;
    ++r.duplicated;
    r.duplicated_keys.push_back(i.key);
  }
  r.rate = r.test_size == 0 ? 0.0 : static_cast<double>(r.duplicated) / static_cast<double>(r.test_size);
  return r;
}

inline double actionability_ratio(const std::vector<LabeledInstance>& instances) {
  std::size_t a = 0, f = 0;
  for (const auto& i : instances) {
    if (i.label == Label::Actionable) ++a;
    if (i.label == Label::FalseAlarm) ++f;
  }
  if (a + f == 0) throw UsageError("actionability ratio of an empty instance set");
  return static_cast<double>(a) / static_cast<double>(a + f);
}

// --- export / import -----------------------------------------------------------

inline nlohmann::ordered_json meta_to_json(const DatasetMeta& m) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["train_rev"] = m.train_rev;
  j["test_rev"] = m.test_rev;
  j["ref_rev"] = m.ref_rev;
  j["mode"] = to_string(m.mode.kind);
  j["window_days"] = m.mode.window_days;
  j["dedup"] = m.dedup;
  j["unknown_train"] = m.unknown_train;
  j["unknown_test"] = m.unknown_test;
  j["dedup_removed"] = m.dedup_removed;
  j["notices"] = m.notices;
  return j;
}

inline DatasetMeta meta_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != 1) throw ParseError(0, "dataset metadata: unsupported version");
    DatasetMeta m;
    m.train_rev = j.at("train_rev").get<std::string>();
    m.test_rev = j.at("test_rev").get<std::string>();
    m.ref_rev = j.at("ref_rev").get<std::string>();
    auto kind = parse_leak_kind(j.at("mode").get<std::string>());
    if (!kind) throw ParseError(0, "dataset metadata: bad mode");
    m.mode = LeakMode{*kind, j.at("window_days").get<std::int64_t>()};
    m.dedup = j.at("dedup").get<bool>();
    m.unknown_train = j.at("unknown_train").get<std::size_t>();
    m.unknown_test = j.at("unknown_test").get<std::size_t>();
    m.dedup_removed = j.at("dedup_removed").get<std::size_t>();
    m.notices = j.at("notices").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("dataset metadata: ") + e.what());
  }
}

inline std::vector<FeatureRow> dataset_rows(const Dataset& d) {
  std::vector<FeatureRow> rows;
  const std::string mode = to_string(d.meta.mode.kind);
  for (const auto& i : d.train) rows.push_back(FeatureRow{"train", i.key, i.origin_rev, i.label, mode, i.features});
  for (const auto& i : d.test) rows.push_back(FeatureRow{"test", i.key, i.origin_rev, i.label, mode, i.features});
  return rows;
}

/// Writes <dir>/dataset.tsv and the <dir>/dataset.meta.json sidecar.
inline void save_dataset(const Dataset& d, const std::string& dir) {
  std::ostringstream matrix;
  write_feature_matrix(matrix, dataset_rows(d), true);
  write_file(dir + "/dataset.tsv", matrix.str());
  write_file(dir + "/dataset.meta.json", meta_to_json(d.meta).dump(2) + "\n");
}

inline Dataset load_dataset(const std::string& dir) {
  Dataset d;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir + "/dataset.meta.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("dataset metadata: ") + e.what());
  }
  d.meta = meta_from_json(meta);
  std::istringstream in(read_file(dir + "/dataset.tsv"));
  for (auto& r : read_feature_matrix(in)) {
    LabeledInstance inst{r.key, r.features, r.label, r.revision};
    if (r.split == "train")
      d.train.push_back(std::move(inst));
    else if (r.split == "test")
      d.test.push_back(std::move(inst));
    else
      throw ParseError(0, "dataset matrix: bad split '" + r.split + "'");
  }
  return d;
}

}  // namespace wtriage

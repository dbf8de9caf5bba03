#pragma once

// The 23 Golden Features, computed per warning at one revision.
//
// Five warning-combination features (three warning contexts and the two
// defect-likelihood measures) need to know which warnings of a population
// were closed. In Leaky mode a warning counts as closed when it is absent at
// the reference revision, which leaks the heuristic label into the feature.
// In LeakFree mode the population holds only warnings first seen within a
// window before the extraction revision and closed means absent at that
// revision; extraction never sees records after it.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "wtriage/history.hpp"
#include "wtriage/oracle.hpp"
#include "wtriage/timeline.hpp"
#include "wtriage/util.hpp"

namespace wtriage {

enum class Feature : std::size_t {
  WarningContextMethod,
  WarningContextFile,
  WarningContextType,
  DefectLikelihoodPattern,
  DefectLikelihoodDiscretization,
  AverageLifetimeType,
  CommentCodeRatio,
  MethodDepth,
  FileDepth,
  MethodsInFile,
  ClassesInPackage,
  WarningPattern,
  WarningType,
  WarningPriority,
  Package,
  FileAge,
  FileCreation,
  Developers,
  ParameterSignature,
  MethodVisibility,
  LocAddedFile25Revisions,
  LocAddedPackage3Months,
  WarningLifetimeRevisions,
};

inline constexpr std::size_t kFeatureCount = 23;

enum class FeatureKind { Numeric, Categorical };

struct FeatureInfo {
  const char* name;
  FeatureKind kind;
  bool leaked;  // derived from warning-combination populations
};

inline constexpr std::array<FeatureInfo, kFeatureCount> kFeatures{{
    {"warning context in method", FeatureKind::Numeric, true},
    {"warning context in file", FeatureKind::Numeric, true},
    {"warning context for warning type", FeatureKind::Numeric, true},
    {"defect likelihood for warning pattern", FeatureKind::Numeric, true},
    {"discretization of defect likelihood", FeatureKind::Numeric, true},
    {"average lifetime for warning type", FeatureKind::Numeric, false},
    {"comment-code ratio", FeatureKind::Numeric, false},
    {"method depth", FeatureKind::Numeric, false},
    {"file depth", FeatureKind::Numeric, false},
    {"# methods in file", FeatureKind::Numeric, false},
    {"# classes in package", FeatureKind::Numeric, false},
    {"warning pattern", FeatureKind::Categorical, false},
    {"warning type", FeatureKind::Categorical, false},
    {"warning priority", FeatureKind::Numeric, false},
    {"package", FeatureKind::Categorical, false},
    {"file age", FeatureKind::Numeric, false},
    {"file creation", FeatureKind::Numeric, false},
    {"developers", FeatureKind::Numeric, false},
    {"parameter signature", FeatureKind::Categorical, false},
    {"method visibility", FeatureKind::Categorical, false},
    {"LOC added in file (last 25 revisions)", FeatureKind::Numeric, false},
    {"LOC added in package (past 3 month)", FeatureKind::Numeric, false},
    {"warning lifetime by revision", FeatureKind::Numeric, false},
}};

inline constexpr const FeatureInfo& info(Feature f) { return kFeatures[static_cast<std::size_t>(f)]; }

using FeatureValue = std::variant<double, std::string>;

enum FeatureFlag : std::uint32_t {
  kFlagEmptyPopulation = 1u << 0,
  kFlagSingletonMethod = 1u << 1,
  kFlagSingletonFile = 1u << 2,
  kFlagSinglePatternCategory = 1u << 3,
  kFlagMethodFallback = 1u << 4,
  kFlagNoClosedOfType = 1u << 5,
};

inline constexpr std::array<std::pair<std::uint32_t, const char*>, 6> kFlagNames{{
    {kFlagEmptyPopulation, "empty_population"},
    {kFlagSingletonMethod, "singleton_method"},
    {kFlagSingletonFile, "singleton_file"},
    {kFlagSinglePatternCategory, "single_pattern_category"},
    {kFlagMethodFallback, "method_fallback"},
    {kFlagNoClosedOfType, "no_closed_of_type"},
}};

inline std::string flags_to_string(std::uint32_t flags) {
  std::string out;
  for (auto [bit, name] : kFlagNames) {
    if (!(flags & bit)) continue;
    if (!out.empty()) out += ',';
    out += name;
  }
  return out.empty() ? "-" : out;
}

inline std::uint32_t parse_flags(const std::string& s) {
  if (s == "-" || s.empty()) return 0;
  std::uint32_t flags = 0;
  for (const auto& part : split(s, ',')) {
    bool found = false;
    for (auto [bit, name] : kFlagNames)
      if (part == name) {
        flags |= bit;
        found = true;
      }
    if (!found) throw FeatureError("unknown flag '" + part + "'");
  }
  return flags;
}

struct FeatureVector {
  std::array<FeatureValue, kFeatureCount> values;
  std::uint32_t flags = 0;

  const FeatureValue& operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  FeatureValue& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  double number(Feature f) const { return std::get<double>((*this)[f]); }
  const std::string& category(Feature f) const { return std::get<std::string>((*this)[f]); }

  bool operator==(const FeatureVector&) const = default;
};

/// Equality that also distinguishes -0.0 from 0.0 and compares NaN payloads.
inline bool bit_equal(const FeatureVector& a, const FeatureVector& b) {
  if (a.flags != b.flags) return false;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const auto& x = a.values[i];
    const auto& y = b.values[i];
    if (x.index() != y.index()) return false;
    if (x.index() == 0) {
      if (std::bit_cast<std::uint64_t>(std::get<0>(x)) != std::bit_cast<std::uint64_t>(std::get<0>(y)))
        return false;
    } else if (std::get<1>(x) != std::get<1>(y)) {
      return false;
    }
  }
  return true;
}

// --- populations and the combination formulas -------------------------------

enum class PopulationScope { Method, File, WarningType, Pattern };

struct PopulationMember {
  WarningKey key;
  bool closed = false;
};

struct WarningPopulation {
  PopulationScope scope = PopulationScope::File;
  std::vector<PopulationMember> members;
};

struct PopulationCounts {
  std::size_t closed = 0;
  std::size_t total = 0;

  PopulationCounts& add(bool is_closed) {
    closed += is_closed ? 1 : 0;
    ++total;
    return *this;
  }
  PopulationCounts operator+(const PopulationCounts& o) const {
    return {closed + o.closed, total + o.total};
  }
};

inline PopulationCounts counts_of(const WarningPopulation& pop) {
  PopulationCounts c;
  for (const auto& m : pop.members) c.add(m.closed);
  return c;
}

/// A formula value plus whether it fell back to the degenerate default.
struct Measured {
  double value = 0;
  bool degenerate = false;
};

/// (closed - open) / total; 0 and degenerate for an empty population.
inline Measured warning_context(PopulationCounts c) {
  if (c.total == 0) return {0.0, true};
  const double closed = static_cast<double>(c.closed);
  const double open = static_cast<double>(c.total - c.closed);
  return {(closed - open) / static_cast<double>(c.total), false};
}

inline Measured warning_context(const WarningPopulation& pop) { return warning_context(counts_of(pop)); }

/// Share of closed warnings in a pattern's population.
inline Measured defect_likelihood(PopulationCounts c) {
  if (c.total == 0) return {0.0, true};
  return {static_cast<double>(c.closed) / static_cast<double>(c.total), false};
}

inline Measured defect_likelihood(const WarningPopulation& pop) {
  return defect_likelihood(counts_of(pop));
}

/// Spread of per-pattern defect likelihoods around the category's pooled one:
/// sum over patterns of (D(p) - D(T))^2, divided by |T| - 1. A category with a
/// single pattern yields 0 and is marked degenerate.
inline Measured discretized_defect_likelihood(const std::vector<PopulationCounts>& patterns) {
  if (patterns.size() < 2) return {0.0, true};
  PopulationCounts pooled;
  for (const auto& p : patterns) pooled = pooled + p;
  const double d_t = defect_likelihood(pooled).value;
  double sum = 0;
  for (const auto& p : patterns) {
    const double diff = defect_likelihood(p).value - d_t;
    sum += diff * diff;
  }
  return {sum / static_cast<double>(patterns.size() - 1), false};
}

inline Measured discretized_defect_likelihood(const std::vector<WarningPopulation>& patterns) {
  std::vector<PopulationCounts> c;
  c.reserve(patterns.size());
  for (const auto& p : patterns) c.push_back(counts_of(p));
  return discretized_defect_likelihood(c);
}

// --- modes -----------------------------------------------------------------

struct LeakMode {
  enum class Kind { Leaky, LeakFree };
  Kind kind = Kind::LeakFree;
  std::int64_t window_days = 365;

  static LeakMode leaky() { return LeakMode{Kind::Leaky, 0}; }
  static LeakMode leak_free(std::int64_t window = 365) { return LeakMode{Kind::LeakFree, window}; }
  bool operator==(const LeakMode&) const = default;
};

inline const char* to_string(LeakMode::Kind k) { return k == LeakMode::Kind::Leaky ? "leaky" : "leakfree"; }

inline std::optional<LeakMode::Kind> parse_leak_kind(std::string_view s) {
  if (s == "leaky") return LeakMode::Kind::Leaky;
  if (s == "leakfree") return LeakMode::Kind::LeakFree;
  return std::nullopt;
}

enum class LifetimeUnit { Days, Revisions };

struct ExtractionOptions {
  LifetimeUnit lifetime_unit = LifetimeUnit::Days;
  bool bridge_renames = true;
  // Test hook: LeakFree closure is read from the last revision of the full
  // history instead of the extraction revision. The guard audit must notice.
  bool peek_future_for_testing = false;
};

struct ExtractionError {
  WarningKey key;
  std::vector<std::string> missing;
};

struct ExtractionResult {
  std::map<WarningKey, FeatureVector> vectors;
  std::vector<ExtractionError> errors;
};

// --- lifetime ---------------------------------------------------------------

struct LifetimeStats {
  std::size_t lifetime_revisions = 0;
  double avg_lifetime_for_type = 0;
  bool no_closed_of_type = false;
};

namespace detail {

/// Mean open duration, per category, of warnings closed at or before `at`.
inline std::map<std::string, Measured> average_lifetimes(const HistoryIndex& idx, std::size_t at,
                                                         LifetimeUnit unit) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (std::size_t id = 0; id < idx.warnings().size(); ++id) {
    const auto& w = idx.warning(id);
    if (w.present.front() > at) continue;
    auto closed = idx.closed_at(id);
    if (!closed || *closed > at) continue;
    double duration = 0;
    if (unit == LifetimeUnit::Days) {
      duration = static_cast<double>(idx.timestamp_at(*closed) - idx.timestamp_at(w.present.front())) /
                 static_cast<double>(kSecondsPerDay);
    } else {
      duration = static_cast<double>(
          std::lower_bound(w.present.begin(), w.present.end(), *closed) - w.present.begin());
    }
    auto& a = acc[w.bug_category];
    a.first += duration;
    a.second += 1;
  }
  std::map<std::string, Measured> out;
  for (const auto& [cat, a] : acc) out[cat] = Measured{a.first / static_cast<double>(a.second), false};
  return out;
}

inline std::size_t lifetime_revisions(const HistoryIndex& idx, std::size_t id, std::size_t at) {
  const auto& p = idx.warning(id).present;
  return static_cast<std::size_t>(std::upper_bound(p.begin(), p.end(), at) - p.begin());
}

}  // namespace detail

inline LifetimeStats lifetime_stats(const ProjectHistory& h, const WarningKey& key, const RevisionId& at_rev,
                                    LifetimeUnit unit = LifetimeUnit::Days, IndexOptions opts = {}) {
  ProjectHistory upto = truncate_history(h, at_rev);
  HistoryIndex idx(upto, opts);
  auto id = idx.find(key);
  if (!id) throw UsageError("warning " + key.to_string() + " is not observed at or before '" + at_rev + "'");
  const std::size_t at = idx.position(at_rev);
  LifetimeStats s;
  s.lifetime_revisions = detail::lifetime_revisions(idx, *id, at);
  auto avgs = detail::average_lifetimes(idx, at, unit);
  auto it = avgs.find(idx.warning(*id).bug_category);
  if (it == avgs.end())
    s.no_closed_of_type = true;
  else
    s.avg_lifetime_for_type = it->second.value;
  return s;
}

// --- extraction ------------------------------------------------------------------

namespace detail {

struct CombinationValues {
  double context_method = 0, context_file = 0, context_type = 0;
  double likelihood = 0, discretization = 0;
  std::uint32_t flags = 0;
};

/// Computes the five combination features for every warning present at `at`
/// given which tracked warnings form the population universe and which of
/// them count as closed. A warning always belongs to its own populations.
inline std::map<WarningKey, CombinationValues> combination_features(const HistoryIndex& idx, std::size_t at,
                                                                     const std::vector<char>& in_universe,
                                                                     const std::vector<char>& closed) {
  using MethodKey = std::tuple<std::size_t, std::string, std::string>;
  std::map<MethodKey, PopulationCounts> by_method;
  std::map<std::size_t, PopulationCounts> by_file;
  std::map<std::string, PopulationCounts> by_category;
  std::map<std::string, std::map<std::string, PopulationCounts>> by_pattern;  // category -> pattern
  for (std::size_t id = 0; id < idx.warnings().size(); ++id) {
    if (!in_universe[id]) continue;
    const auto& w = idx.warning(id);
    const bool c = closed[id] != 0;
    if (w.method) by_method[{w.lineage, w.class_name, *w.method}].add(c);
    by_file[w.lineage].add(c);
    by_category[w.bug_category].add(c);
    by_pattern[w.bug_category][w.bug_pattern].add(c);
  }
  auto lookup = [](const auto& m, const auto& k) {
    auto it = m.find(k);
    return it == m.end() ? PopulationCounts{} : it->second;
  };

  std::map<WarningKey, CombinationValues> out;
  for (const auto& p : idx.present_at(at)) {
    const auto& w = idx.warning(p.id);
    PopulationCounts self;
    if (!in_universe[p.id]) self.add(closed[p.id] != 0);

    CombinationValues v;
    PopulationCounts file = lookup(by_file, w.lineage) + self;
    PopulationCounts method = file;
    if (w.method)
      method = lookup(by_method, MethodKey{w.lineage, w.class_name, *w.method}) + self;
    else
      v.flags |= kFlagMethodFallback;
    PopulationCounts type = lookup(by_category, w.bug_category) + self;

    auto m = warning_context(method);
    auto f = warning_context(file);
    auto t = warning_context(type);
    if (m.degenerate || f.degenerate || t.degenerate) v.flags |= kFlagEmptyPopulation;
    if (method.total == 1 && w.method) v.flags |= kFlagSingletonMethod;
    if (file.total == 1) v.flags |= kFlagSingletonFile;
    v.context_method = m.value;
    v.context_file = f.value;
    v.context_type = t.value;

    std::vector<PopulationCounts> patterns;
    PopulationCounts own;
    bool own_seen = false;
    if (auto cat = by_pattern.find(w.bug_category); cat != by_pattern.end()) {
      for (const auto& [pattern, c] : cat->second) {
        PopulationCounts pc = c;
        if (pattern == w.bug_pattern) {
          pc = pc + self;
          own = pc;
          own_seen = true;
        }
        patterns.push_back(pc);
      }
    }
    if (!own_seen) {
      own = self;
      patterns.push_back(self);
    }
    v.likelihood = defect_likelihood(own).value;
    auto disc = discretized_defect_likelihood(patterns);
    if (disc.degenerate) v.flags |= kFlagSinglePatternCategory;
    v.discretization = disc.value;
    out.emplace(p.key, v);
  }
  return out;
}

inline std::map<std::string, std::int64_t> package_churn(const HistoryIndex& idx, std::size_t at,
                                                         std::int64_t days) {
  const Timestamp end = idx.timestamp_at(at);
  const Timestamp start = end - days * kSecondsPerDay;
  std::map<std::string, std::int64_t> churn;
  const auto& h = idx.history();
  for (const auto& c : h.changes) {
    const Timestamp ts = idx.timestamp_at(idx.position(c.revision));
    if (ts > start && ts <= end) churn[parent_dir(c.file_path)] += c.lines_added;
  }
  return churn;
}

}  // namespace detail

/// Golden Features for every warning present at `at_rev`, keyed and ordered
/// by WarningKey. Leaky mode needs the reference revision; LeakFree forbids it.
inline ExtractionResult extract_golden(const ProjectHistory& h, const RevisionId& at_rev, const LeakMode& mode,
                                       const std::optional<RevisionId>& ref_rev,
                                       const ExtractionOptions& opts = {}) {
  if (h.empty()) throw UsageError("history is empty; nothing to extract");
  if (mode.kind == LeakMode::Kind::Leaky && !ref_rev)
    throw UsageError("leaky extraction requires a reference revision");
  if (mode.kind == LeakMode::Kind::LeakFree && ref_rev)
    throw UsageError("leak-free extraction must not be given a reference revision");
  if (mode.kind == LeakMode::Kind::LeakFree && mode.window_days <= 0)
    throw UsageError("leak-free window must be positive");

  const IndexOptions index_opts{opts.bridge_renames};
  const ProjectHistory present = truncate_history(h, at_rev);
  const HistoryIndex now(present, index_opts);
  const std::size_t at = now.position(at_rev);
  if (!now.analyzed_at(at)) throw UsageError("revision '" + at_rev + "' was not analyzed");

  std::map<WarningKey, detail::CombinationValues> combos;
  if (mode.kind == LeakMode::Kind::Leaky) {
    if (h.position(*ref_rev) <= h.position(at_rev))
      throw OrderingError("reference revision '" + *ref_rev + "' must come after '" + at_rev + "'");
    const ProjectHistory upto_ref = truncate_history(h, *ref_rev);
    const HistoryIndex future(upto_ref, index_opts);
    const std::size_t f_at = future.position(at_rev);
    const std::size_t f_ref = future.position(*ref_rev);
    std::vector<char> universe(future.warnings().size()), closed(future.warnings().size());
    for (std::size_t id = 0; id < future.warnings().size(); ++id) {
      universe[id] = future.first_seen(id) <= f_at;
      closed[id] = !future.is_present(id, f_ref);
    }
    combos = detail::combination_features(future, f_at, universe, closed);
  } else {
    auto leak_free = [&](const HistoryIndex& idx, std::size_t closure_pos) {
      const std::size_t i_at = idx.position(at_rev);
      const Timestamp window_start = idx.timestamp_at(i_at) - mode.window_days * kSecondsPerDay;
      std::vector<char> universe(idx.warnings().size()), closed(idx.warnings().size());
      for (std::size_t id = 0; id < idx.warnings().size(); ++id) {
        const std::size_t first = idx.first_seen(id);
        universe[id] = first <= i_at && idx.timestamp_at(first) >= window_start;
        closed[id] = !idx.is_present(id, closure_pos);
      }
      return detail::combination_features(idx, i_at, universe, closed);
    };
    if (opts.peek_future_for_testing) {
      const HistoryIndex full(h, index_opts);
      combos = leak_free(full, *full.last_analyzed(full.revision_count() - 1));
    } else {
      combos = leak_free(now, at);
    }
  }

  const auto lifetimes = detail::average_lifetimes(now, at, opts.lifetime_unit);
  const auto churn = detail::package_churn(now, at, 90);
  const Timestamp at_ts = now.timestamp_at(at);

  ExtractionResult result;
  for (const auto& p : now.present_at(at)) {
    auto attrs_it = present.attributes.find(AttributeKey{at_rev, p.key});
    std::vector<std::string> missing;
    if (attrs_it == present.attributes.end())
      missing = StaticAttributes{}.missing_fields();
    else
      missing = attrs_it->second.missing_fields();
    if (!missing.empty()) {
      result.errors.push_back(ExtractionError{p.key, std::move(missing)});
      continue;
    }
    const auto& a = attrs_it->second;
    const auto& w = now.warning(p.id);
    const auto& lineage = now.lineages()[w.lineage];
    const auto& combo = combos.at(p.key);

    FeatureVector v;
    v.flags = combo.flags;
    v[Feature::WarningContextMethod] = combo.context_method;
    v[Feature::WarningContextFile] = combo.context_file;
    v[Feature::WarningContextType] = combo.context_type;
    v[Feature::DefectLikelihoodPattern] = combo.likelihood;
    v[Feature::DefectLikelihoodDiscretization] = combo.discretization;

    if (auto it = lifetimes.find(w.bug_category); it != lifetimes.end()) {
      v[Feature::AverageLifetimeType] = it->second.value;
    } else {
      v[Feature::AverageLifetimeType] = 0.0;
      v.flags |= kFlagNoClosedOfType;
    }
    v[Feature::CommentCodeRatio] = *a.comment_code_ratio;
    v[Feature::MethodDepth] = static_cast<double>(*a.method_depth);
    v[Feature::FileDepth] = static_cast<double>(*a.file_depth);
    v[Feature::MethodsInFile] = static_cast<double>(*a.methods_in_file);
    v[Feature::ClassesInPackage] = static_cast<double>(*a.classes_in_package);
    v[Feature::WarningPattern] = p.key.bug_pattern;
    v[Feature::WarningType] = w.bug_category;
    v[Feature::WarningPriority] = static_cast<double>(p.observation->priority);
    v[Feature::Package] = p.key.package;
    v[Feature::FileAge] = static_cast<double>(at_ts - lineage.created_timestamp) / static_cast<double>(kSecondsPerDay);
    v[Feature::FileCreation] = static_cast<double>(lineage.created_timestamp);

    std::set<std::string> authors;
    std::vector<std::size_t> touching;
    for (auto ci : lineage.changes) {
      const auto& c = present.changes[ci];
      if (!c.author.empty()) authors.insert(c.author);
      const std::size_t pos = now.position(c.revision);
      if (touching.empty() || touching.back() != pos) touching.push_back(pos);
    }
    v[Feature::Developers] = static_cast<double>(authors.size());
    v[Feature::ParameterSignature] = *a.parameter_signature;
    v[Feature::MethodVisibility] = std::string(to_string(*a.method_visibility));

    const std::size_t keep_from = touching.size() > 25 ? touching[touching.size() - 25] : 0;
    std::int64_t loc_file = 0;
    for (auto ci : lineage.changes) {
      const auto& c = present.changes[ci];
      if (now.position(c.revision) >= keep_from) loc_file += c.lines_added;
    }
    v[Feature::LocAddedFile25Revisions] = static_cast<double>(loc_file);
    auto ch = churn.find(parent_dir(p.key.file_path));
    v[Feature::LocAddedPackage3Months] = static_cast<double>(ch == churn.end() ? 0 : ch->second);
    v[Feature::WarningLifetimeRevisions] = static_cast<double>(detail::lifetime_revisions(now, p.id, at));

    for (std::size_t i = 0; i < kFeatureCount; ++i)
      if (v.values[i].index() == 0 && !std::isfinite(std::get<double>(v.values[i])))
        throw FeatureError("non-finite value for '" + std::string(kFeatures[i].name) + "' of " +
                           p.key.to_string());
    result.vectors.emplace(p.key, std::move(v));
  }
  return result;
}

// --- time-travel guard audit -------------------------------------------------

struct GuardAuditReport {
  RevisionId at_revision;
  std::size_t compared = 0;
  std::vector<WarningKey> mismatched;
  bool passed() const { return mismatched.empty(); }
};

/// Extracts LeakFree features from the full history and from the history cut at
/// `at_rev` and reports every warning whose vectors are not bit-identical.
inline GuardAuditReport audit_time_travel(const ProjectHistory& h, const RevisionId& at_rev,
                                          std::int64_t window_days = 365, const ExtractionOptions& opts = {}) {
  const auto mode = LeakMode::leak_free(window_days);
  auto full = extract_golden(h, at_rev, mode, std::nullopt, opts);
  auto cut = extract_golden(truncate_history(h, at_rev), at_rev, mode, std::nullopt, opts);
  GuardAuditReport r;
  r.at_revision = at_rev;
  for (const auto& [key, v] : full.vectors) {
    ++r.compared;
    auto it = cut.vectors.find(key);
    if (it == cut.vectors.end() || !bit_equal(v, it->second)) r.mismatched.push_back(key);
  }
  for (const auto& [key, v] : cut.vectors)
    if (!full.vectors.count(key)) r.mismatched.push_back(key);
  return r;
}

// --- feature matrix I/O -----------------------------------------------------

/// One row of the delimited feature matrix.
struct FeatureRow {
  std::string split;  // "train" / "test", or empty when the matrix has no split
  WarningKey key;
  RevisionId revision;
  Label label = Label::Unknown;
  std::string mode;
  FeatureVector features;

  bool operator==(const FeatureRow&) const = default;
};

inline const std::vector<std::string>& key_columns() {
  static const std::vector<std::string> cols{"bug_pattern", "file_path", "package", "class",
                                             "method",      "revision",  "label",   "mode",
                                             "flags"};
  return cols;
}

namespace detail {

inline void check_cell(const std::string& s) {
  if (s.find_first_of("\t\n\r") != std::string::npos)
    throw FeatureError("value '" + s + "' contains a tab or newline");
}

}  // namespace detail

/// Tab-separated: optional split column, key columns, then the 23 features
/// under their canonical names.
inline void write_feature_matrix(std::ostream& out, const std::vector<FeatureRow>& rows, bool with_split) {
  std::vector<std::string> header;
  if (with_split) header.emplace_back("split");
  for (const auto& c : key_columns()) header.push_back(c);
  for (const auto& f : kFeatures) header.emplace_back(f.name);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "\t" : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    std::vector<std::string> cells;
    if (with_split) cells.push_back(r.split);
    cells.push_back(r.key.bug_pattern);
    cells.push_back(r.key.file_path);
    cells.push_back(r.key.package);
    cells.push_back(r.key.class_name);
    cells.push_back(r.key.method.value_or(""));
    cells.push_back(r.revision);
    cells.emplace_back(to_string(r.label));
    cells.push_back(r.mode);
    cells.push_back(flags_to_string(r.features.flags));
    for (const auto& v : r.features.values)
      cells.push_back(v.index() == 0 ? format_double(std::get<double>(v)) : std::get<std::string>(v));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      detail::check_cell(cells[i]);
      out << (i ? "\t" : "") << cells[i];
    }
    out << '\n';
  }
}

inline std::vector<FeatureRow> read_feature_matrix(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "feature matrix: missing header");
  auto header = split(line, '\t');
  const bool with_split = !header.empty() && header[0] == "split";
  const std::size_t base = with_split ? 1 : 0;
  std::vector<std::string> expected;
  if (with_split) expected.emplace_back("split");
  for (const auto& c : key_columns()) expected.push_back(c);
  for (const auto& f : kFeatures) expected.emplace_back(f.name);
  if (header != expected) throw ParseError(1, "feature matrix: unexpected header");
  std::vector<FeatureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split(line, '\t');
    if (cells.size() != expected.size()) throw ParseError(line_no, "feature matrix: wrong column count");
    FeatureRow r;
    if (with_split) r.split = cells[0];
    r.key = WarningKey{cells[base], cells[base + 1], cells[base + 2], cells[base + 3],
                       cells[base + 4].empty() ? std::nullopt : std::optional<std::string>(cells[base + 4])};
    r.revision = cells[base + 5];
    auto label = parse_label(cells[base + 6]);
    if (!label) throw ParseError(line_no, "feature matrix: bad label");
    r.label = *label;
    r.mode = cells[base + 7];
    r.features.flags = parse_flags(cells[base + 8]);
    const std::size_t first = base + key_columns().size();
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      const auto& cell = cells[first + i];
      if (kFeatures[i].kind == FeatureKind::Numeric) {
        auto v = parse_double(cell);
        if (!v) throw ParseError(line_no, std::string("feature matrix: bad number for '") + kFeatures[i].name + "'");
        r.features.values[i] = *v;
      } else {
        r.features.values[i] = cell;
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace wtriage

#pragma once

// Seeded synthetic project histories with planted ground truth.
//
// Every warning gets a true nature (actionable or false alarm) and a fate:
// a real fix after a planted delay, an incidental close from unrelated code
// changes, removal with its file, or staying open. The ledger is a plain
// ProjectHistory; the truth goes to a sidecar.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wtriage/error.hpp"
#include "wtriage/history.hpp"
#include "wtriage/util.hpp"

namespace wtriage {

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_files = 120;
  std::size_t n_revisions = 120;
  double warnings_per_revision = 4.0;  // new warnings per revision, on average
  double true_actionable_rate = 0.4;
  std::pair<double, double> fix_delay_days{30, 365};
  double incidental_close_rate = 0.0;
  double file_delete_rate = 0.0;
  // Target fraction of the labeled test-revision warnings that were already
  // open at the training revision. Unset leaves the natural fraction.
  std::optional<double> duplication_pressure;
  // Fixes all land between the test and reference revisions and natures are
  // drawn independently of everything else, so only closure by the reference
  // revision tells the classes apart.
  bool leak_signal = false;

  double history_days = 1825;
  double train_day = 730;
  double test_day = 912;
  double reference_day = 1460;
  std::size_t n_patterns = 30;
  std::size_t n_categories = 6;
  std::size_t n_packages = 8;
  std::size_t n_developers = 12;
  std::size_t methods_per_file = 12;
  double field_warning_rate = 0.05;  // warnings attached to a class, not a method
  double touches_per_revision = 12;  // unrelated Modify records per revision
  std::size_t analyze_every = 1;     // role revisions are always analyzed
  bool attrs_at_all_revisions = false;
};

enum class ClosureKind { None, Fix, Incidental, FileDeleted };

inline const char* to_string(ClosureKind k) {
  switch (k) {
    case ClosureKind::None: return "none";
    case ClosureKind::Fix: return "fix";
    case ClosureKind::Incidental: return "incidental";
    case ClosureKind::FileDeleted: return "file_deleted";
  }
  return "?";
}

inline std::optional<ClosureKind> parse_closure_kind(std::string_view s) {
  if (s == "none") return ClosureKind::None;
  if (s == "fix") return ClosureKind::Fix;
  if (s == "incidental") return ClosureKind::Incidental;
  if (s == "file_deleted") return ClosureKind::FileDeleted;
  return std::nullopt;
}

struct TruthRecord {
  WarningKey key;
  RevisionId born;
  bool actionable = false;
  ClosureKind closure = ClosureKind::None;
  std::optional<RevisionId> closed_at;  // first revision without the warning

  bool operator==(const TruthRecord&) const = default;
};

struct SynthResult {
  ProjectHistory history;
  std::vector<TruthRecord> truth;  // sorted by key
  RevisionId train_rev;
  RevisionId test_rev;
  RevisionId ref_rev;
};

inline void validate(const SynthConfig& c) {
  auto rate = [](double v, const char* name) {
    if (!(v >= 0 && v <= 1)) throw UsageError(std::string(name) + " must be in [0, 1]");
  };
  if (c.n_revisions == 0) throw UsageError("synth needs at least one revision");
  if (c.n_revisions < 3) throw UsageError("synth needs at least three revisions for train/test/reference");
  if (c.n_files == 0) throw UsageError("synth needs at least one file");
  rate(c.true_actionable_rate, "true_actionable_rate");
  rate(c.incidental_close_rate, "incidental_close_rate");
  rate(c.file_delete_rate, "file_delete_rate");
  rate(c.field_warning_rate, "field_warning_rate");
  if (c.duplication_pressure) rate(*c.duplication_pressure, "duplication_pressure");
  if (!(c.fix_delay_days.first >= 0 && c.fix_delay_days.first <= c.fix_delay_days.second))
    throw UsageError("fix delay needs 0 <= min <= max");
  if (!(c.warnings_per_revision >= 0)) throw UsageError("warnings_per_revision must be non-negative");
  if (!(c.history_days > 0)) throw UsageError("history_days must be positive");
  if (!(c.train_day < c.test_day && c.test_day < c.reference_day && c.reference_day <= c.history_days))
    throw UsageError("need train_day < test_day < reference_day <= history_days");
  if (c.n_patterns == 0 || c.n_categories == 0 || c.n_packages == 0 || c.n_developers == 0 ||
      c.methods_per_file == 0 || c.analyze_every == 0)
    throw UsageError("pattern, category, package, developer, method and analysis counts must be positive");
}

namespace detail {

inline constexpr Timestamp kSynthEpoch = 1262304000;  // 2010-01-01

inline const char* synth_category(std::size_t i) {
  static const char* names[] = {"CORRECTNESS", "BAD_PRACTICE", "STYLE",       "PERFORMANCE",
                                "MT_CORRECTNESS", "MALICIOUS_CODE", "SECURITY", "I18N"};
  return i < 8 ? names[i] : nullptr;
}

inline const char* synth_signature(std::size_t i) {
  static const char* sigs[] = {"()V", "(I)V", "(Ljava/lang/String;)V", "(II)I", "(Ljava/util/List;)Z", "([B)V"};
  return sigs[i % 6];
}

struct SynthFile {
  std::string path;
  std::string package;
  std::string class_name;
  std::size_t package_index = 0;
  std::size_t created = 0;
  std::optional<std::size_t> deleted;
  double comment_ratio = 0;
  std::int64_t depth = 0;
};

struct SynthMethod {
  std::string name;
  std::string signature;
  std::int64_t depth = 1;
  Visibility visibility = Visibility::Public;
};

struct SynthWarning {
  std::size_t file = 0;
  std::optional<std::size_t> method;  // index into the file's method pool
  std::size_t pattern = 0;
  int priority = 1;
  std::int64_t line = 1;
  std::size_t born = 0;
  std::optional<std::size_t> closed;  // first revision without it
  bool actionable = false;
  ClosureKind closure = ClosureKind::None;
};

}  // namespace detail

inline SynthResult generate(const SynthConfig& cfg) {
  using namespace detail;
  validate(cfg);
  Rng rng(cfg.seed);
  const std::size_t n_rev = cfg.n_revisions;

  std::vector<Timestamp> ts(n_rev);
  for (std::size_t i = 0; i < n_rev; ++i)
    ts[i] = kSynthEpoch + static_cast<Timestamp>(std::llround(static_cast<double>(i) * cfg.history_days /
                                                              static_cast<double>(n_rev - 1) * kSecondsPerDay));
  auto nearest = [&](double day) {
    const double target = static_cast<double>(kSynthEpoch) + day * kSecondsPerDay;
    std::size_t best = 0;
    for (std::size_t i = 1; i < n_rev; ++i)
      if (std::abs(static_cast<double>(ts[i]) - target) < std::abs(static_cast<double>(ts[best]) - target))
        best = i;
    return best;
  };
  // First revision at or after a timestamp.
  auto revision_at_or_after = [&](double t) -> std::optional<std::size_t> {
    auto it = std::lower_bound(ts.begin(), ts.end(), t,
                               [](Timestamp a, double b) { return static_cast<double>(a) < b; });
    if (it == ts.end()) return std::nullopt;
    return static_cast<std::size_t>(it - ts.begin());
  };
  const std::size_t train = nearest(cfg.train_day), test = nearest(cfg.test_day), ref = nearest(cfg.reference_day);
  if (!(train < test && test < ref))
    throw UsageError("train, test and reference days collapse onto the same revisions; add revisions");

  auto rev_id = [&](std::size_t i) {
    std::string s = std::to_string(i);
    return "r" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
  };
  auto category_name = [&](std::size_t c) {
    if (cfg.n_categories <= 8) return std::string(synth_category(c));
    return "CATEGORY_" + std::to_string(c);
  };
  auto pattern_name = [&](std::size_t p) {
    std::string s = std::to_string(p);
    return "SYN_" + category_name(p % cfg.n_categories) + "_" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
  };

  // Files, spread over packages; most exist from the first revision.
  std::vector<SynthFile> files(cfg.n_files);
  std::vector<std::size_t> package_size(cfg.n_packages, 0);
  double harmonic = 0;
  for (std::size_t i = 0; i < cfg.n_packages; ++i) harmonic += 1.0 / static_cast<double>(i + 1);
  for (std::size_t f = 0; f < cfg.n_files; ++f) {
    auto& file = files[f];
    // Package sizes are skewed: package i gets weight 1/(i+1).
    double u = rng.uniform() * harmonic;
    file.package_index = 0;
    while (file.package_index + 1 < cfg.n_packages && u >= 1.0 / static_cast<double>(file.package_index + 1)) {
      u -= 1.0 / static_cast<double>(file.package_index + 1);
      ++file.package_index;
    }
    ++package_size[file.package_index];
    file.package = "org.synth.p" + std::to_string(file.package_index);
    const std::string cls = "C" + std::to_string(f);
    file.class_name = file.package + "." + cls;
    file.path = "src/main/java/org/synth/p" + std::to_string(file.package_index) + "/" + cls + ".java";
    file.depth = static_cast<std::int64_t>(std::count(file.path.begin(), file.path.end(), '/'));
    // Files appear during the first part of history, well before training.
    file.created = rng.bernoulli(0.3) ? 0 : static_cast<std::size_t>(rng.below(std::max<std::size_t>(1, train * 3 / 4)));
    if (rng.bernoulli(cfg.file_delete_rate) && file.created + 1 < n_rev)
      file.deleted = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(file.created) + 1,
                                                          static_cast<std::int64_t>(n_rev) - 1));
    file.comment_ratio = std::round(rng.uniform(0.02, 0.6) * 1000) / 1000;
  }
  std::vector<std::vector<SynthMethod>> methods(cfg.n_files);
  for (auto& pool : methods) {
    pool.resize(cfg.methods_per_file);
    for (std::size_t m = 0; m < pool.size(); ++m) {
      pool[m].signature = synth_signature(static_cast<std::size_t>(rng.below(6)));
      pool[m].name = "m" + std::to_string(m) + pool[m].signature;
      pool[m].depth = rng.between(1, 6);
      pool[m].visibility = static_cast<Visibility>(rng.below(4));
    }
  }

  std::vector<double> propensity(cfg.n_patterns, cfg.true_actionable_rate);
  if (!cfg.leak_signal) {
    const double spread = std::min({cfg.true_actionable_rate, 1 - cfg.true_actionable_rate, 0.35});
    for (auto& p : propensity) p = cfg.true_actionable_rate + spread * (2 * rng.uniform() - 1);
  }

  auto file_alive = [&](std::size_t f, std::size_t pos) {
    return files[f].created <= pos && (!files[f].deleted || pos < *files[f].deleted);
  };

  // Warnings, revision by revision.
  std::vector<SynthWarning> warnings;
  std::set<std::tuple<std::size_t, std::optional<std::size_t>, std::size_t>> identities;
  const double end_ts = static_cast<double>(ts.back());
  const double day = static_cast<double>(kSecondsPerDay);
  for (std::size_t b = 0; b < n_rev; ++b) {
    const double whole = std::floor(cfg.warnings_per_revision);
    std::size_t count = static_cast<std::size_t>(whole) + (rng.bernoulli(cfg.warnings_per_revision - whole) ? 1 : 0);
    std::vector<std::size_t> alive;
    for (std::size_t f = 0; f < cfg.n_files; ++f)
      if (file_alive(f, b)) alive.push_back(f);
    if (alive.empty()) continue;
    for (std::size_t k = 0; k < count; ++k) {
      SynthWarning w;
      w.born = b;
      bool placed = false;
      for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
        w.file = alive[static_cast<std::size_t>(rng.below(alive.size()))];
        w.pattern = static_cast<std::size_t>(rng.below(cfg.n_patterns));
        w.method.reset();
        if (!rng.bernoulli(cfg.field_warning_rate)) w.method = static_cast<std::size_t>(rng.below(cfg.methods_per_file));
        placed = identities.emplace(w.file, w.method, w.pattern).second;
      }
      if (!placed) continue;  // identity space exhausted
      w.priority = static_cast<int>(rng.between(1, 3));
      w.line = rng.between(1, 800);
      w.actionable = rng.bernoulli(propensity[w.pattern]);

      const double born_ts = static_cast<double>(ts[b]);
      double close_ts = std::numeric_limits<double>::infinity();
      if (w.actionable) {
        if (cfg.leak_signal) {
          const double lo = std::max(born_ts, static_cast<double>(ts[test]));
          const double hi = b < ref ? static_cast<double>(ts[ref])
                                    : born_ts + cfg.fix_delay_days.second * day;
          close_ts = lo + (hi - lo) * (1 - rng.uniform());  // in (lo, hi]
        } else {
          close_ts = born_ts + rng.uniform(cfg.fix_delay_days.first, cfg.fix_delay_days.second) * day;
        }
        w.closure = ClosureKind::Fix;
      }
      if (rng.bernoulli(cfg.incidental_close_rate)) {
        const double t = born_ts + (end_ts - born_ts) * (1 - rng.uniform());
        if (t < close_ts) {
          close_ts = t;
          w.closure = ClosureKind::Incidental;
        }
      }
      std::optional<std::size_t> closed;
      if (std::isfinite(close_ts)) {
        closed = revision_at_or_after(close_ts);
        if (closed && *closed <= b) closed = b + 1 < n_rev ? std::optional<std::size_t>(b + 1) : std::nullopt;
      }
      if (!closed) w.closure = ClosureKind::None;
      const auto& del = files[w.file].deleted;
      if (del && (!closed || *del <= *closed)) {
        closed = *del;
        w.closure = ClosureKind::FileDeleted;
      }
      w.closed = closed;
      warnings.push_back(w);
    }
  }

  // Trim the test-revision cohort to the requested duplication pressure.
  if (cfg.duplication_pressure) {
    auto present = [&](const SynthWarning& w, std::size_t pos) {
      return w.born <= pos && (!w.closed || pos < *w.closed);
    };
    std::vector<std::size_t> old_ids, new_ids;
    for (std::size_t i = 0; i < warnings.size(); ++i) {
      const auto& w = warnings[i];
      if (!present(w, test) || !file_alive(w.file, ref)) continue;  // unknowns are dropped anyway
      (w.born <= train ? old_ids : new_ids).push_back(i);
    }
    const double p = *cfg.duplication_pressure;
    std::vector<std::size_t> drop;
    const double o = static_cast<double>(old_ids.size()), n = static_cast<double>(new_ids.size());
    if (o + n > 0 && o / (o + n) > p) {
      const auto keep = static_cast<std::size_t>(p >= 1 ? o : std::llround(p * n / (1 - p)));
      rng.shuffle(old_ids);
      drop.assign(old_ids.begin() + static_cast<std::ptrdiff_t>(std::min(keep, old_ids.size())), old_ids.end());
    } else if (o + n > 0) {
      const auto keep = static_cast<std::size_t>(p <= 0 ? 0 : std::llround(o * (1 - p) / p));
      rng.shuffle(new_ids);
      drop.assign(new_ids.begin() + static_cast<std::ptrdiff_t>(std::min(keep, new_ids.size())), new_ids.end());
    }
    std::sort(drop.begin(), drop.end());
    std::vector<SynthWarning> kept;
    std::size_t d = 0;
    for (std::size_t i = 0; i < warnings.size(); ++i) {
      if (d < drop.size() && drop[d] == i) {
        ++d;
        continue;
      }
      kept.push_back(warnings[i]);
    }
    warnings = std::move(kept);
  }

  // Emit the history.
  SynthResult out;
  out.train_rev = rev_id(train);
  out.test_rev = rev_id(test);
  out.ref_rev = rev_id(ref);
  auto& h = out.history;
  for (std::size_t i = 0; i < n_rev; ++i) {
    RevisionMeta r;
    r.id = rev_id(i);
    r.timestamp = ts[i];
    if (i > 0) r.parent = rev_id(i - 1);
    r.branch = "main";
    r.analyzed = i % cfg.analyze_every == 0 || i == train || i == test || i == ref || i + 1 == n_rev;
    h.revisions.push_back(std::move(r));
  }
  auto developer = [&]() { return "dev" + std::to_string(rng.below(cfg.n_developers)); };
  std::vector<std::vector<std::size_t>> closing(n_rev);
  for (std::size_t i = 0; i < warnings.size(); ++i)
    if (warnings[i].closed && warnings[i].closure != ClosureKind::FileDeleted) closing[*warnings[i].closed].push_back(i);
  for (std::size_t pos = 0; pos < n_rev; ++pos) {
    for (std::size_t f = 0; f < cfg.n_files; ++f) {
      if (files[f].created == pos)
        h.changes.push_back(FileChangeRecord{rev_id(pos), files[f].path, ChangeKind::Add, std::nullopt,
                                             rng.between(40, 600), 0, developer()});
      if (files[f].deleted && *files[f].deleted == pos)
        h.changes.push_back(FileChangeRecord{rev_id(pos), files[f].path, ChangeKind::Delete, std::nullopt, 0,
                                             rng.between(40, 600), developer()});
    }
    std::vector<std::size_t> alive;
    for (std::size_t f = 0; f < cfg.n_files; ++f)
      if (file_alive(f, pos) && files[f].created < pos) alive.push_back(f);
    if (!alive.empty()) {
      const auto mean = static_cast<std::int64_t>(std::max(1.0, cfg.touches_per_revision));
      const auto touches = static_cast<std::size_t>(rng.between(std::max<std::int64_t>(1, mean / 2), mean + mean / 2));
      for (std::size_t k = 0; k < touches; ++k) {
        const auto f = alive[static_cast<std::size_t>(rng.below(alive.size()))];
        h.changes.push_back(FileChangeRecord{rev_id(pos), files[f].path, ChangeKind::Modify, std::nullopt,
                                             rng.between(1, 120), rng.between(0, 60), developer()});
      }
    }
    for (auto i : closing[pos]) {
      const auto f = warnings[i].file;
      if (!file_alive(f, pos)) continue;
      h.changes.push_back(FileChangeRecord{rev_id(pos), files[f].path, ChangeKind::Modify, std::nullopt,
                                           rng.between(1, 30), rng.between(1, 30), developer()});
    }
  }

  auto key_of = [&](const SynthWarning& w) {
    const auto& f = files[w.file];
    WarningKey k{pattern_name(w.pattern), f.path, f.package, f.class_name, std::nullopt};
    if (w.method) k.method = methods[w.file][*w.method].name;
    return k;
  };
  auto attrs_of = [&](const SynthWarning& w) {
    const auto& f = files[w.file];
    StaticAttributes a;
    a.comment_code_ratio = f.comment_ratio;
    a.file_depth = f.depth;
    a.methods_in_file = static_cast<std::int64_t>(cfg.methods_per_file);
    a.classes_in_package = static_cast<std::int64_t>(package_size[f.package_index]);
    if (w.method) {
      const auto& m = methods[w.file][*w.method];
      a.method_depth = m.depth;
      a.parameter_signature = m.signature;
      a.method_visibility = m.visibility;
    } else {
      a.method_depth = 0;
      a.parameter_signature = "-";
      a.method_visibility = Visibility::Package;
    }
    return a;
  };
  std::vector<WarningKey> keys;
  keys.reserve(warnings.size());
  for (const auto& w : warnings) keys.push_back(key_of(w));
  for (std::size_t pos = 0; pos < n_rev; ++pos) {
    if (!h.revisions[pos].analyzed) continue;
    const bool with_attrs = cfg.attrs_at_all_revisions || pos == train || pos == test || pos == ref;
    for (std::size_t i = 0; i < warnings.size(); ++i) {
      const auto& w = warnings[i];
      if (w.born > pos || (w.closed && pos >= *w.closed)) continue;
      const auto& k = keys[i];
      h.observations.push_back(WarningObservation{rev_id(pos), k.file_path, k.bug_pattern,
                                                  category_name(w.pattern % cfg.n_categories), w.priority,
                                                  Entity{k.package, k.class_name, k.method}, w.line});
      if (with_attrs) h.attributes.emplace(AttributeKey{rev_id(pos), k}, attrs_of(w));
    }
  }
  normalize_history(h);

  for (std::size_t i = 0; i < warnings.size(); ++i) {
    const auto& w = warnings[i];
    TruthRecord t{keys[i], rev_id(w.born), w.actionable, w.closure, std::nullopt};
    if (w.closed) t.closed_at = rev_id(*w.closed);
    out.truth.push_back(std::move(t));
  }
  std::sort(out.truth.begin(), out.truth.end(),
            [](const TruthRecord& a, const TruthRecord& b) { return a.key < b.key; });
  return out;
}

// --- truth sidecar -----------------------------------------------------------------

inline std::string emit_truth(const std::vector<TruthRecord>& truth) {
  std::string out;
  for (const auto& t : truth) {
    nlohmann::ordered_json j;
    j["bug_pattern"] = t.key.bug_pattern;
    j["file_path"] = t.key.file_path;
    j["package"] = t.key.package;
    j["class"] = t.key.class_name;
    if (t.key.method) j["method"] = *t.key.method;
    j["born"] = t.born;
    j["actionable"] = t.actionable;
    j["closure"] = to_string(t.closure);
    if (t.closed_at) j["closed_at"] = *t.closed_at;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<TruthRecord> read_truth(std::istream& in) {
  std::vector<TruthRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TruthRecord t;
      t.key = WarningKey{j.at("bug_pattern").get<std::string>(), j.at("file_path").get<std::string>(),
                         j.at("package").get<std::string>(), j.at("class").get<std::string>(), std::nullopt};
      if (j.contains("method")) t.key.method = j.at("method").get<std::string>();
      t.born = j.at("born").get<std::string>();
      t.actionable = j.at("actionable").get<bool>();
      auto c = parse_closure_kind(j.at("closure").get<std::string>());
      if (!c) throw ParseError(n, "unknown closure kind");
      t.closure = *c;
      if (j.contains("closed_at")) t.closed_at = j.at("closed_at").get<std::string>();
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, std::string("truth record: ") + e.what());
    }
  }
  return out;
}

inline nlohmann::ordered_json roles_json(const SynthResult& r) {
  nlohmann::ordered_json j;
  j["train_rev"] = r.train_rev;
  j["test_rev"] = r.test_rev;
  j["ref_rev"] = r.ref_rev;
  return j;
}

}  // namespace wtriage

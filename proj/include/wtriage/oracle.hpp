#pragma once

// Ground-truth labels: the closed-warning heuristic, filter-file
// confirmation of false alarms, manual annotations, and annotator agreement.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "wtriage/history.hpp"
#include "wtriage/timeline.hpp"

namespace wtriage {

enum class Label { Actionable, FalseAlarm, Unknown };

inline const char* to_string(Label l) {
  switch (l) {
    case Label::Actionable: return "Actionable";
    case Label::FalseAlarm: return "FalseAlarm";
    case Label::Unknown: return "Unknown";
  }
  return "?";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "Actionable") return Label::Actionable;
  if (s == "FalseAlarm") return Label::FalseAlarm;
  if (s == "Unknown") return Label::Unknown;
  return std::nullopt;
}

enum class LabelReason { ClosedFilePresent, StillOpen, FileDeleted, FilterMatched, ManualOverride };

inline const char* to_string(LabelReason r) {
  switch (r) {
    case LabelReason::ClosedFilePresent: return "ClosedFilePresent";
    case LabelReason::StillOpen: return "StillOpen";
    case LabelReason::FileDeleted: return "FileDeleted";
    case LabelReason::FilterMatched: return "FilterMatched";
    case LabelReason::ManualOverride: return "ManualOverride";
  }
  return "?";
}

struct LabeledWarning {
  WarningKey key;
  RevisionId at_revision;
  RevisionId reference_revision;
  Label label = Label::Unknown;
  LabelReason reason = LabelReason::StillOpen;

  bool operator==(const LabeledWarning&) const = default;
};

struct LabelOptions {
  bool bridge_renames = true;
};

namespace detail {

inline void check_label_revisions(const HistoryIndex& idx, const RevisionId& at_rev,
                                  const RevisionId& ref_rev) {
  if (idx.revision_count() == 0) throw UsageError("history is empty; nothing to label");
  const auto at = idx.position(at_rev);
  const auto ref = idx.position(ref_rev);
  if (ref <= at)
    throw OrderingError("reference revision '" + ref_rev + "' must come after '" + at_rev + "'");
  if (!idx.analyzed_at(at)) throw UsageError("revision '" + at_rev + "' was not analyzed");
  if (!idx.analyzed_at(ref)) throw UsageError("revision '" + ref_rev + "' was not analyzed");
}

}  // namespace detail

/// Labels every warning observed at `at_rev` by comparing against `ref_rev`:
/// gone with the file alive is actionable, still present is a false alarm,
/// gone with the file is unknown. Sorted by key.
inline std::vector<LabeledWarning> heuristic_label(const HistoryIndex& idx, const RevisionId& at_rev,
                                                   const RevisionId& ref_rev) {
  detail::check_label_revisions(idx, at_rev, ref_rev);
  const auto at = idx.position(at_rev);
  const auto ref = idx.position(ref_rev);
  std::vector<LabeledWarning> out;
  out.reserve(idx.present_at(at).size());
  for (const auto& p : idx.present_at(at)) {
    LabeledWarning lw{p.key, at_rev, ref_rev, Label::Unknown, LabelReason::FileDeleted};
    if (idx.is_present(p.id, ref)) {
      lw.label = Label::FalseAlarm;
      lw.reason = LabelReason::StillOpen;
    } else if (idx.lineage_alive(idx.lineage_of(p.id), ref)) {
      lw.label = Label::Actionable;
      lw.reason = LabelReason::ClosedFilePresent;
    }
    out.push_back(std::move(lw));
  }
  return out;
}

inline std::vector<LabeledWarning> heuristic_label(const ProjectHistory& h, const RevisionId& at_rev,
                                                   const RevisionId& ref_rev, LabelOptions opts = {}) {
  if (h.empty()) throw UsageError("history is empty; nothing to label");
  if (h.position(ref_rev) <= h.position(at_rev))
    throw OrderingError("reference revision '" + ref_rev + "' must come after '" + at_rev + "'");
  // Only what is known at the reference revision may influence the labels.
  ProjectHistory upto = truncate_history(h, ref_rev);
  HistoryIndex idx(upto, IndexOptions{opts.bridge_renames});
  return heuristic_label(idx, at_rev, ref_rev);
}

struct LabelCounts {
  std::size_t actionable = 0;
  std::size_t false_alarm = 0;
  std::size_t unknown = 0;

  std::size_t total() const { return actionable + false_alarm + unknown; }
  std::size_t labeled() const { return actionable + false_alarm; }
  /// Actionable share among labeled warnings; unknowns are excluded.
  double ratio() const {
    return labeled() == 0 ? 0.0 : static_cast<double>(actionable) / static_cast<double>(labeled());
  }
};

inline LabelCounts count_labels(const std::vector<LabeledWarning>& labels) {
  LabelCounts c;
  for (const auto& l : labels) {
    switch (l.label) {
      case Label::Actionable: ++c.actionable; break;
      case Label::FalseAlarm: ++c.false_alarm; break;
      case Label::Unknown: ++c.unknown; break;
    }
  }
  return c;
}

/// Warnings that closed at some point between the two revisions yet are
/// present again at the reference revision.
inline std::size_t count_flicker(const HistoryIndex& idx, const RevisionId& at_rev,
                                 const RevisionId& ref_rev) {
  const auto at = idx.position(at_rev);
  const auto ref = idx.position(ref_rev);
  std::size_t n = 0;
  for (const auto& p : idx.present_at(at)) {
    if (!idx.is_present(p.id, ref)) continue;
    for (std::size_t pos = at + 1; pos < ref; ++pos) {
      if (idx.analyzed_at(pos) && !idx.is_present(p.id, pos) &&
          idx.lineage_alive(idx.lineage_of(p.id), pos)) {
        ++n;
        break;
      }
    }
  }
  return n;
}

struct SweepRow {
  std::int64_t interval_days = 0;
  RevisionId reference_revision;
  LabelCounts counts;
  double ratio = 0;
  std::vector<LabeledWarning> labels;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> notices;
};

/// First analyzed revision at or after `at` + interval; none if the history
/// ends earlier.
inline std::optional<std::size_t> reference_for_interval(const HistoryIndex& idx, std::size_t at,
                                                         std::int64_t interval_days) {
  const Timestamp target = idx.timestamp_at(at) + interval_days * kSecondsPerDay;
  for (std::size_t pos = at + 1; pos < idx.revision_count(); ++pos)
    if (idx.analyzed_at(pos) && idx.timestamp_at(pos) >= target) return pos;
  return std::nullopt;
}

/// One heuristic labeling per interval over the same set of warnings.
inline SweepResult sweep_reference(const ProjectHistory& h, const RevisionId& at_rev,
                                   const std::vector<std::int64_t>& intervals_days,
                                   LabelOptions opts = {}) {
  if (h.empty()) throw UsageError("history is empty; nothing to sweep");
  HistoryIndex idx(h, IndexOptions{opts.bridge_renames});
  const auto at = idx.position(at_rev);
  SweepResult result;
  for (auto days : intervals_days) {
    auto ref = reference_for_interval(idx, at, days);
    if (!ref) {
      result.notices.push_back("interval " + std::to_string(days) +
                               "d skipped: no analyzed revision that late");
      continue;
    }
    SweepRow row;
    row.interval_days = days;
    row.reference_revision = idx.revision_at(*ref).id;
    // Labels from the full index equal labels from the truncated history:
    // nothing after the reference revision is consulted.
    row.labels = heuristic_label(idx, at_rev, row.reference_revision);
    row.counts = count_labels(row.labels);
    row.ratio = row.counts.ratio();
    result.rows.push_back(std::move(row));
  }
  return result;
}

// --- filter files ---------------------------------------------------------

struct FilterRule {
  enum class ClassMatch { Exact, Prefix };
  ClassMatch match = ClassMatch::Exact;
  std::string class_pattern;
  std::vector<std::string> bug_patterns;
};

/// Parses the FindBugsFilter subset: Match elements holding one Class
/// (name or name-prefix) and one or more Bug pattern lists.
inline std::vector<FilterRule> parse_filter_file(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(e.line(), "filter file: " + e.message());
  }
  auto root = tree.get_child_optional("FindBugsFilter");
  if (!root) throw ParseError(0, "filter file: missing FindBugsFilter element");
  std::vector<FilterRule> rules;
  for (const auto& [tag, match] : *root) {
    if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
    if (tag != "Match") throw ParseError(0, "filter file: unexpected element <" + tag + ">");
    FilterRule rule;
    int classes = 0;
    for (const auto& [ctag, child] : match) {
      if (ctag == "Class") {
        ++classes;
        if (auto name = child.get_optional<std::string>("<xmlattr>.name")) {
          rule.match = FilterRule::ClassMatch::Exact;
          rule.class_pattern = *name;
        } else if (auto prefix = child.get_optional<std::string>("<xmlattr>.name-prefix")) {
          rule.match = FilterRule::ClassMatch::Prefix;
          rule.class_pattern = *prefix;
        } else {
          throw ParseError(0, "filter file: Class needs a name or name-prefix attribute");
        }
      } else if (ctag == "Bug") {
        auto patterns = child.get_optional<std::string>("<xmlattr>.pattern");
        if (!patterns) throw ParseError(0, "filter file: Bug needs a pattern attribute");
        for (auto& p : split(*patterns, ',')) {
          auto b = p.find_first_not_of(' ');
          auto e = p.find_last_not_of(' ');
          if (b != std::string::npos) rule.bug_patterns.push_back(p.substr(b, e - b + 1));
        }
      } else if (ctag != "<xmlattr>" && ctag != "<xmlcomment>") {
        throw ParseError(0, "filter file: unsupported element <" + ctag + "> in Match");
      }
    }
    if (classes != 1) throw ParseError(0, "filter file: each Match needs exactly one Class");
    if (rule.bug_patterns.empty()) throw ParseError(0, "filter file: Match without bug patterns");
    rules.push_back(std::move(rule));
  }
  return rules;
}

inline std::vector<FilterRule> parse_filter_text(const std::string& xml) {
  std::istringstream in(xml);
  return parse_filter_file(in);
}

inline bool filter_match(const std::vector<FilterRule>& rules, const std::string& class_name,
                         const std::string& bug_pattern) {
  for (const auto& r : rules) {
    const bool class_ok = r.match == FilterRule::ClassMatch::Exact
                              ? class_name == r.class_pattern
                              : class_name.compare(0, r.class_pattern.size(), r.class_pattern) == 0;
    if (!class_ok) continue;
    if (std::find(r.bug_patterns.begin(), r.bug_patterns.end(), bug_pattern) != r.bug_patterns.end())
      return true;
  }
  return false;
}

inline bool filter_match(const std::vector<FilterRule>& rules, const WarningObservation& obs) {
  return filter_match(rules, obs.entity.class_name, obs.bug_pattern);
}

struct FilterSummary {
  std::size_t open = 0;
  std::size_t filtered = 0;
  double fraction() const {
    return open == 0 ? 0.0 : static_cast<double>(filtered) / static_cast<double>(open);
  }
};

/// Marks open warnings matched by the developers' filter as confirmed false
/// alarms. Returns how many open warnings the filter covers.
inline FilterSummary confirm_with_filter(std::vector<LabeledWarning>& labels,
                                         const std::vector<FilterRule>& rules) {
  FilterSummary s;
  for (auto& l : labels) {
    if (l.reason != LabelReason::StillOpen) continue;
    ++s.open;
    if (filter_match(rules, l.key.class_name, l.key.bug_pattern)) {
      ++s.filtered;
      l.reason = LabelReason::FilterMatched;
    }
  }
  return s;
}

// --- manual annotations ------------------------------------------------------

struct AnnotationSet {
  std::string annotator;
  std::map<WarningKey, Label> labels;
};

/// Reads line-delimited annotation records; one set per annotator id, in
/// order of first appearance.
inline std::vector<AnnotationSet> read_annotations(std::istream& in) {
  std::vector<AnnotationSet> sets;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed annotation: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "annotation must be a JSON object");
    const auto annotator = detail::get_string(j, "annotator", line_no);
    WarningKey key{detail::get_string(j, "bug_pattern", line_no),
                   detail::get_string(j, "file_path", line_no),
                   detail::get_string(j, "package", line_no),
                   detail::get_string(j, "class", line_no),
                   detail::get_opt_string(j, "method", line_no)};
    auto label = parse_label(detail::get_string(j, "label", line_no));
    if (!label) throw ParseError(line_no, "unknown label");
    auto it = std::find_if(sets.begin(), sets.end(),
                           [&](const AnnotationSet& s) { return s.annotator == annotator; });
    if (it == sets.end()) {
      sets.push_back(AnnotationSet{annotator, {}});
      it = sets.end() - 1;
    }
    auto [pos, inserted] = it->labels.emplace(key, *label);
    if (!inserted && pos->second != *label)
      throw ParseError(line_no, "conflicting labels from annotator '" + annotator + "'");
  }
  return sets;
}

inline std::string annotation_record(const std::string& annotator, const WarningKey& key, Label label) {
  nlohmann::ordered_json j;
  j["annotator"] = annotator;
  j["bug_pattern"] = key.bug_pattern;
  j["file_path"] = key.file_path;
  j["package"] = key.package;
  j["class"] = key.class_name;
  if (key.method) j["method"] = *key.method;
  j["label"] = to_string(label);
  return j.dump();
}

/// Rejects annotation keys that never occur in the history under study.
inline void check_annotation_keys(const AnnotationSet& set, const HistoryIndex& idx) {
  for (const auto& [key, label] : set.labels)
    if (!idx.find(key))
      throw IntegrityError("annotation for unknown warning " + key.to_string());
}

/// Cohen's kappa over the three label categories.
inline double cohen_kappa(const AnnotationSet& a, const AnnotationSet& b) {
  bool any_shared = false;
  for (const auto& [key, label] : a.labels)
    if (b.labels.count(key)) {
      any_shared = true;
      break;
    }
  if (!any_shared) throw UsageError("annotation sets share no warnings");
  if (a.labels.size() != b.labels.size())
    throw UsageError("annotation sets cover different warnings");
  if (a.labels.size() < 2) throw UsageError("kappa needs at least two annotated warnings");
  std::array<std::array<double, 3>, 3> table{};
  for (const auto& [key, la] : a.labels) {
    auto it = b.labels.find(key);
    if (it == b.labels.end()) throw UsageError("annotation sets cover different warnings");
    table[static_cast<int>(la)][static_cast<int>(it->second)] += 1;
  }
  const double n = static_cast<double>(a.labels.size());
  double observed = 0, expected = 0;
  for (int i = 0; i < 3; ++i) {
    observed += table[i][i];
    double row = 0, col = 0;
    for (int j = 0; j < 3; ++j) {
      row += table[i][j];
      col += table[j][i];
    }
    expected += (row / n) * (col / n);
  }
  observed /= n;
  if (expected == 1.0) return 1.0;  // both annotators constant and identical
  return (observed - expected) / (1.0 - expected);
}

/// Manual labels win over heuristic ones.
inline std::size_t apply_manual_labels(std::vector<LabeledWarning>& labels, const AnnotationSet& set) {
  std::size_t n = 0;
  for (auto& l : labels) {
    auto it = set.labels.find(l.key);
    if (it == set.labels.end()) continue;
    l.label = it->second;
    l.reason = LabelReason::ManualOverride;
    ++n;
  }
  return n;
}

}  // namespace wtriage

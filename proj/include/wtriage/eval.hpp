#pragma once

// Confusion counts, precision/recall/F1, rank AUC, the exact Wilcoxon
// signed-rank test, and evaluation reports.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wtriage/dataset.hpp"
#include "wtriage/error.hpp"
#include "wtriage/models.hpp"
#include "wtriage/oracle.hpp"

namespace wtriage {

/// Actionable is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  void add(Label truth, Label predicted) {
    if (truth == Label::Unknown || predicted == Label::Unknown)
      throw UsageError("confusion counts need Actionable or FalseAlarm labels");
    const bool t = truth == Label::Actionable, p = predicted == Label::Actionable;
    if (t && p) ++tp;
    else if (!t && p) ++fp;
    else if (t && !p) ++fn;
    else ++tn;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct PRF1 {
  double precision = 0, recall = 0, f1 = 0;
  bool precision_undefined = false;
  bool recall_undefined = false;
};

inline PRF1 prf1(const ConfusionCounts& c) {
  PRF1 r;
  if (c.tp + c.fp == 0)
    r.precision_undefined = true;
  else
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn == 0)
    r.recall_undefined = true;
  else
    r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.f1 = r.precision + r.recall == 0 ? 0.0 : 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

/// F1 of predicting Actionable for everything on a set with actionability a.
inline double constant_actionable_f1(double a) { return a <= 0 ? 0.0 : 2 * a / (1 + a); }

struct AucResult {
  double value = 0.5;
  bool undefined = false;  // one class absent
};

/// Rank formulation: fraction of (actionable, false-alarm) pairs ordered
/// correctly, ties counting one half.
inline AucResult auc(const std::vector<std::pair<double, Label>>& scored) {
  std::vector<std::pair<double, bool>> v;
  v.reserve(scored.size());
  std::size_t n_a = 0, n_f = 0;
  for (const auto& [s, l] : scored) {
    if (l == Label::Unknown) throw UsageError("AUC needs Actionable or FalseAlarm labels");
    if (std::isnan(s)) throw StatisticsError("AUC score is NaN");
    const bool a = l == Label::Actionable;
    (a ? n_a : n_f)++;
    v.emplace_back(s, a);
  }
  AucResult r;
  if (n_a == 0 || n_f == 0) {
    r.undefined = true;
    return r;
  }
  std::sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  // Sum over groups of equal score: actionables in the group beat every
  // false alarm below it, and tie half of those inside it.
  double wins = 0;
  std::size_t f_below = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i, a_here = 0, f_here = 0;
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? a_here : f_here)++;
      ++j;
    }
    wins += static_cast<double>(a_here) * (static_cast<double>(f_below) + 0.5 * static_cast<double>(f_here));
    f_below += f_here;
    i = j;
  }
  r.value = wins / (static_cast<double>(n_a) * static_cast<double>(n_f));
  return r;
}

struct WilcoxonResult {
  double w_plus = 0;
  double w_minus = 0;
  std::size_t n = 0;  // pairs after zero removal
  double p = 1;       // two-sided exact
};

inline constexpr std::size_t kWilcoxonMaxPairs = 25;

/// Differences are second − first. Zero differences are dropped, tied
/// magnitudes share their average rank, and the null distribution of W+ is
/// enumerated exactly over all 2^n sign assignments.
inline WilcoxonResult wilcoxon_exact(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> d;
  for (const auto& [a, b] : pairs) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw StatisticsError("Wilcoxon input is not finite");
    if (b - a != 0) d.push_back(b - a);
  }
  if (d.empty()) throw StatisticsError("no information: all differences are zero");
  if (d.size() > kWilcoxonMaxPairs)
    throw StatisticsError("exact Wilcoxon supports at most " + std::to_string(kWilcoxonMaxPairs) + " non-zero pairs");
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  // Doubled ranks keep averaged ranks integral.
  std::vector<std::size_t> rank2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    const std::size_t avg2 = i + 1 + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) rank2[order[k]] = avg2;
    i = j;
  }
  std::size_t w_plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) w_plus2 += rank2[i];
  }
  const std::size_t w_minus2 = total2 - w_plus2;
  // counts[s] = number of sign assignments whose doubled W+ equals s.
  std::vector<std::uint64_t> counts(total2 + 1, 0);
  counts[0] = 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = total2 + 1; s-- > rank2[i];) counts[s] += counts[s - rank2[i]];
  auto cdf = [&](std::size_t w) {
    std::uint64_t c = 0;
    for (std::size_t s = 0; s <= w; ++s) c += counts[s];
    return static_cast<double>(c) / std::ldexp(1.0, static_cast<int>(n));
  };
  WilcoxonResult r;
  r.n = n;
  r.w_plus = static_cast<double>(w_plus2) / 2;
  r.w_minus = static_cast<double>(w_minus2) / 2;
  r.p = std::min(1.0, 2 * std::min(cdf(w_plus2), cdf(w_minus2)));
  return r;
}

// --- reports --------------------------------------------------------------------

struct StatBlock {
  std::string method;
  double statistic = 0;
  double p = 1;
  std::size_t n = 0;
  std::string notes;
};

struct EvalReport {
  std::string project;
  std::string model;
  std::string mode;
  ConfusionCounts counts;
  PRF1 metrics;
  AucResult auc;
  double actionability = 0;  // of the test set
  double baseline_f1 = 0;    // ConstantActionable on the same test set
  std::optional<StatBlock> stat;
};

inline EvalReport evaluate(const Model& m, const EncodedMatrix& test, const std::string& project = "") {
  if (test.size() == 0) throw UsageError("cannot evaluate on an empty test set");
  EvalReport r;
  r.project = project;
  r.model = to_string(m.spec.kind);
  if (m.spec.kind == ModelKind::KNN) r.model += "(k=" + std::to_string(m.spec.k) + ")";
  const auto scores = score_all(m, test);
  std::vector<std::pair<double, Label>> scored;
  ConfusionCounts base;
  for (std::size_t i = 0; i < test.size(); ++i) {
    r.counts.add(test.labels[i], label_for_score(m, scores[i]));
    base.add(test.labels[i], Label::Actionable);
    scored.emplace_back(scores[i], test.labels[i]);
  }
  r.metrics = prf1(r.counts);
  r.auc = auc(scored);
  r.actionability = static_cast<double>(r.counts.tp + r.counts.fn) / static_cast<double>(test.size());
  r.baseline_f1 = prf1(base).f1;
  return r;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["project"] = r.project;
  j["model"] = r.model;
  j["mode"] = r.mode;
  j["counts"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}};
  j["precision"] = r.metrics.precision;
  j["recall"] = r.metrics.recall;
  j["f1"] = r.metrics.f1;
  j["precision_undefined"] = r.metrics.precision_undefined;
  j["recall_undefined"] = r.metrics.recall_undefined;
  j["auc"] = r.auc.value;
  j["auc_undefined"] = r.auc.undefined;
  j["actionability"] = r.actionability;
  j["baseline_f1"] = r.baseline_f1;
  if (r.stat) {
    j["stat"] = {{"method", r.stat->method}, {"statistic", r.stat->statistic}, {"p", r.stat->p},
                 {"n", r.stat->n}, {"notes", r.stat->notes}};
  }
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != 1) throw ParseError(0, "report: unsupported version");
    EvalReport r;
    r.project = j.at("project").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    const auto& c = j.at("counts");
    r.counts = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                c.at("tn").get<std::size_t>()};
    r.metrics.precision = j.at("precision").get<double>();
    r.metrics.recall = j.at("recall").get<double>();
    r.metrics.f1 = j.at("f1").get<double>();
    r.metrics.precision_undefined = j.at("precision_undefined").get<bool>();
    r.metrics.recall_undefined = j.at("recall_undefined").get<bool>();
    r.auc.value = j.at("auc").get<double>();
    r.auc.undefined = j.at("auc_undefined").get<bool>();
    r.actionability = j.at("actionability").get<double>();
    r.baseline_f1 = j.at("baseline_f1").get<double>();
    if (j.contains("stat")) {
      const auto& s = j.at("stat");
      r.stat = StatBlock{s.at("method").get<std::string>(), s.at("statistic").get<double>(),
                         s.at("p").get<double>(), s.at("n").get<std::size_t>(), s.at("notes").get<std::string>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("report: ") + e.what());
  }
}

/// One row per project: Act.% | F1 with the baseline in parentheses | AUC.
inline std::string report_table(const std::vector<EvalReport>& reports, bool with_average = false) {
  std::ostringstream out;
  out << "project\tmodel\tAct.%\tF1 (baseline)\tAUC\n";
  auto row = [&](const std::string& name, const std::string& model, double act, double f1, double base, double a) {
    out << name << '\t' << model << '\t' << detail::fixed(act * 100, 0) << "%\t" << detail::fixed(f1, 2) << " ("
        << detail::fixed(base, 2) << ")\t" << detail::fixed(a, 2) << '\n';
  };
  double act = 0, f1 = 0, base = 0, a = 0;
  for (const auto& r : reports) {
    row(r.project, r.model, r.actionability, r.metrics.f1, r.baseline_f1, r.auc.value);
    act += r.actionability;
    f1 += r.metrics.f1;
    base += r.baseline_f1;
    a += r.auc.value;
  }
  if (with_average && !reports.empty()) {
    const double n = static_cast<double>(reports.size());
    row("Average", "-", act / n, f1 / n, base / n, a / n);
  }
  for (const auto& r : reports)
    if (r.stat)
      out << "# " << r.project << ": " << r.stat->method << " statistic=" << format_double(r.stat->statistic)
          << " p=" << format_double(r.stat->p) << " n=" << r.stat->n << (r.stat->notes.empty() ? "" : " ")
          << r.stat->notes << '\n';
  return out.str();
}

/// Merges per-project reports and, when at least one project differs from
/// its baseline, attaches a Wilcoxon test of model F1 against baseline F1.
struct MergedReport {
  std::vector<EvalReport> rows;
  std::optional<StatBlock> stat;
};

inline MergedReport merge_reports(std::vector<EvalReport> reports) {
  if (reports.empty()) throw UsageError("nothing to merge");
  MergedReport m;
  std::vector<std::pair<double, double>> pairs;
  for (const auto& r : reports) pairs.emplace_back(r.baseline_f1, r.metrics.f1);
  try {
    const auto w = wilcoxon_exact(pairs);
    m.stat = StatBlock{"wilcoxon-exact", w.w_plus, w.p, w.n, "F1 vs baseline F1, zero differences dropped"};
  } catch (const StatisticsError&) {
  }
  m.rows = std::move(reports);
  return m;
}

inline std::string merged_table(const MergedReport& m) {
  std::string out = report_table(m.rows, true);
  if (m.stat)
    out += "# merged: " + m.stat->method + " W+=" + format_double(m.stat->statistic) +
           " p=" + format_double(m.stat->p) + " n=" + std::to_string(m.stat->n) + " " + m.stat->notes + "\n";
  return out;
}

inline nlohmann::ordered_json merged_json(const MergedReport& m) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : m.rows) rows.push_back(report_to_json(r));
  j["projects"] = rows;
  if (m.stat)
    j["stat"] = {{"method", m.stat->method}, {"statistic", m.stat->statistic}, {"p", m.stat->p},
                 {"n", m.stat->n}, {"notes", m.stat->notes}};
  return j;
}

}  // namespace wtriage

// wtriage: command-line driver for the warning triage pipeline.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "wtriage/dataset.hpp"
#include "wtriage/eval.hpp"
#include "wtriage/features.hpp"
#include "wtriage/models.hpp"
#include "wtriage/oracle.hpp"
#include "wtriage/synth.hpp"

namespace fs = std::filesystem;
using namespace wtriage;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return 2;
    case ErrorCategory::Parse: return 3;
    case ErrorCategory::Integrity: return 4;
    case ErrorCategory::Ordering:
    case ErrorCategory::Feature:
    case ErrorCategory::Model:
    case ErrorCategory::Statistics: return 5;
    case ErrorCategory::Io: return 1;
  }
  return 1;
}

struct Output {
  std::string dir;

  std::string path(const std::string& name) const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    return (fs::path(dir) / name).string();
  }
};

std::string default_out_dir() {
  const char* env = std::getenv("WTRIAGE_OUT_DIR");
  return env && *env ? env : ".";
}

ProjectHistory load_ledger(const std::string& path) {
  std::vector<std::string> notices;
  auto h = ingest_ledger_file(path, &notices);
  for (const auto& n : notices) std::cerr << "note: " << n << '\n';
  return h;
}

LeakMode leak_mode(const std::string& mode, std::int64_t window) {
  auto kind = parse_leak_kind(mode);
  if (!kind) throw UsageError("mode must be 'leaky' or 'leakfree', got '" + mode + "'");
  return *kind == LeakMode::Kind::Leaky ? LeakMode::leaky() : LeakMode::leak_free(window);
}

ExtractionOptions extraction_options(const std::string& unit, bool no_bridge) {
  ExtractionOptions o;
  if (unit == "revisions")
    o.lifetime_unit = LifetimeUnit::Revisions;
  else if (unit != "days")
    throw UsageError("lifetime unit must be 'days' or 'revisions'");
  o.bridge_renames = !no_bridge;
  return o;
}

std::string label_line(const LabeledWarning& l) {
  nlohmann::ordered_json j = detail::key_json(l.key);
  j["at"] = l.at_revision;
  j["ref"] = l.reference_revision;
  j["label"] = to_string(l.label);
  j["reason"] = to_string(l.reason);
  return j.dump();
}

std::string counts_line(const LabelCounts& c) {
  return "actionable=" + std::to_string(c.actionable) + " false_alarm=" + std::to_string(c.false_alarm) +
         " unknown=" + std::to_string(c.unknown) + " ratio=" + format_double(c.ratio());
}

AnnotationSet pick_annotator(const std::vector<AnnotationSet>& sets, const std::string& name) {
  for (const auto& s : sets)
    if (s.annotator == name) return s;
  throw UsageError("no annotations from '" + name + "'");
}

std::vector<AnnotationSet> load_annotations(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_annotations(in);
}

// Recovers the feature set a model was trained on from its manifest.
Encoder encoder_for(const Model& m, const std::vector<LabeledInstance>& train) {
  for (auto set : {FeatureSet::All, FeatureSet::LeakedOnly, FeatureSet::WithoutLeaked}) {
    auto e = Encoder::fit(train, set);
    if (e.manifest() == m.manifest) return e;
  }
  throw ModelError("model manifest does not match any feature set of this dataset");
}

nlohmann::ordered_json keys_json(const std::vector<WarningKey>& keys) {
  auto a = nlohmann::ordered_json::array();
  for (const auto& k : keys) a.push_back(k.to_string());
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wtriage: actionable-warning triage lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Output out{default_out_dir()};
  app.add_option("-o,--out", out.dir, "Output directory (default: $WTRIAGE_OUT_DIR or .)");

  std::string ledger, at, ref, train_rev, test_rev, mode = "leakfree", unit = "days";
  std::int64_t window = 365;
  bool no_bridge = false;

  auto* ingest = app.add_subcommand("ingest", "Validate a ledger and print its shape");
  ingest->add_option("--ledger", ledger, "History ledger (JSONL)")->required();
  bool canonical = false;
  ingest->add_flag("--canonical", canonical, "Write the normalized ledger to <out>/ledger.jsonl");

  auto* label = app.add_subcommand("label", "Closed-warning heuristic labels");
  std::string filter_path, annotations_path, annotator;
  label->add_option("--ledger", ledger)->required();
  label->add_option("--at", at, "Revision to label")->required();
  label->add_option("--ref", ref, "Reference revision")->required();
  label->add_option("--filter", filter_path, "Developer filter file (XML)");
  label->add_option("--annotations", annotations_path, "Manual annotations (JSONL)");
  label->add_option("--annotator", annotator, "Annotator whose labels override the heuristic");
  label->add_flag("--no-bridge-renames", no_bridge);

  auto* sweep = app.add_subcommand("sweep", "Actionability over growing reference intervals");
  std::vector<std::string> intervals;
  sweep->add_option("--ledger", ledger)->required();
  sweep->add_option("--at", at)->required();
  sweep->add_option("--interval", intervals, "Intervals such as 730, 730d or 2y")->required();
  sweep->add_flag("--no-bridge-renames", no_bridge);

  auto* features = app.add_subcommand("features", "Golden Feature matrix at one revision");
  features->add_option("--ledger", ledger)->required();
  features->add_option("--at", at)->required();
  features->add_option("--mode", mode, "leaky or leakfree");
  features->add_option("--ref", ref, "Reference revision (leaky mode only)");
  features->add_option("--window", window, "Leak-free look-back window in days");
  features->add_option("--lifetime-unit", unit, "days or revisions");
  features->add_flag("--no-bridge-renames", no_bridge);

  auto* build = app.add_subcommand("build", "Labeled train/test dataset");
  bool dedup = false;
  build->add_option("--ledger", ledger)->required();
  build->add_option("--train", train_rev)->required();
  build->add_option("--test", test_rev)->required();
  build->add_option("--ref", ref, "Reference revision for labels")->required();
  build->add_option("--mode", mode, "leaky or leakfree");
  build->add_option("--window", window);
  build->add_option("--lifetime-unit", unit);
  build->add_flag("--dedup", dedup, "Keep only test warnings first seen after the training revision");
  build->add_flag("--no-bridge-renames", no_bridge);

  auto* fit_cmd = app.add_subcommand("fit", "Train a model on a dataset");
  std::string dataset_dir, model_kind = "linear", feature_set = "all", model_path;
  ModelSpec spec;
  fit_cmd->add_option("--dataset", dataset_dir)->required();
  fit_cmd->add_option("--model", model_kind, "constant, repeat, knn or linear");
  fit_cmd->add_option("--features", feature_set, "all, leaked or no-leaked");
  fit_cmd->add_option("--k", spec.k);
  fit_cmd->add_option("--lambda", spec.lambda);
  fit_cmd->add_option("--epochs", spec.epochs);
  fit_cmd->add_option("--seed", spec.seed);

  auto* eval_cmd = app.add_subcommand("eval", "Score a model on the dataset's test split");
  std::string project, format = "table";
  eval_cmd->add_option("--dataset", dataset_dir)->required();
  eval_cmd->add_option("--model", model_path, "Model file written by fit")->required();
  eval_cmd->add_option("--project", project);
  eval_cmd->add_option("--format", format, "table or json");

  auto* audit = app.add_subcommand("audit", "Duplication and time-travel audits");
  bool peek = false;
  audit->add_option("--dataset", dataset_dir);
  audit->add_option("--ledger", ledger);
  audit->add_option("--at", at);
  audit->add_option("--ref", ref, "Also audit the labels at --at against this reference");
  audit->add_option("--window", window);
  audit->add_flag("--peek-future-for-testing", peek, "Deliberately break the guard");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic project");
  SynthConfig sc;
  std::vector<double> fix_delay;
  double pressure = -1;
  synth->add_option("--seed", sc.seed);
  synth->add_option("--files", sc.n_files);
  synth->add_option("--revisions", sc.n_revisions);
  synth->add_option("--warnings-per-revision", sc.warnings_per_revision);
  synth->add_option("--actionable-rate", sc.true_actionable_rate);
  synth->add_option("--fix-delay", fix_delay, "MIN MAX in days")->expected(2);
  synth->add_option("--incidental-close-rate", sc.incidental_close_rate);
  synth->add_option("--file-delete-rate", sc.file_delete_rate);
  synth->add_option("--duplication-pressure", pressure);
  synth->add_flag("--leak-signal", sc.leak_signal);
  synth->add_option("--history-days", sc.history_days);
  synth->add_option("--train-day", sc.train_day);
  synth->add_option("--test-day", sc.test_day);
  synth->add_option("--reference-day", sc.reference_day);
  synth->add_option("--patterns", sc.n_patterns);
  synth->add_option("--methods-per-file", sc.methods_per_file);
  synth->add_option("--field-warning-rate", sc.field_warning_rate);
  synth->add_option("--analyze-every", sc.analyze_every);
  synth->add_flag("--attrs-at-all-revisions", sc.attrs_at_all_revisions);

  auto* report = app.add_subcommand("report", "Merge per-project reports");
  std::vector<std::string> report_paths;
  report->add_option("--merge", report_paths, "Report files written by eval")->required();
  report->add_option("--format", format, "table or json");

  auto* kappa = app.add_subcommand("kappa", "Cohen's kappa between two annotators");
  std::string first, second;
  kappa->add_option("--annotations", annotations_path)->required();
  kappa->add_option("--first", first, "Annotator (default: first in file)");
  kappa->add_option("--second", second, "Annotator (default: second in file)");
  kappa->add_option("--ledger", ledger, "Reject keys not in this history");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (ingest->parsed()) {
      auto h = load_ledger(ledger);
      std::cout << "revisions " << h.revisions.size() << "\nobservations " << h.observations.size()
                << "\nchanges " << h.changes.size() << "\nattributes " << h.attributes.size() << '\n';
      if (canonical) write_file(out.path("ledger.jsonl"), emit_ledger_text(h));
    } else if (label->parsed()) {
      if (!annotator.empty() && annotations_path.empty()) throw UsageError("--annotator needs --annotations");
      std::vector<FilterRule> rules;
      if (!filter_path.empty()) rules = parse_filter_text(read_file(filter_path));
      std::optional<AnnotationSet> manual;
      if (!annotations_path.empty()) {
        auto sets = load_annotations(annotations_path);
        if (annotator.empty()) {
          if (sets.size() != 1) throw UsageError("several annotators in file; pick one with --annotator");
          manual = sets.front();
        } else {
          manual = pick_annotator(sets, annotator);
        }
      }
      auto h = load_ledger(ledger);
      auto labels = heuristic_label(h, at, ref, LabelOptions{!no_bridge});
      if (!filter_path.empty()) {
        auto s = confirm_with_filter(labels, rules);
        std::cout << "filter: " << s.filtered << " of " << s.open << " open warnings confirmed\n";
      }
      if (manual) {
        check_annotation_keys(*manual, HistoryIndex(h));
        std::cout << "manual: " << apply_manual_labels(labels, *manual) << " overrides\n";
      }
      std::string text;
      for (const auto& l : labels) text += label_line(l) + "\n";
      write_file(out.path("labels.jsonl"), text);
      std::cout << counts_line(count_labels(labels)) << '\n';
    } else if (sweep->parsed()) {
      std::vector<std::int64_t> days;
      for (const auto& s : intervals) days.push_back(parse_days(s));
      auto h = load_ledger(ledger);
      auto r = sweep_reference(h, at, days, LabelOptions{!no_bridge});
      std::ostringstream t;
      t << "interval_days\treference\tactionable\tfalse_alarm\tunknown\tratio\n";
      for (const auto& row : r.rows)
        t << row.interval_days << '\t' << row.reference_revision << '\t' << row.counts.actionable << '\t'
          << row.counts.false_alarm << '\t' << row.counts.unknown << '\t' << format_double(row.ratio) << '\n';
      for (const auto& n : r.notices) std::cerr << "note: " << n << '\n';
      write_file(out.path("sweep.tsv"), t.str());
      std::cout << t.str();
    } else if (features->parsed()) {
      const auto m = leak_mode(mode, window);
      if (m.kind == LeakMode::Kind::LeakFree && !ref.empty())
        throw UsageError("--ref cannot be combined with --mode leakfree");
      if (m.kind == LeakMode::Kind::Leaky && ref.empty()) throw UsageError("--mode leaky requires --ref");
      const auto opts = extraction_options(unit, no_bridge);
      auto h = load_ledger(ledger);
      std::optional<RevisionId> r;
      if (!ref.empty()) r = ref;
      auto x = extract_golden(h, at, m, r, opts);
      if (!x.errors.empty()) {
        std::string msg = "missing static attributes at '" + at + "':";
        for (const auto& e : x.errors) msg += " " + e.key.to_string();
        throw FeatureError(msg);
      }
      std::map<WarningKey, Label> labels;
      if (r)
        for (const auto& l : heuristic_label(h, at, *r, LabelOptions{!no_bridge})) labels[l.key] = l.label;
      std::vector<FeatureRow> rows;
      for (const auto& [key, v] : x.vectors) {
        auto it = labels.find(key);
        rows.push_back(
            FeatureRow{"", key, at, it == labels.end() ? Label::Unknown : it->second, to_string(m.kind), v});
      }
      std::ostringstream t;
      write_feature_matrix(t, rows, false);
      write_file(out.path("features.tsv"), t.str());
      std::cout << rows.size() << " feature vectors at " << at << " (" << to_string(m.kind) << ")\n";
    } else if (build->parsed()) {
      const auto m = leak_mode(mode, window);
      BuildOptions opts{extraction_options(unit, no_bridge)};
      auto h = load_ledger(ledger);
      auto d = build_dataset(h, train_rev, test_rev, ref, m, dedup, opts);
      save_dataset(d, out.path(""));
      for (const auto& n : d.meta.notices) std::cerr << "note: " << n << '\n';
      std::cout << "train " << d.train.size() << " test " << d.test.size() << " dedup_removed "
                << d.meta.dedup_removed << '\n';
    } else if (fit_cmd->parsed()) {
      auto kind = parse_model_kind(model_kind);
      if (!kind) throw UsageError("unknown model '" + model_kind + "'");
      auto set = parse_feature_set(feature_set);
      if (!set) throw UsageError("unknown feature set '" + feature_set + "'");
      spec.kind = *kind;
      auto d = load_dataset(dataset_dir);
      auto x = Encoder::fit(d.train, *set).transform(d.train);
      auto model = fit(spec, x);
      write_file(out.path("model.json"), save_model(model));
      std::cout << "fit " << to_string(*kind) << " on " << x.size() << " instances, " << x.columns.size()
                << " columns\n";
    } else if (eval_cmd->parsed()) {
      if (format != "table" && format != "json") throw UsageError("format must be 'table' or 'json'");
      auto model = load_model(read_file(model_path));
      auto d = load_dataset(dataset_dir);
      auto x = encoder_for(model, d.train).transform(d.test);
      auto r = evaluate(model, x, project);
      r.mode = to_string(d.meta.mode.kind);
      const auto json = report_to_json(r).dump(2) + "\n";
      write_file(out.path("report.json"), json);
      std::cout << (format == "json" ? json : report_table({r}));
    } else if (audit->parsed()) {
      if (dataset_dir.empty() && ledger.empty()) throw UsageError("audit needs --dataset and/or --ledger with --at");
      if (!ledger.empty() && at.empty()) throw UsageError("--ledger audit needs --at");
      if (!ref.empty() && ledger.empty()) throw UsageError("--ref audit needs --ledger");
      nlohmann::ordered_json j;
      bool breached = false;
      if (!dataset_dir.empty()) {
        auto r = audit_duplication(load_dataset(dataset_dir));
        j["duplication"] = {{"test_size", r.test_size},
                            {"duplicated", r.duplicated},
                            {"rate", r.rate},
                            {"duplicated_keys", keys_json(r.duplicated_keys)}};
        std::cout << "duplication rate " << format_double(r.rate) << " (" << r.duplicated << " of " << r.test_size
                  << ")\n";
      }
      if (!ledger.empty()) {
        ExtractionOptions opts;
        opts.peek_future_for_testing = peek;
        auto h = load_ledger(ledger);
        if (!ref.empty()) {
          auto bridged = count_labels(heuristic_label(h, at, ref, LabelOptions{true}));
          auto plain = count_labels(heuristic_label(h, at, ref, LabelOptions{false}));
          const auto flicker = count_flicker(HistoryIndex(truncate_history(h, ref)), at, ref);
          auto counts = [](const LabelCounts& c) {
            return nlohmann::ordered_json{{"actionable", c.actionable},
                                          {"false_alarm", c.false_alarm},
                                          {"unknown", c.unknown},
                                          {"ratio", c.ratio()}};
          };
          j["labels"] = {{"at", at},
                         {"ref", ref},
                         {"bridged_renames", counts(bridged)},
                         {"unbridged_renames", counts(plain)},
                         {"flicker", flicker}};
          std::cout << "labels with rename bridging: " << counts_line(bridged) << '\n'
                    << "labels without rename bridging: " << counts_line(plain) << '\n'
                    << "flickering warnings: " << flicker << '\n';
        }
        auto r = audit_time_travel(h, at, window, opts);
        j["time_travel"] = {{"at", r.at_revision},
                            {"compared", r.compared},
                            {"passed", r.passed()},
                            {"mismatched", keys_json(r.mismatched)}};
        std::cout << "time-travel guard " << (r.passed() ? "passed" : "BREACHED") << " (" << r.mismatched.size()
                  << " of " << r.compared << " vectors differ)\n";
        breached = !r.passed();
      }
      write_file(out.path("audit.json"), j.dump(2) + "\n");
      if (breached) throw IntegrityError("leak-free features changed when the history was truncated");
    } else if (synth->parsed()) {
      if (!fix_delay.empty()) sc.fix_delay_days = {fix_delay[0], fix_delay[1]};
      if (pressure >= 0) sc.duplication_pressure = pressure;
      auto s = generate(sc);
      write_file(out.path("ledger.jsonl"), emit_ledger_text(s.history));
      write_file(out.path("truth.jsonl"), emit_truth(s.truth));
      write_file(out.path("roles.json"), roles_json(s).dump(2) + "\n");
      std::cout << "synth seed " << sc.seed << ": " << s.history.revisions.size() << " revisions, "
                << s.truth.size() << " warnings; train " << s.train_rev << " test " << s.test_rev << " ref "
                << s.ref_rev << '\n';
    } else if (report->parsed()) {
      if (format != "table" && format != "json") throw UsageError("format must be 'table' or 'json'");
      std::vector<EvalReport> reports;
      for (const auto& p : report_paths) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(read_file(p));
        } catch (const nlohmann::json::parse_error& e) {
          throw ParseError(0, p + ": " + e.what());
        }
        reports.push_back(report_from_json(j));
      }
      auto m = merge_reports(std::move(reports));
      const auto json = merged_json(m).dump(2) + "\n";
      write_file(out.path("merged.json"), json);
      std::cout << (format == "json" ? json : merged_table(m));
    } else if (kappa->parsed()) {
      auto sets = load_annotations(annotations_path);
      if (first.empty() != second.empty()) throw UsageError("give both --first and --second, or neither");
      AnnotationSet a, b;
      if (first.empty()) {
        if (sets.size() != 2) throw UsageError("expected exactly two annotators, found " + std::to_string(sets.size()));
        a = sets[0];
        b = sets[1];
      } else {
        a = pick_annotator(sets, first);
        b = pick_annotator(sets, second);
      }
      if (!ledger.empty()) {
        auto h = load_ledger(ledger);
        HistoryIndex idx(h);
        check_annotation_keys(a, idx);
        check_annotation_keys(b, idx);
      }
      std::cout << "kappa " << format_double(cohen_kappa(a, b)) << " over " << a.labels.size() << " warnings\n";
    }
  } catch (const Error& e) {
    std::cerr << "error (" << category_name(e.category()) << "): " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

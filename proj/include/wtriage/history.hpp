#pragma once

// Project-history data model and the line-delimited ledger that carries it.
//
// A ledger is JSON Lines: one object per line, tagged by its "record" field
// (revision | warning | change | attrs). docs/ledger.schema.json documents
// every field. Every revision marked analyzed is a complete snapshot of the
// warnings the analyzer reported at that revision.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wtriage/error.hpp"
#include "wtriage/util.hpp"

namespace wtriage {

using RevisionId = std::string;

struct RevisionMeta {
  RevisionId id;
  Timestamp timestamp = 0;
  std::optional<RevisionId> parent;
  std::string branch;
  // Revisions without an analyzer run still contribute file changes.
  bool analyzed = true;

  bool operator==(const RevisionMeta&) const = default;
};

/// The analyzed code entity a warning is attached to.
struct Entity {
  std::string package;
  std::string class_name;
  std::optional<std::string> method;

  auto operator<=>(const Entity&) const = default;
};

struct WarningObservation {
  RevisionId revision;
  std::string file_path;
  std::string bug_pattern;
  std::string bug_category;
  int priority = 1;
  Entity entity;
  std::int64_t line = 1;

  bool operator==(const WarningObservation&) const = default;
};

enum class ChangeKind { Add, Modify, Delete, Rename };

inline const char* to_string(ChangeKind k) {
  switch (k) {
    case ChangeKind::Add: return "Add";
    case ChangeKind::Modify: return "Modify";
    case ChangeKind::Delete: return "Delete";
    case ChangeKind::Rename: return "Rename";
  }
  return "?";
}

inline std::optional<ChangeKind> parse_change_kind(std::string_view s) {
  if (s == "Add") return ChangeKind::Add;
  if (s == "Modify") return ChangeKind::Modify;
  if (s == "Delete") return ChangeKind::Delete;
  if (s == "Rename") return ChangeKind::Rename;
  return std::nullopt;
}

struct FileChangeRecord {
  RevisionId revision;
  std::string file_path;
  ChangeKind kind = ChangeKind::Modify;
  std::optional<std::string> old_path;  // Rename only
  std::int64_t lines_added = 0;
  std::int64_t lines_deleted = 0;
  std::string author;

  bool operator==(const FileChangeRecord&) const = default;
};

enum class Visibility { Public, Protected, Package, Private };

inline const char* to_string(Visibility v) {
  switch (v) {
    case Visibility::Public: return "public";
    case Visibility::Protected: return "protected";
    case Visibility::Package: return "package";
    case Visibility::Private: return "private";
  }
  return "?";
}

inline std::optional<Visibility> parse_visibility(std::string_view s) {
  if (s == "public") return Visibility::Public;
  if (s == "protected") return Visibility::Protected;
  if (s == "package") return Visibility::Package;
  if (s == "private") return Visibility::Private;
  return std::nullopt;
}

/// Code metrics mined externally for one warning at one revision. Fields may
/// be absent in the ledger; extraction reports the missing ones.
struct StaticAttributes {
  std::optional<double> comment_code_ratio;
  std::optional<std::int64_t> method_depth;
  std::optional<std::int64_t> file_depth;
  std::optional<std::int64_t> methods_in_file;
  std::optional<std::int64_t> classes_in_package;
  std::optional<std::string> parameter_signature;
  std::optional<Visibility> method_visibility;

  std::vector<std::string> missing_fields() const {
    std::vector<std::string> out;
    if (!comment_code_ratio) out.emplace_back("comment_code_ratio");
    if (!method_depth) out.emplace_back("method_depth");
    if (!file_depth) out.emplace_back("file_depth");
    if (!methods_in_file) out.emplace_back("methods_in_file");
    if (!classes_in_package) out.emplace_back("classes_in_package");
    if (!parameter_signature) out.emplace_back("parameter_signature");
    if (!method_visibility) out.emplace_back("method_visibility");
    return out;
  }

  bool operator==(const StaticAttributes&) const = default;
};

/// Cross-revision identity of a warning. The line number is deliberately not
/// part of it, so code moving inside a method keeps the identity.
struct WarningKey {
  std::string bug_pattern;
  std::string file_path;
  std::string package;
  std::string class_name;
  std::optional<std::string> method;

  std::string entity_signature() const {
    std::string s = package + "/" + class_name;
    if (method) s += "#" + *method;
    return s;
  }

  std::string to_string() const {
    return bug_pattern + "@" + file_path + ":" + entity_signature();
  }

  auto operator<=>(const WarningKey&) const = default;
};

inline WarningKey warning_key(const WarningObservation& obs) {
  return WarningKey{obs.bug_pattern, obs.file_path, obs.entity.package,
                    obs.entity.class_name, obs.entity.method};
}

using AttributeKey = std::pair<RevisionId, WarningKey>;

struct ProjectHistory {
  std::vector<RevisionMeta> revisions;  // sorted by (timestamp, id)
  std::vector<WarningObservation> observations;
  std::vector<FileChangeRecord> changes;
  std::map<AttributeKey, StaticAttributes> attributes;
  std::optional<RevisionId> horizon;

  bool empty() const { return revisions.empty(); }

  /// Position of a revision in chronological order.
  std::size_t position(const RevisionId& id) const {
    auto it = std::find_if(revisions.begin(), revisions.end(),
                           [&](const RevisionMeta& r) { return r.id == id; });
    if (it == revisions.end()) throw UsageError("unknown revision '" + id + "'");
    return static_cast<std::size_t>(it - revisions.begin());
  }

  bool has_revision(const RevisionId& id) const {
    return std::any_of(revisions.begin(), revisions.end(),
                       [&](const RevisionMeta& r) { return r.id == id; });
  }

  const RevisionMeta& revision(const RevisionId& id) const {
    return revisions[position(id)];
  }

  bool operator==(const ProjectHistory&) const = default;
};

namespace detail {

struct RecordOrigin {
  std::size_t line = 0;
};

inline std::unordered_map<RevisionId, std::size_t> revision_positions(
    const ProjectHistory& h) {
  std::unordered_map<RevisionId, std::size_t> pos;
  pos.reserve(h.revisions.size());
  for (std::size_t i = 0; i < h.revisions.size(); ++i) pos.emplace(h.revisions[i].id, i);
  return pos;
}

inline std::string where(const std::vector<std::size_t>* lines, std::size_t i) {
  if (!lines || i >= lines->size() || (*lines)[i] == 0) return {};
  return " (line " + std::to_string((*lines)[i]) + ")";
}

}  // namespace detail

/// Sorts records into canonical order, collapses duplicate observations, and
/// validates referential integrity. Line vectors (parallel to the record
/// vectors) only improve error messages.
inline void normalize_history(ProjectHistory& h, std::vector<std::string>* notices = nullptr,
                              const std::vector<std::size_t>* obs_lines = nullptr,
                              const std::vector<std::size_t>* change_lines = nullptr) {
  std::stable_sort(h.revisions.begin(), h.revisions.end(),
                   [](const RevisionMeta& a, const RevisionMeta& b) {
                     return std::tie(a.timestamp, a.id) < std::tie(b.timestamp, b.id);
                   });
  std::unordered_map<RevisionId, std::size_t> pos;
  for (std::size_t i = 0; i < h.revisions.size(); ++i) {
    const auto& r = h.revisions[i];
    if (r.id.empty()) throw IntegrityError("revision with empty id");
    if (!pos.emplace(r.id, i).second)
      throw IntegrityError("duplicate revision id '" + r.id + "'");
  }
  for (const auto& r : h.revisions) {
    if (!r.parent) continue;
    auto it = pos.find(*r.parent);
    if (it == pos.end())
      throw IntegrityError("revision '" + r.id + "' has unknown parent '" + *r.parent + "'");
    if (h.revisions[it->second].timestamp > r.timestamp)
      throw IntegrityError("revision '" + r.id + "' is older than its parent '" + *r.parent + "'");
  }

  std::unordered_map<std::string, std::string> category_of;
  for (std::size_t i = 0; i < h.observations.size(); ++i) {
    const auto& o = h.observations[i];
    if (!pos.count(o.revision))
      throw IntegrityError("warning references unknown revision '" + o.revision + "'" +
                           detail::where(obs_lines, i));
    if (o.file_path.empty())
      throw IntegrityError("warning with empty file_path" + detail::where(obs_lines, i));
    if (o.priority < 1 || o.priority > 3)
      throw IntegrityError("warning priority must be 1..3" + detail::where(obs_lines, i));
    if (o.line < 1) throw IntegrityError("warning line must be positive" + detail::where(obs_lines, i));
    auto [it, inserted] = category_of.emplace(o.bug_pattern, o.bug_category);
    if (!inserted && it->second != o.bug_category)
      throw IntegrityError("bug pattern '" + o.bug_pattern + "' maps to categories '" +
                           it->second + "' and '" + o.bug_category + "'" +
                           detail::where(obs_lines, i));
  }
  for (std::size_t i = 0; i < h.changes.size(); ++i) {
    const auto& c = h.changes[i];
    if (!pos.count(c.revision))
      throw IntegrityError("change references unknown revision '" + c.revision + "'" +
                           detail::where(change_lines, i));
    if (c.file_path.empty())
      throw IntegrityError("change with empty file_path" + detail::where(change_lines, i));
    if (c.lines_added < 0 || c.lines_deleted < 0)
      throw IntegrityError("change with negative line counts" + detail::where(change_lines, i));
    if ((c.kind == ChangeKind::Rename) != c.old_path.has_value())
      throw IntegrityError("old_path is required for Rename and only for Rename" +
                           detail::where(change_lines, i));
  }
  for (const auto& [key, attrs] : h.attributes) {
    if (!pos.count(key.first))
      throw IntegrityError("attrs reference unknown revision '" + key.first + "'");
    if (attrs.comment_code_ratio && !(*attrs.comment_code_ratio >= 0))
      throw IntegrityError("attrs comment_code_ratio must be >= 0");
    for (auto v : {attrs.method_depth, attrs.file_depth, attrs.methods_in_file,
                   attrs.classes_in_package})
      if (v && *v < 0) throw IntegrityError("attrs counts must be >= 0");
  }

  auto obs_less = [&](const WarningObservation& a, const WarningObservation& b) {
    auto pa = pos.at(a.revision), pb = pos.at(b.revision);
    return std::tie(pa, a.file_path, a.bug_pattern, a.entity, a.line, a.bug_category, a.priority) <
           std::tie(pb, b.file_path, b.bug_pattern, b.entity, b.line, b.bug_category, b.priority);
  };
  std::sort(h.observations.begin(), h.observations.end(), obs_less);
  auto last = std::unique(h.observations.begin(), h.observations.end());
  if (last != h.observations.end()) {
    if (notices)
      notices->push_back("collapsed " + std::to_string(h.observations.end() - last) +
                         " duplicate warning record(s)");
    h.observations.erase(last, h.observations.end());
  }
  // Changes keep their relative order within a revision: a Delete followed
  // by an Add of the same path means something different than the reverse.
  std::stable_sort(h.changes.begin(), h.changes.end(),
                   [&](const FileChangeRecord& a, const FileChangeRecord& b) {
                     return pos.at(a.revision) < pos.at(b.revision);
                   });

  if (h.revisions.empty())
    h.horizon.reset();
  else
    h.horizon = h.revisions.back().id;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* field, std::size_t line) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(line, std::string("missing field '") + field + "'");
  return *it;
}

inline std::string get_string(const nlohmann::json& j, const char* field, std::size_t line) {
  const auto& v = require(j, field, line);
  if (!v.is_string()) throw ParseError(line, std::string("field '") + field + "' must be a string");
  return v.get<std::string>();
}

inline std::optional<std::string> get_opt_string(const nlohmann::json& j, const char* field,
                                                 std::size_t line) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(line, std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

inline std::int64_t get_int(const nlohmann::json& j, const char* field, std::size_t line) {
  const auto& v = require(j, field, line);
  if (!v.is_number_integer())
    throw ParseError(line, std::string("field '") + field + "' must be an integer");
  return v.get<std::int64_t>();
}

inline std::optional<std::int64_t> get_opt_int(const nlohmann::json& j, const char* field,
                                               std::size_t line) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer())
    throw ParseError(line, std::string("field '") + field + "' must be an integer");
  return it->get<std::int64_t>();
}

inline Entity get_entity(const nlohmann::json& j, std::size_t line) {
  const auto& e = require(j, "entity", line);
  if (!e.is_object()) throw ParseError(line, "field 'entity' must be an object");
  return Entity{get_string(e, "package", line), get_string(e, "class", line),
                get_opt_string(e, "method", line)};
}

inline nlohmann::ordered_json entity_json(const Entity& e) {
  nlohmann::ordered_json j;
  j["package"] = e.package;
  j["class"] = e.class_name;
  if (e.method) j["method"] = *e.method;
  return j;
}

}  // namespace detail

/// Reads a ledger. Unknown record kinds and malformed lines are parse errors
/// carrying the 1-based line number; dangling references are integrity errors.
inline ProjectHistory ingest_ledger(std::istream& in, std::vector<std::string>* notices = nullptr) {
  using detail::get_int;
  using detail::get_opt_int;
  using detail::get_opt_string;
  using detail::get_string;
  ProjectHistory h;
  std::vector<std::size_t> obs_lines, change_lines;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed record: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "record must be a JSON object");
    const std::string kind = get_string(j, "record", line_no);
    if (kind == "revision") {
      RevisionMeta r;
      r.id = get_string(j, "id", line_no);
      r.timestamp = get_int(j, "timestamp", line_no);
      r.parent = get_opt_string(j, "parent", line_no);
      r.branch = get_opt_string(j, "branch", line_no).value_or("");
      if (auto it = j.find("analyzed"); it != j.end()) {
        if (!it->is_boolean()) throw ParseError(line_no, "field 'analyzed' must be a boolean");
        r.analyzed = it->get<bool>();
      }
      h.revisions.push_back(std::move(r));
    } else if (kind == "warning") {
      WarningObservation o;
      o.revision = get_string(j, "revision", line_no);
      o.file_path = get_string(j, "file_path", line_no);
      o.bug_pattern = get_string(j, "bug_pattern", line_no);
      o.bug_category = get_string(j, "bug_category", line_no);
      o.priority = static_cast<int>(get_int(j, "priority", line_no));
      o.entity = detail::get_entity(j, line_no);
      o.line = get_int(j, "line", line_no);
      h.observations.push_back(std::move(o));
      obs_lines.push_back(line_no);
    } else if (kind == "change") {
      FileChangeRecord c;
      c.revision = get_string(j, "revision", line_no);
      c.file_path = get_string(j, "file_path", line_no);
      auto k = parse_change_kind(get_string(j, "kind", line_no));
      if (!k) throw ParseError(line_no, "unknown change kind");
      c.kind = *k;
      c.old_path = get_opt_string(j, "old_path", line_no);
      c.lines_added = get_opt_int(j, "lines_added", line_no).value_or(0);
      c.lines_deleted = get_opt_int(j, "lines_deleted", line_no).value_or(0);
      c.author = get_opt_string(j, "author", line_no).value_or("");
      h.changes.push_back(std::move(c));
      change_lines.push_back(line_no);
    } else if (kind == "attrs") {
      WarningObservation key_obs;
      key_obs.bug_pattern = get_string(j, "bug_pattern", line_no);
      key_obs.file_path = get_string(j, "file_path", line_no);
      key_obs.entity = detail::get_entity(j, line_no);
      StaticAttributes a;
      if (auto it = j.find("comment_code_ratio"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw ParseError(line_no, "field 'comment_code_ratio' must be a number");
        a.comment_code_ratio = it->get<double>();
      }
      a.method_depth = get_opt_int(j, "method_depth", line_no);
      a.file_depth = get_opt_int(j, "file_depth", line_no);
      a.methods_in_file = get_opt_int(j, "methods_in_file", line_no);
      a.classes_in_package = get_opt_int(j, "classes_in_package", line_no);
      a.parameter_signature = get_opt_string(j, "parameter_signature", line_no);
      if (auto vis = get_opt_string(j, "method_visibility", line_no)) {
        a.method_visibility = parse_visibility(*vis);
        if (!a.method_visibility) throw ParseError(line_no, "unknown method_visibility '" + *vis + "'");
      }
      AttributeKey key{get_string(j, "revision", line_no), warning_key(key_obs)};
      auto [it, inserted] = h.attributes.emplace(std::move(key), a);
      if (!inserted && !(it->second == a))
        throw ParseError(line_no, "conflicting attrs for the same warning and revision");
    } else {
      throw ParseError(line_no, "unknown record kind '" + kind + "'");
    }
  }
  normalize_history(h, notices, &obs_lines, &change_lines);
  return h;
}

inline ProjectHistory ingest_ledger_text(const std::string& text,
                                         std::vector<std::string>* notices = nullptr) {
  std::istringstream in(text);
  return ingest_ledger(in, notices);
}

inline ProjectHistory ingest_ledger_file(const std::string& path,
                                         std::vector<std::string>* notices = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ledger '" + path + "'");
  return ingest_ledger(in, notices);
}

/// Writes the history in canonical ledger form; ingest_ledger reads it back
/// to an equal history.
inline void emit_ledger(const ProjectHistory& h, std::ostream& out) {
  for (const auto& r : h.revisions) {
    nlohmann::ordered_json j;
    j["record"] = "revision";
    j["id"] = r.id;
    j["timestamp"] = r.timestamp;
    if (r.parent) j["parent"] = *r.parent;
    j["branch"] = r.branch;
    if (!r.analyzed) j["analyzed"] = false;
    out << j.dump() << '\n';
  }
  for (const auto& c : h.changes) {
    nlohmann::ordered_json j;
    j["record"] = "change";
    j["revision"] = c.revision;
    j["file_path"] = c.file_path;
    j["kind"] = to_string(c.kind);
    if (c.old_path) j["old_path"] = *c.old_path;
    j["lines_added"] = c.lines_added;
    j["lines_deleted"] = c.lines_deleted;
    j["author"] = c.author;
    out << j.dump() << '\n';
  }
  for (const auto& o : h.observations) {
    nlohmann::ordered_json j;
    j["record"] = "warning";
    j["revision"] = o.revision;
    j["file_path"] = o.file_path;
    j["bug_pattern"] = o.bug_pattern;
    j["bug_category"] = o.bug_category;
    j["priority"] = o.priority;
    j["entity"] = detail::entity_json(o.entity);
    j["line"] = o.line;
    out << j.dump() << '\n';
  }
  for (const auto& [key, a] : h.attributes) {
    nlohmann::ordered_json j;
    j["record"] = "attrs";
    j["revision"] = key.first;
    j["bug_pattern"] = key.second.bug_pattern;
    j["file_path"] = key.second.file_path;
    j["entity"] = detail::entity_json(
        Entity{key.second.package, key.second.class_name, key.second.method});
    if (a.comment_code_ratio) j["comment_code_ratio"] = *a.comment_code_ratio;
    if (a.method_depth) j["method_depth"] = *a.method_depth;
    if (a.file_depth) j["file_depth"] = *a.file_depth;
    if (a.methods_in_file) j["methods_in_file"] = *a.methods_in_file;
    if (a.classes_in_package) j["classes_in_package"] = *a.classes_in_package;
    if (a.parameter_signature) j["parameter_signature"] = *a.parameter_signature;
    if (a.method_visibility) j["method_visibility"] = to_string(*a.method_visibility);
    out << j.dump() << '\n';
  }
}

inline std::string emit_ledger_text(const ProjectHistory& h) {
  std::ostringstream out;
  emit_ledger(h, out);
  return out.str();
}

/// History as it was known at `rev`: nothing ordered after it survives.
inline ProjectHistory truncate_history(const ProjectHistory& h, const RevisionId& rev) {
  const std::size_t cut = h.position(rev);
  ProjectHistory out;
  out.revisions.assign(h.revisions.begin(), h.revisions.begin() + static_cast<std::ptrdiff_t>(cut) + 1);
  std::set<RevisionId> kept;
  for (const auto& r : out.revisions) kept.insert(r.id);
  for (const auto& o : h.observations)
    if (kept.count(o.revision)) out.observations.push_back(o);
  for (const auto& c : h.changes)
    if (kept.count(c.revision)) out.changes.push_back(c);
  for (const auto& [key, a] : h.attributes)
    if (kept.count(key.first)) out.attributes.emplace(key, a);
  out.horizon = rev;
  return out;
}

}  // namespace wtriage

#pragma once

// Per-warning and per-file timelines over a ProjectHistory.
//
// HistoryIndex replays file changes in chronological order and assigns each
// file a lineage: a path that survives renames (when bridging is on) and ends
// at a Delete. A warning's lineage identity is its key with the path replaced
// by the lineage, so a warning keeps its identity across a rename.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "wtriage/history.hpp"

namespace wtriage {

struct IndexOptions {
  bool bridge_renames = true;
};

struct FileLineage {
  std::string origin_path;
  std::size_t created_at = 0;            // revision position of the Add (or first sighting)
  Timestamp created_timestamp = 0;
  bool explicit_add = false;
  std::optional<std::size_t> deleted_at;  // position of the terminating Delete
  std::vector<std::size_t> changes;       // indices into ProjectHistory::changes
};

struct TrackedWarning {
  std::string bug_pattern;
  std::string bug_category;
  std::size_t lineage = 0;
  std::string package;
  std::string class_name;
  std::optional<std::string> method;
  std::vector<std::size_t> present;  // sorted revision positions
};

/// A warning present at one revision: its tracked id and the observation
/// (lowest line when several share the key).
struct PresentWarning {
  std::size_t id = 0;
  const WarningObservation* observation = nullptr;
  WarningKey key;
};

class HistoryIndex {
 public:
  explicit HistoryIndex(const ProjectHistory& h, IndexOptions opts = {})
      : history_(&h), opts_(opts) {
    build();
  }

  const ProjectHistory& history() const { return *history_; }
  std::size_t revision_count() const { return history_->revisions.size(); }

  std::size_t position(const RevisionId& id) const {
    auto it = positions_.find(id);
    if (it == positions_.end()) throw UsageError("unknown revision '" + id + "'");
    return it->second;
  }

  const RevisionMeta& revision_at(std::size_t pos) const { return history_->revisions.at(pos); }
  Timestamp timestamp_at(std::size_t pos) const { return revision_at(pos).timestamp; }
  bool analyzed_at(std::size_t pos) const { return revision_at(pos).analyzed; }

  const std::vector<FileLineage>& lineages() const { return lineages_; }
  const std::vector<TrackedWarning>& warnings() const { return warnings_; }
  const TrackedWarning& warning(std::size_t id) const { return warnings_.at(id); }

  /// Warnings present at a revision, sorted by key.
  const std::vector<PresentWarning>& present_at(std::size_t pos) const { return by_revision_.at(pos); }

  bool is_present(std::size_t id, std::size_t pos) const {
    const auto& p = warnings_[id].present;
    return std::binary_search(p.begin(), p.end(), pos);
  }

  std::size_t first_seen(std::size_t id) const { return warnings_[id].present.front(); }

  bool lineage_alive(std::size_t lineage, std::size_t pos) const {
    const auto& l = lineages_[lineage];
    return l.created_at <= pos && (!l.deleted_at || pos < *l.deleted_at);
  }

  /// Lineage of the file the warning sits in.
  std::size_t lineage_of(std::size_t id) const { return warnings_[id].lineage; }

  /// Tracked id of the first observation carrying exactly this key.
  std::optional<std::size_t> find(const WarningKey& key) const {
    auto it = key_ids_.find(key);
    if (it == key_ids_.end() || it->second.empty()) return std::nullopt;
    return it->second.front();
  }

  /// Tracked id for the key as observed at a given revision.
  std::optional<std::size_t> find_at(const WarningKey& key, std::size_t pos) const {
    const auto& v = by_revision_.at(pos);
    auto it = std::lower_bound(v.begin(), v.end(), key,
                               [](const PresentWarning& p, const WarningKey& k) { return p.key < k; });
    if (it == v.end() || it->key != key) return std::nullopt;
    return it->id;
  }

  /// First analyzed revision after first sighting where the file is alive and
  /// the warning is absent.
  std::optional<std::size_t> closed_at(std::size_t id) const {
    const auto& w = warnings_[id];
    std::size_t k = 0;
    for (std::size_t pos = w.present.front() + 1; pos < revision_count(); ++pos) {
      while (k < w.present.size() && w.present[k] < pos) ++k;
      const bool present = k < w.present.size() && w.present[k] == pos;
      if (present || !analyzed_at(pos)) continue;
      if (!lineage_alive(w.lineage, pos)) return std::nullopt;
      return pos;
    }
    return std::nullopt;
  }

  /// Number of times the warning reappeared after having been closed.
  std::size_t flicker_count(std::size_t id, std::size_t up_to) const {
    const auto& w = warnings_[id];
    std::size_t flickers = 0;
    bool closed = false;
    std::size_t k = 0;
    for (std::size_t pos = w.present.front(); pos <= up_to && pos < revision_count(); ++pos) {
      while (k < w.present.size() && w.present[k] < pos) ++k;
      const bool present = k < w.present.size() && w.present[k] == pos;
      if (!analyzed_at(pos)) continue;
      if (!present && lineage_alive(w.lineage, pos)) closed = true;
      if (present && closed) {
        ++flickers;
        closed = false;
      }
    }
    return flickers;
  }

  /// Latest analyzed revision at or before pos.
  std::optional<std::size_t> last_analyzed(std::size_t up_to) const {
    for (std::size_t pos = up_to + 1; pos-- > 0;)
      if (analyzed_at(pos)) return pos;
    return std::nullopt;
  }

 private:
  void build() {
    const auto& h = *history_;
    for (std::size_t i = 0; i < h.revisions.size(); ++i) positions_.emplace(h.revisions[i].id, i);
    by_revision_.resize(h.revisions.size());

    std::unordered_map<std::string, std::size_t> live;  // path -> lineage
    auto open_lineage = [&](const std::string& path, std::size_t pos, bool explicit_add) {
      FileLineage l;
      l.origin_path = path;
      l.created_at = pos;
      l.created_timestamp = h.revisions[pos].timestamp;
      l.explicit_add = explicit_add;
      lineages_.push_back(std::move(l));
      live[path] = lineages_.size() - 1;
      return lineages_.size() - 1;
    };
    auto lineage_for = [&](const std::string& path, std::size_t pos) {
      auto it = live.find(path);
      if (it != live.end()) return it->second;
      return open_lineage(path, pos, false);
    };

    std::size_t ci = 0, oi = 0;
    std::map<std::tuple<std::string, std::size_t, Entity>, std::size_t> ids;
    for (std::size_t pos = 0; pos < h.revisions.size(); ++pos) {
      const auto& rid = h.revisions[pos].id;
      for (; ci < h.changes.size() && h.changes[ci].revision == rid; ++ci) {
        const auto& c = h.changes[ci];
        switch (c.kind) {
          case ChangeKind::Add: {
            auto it = live.find(c.file_path);
            std::size_t l = it != live.end() ? it->second : open_lineage(c.file_path, pos, true);
            lineages_[l].changes.push_back(ci);
            break;
          }
          case ChangeKind::Modify:
            lineages_[lineage_for(c.file_path, pos)].changes.push_back(ci);
            break;
          case ChangeKind::Delete: {
            std::size_t l = lineage_for(c.file_path, pos);
            lineages_[l].changes.push_back(ci);
            lineages_[l].deleted_at = pos;
            live.erase(c.file_path);
            break;
          }
          case ChangeKind::Rename: {
            std::size_t old_l = lineage_for(*c.old_path, pos);
            live.erase(*c.old_path);
            if (opts_.bridge_renames) {
              live[c.file_path] = old_l;
              lineages_[old_l].changes.push_back(ci);
            } else {
              lineages_[old_l].deleted_at = pos;
              std::size_t l = open_lineage(c.file_path, pos, true);
              lineages_[l].changes.push_back(ci);
            }
            break;
          }
        }
      }
      auto& present = by_revision_[pos];
      for (; oi < h.observations.size() && h.observations[oi].revision == rid; ++oi) {
        const auto& o = h.observations[oi];
        std::size_t l = lineage_for(o.file_path, pos);
        auto ident = std::make_tuple(o.bug_pattern, l, o.entity);
        auto [it, inserted] = ids.emplace(ident, warnings_.size());
        if (inserted) {
          TrackedWarning w;
          w.bug_pattern = o.bug_pattern;
          w.bug_category = o.bug_category;
          w.lineage = l;
          w.package = o.entity.package;
          w.class_name = o.entity.class_name;
          w.method = o.entity.method;
          warnings_.push_back(std::move(w));
        }
        auto& w = warnings_[it->second];
        if (!w.present.empty() && w.present.back() == pos) continue;  // same key, later line
        w.present.push_back(pos);
        present.push_back(PresentWarning{it->second, &o, warning_key(o)});
      }
      std::sort(present.begin(), present.end(),
                [](const PresentWarning& a, const PresentWarning& b) { return a.key < b.key; });
      for (const auto& p : present) key_ids_[p.key].push_back(p.id);
    }
  }

  const ProjectHistory* history_;
  IndexOptions opts_;
  std::unordered_map<RevisionId, std::size_t> positions_;
  std::vector<FileLineage> lineages_;
  std::vector<TrackedWarning> warnings_;
  std::vector<std::vector<PresentWarning>> by_revision_;
  std::map<WarningKey, std::vector<std::size_t>> key_ids_;
};

struct WarningTimeline {
  RevisionId first_seen;
  std::vector<bool> presence;  // one entry per revision, chronological
  std::optional<RevisionId> closed_at;
  std::optional<RevisionId> file_deleted_at;
  std::size_t flickers = 0;
};

inline WarningTimeline warning_timeline(const HistoryIndex& idx, const WarningKey& key) {
  auto id = idx.find(key);
  if (!id) throw UsageError("warning " + key.to_string() + " is never observed");
  const auto& w = idx.warning(*id);
  WarningTimeline t;
  t.first_seen = idx.revision_at(w.present.front()).id;
  t.presence.assign(idx.revision_count(), false);
  for (auto pos : w.present) t.presence[pos] = true;
  if (auto c = idx.closed_at(*id)) t.closed_at = idx.revision_at(*c).id;
  const auto& l = idx.lineages()[w.lineage];
  if (l.deleted_at) t.file_deleted_at = idx.revision_at(*l.deleted_at).id;
  t.flickers = idx.flicker_count(*id, idx.revision_count() - 1);
  return t;
}

inline WarningTimeline warning_timeline(const ProjectHistory& h, const WarningKey& key,
                                        IndexOptions opts = {}) {
  HistoryIndex idx(h, opts);
  return warning_timeline(idx, key);
}

}  // namespace wtriage

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "builders.hpp"
#include "wtriage/oracle.hpp"
#include "wtriage/synth.hpp"
#include "wtriage/timeline.hpp"

using namespace wtriage;
using namespace wtriage::testing;

namespace {

const char* kSmallLedger = R"({"record":"revision","id":"r1","timestamp":100,"branch":"main"}
{"record":"revision","id":"r2","timestamp":200,"parent":"r1","branch":"main"}
{"record":"revision","id":"r3","timestamp":300,"parent":"r2","branch":"main"}
{"record":"change","revision":"r1","file_path":"src/A.java","kind":"Add","lines_added":40,"author":"ann"}
{"record":"warning","revision":"r1","file_path":"src/A.java","bug_pattern":"ES_COMPARING_STRINGS_WITH_EQ","bug_category":"BAD_PRACTICE","priority":2,"entity":{"package":"org.x","class":"org.x.A","method":"eq()Z"},"line":12}
{"record":"warning","revision":"r2","file_path":"src/A.java","bug_pattern":"ES_COMPARING_STRINGS_WITH_EQ","bug_category":"BAD_PRACTICE","priority":2,"entity":{"package":"org.x","class":"org.x.A","method":"eq()Z"},"line":14}
)";

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  c.n_files = 20;
  c.n_revisions = 30;
  c.warnings_per_revision = 3;
  c.incidental_close_rate = 0.3;
  c.file_delete_rate = 0.2;
  c.history_days = 900;
  c.train_day = 300;
  c.test_day = 450;
  c.reference_day = 800;
  return c;
}

}  // namespace

TEST(Ingest, PreservesRecordCounts) {
  auto h = ingest_ledger_text(kSmallLedger);
  EXPECT_EQ(h.revisions.size(), 3u);
  EXPECT_EQ(h.observations.size(), 2u);
  EXPECT_EQ(h.changes.size(), 1u);
  ASSERT_TRUE(h.horizon);
  EXPECT_EQ(*h.horizon, "r3");
}

TEST(Ingest, EmptyStreamGivesEmptyHistory) {
  auto h = ingest_ledger_text("");
  EXPECT_TRUE(h.empty());
  EXPECT_FALSE(h.horizon);
  EXPECT_THROW(heuristic_label(h, "r1", "r2"), UsageError);
}

TEST(Ingest, UnknownRevisionIsIntegrityErrorNamingIt) {
  const std::string ledger = R"({"record":"revision","id":"r1","timestamp":1}
{"record":"revision","id":"r2","timestamp":2,"parent":"r1"}
{"record":"warning","revision":"r1","file_path":"a.java","bug_pattern":"P","bug_category":"C","priority":1,"entity":{"package":"p","class":"p.A"},"line":1}
{"record":"warning","revision":"r9","file_path":"a.java","bug_pattern":"P","bug_category":"C","priority":1,"entity":{"package":"p","class":"p.A"},"line":1}
)";
  try {
    ingest_ledger_text(ledger);
    FAIL() << "expected an integrity error";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("r9"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(Ingest, MalformedLineReportsLineNumber) {
  const std::string ledger = "{\"record\":\"revision\",\"id\":\"r1\",\"timestamp\":1}\n{not json\n";
  try {
    ingest_ledger_text(ledger);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Ingest, RejectsUnknownRecordKind) {
  EXPECT_THROW(ingest_ledger_text("{\"record\":\"commit\",\"id\":\"x\"}\n"), ParseError);
  EXPECT_THROW(ingest_ledger_text("{\"id\":\"x\"}\n"), ParseError);
}

TEST(Ingest, RejectsBadFieldsAndConflicts) {
  const std::string rev = "{\"record\":\"revision\",\"id\":\"r1\",\"timestamp\":1}\n";
  auto warn = [](const std::string& pattern, const std::string& cat, int prio) {
    return "{\"record\":\"warning\",\"revision\":\"r1\",\"file_path\":\"a.java\",\"bug_pattern\":\"" + pattern +
           "\",\"bug_category\":\"" + cat + "\",\"priority\":" + std::to_string(prio) +
           ",\"entity\":{\"package\":\"p\",\"class\":\"p.A\"},\"line\":3}\n";
  };
  EXPECT_THROW(ingest_ledger_text(rev + warn("P", "C", 4)), IntegrityError);
  EXPECT_THROW(ingest_ledger_text(rev + warn("P", "C", 1) + warn("P", "D", 1)), IntegrityError);
  EXPECT_THROW(ingest_ledger_text(rev + "{\"record\":\"change\",\"revision\":\"r1\",\"file_path\":\"b\",\"kind\":\"Rename\"}\n"),
               IntegrityError);
  EXPECT_THROW(ingest_ledger_text(rev + "{\"record\":\"change\",\"revision\":\"r1\",\"file_path\":\"b\",\"kind\":\"Move\"}\n"),
               ParseError);
  EXPECT_THROW(ingest_ledger_text(rev + rev), IntegrityError);
  EXPECT_THROW(ingest_ledger_text("{\"record\":\"revision\",\"id\":\"r2\",\"timestamp\":1,\"parent\":\"r0\"}\n"),
               IntegrityError);
}

TEST(Ingest, CollapsesDuplicateObservationsWithNotice) {
  std::string ledger = kSmallLedger;
  ledger += R"({"record":"warning","revision":"r2","file_path":"src/A.java","bug_pattern":"ES_COMPARING_STRINGS_WITH_EQ","bug_category":"BAD_PRACTICE","priority":2,"entity":{"package":"org.x","class":"org.x.A","method":"eq()Z"},"line":14})";
  std::vector<std::string> notices;
  auto h = ingest_ledger_text(ledger, &notices);
  EXPECT_EQ(h.observations.size(), 2u);
  ASSERT_EQ(notices.size(), 1u);
  EXPECT_NE(notices[0].find("duplicate"), std::string::npos);
}

TEST(Ingest, EmitRoundTripIsEqual) {
  auto h = ingest_ledger_text(kSmallLedger);
  EXPECT_EQ(ingest_ledger_text(emit_ledger_text(h)), h);
  for (std::uint64_t seed : {1, 2, 3}) {
    auto s = generate(small_synth(seed));
    auto again = ingest_ledger_text(emit_ledger_text(s.history));
    EXPECT_EQ(again, s.history) << "seed " << seed;
    EXPECT_EQ(emit_ledger_text(again), emit_ledger_text(s.history));
  }
}

TEST(Ingest, KeysStableAcrossReingestion) {
  auto s = generate(small_synth(4));
  auto again = ingest_ledger_text(emit_ledger_text(s.history));
  ASSERT_EQ(again.observations.size(), s.history.observations.size());
  for (std::size_t i = 0; i < again.observations.size(); ++i)
    EXPECT_EQ(warning_key(again.observations[i]), warning_key(s.history.observations[i]));
}

TEST(Truncate, AtLastRevisionIsIdentity) {
  auto s = generate(small_synth(5));
  EXPECT_EQ(truncate_history(s.history, s.history.revisions.back().id), s.history);
}

TEST(Truncate, AtFirstRevisionKeepsOnlyItsRecords) {
  auto h = ingest_ledger_text(kSmallLedger);
  auto t = truncate_history(h, "r1");
  EXPECT_EQ(t.revisions.size(), 1u);
  EXPECT_EQ(t.observations.size(), 1u);
  EXPECT_EQ(t.changes.size(), 1u);
  EXPECT_EQ(*t.horizon, "r1");
}

TEST(Truncate, MatchesSetFilterAndIsIdempotent) {
  HistoryBuilder b;
  for (int i = 1; i <= 10; ++i) {
    const std::string r = "r" + std::to_string(i);
    b.rev(r, i);
    b.warn(r, "a.java", "P" + std::to_string(i % 3), "p.A");
    b.change(r, "a.java", i == 1 ? ChangeKind::Add : ChangeKind::Modify);
  }
  auto h = b.build();
  auto t = truncate_history(h, "r5");
  // Oracle: filter every record by timestamp.
  const Timestamp cut = h.revision("r5").timestamp;
  std::set<std::string> ok;
  for (const auto& r : h.revisions)
    if (r.timestamp <= cut) ok.insert(r.id);
  std::size_t obs = 0, ch = 0;
  for (const auto& o : h.observations) obs += ok.count(o.revision);
  for (const auto& c : h.changes) ch += ok.count(c.revision);
  EXPECT_EQ(t.revisions.size(), ok.size());
  EXPECT_EQ(t.observations.size(), obs);
  EXPECT_EQ(t.changes.size(), ch);
  for (const auto& o : t.observations) EXPECT_TRUE(ok.count(o.revision));
  EXPECT_EQ(truncate_history(t, "r5"), t);
  EXPECT_THROW(truncate_history(h, "r11"), UsageError);
}

TEST(WarningKey, IgnoresLineNumber) {
  WarningObservation a{"r1", "a.java", "P", "C", 1, Entity{"p", "p.A", "m()V"}, 10};
  WarningObservation b = a;
  b.line = 14;
  EXPECT_EQ(warning_key(a), warning_key(b));
  b.entity.class_name = "p.B";
  EXPECT_NE(warning_key(a), warning_key(b));
}

TEST(WarningKey, RenameChangesKeyButTimelineBridges) {
  auto h = HistoryBuilder()
               .rev("r1", 0)
               .rev("r2", 1)
               .change("r1", "old/A.java", ChangeKind::Add)
               .change("r2", "new/A.java", ChangeKind::Rename, 0, "bob", std::string("old/A.java"))
               .warn("r1", "old/A.java", "P", "p.A")
               .warn("r2", "new/A.java", "P", "p.A")
               .build();
  const auto before = key("P", "old/A.java", "p.A");
  const auto after = key("P", "new/A.java", "p.A");
  EXPECT_NE(before, after);
  HistoryIndex idx(h);
  EXPECT_EQ(idx.find(before), idx.find(after));
  auto t = warning_timeline(h, before);
  EXPECT_EQ(t.presence, (std::vector<bool>{true, true}));
  EXPECT_FALSE(t.closed_at);

  HistoryIndex split(h, IndexOptions{false});
  EXPECT_NE(split.find(before), split.find(after));
  auto t2 = warning_timeline(h, before, IndexOptions{false});
  EXPECT_FALSE(t2.closed_at);
  ASSERT_TRUE(t2.file_deleted_at);
  EXPECT_EQ(*t2.file_deleted_at, "r2");
}

TEST(Timeline, ClosedWhenAbsentWithFileAlive) {
  HistoryBuilder b;
  for (int i = 1; i <= 4; ++i) b.rev("r" + std::to_string(i), i);
  b.change("r1", "a.java", ChangeKind::Add);
  for (int i = 1; i <= 3; ++i) b.warn("r" + std::to_string(i), "a.java", "P", "p.A");
  b.warn("r4", "a.java", "Q", "p.A");
  auto t = warning_timeline(b.build(), key("P", "a.java", "p.A"));
  EXPECT_EQ(t.first_seen, "r1");
  EXPECT_EQ(t.presence, (std::vector<bool>{true, true, true, false}));
  ASSERT_TRUE(t.closed_at);
  EXPECT_EQ(*t.closed_at, "r4");
  EXPECT_FALSE(t.file_deleted_at);
}

TEST(Timeline, NeverClosedWhenAlwaysPresent) {
  HistoryBuilder b;
  for (int i = 1; i <= 4; ++i) {
    b.rev("r" + std::to_string(i), i);
    b.warn("r" + std::to_string(i), "a.java", "P", "p.A");
  }
  auto t = warning_timeline(b.build(), key("P", "a.java", "p.A"));
  EXPECT_FALSE(t.closed_at);
  EXPECT_EQ(t.flickers, 0u);
}

TEST(Timeline, FileDeleteIsNotAClosure) {
  auto h = HistoryBuilder()
               .rev("r1", 1)
               .rev("r2", 2)
               .rev("r3", 3)
               .change("r1", "a.java", ChangeKind::Add)
               .change("r3", "a.java", ChangeKind::Delete)
               .warn("r1", "a.java", "P", "p.A")
               .warn("r2", "a.java", "P", "p.A")
               .build();
  auto t = warning_timeline(h, key("P", "a.java", "p.A"));
  ASSERT_TRUE(t.file_deleted_at);
  EXPECT_EQ(*t.file_deleted_at, "r3");
  EXPECT_FALSE(t.closed_at);
}

TEST(Timeline, UnanalyzedRevisionDoesNotClose) {
  auto h = HistoryBuilder()
               .rev("r1", 1)
               .rev("r2", 2, false)
               .rev("r3", 3)
               .warn("r1", "a.java", "P", "p.A")
               .warn("r3", "a.java", "P", "p.A")
               .build();
  auto t = warning_timeline(h, key("P", "a.java", "p.A"));
  EXPECT_FALSE(t.closed_at);
  EXPECT_EQ(t.flickers, 0u);
}

TEST(Timeline, FlickerIsCounted) {
  auto h = HistoryBuilder()
               .rev("r1", 1)
               .rev("r2", 2)
               .rev("r3", 3)
               .warn("r1", "a.java", "P", "p.A")
               .warn("r2", "a.java", "Q", "p.A")
               .warn("r3", "a.java", "P", "p.A")
               .build();
  auto t = warning_timeline(h, key("P", "a.java", "p.A"));
  EXPECT_EQ(t.flickers, 1u);
  ASSERT_TRUE(t.closed_at);
  EXPECT_EQ(*t.closed_at, "r2");
}

TEST(Timeline, NeverObservedKeyIsError) {
  auto h = HistoryBuilder().rev("r1", 1).warn("r1", "a.java", "P", "p.A").build();
  EXPECT_THROW(warning_timeline(h, key("Q", "a.java", "p.A")), UsageError);
}

TEST(Timeline, PresenceDependsOnlyOnThePast) {
  for (std::uint64_t seed : {6, 7}) {
    auto s = generate(small_synth(seed));
    const auto& h = s.history;
    HistoryIndex full(h);
    for (std::size_t cut = 0; cut < h.revisions.size(); cut += 7) {
      auto t = truncate_history(h, h.revisions[cut].id);
      HistoryIndex part(t);
      for (const auto& p : part.present_at(cut)) {
        auto a = warning_timeline(part, p.key);
        auto b = warning_timeline(full, p.key);
        std::vector<bool> prefix(b.presence.begin(), b.presence.begin() + static_cast<std::ptrdiff_t>(cut) + 1);
        EXPECT_EQ(a.presence, prefix);
        EXPECT_EQ(a.first_seen, b.first_seen);
      }
    }
  }
}

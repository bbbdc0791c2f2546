// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "etymo/corpus.hpp"
#include "test_support.hpp"

using namespace etymo;
using etymo::testing::make_doc;
using etymo::testing::TempDir;

namespace {

std::string line_for(const Document& d) { return to_json(d).dump() + "\n"; }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an etymo::Error";
  return ErrorCode::Io;
}

FeedbackEvent event(std::string user, FeedbackKind kind, std::string doc, std::string ts = "2018-01-01T00:00:00Z") {
  return {std::move(user), kind, std::move(doc), std::move(ts)};
}

}  // namespace

TEST(Date, ParsesOnlyCompleteCalendarDates) {
  ASSERT_TRUE(Date::parse("2017-06-01"));
  EXPECT_EQ(Date::parse("2017-06-01")->str(), "2017-06-01");
  EXPECT_TRUE(Date::parse("2016-02-29"));
  EXPECT_FALSE(Date::parse("2017-02-29"));
  EXPECT_FALSE(Date::parse("2017-02-30"));
  EXPECT_FALSE(Date::parse("2017-05"));
  EXPECT_FALSE(Date::parse("2017-13-01"));
  EXPECT_FALSE(Date::parse("2017-1-01"));
  EXPECT_FALSE(Date::parse("17-01-01xx"));
  EXPECT_LT(*Date::parse("2008-11-01"), *Date::parse("2017-06-01"));
}

TEST(Instant, OffsetsDenoteTheSameMoment) {
  auto a = parse_instant("2018-03-01T12:00:00Z");
  auto b = parse_instant("2018-03-01T14:00:00+02:00");
  auto c = parse_instant("2018-03-01T07:30:00-04:30");
  ASSERT_TRUE(a && b && c);
  EXPECT_EQ(*a, *b);
  EXPECT_EQ(*a, *c);
  EXPECT_LT(*parse_instant("2018-03-01T12:00:00Z"), *parse_instant("2018-03-01T12:00:00.5Z"));
  EXPECT_FALSE(parse_instant("yesterday"));
  EXPECT_FALSE(parse_instant("2018-02-30T00:00:00Z"));
}

TEST(DocumentJson, RoundTripsAllFields) {
  auto d = make_doc("arXiv:1706.0001", "body text \xc3\xa9\xe2\x82\xac", "2017-06-01", "A Title \"quoted\"", "NeurIPS",
                    {"X. Y\xc3\xbc", "Z. W"});
  d.abstract = "line\nbreak\ttab";
  const auto back = document_from_json(io::Json::parse(to_json(d).dump()));
  EXPECT_EQ(back, d);
}

TEST(DocumentJson, RejectsSchemaViolations) {
  auto base = to_json(make_doc("x", "b"));
  auto without = [&](const char* field) {
    auto j = base;
    j.erase(field);
    return j;
  };
  for (auto f : {"id", "title", "authors", "venue", "published", "abstract", "body"})
    EXPECT_EQ(code_of([&] { document_from_json(without(f)); }), ErrorCode::SchemaError) << f;
  auto extra = base;
  extra["doi"] = "10.1/x";
  EXPECT_EQ(code_of([&] { document_from_json(extra); }), ErrorCode::SchemaError);
  auto bad_date = base;
  bad_date["published"] = "2017-05";
  EXPECT_EQ(code_of([&] { document_from_json(bad_date); }), ErrorCode::SchemaError);
  auto bad_authors = base;
  bad_authors["authors"] = "A. Author";
  EXPECT_EQ(code_of([&] { document_from_json(bad_authors); }), ErrorCode::SchemaError);
  auto empty_id = base;
  empty_id["id"] = "";
  EXPECT_EQ(code_of([&] { document_from_json(empty_id); }), ErrorCode::SchemaError);
}

TEST(CorpusStore, IngestsAndReadsBack) {
  TempDir dir;
  CorpusStore store(dir.path());
  std::istringstream in(line_for(make_doc("a", "x")) + line_for(make_doc("b", "y")) + line_for(make_doc("c", "z")));
  EXPECT_EQ(store.ingest_documents(in), 3u);
  EXPECT_EQ(store.size(), 3u);
  EXPECT_EQ(store.get_document("b").body, "y");
  const auto all = store.documents();
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].id, "a");
  EXPECT_EQ(all[2].id, "c");
}

TEST(CorpusStore, EmptyFileIngestsNothing) {
  TempDir dir;
  CorpusStore store(dir.path());
  std::istringstream in("");
  EXPECT_EQ(store.ingest_documents(in), 0u);
  EXPECT_EQ(store.size(), 0u);
}

TEST(CorpusStore, BadRecordRejectsWholeFileWithLineNumber) {
  TempDir dir;
  CorpusStore store(dir.path());
  auto broken = to_json(make_doc("c", "z"));
  broken.erase("published");
  std::istringstream in(line_for(make_doc("a", "x")) + line_for(make_doc("b", "y")) + broken.dump() + "\n");
  try {
    store.ingest_documents(in);
    FAIL() << "expected SchemaError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_EQ(store.size(), 0u);
  EXPECT_FALSE(std::filesystem::exists(store.documents_path()) &&
               std::filesystem::file_size(store.documents_path()) > 0);
}

TEST(CorpusStore, MalformedJsonIsASchemaError) {
  TempDir dir;
  CorpusStore store(dir.path());
  std::istringstream in(line_for(make_doc("a", "x")) + "{not json\n");
  EXPECT_EQ(code_of([&] { store.ingest_documents(in); }), ErrorCode::SchemaError);
  EXPECT_EQ(store.size(), 0u);
}

TEST(CorpusStore, ConflictingDuplicateIdIsRejected) {
  TempDir dir;
  CorpusStore store(dir.path());
  std::istringstream first(line_for(make_doc("a", "x")));
  store.ingest_documents(first);
  std::istringstream second(line_for(make_doc("a", "different")));
  EXPECT_EQ(code_of([&] { store.ingest_documents(second); }), ErrorCode::DuplicateId);
  std::istringstream within(line_for(make_doc("q", "1")) + line_for(make_doc("q", "2")));
  EXPECT_EQ(code_of([&] { store.ingest_documents(within); }), ErrorCode::DuplicateId);
  EXPECT_EQ(store.size(), 1u);
}

TEST(CorpusStore, ReingestIsIdempotent) {
  TempDir dir;
  const auto file = dir / "in.jsonl";
  etymo::testing::write_text(file, line_for(make_doc("a", "x")) + line_for(make_doc("b", "y")));
  CorpusStore store(dir.path() / "data");
  EXPECT_EQ(store.ingest_documents(file), 2u);
  const auto before = etymo::testing::read_text(store.documents_path());
  EXPECT_EQ(store.ingest_documents(file), 0u);
  EXPECT_EQ(etymo::testing::read_text(store.documents_path()), before);
}

TEST(CorpusStore, ReopenRestoresState) {
  TempDir dir;
  auto d = make_doc("a", "unicode \xe2\x9c\x93", "2001-02-03", "T", "V", {"P", "Q"});
  d.abstract = "abs";
  {
    CorpusStore store(dir.path());
    std::istringstream in(line_for(d));
    store.ingest_documents(in);
    store.append_feedback(event("u", FeedbackKind::Star, "a"));
  }
  CorpusStore again(dir.path());
  EXPECT_EQ(again.get_document("a"), d);
  ASSERT_EQ(again.list_feedback().size(), 1u);
  EXPECT_EQ(again.list_feedback()[0].event, event("u", FeedbackKind::Star, "a"));
}

TEST(CorpusStore, UnknownIdsAreNotFound) {
  TempDir dir;
  CorpusStore store(dir.path());
  EXPECT_EQ(code_of([&] { store.get_document(""); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { store.get_document("nope"); }), ErrorCode::NotFound);
}

TEST(Feedback, SequenceNumbersAndSince) {
  TempDir dir;
  CorpusStore store(dir.path());
  std::istringstream in(line_for(make_doc("a", "x")) + line_for(make_doc("b", "y")));
  store.ingest_documents(in);
  EXPECT_EQ(store.append_feedback(event("u1", FeedbackKind::Star, "a")), 1u);
  EXPECT_EQ(store.append_feedback(event("u1", FeedbackKind::LibraryAdd, "b")), 2u);
  EXPECT_EQ(store.list_feedback(0).size(), 2u);
  const auto tail = store.list_feedback(1);
  ASSERT_EQ(tail.size(), 1u);
  EXPECT_EQ(tail[0].seq, 2u);
  EXPECT_EQ(tail[0].event.kind, FeedbackKind::LibraryAdd);
  EXPECT_TRUE(store.list_feedback(2).empty());
}

TEST(Feedback, RejectsUnknownDocAndBadTimestamp) {
  TempDir dir;
  CorpusStore store(dir.path());
  std::istringstream in(line_for(make_doc("a", "x")));
  store.ingest_documents(in);
  EXPECT_EQ(code_of([&] { store.append_feedback(event("u", FeedbackKind::Star, "zzz")); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { store.append_feedback(event("u", FeedbackKind::Star, "a", "noon")); }),
            ErrorCode::SchemaError);
  EXPECT_TRUE(store.list_feedback().empty());
}

TEST(Feedback, LogLinesHaveExactlyTheEventFields) {
  TempDir dir;
  CorpusStore store(dir.path());
  std::istringstream in(line_for(make_doc("a", "x")));
  store.ingest_documents(in);
  store.append_feedback(event(std::string(kSocialUser), FeedbackKind::Click, "a"));
  std::istringstream log(etymo::testing::read_text(store.feedback_path()));
  std::string line;
  std::getline(log, line);
  const auto j = io::Json::parse(line);
  EXPECT_EQ(j.size(), 4u);
  EXPECT_EQ(j.at("user"), "social:twitter");
  EXPECT_EQ(j.at("kind"), "click");
  EXPECT_EQ(j.at("doc_id"), "a");
  EXPECT_EQ(j.at("timestamp"), "2018-01-01T00:00:00Z");
}

TEST(Feedback, ChronologicalOrdersByInstantThenSequence) {
  std::vector<FeedbackRecord> records = {
      {1, event("u", FeedbackKind::Star, "a", "2018-01-02T00:00:00Z")},
      {2, event("u", FeedbackKind::Star, "b", "2018-01-01T23:00:00-02:00")},
      {3, event("u", FeedbackKind::Star, "c", "2018-01-01T00:00:00Z")},
      {4, event("u", FeedbackKind::Star, "d", "2018-01-02T01:00:00Z")}};
  const auto sorted = chronological(records);
  std::vector<std::string> ids;
  for (const auto& r : sorted) ids.push_back(r.event.doc_id);
  EXPECT_EQ(ids, (std::vector<std::string>{"c", "a", "b", "d"}));
}

TEST(Impressions, RoundTripAndValidation) {
  TempDir dir;
  CorpusStore store(dir.path());
  store.update_impressions([](ImpressionMap& m) { m["a"] = {"a", 20, 3}; });
  const auto m = store.impressions();
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.at("a"), (ImpressionRecord{"a", 20, 3}));
  EXPECT_DOUBLE_EQ(m.at("a").click_rate(), 0.15);
  EXPECT_EQ(code_of([] { impression_from_json(io::Json{{"doc_id", "a"}, {"impressions", 1}, {"clicks", 2}}); }),
            ErrorCode::SchemaError);
  EXPECT_DOUBLE_EQ((ImpressionRecord{"z", 0, 0}).click_rate(), 0.0);
}

TEST(CorpusStore, ReadersNeverObservePartialAppends) {
  TempDir dir;
  CorpusStore store(dir.path());
  std::istringstream in(line_for(make_doc("a", "x")));
  store.ingest_documents(in);
  constexpr int kEvents = 200;
  std::atomic<bool> done{false};
  std::atomic<int> violations{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 4; ++r)
    readers.emplace_back([&] {
      std::size_t last = 0;
      while (!done.load()) {
        const auto all = store.list_feedback();
        if (all.size() < last) ++violations;
        last = all.size();
        for (std::size_t i = 0; i < all.size(); ++i)
          if (all[i].seq != i + 1 || all[i].event.doc_id != "a" || all[i].event.user != "u") ++violations;
      }
    });
  for (int i = 0; i < kEvents; ++i) store.append_feedback(event("u", FeedbackKind::Click, "a"));
  done = true;
  for (auto& t : readers) t.join();
  EXPECT_EQ(violations.load(), 0);
  EXPECT_EQ(CorpusStore(dir.path()).list_feedback().size(), static_cast<std::size_t>(kEvents));
}

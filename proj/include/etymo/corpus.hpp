// SPDX-License-Identifier: Apache-2.0

// Document store: ingestion of line-delimited JSON records, an append-only
// feedback log and the impression counters used by click-rate demotion.
//
// On-disk layout (one directory):
//   documents.jsonl    one document per line
//   feedback.jsonl     append-only; sequence number = line number
//   impressions.jsonl  per-document impression/click counters

#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "etymo/error.hpp"
#include "etymo/io.hpp"

namespace etymo {

/// Calendar date; only complete YYYY-MM-DD values are accepted.
struct Date {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  friend auto operator<=>(const Date&, const Date&) = default;

  static std::optional<Date> parse(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    auto digits = [&](std::size_t pos, std::size_t len, auto& out) {
      for (std::size_t i = pos; i < pos + len; ++i)
        if (s[i] < '0' || s[i] > '9') return false;
      auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
      return ec == std::errc{} && p == s.data() + pos + len;
    };
    Date d;
    if (!digits(0, 4, d.year) || !digits(5, 2, d.month) || !digits(8, 2, d.day)) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{d.year}, std::chrono::month{d.month},
                                    std::chrono::day{d.day}};
    if (!ymd.ok()) return std::nullopt;
    return d;
  }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
    return buf;
  }
};

struct Document {
  std::string id;
  std::string title;
  std::vector<std::string> authors;
  std::string venue;
  Date published;
  std::string abstract;
  std::string body;

  friend bool operator==(const Document&, const Document&) = default;
};

enum class FeedbackKind { Star, Click, LibraryAdd };

constexpr std::string_view to_string(FeedbackKind k) noexcept {
  switch (k) {
    case FeedbackKind::Star: return "star";
    case FeedbackKind::Click: return "click";
    case FeedbackKind::LibraryAdd: return "library_add";
  }
  return "";
}

inline std::optional<FeedbackKind> parse_feedback_kind(std::string_view s) {
  if (s == "star") return FeedbackKind::Star;
  if (s == "click") return FeedbackKind::Click;
  if (s == "library_add") return FeedbackKind::LibraryAdd;
  return std::nullopt;
}

/// Reserved user under which social-media mentions are logged as stars.
inline constexpr std::string_view kSocialUser = "social:twitter";

/// Parses an ISO-8601 instant (`YYYY-MM-DDTHH:MM:SS[.frac](Z|+hh:mm|-hh:mm)`)
/// into microseconds since the Unix epoch (UTC).
inline std::optional<std::int64_t> parse_instant(std::string_view s) {
  static const std::regex re(
      R"(^(\d{4}-\d{2}-\d{2})T(\d{2}):(\d{2}):(\d{2})(\.(\d{1,9}))?(Z|([+-])(\d{2}):(\d{2}))$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(s.begin(), s.end(), m, re)) return std::nullopt;
  auto date = Date::parse(m[1].str());
  if (!date) return std::nullopt;
  int hh = std::stoi(m[2].str()), mm = std::stoi(m[3].str()), ss = std::stoi(m[4].str());
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  std::int64_t micros = 0;
  if (m[6].matched) {
    std::string frac = m[6].str();
    frac.resize(6, '0');
    micros = std::stoll(frac);
  }
  std::int64_t offset_min = 0;
  if (m[8].matched) {
    int oh = std::stoi(m[9].str()), om = std::stoi(m[10].str());
    if (oh > 23 || om > 59) return std::nullopt;
    offset_min = (oh * 60 + om) * (m[8].str() == "-" ? -1 : 1);
  }
  using namespace std::chrono;
  const sys_days days{year_month_day{year{date->year}, month{date->month}, day{date->day}}};
  const std::int64_t secs = days.time_since_epoch().count() * 86400LL + hh * 3600LL + mm * 60LL +
                            ss - offset_min * 60LL;
  return secs * 1'000'000LL + micros;
}

struct FeedbackEvent {
  std::string user;
  FeedbackKind kind = FeedbackKind::Star;
  std::string doc_id;
  std::string timestamp;

  friend bool operator==(const FeedbackEvent&, const FeedbackEvent&) = default;
};

/// A feedback event with its position in the log.
struct FeedbackRecord {
  std::uint64_t seq = 0;
  FeedbackEvent event;
};

struct ImpressionRecord {
  std::string doc_id;
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;

  double click_rate() const {
    return impressions == 0 ? 0.0 : static_cast<double>(clicks) / static_cast<double>(impressions);
  }
  friend bool operator==(const ImpressionRecord&, const ImpressionRecord&) = default;
};

using ImpressionMap = std::map<std::string, ImpressionRecord, std::less<>>;

// ---------------------------------------------------------------------------
// JSON encoding

inline io::Json to_json(const Document& d) {
  io::Json j;
  j["id"] = d.id;
  j["title"] = d.title;
  j["authors"] = d.authors;
  j["venue"] = d.venue;
  j["published"] = d.published.str();
  j["abstract"] = d.abstract;
  j["body"] = d.body;
  return j;
}

/// Strict decoding: exactly the seven document fields, all with the right
/// types, a valid calendar date, and nonempty id and body.
inline Document document_from_json(const io::Json& j, std::size_t line = 0) {
  auto fail = [&](const std::string& what) -> Error {
    return Error(ErrorCode::SchemaError,
                 (line ? "line " + std::to_string(line) + ": " : std::string{}) + what, line);
  };
  if (!j.is_object()) throw fail("record is not an object");
  static constexpr std::string_view kFields[] = {"id",        "title",    "authors", "venue",
                                                 "published", "abstract", "body"};
  for (auto f : kFields)
    if (!j.contains(std::string(f))) throw fail("missing field '" + std::string(f) + "'");
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(kFields), std::end(kFields), key) == std::end(kFields))
      throw fail("unknown field '" + key + "'");
  for (auto f : {"id", "title", "venue", "published", "abstract", "body"})
    if (!j.at(f).is_string()) throw fail(std::string("field '") + f + "' must be a string");
  if (!j.at("authors").is_array()) throw fail("field 'authors' must be an array");
  Document d;
  for (const auto& a : j.at("authors")) {
    if (!a.is_string()) throw fail("authors must be strings");
    d.authors.push_back(a.get<std::string>());
  }
  d.id = j.at("id").get<std::string>();
  if (d.id.empty()) throw fail("empty id");
  d.title = j.at("title").get<std::string>();
  d.venue = j.at("venue").get<std::string>();
  auto date = Date::parse(j.at("published").get<std::string>());
  if (!date) throw fail("unparseable date '" + j.at("published").get<std::string>() + "'");
  d.published = *date;
  d.abstract = j.at("abstract").get<std::string>();
  d.body = j.at("body").get<std::string>();
  if (d.body.empty()) throw fail("empty body");
  return d;
}

inline io::Json to_json(const FeedbackEvent& e) {
  io::Json j;
  j["user"] = e.user;
  j["kind"] = std::string(to_string(e.kind));
  j["doc_id"] = e.doc_id;
  j["timestamp"] = e.timestamp;
  return j;
}

inline FeedbackEvent feedback_from_json(const io::Json& j, std::size_t line = 0) {
  auto fail = [&](const std::string& what) -> Error {
    return Error(ErrorCode::SchemaError,
                 (line ? "line " + std::to_string(line) + ": " : std::string{}) + what, line);
  };
  if (!j.is_object()) throw fail("record is not an object");
  for (auto f : {"user", "kind", "doc_id", "timestamp"})
    if (!j.contains(f) || !j.at(f).is_string())
      throw fail(std::string("missing or non-string field '") + f + "'");
  FeedbackEvent e;
  e.user = j.at("user").get<std::string>();
  auto kind = parse_feedback_kind(j.at("kind").get<std::string>());
  if (!kind) throw fail("bad kind '" + j.at("kind").get<std::string>() + "'");
  e.kind = *kind;
  e.doc_id = j.at("doc_id").get<std::string>();
  e.timestamp = j.at("timestamp").get<std::string>();
  if (!parse_instant(e.timestamp)) throw fail("bad timestamp '" + e.timestamp + "'");
  return e;
}

inline io::Json to_json(const ImpressionRecord& r) {
  io::Json j;
  j["doc_id"] = r.doc_id;
  j["impressions"] = r.impressions;
  j["clicks"] = r.clicks;
  return j;
}

inline ImpressionRecord impression_from_json(const io::Json& j, std::size_t line = 0) {
  if (!j.is_object() || !j.contains("doc_id") || !j.contains("impressions") ||
      !j.contains("clicks") || !j.at("doc_id").is_string() ||
      !j.at("impressions").is_number_unsigned() || !j.at("clicks").is_number_unsigned())
    throw Error(ErrorCode::SchemaError, "bad impression record at line " + std::to_string(line),
                line);
  ImpressionRecord r{j.at("doc_id").get<std::string>(), j.at("impressions").get<std::uint64_t>(),
                     j.at("clicks").get<std::uint64_t>()};
  if (r.clicks > r.impressions)
    throw Error(ErrorCode::SchemaError, "clicks exceed impressions for " + r.doc_id, line);
  return r;
}

inline ImpressionMap read_impressions(const std::filesystem::path& path) {
  ImpressionMap out;
  if (!std::filesystem::exists(path)) return out;
  io::for_each_jsonl(path, [&](const io::Json& j, std::size_t line) {
    auto r = impression_from_json(j, line);
    out[r.doc_id] = r;
  });
  return out;
}

inline std::string impressions_jsonl(const ImpressionMap& m) {
  std::string out;
  for (const auto& [_, r] : m) out += io::dump(to_json(r)) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

/// Single-writer, multi-reader document store. All mutations serialize on
/// one writer lock; readers take a shared lock and only ever see fully
/// written records.
class CorpusStore {
 public:
  explicit CorpusStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    if (std::filesystem::exists(documents_path())) {
      io::for_each_jsonl(documents_path(), [&](const io::Json& j, std::size_t line) {
        auto d = document_from_json(j, line);
        docs_.emplace(d.id, std::move(d));
      });
    }
    if (std::filesystem::exists(feedback_path())) {
      io::for_each_jsonl(feedback_path(), [&](const io::Json& j, std::size_t line) {
        feedback_.push_back(feedback_from_json(j, line));
      });
    }
  }

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path documents_path() const { return dir_ / "documents.jsonl"; }
  std::filesystem::path feedback_path() const { return dir_ / "feedback.jsonl"; }
  std::filesystem::path impressions_path() const { return dir_ / "impressions.jsonl"; }

  /// Validates every record of the file before persisting any of them.
  /// Returns the number of newly stored documents; records identical to
  /// stored ones are no-ops.
  std::size_t ingest_documents(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return ingest_documents(in);
  }

  std::size_t ingest_documents(std::istream& in) {
    std::vector<Document> incoming;
    io::for_each_jsonl(in, [&](const io::Json& j, std::size_t line) {
      incoming.push_back(document_from_json(j, line));
    });
    std::scoped_lock writer(writer_mutex_);
    std::vector<const Document*> fresh;
    std::map<std::string_view, const Document*> batch;
    {
      std::shared_lock read(state_mutex_);
      for (const auto& d : incoming) {
        if (auto it = docs_.find(d.id); it != docs_.end()) {
          if (!(it->second == d)) throw Error(ErrorCode::DuplicateId, d.id);
          continue;
        }
        auto [it, inserted] = batch.emplace(d.id, &d);
        if (!inserted) {
          if (!(*it->second == d)) throw Error(ErrorCode::DuplicateId, d.id);
          continue;
        }
        fresh.push_back(&d);
      }
    }
    if (fresh.empty()) return 0;
    std::string chunk;
    for (const auto* d : fresh) chunk += io::dump(to_json(*d)) + "\n";
    append_raw(documents_path(), chunk);
    std::unique_lock write(state_mutex_);
    for (const auto* d : fresh) docs_.emplace(d->id, *d);
    return fresh.size();
  }

  Document get_document(std::string_view id) const {
    std::shared_lock read(state_mutex_);
    auto it = docs_.find(id);
    if (it == docs_.end()) throw Error(ErrorCode::NotFound, "document '" + std::string(id) + "'");
    return it->second;
  }

  bool contains(std::string_view id) const {
    std::shared_lock read(state_mutex_);
    return docs_.find(id) != docs_.end();
  }

  std::size_t size() const {
    std::shared_lock read(state_mutex_);
    return docs_.size();
  }

  /// All documents ordered by id.
  std::vector<Document> documents() const {
    std::shared_lock read(state_mutex_);
    std::vector<Document> out;
    out.reserve(docs_.size());
    for (const auto& [_, d] : docs_) out.push_back(d);
    return out;
  }

  std::uint64_t append_feedback(const FeedbackEvent& event) {
    if (!parse_instant(event.timestamp))
      throw Error(ErrorCode::SchemaError, "bad timestamp '" + event.timestamp + "'");
    std::scoped_lock writer(writer_mutex_);
    if (!contains(event.doc_id))
      throw Error(ErrorCode::NotFound, "document '" + event.doc_id + "'");
    append_raw(feedback_path(), io::dump(to_json(event)) + "\n");
    std::unique_lock write(state_mutex_);
    feedback_.push_back(event);
    return feedback_.size();
  }

  /// Events with sequence number greater than `since`, in log order.
  std::vector<FeedbackRecord> list_feedback(std::uint64_t since = 0) const {
    std::shared_lock read(state_mutex_);
    std::vector<FeedbackRecord> out;
    for (std::uint64_t i = since; i < feedback_.size(); ++i) out.push_back({i + 1, feedback_[i]});
    return out;
  }

  ImpressionMap impressions() const {
    std::scoped_lock writer(writer_mutex_);
    return read_impressions(impressions_path());
  }

  /// Read-modify-write of impressions.jsonl under the writer lock.
  template <typename Fn>
  void update_impressions(Fn&& fn) {
    std::scoped_lock writer(writer_mutex_);
    auto m = read_impressions(impressions_path());
    fn(m);
    io::write_file_atomic(impressions_path(), impressions_jsonl(m));
  }

 private:
  static void append_raw(const std::filesystem::path& path, const std::string& chunk) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + path.string());
    out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
  }

  std::filesystem::path dir_;
  mutable std::mutex writer_mutex_;
  mutable std::shared_mutex state_mutex_;
  std::map<std::string, Document, std::less<>> docs_;
  std::vector<FeedbackEvent> feedback_;
};

/// Sorts events by (instant, sequence), the total order feedback rules use.
inline std::vector<FeedbackRecord> chronological(std::vector<FeedbackRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    auto ta = parse_instant(a.event.timestamp).value_or(0);
    auto tb = parse_instant(b.event.timestamp).value_or(0);
    return ta != tb ? ta < tb : a.seq < b.seq;
  });
  return records;
}

}  // namespace etymo

// SPDX-License-Identifier: Apache-2.0

// HTTP/JSON API over an immutable artifact snapshot.
//
//   GET  /api/search?q=&limit=&ratings=
//   GET  /api/papers/{id}
//   GET  /api/papers/{id}/related?limit=
//   GET  /api/graph?ids=a,b,c&hops=
//   POST /api/feedback            {user, kind, doc_id}
//   GET  /api/feed?user=&limit=
//
// Each request pins one snapshot for its whole lifetime and reports that
// snapshot's `version`, so a swap is never observed halfway.

#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>

#include "etymo/corpus.hpp"
#include "etymo/error.hpp"
#include "etymo/io.hpp"
#include "etymo/pipeline.hpp"
#include "etymo/search_feed.hpp"

namespace etymo {

struct ApiResponse {
  int status = 200;
  io::Json body;
};

struct ApiOptions {
  std::size_t top_R = 10;
  double lambda = 1.0;
  std::size_t max_graph_nodes = 500;
  std::size_t default_limit = 10;
};

using QueryParams = std::map<std::string, std::string, std::less<>>;

/// Transport-independent request handlers.
class Api {
 public:
  /// `store` may be null, in which case feedback is rejected and
  /// impressions are not recorded.
  Api(std::shared_ptr<const Snapshot> snapshot, CorpusStore* store, ApiOptions opt = {})
      : snapshot_(std::move(snapshot)), store_(store), opt_(opt) {}

  std::shared_ptr<const Snapshot> current() const {
    std::scoped_lock lock(swap_mutex_);
    return snapshot_;
  }

  void publish(std::shared_ptr<const Snapshot> next) {
    std::scoped_lock lock(swap_mutex_);
    snapshot_ = std::move(next);
  }

  ApiResponse search(const QueryParams& q) {
    const auto snap = current();
    auto query = q.find("q");
    if (query == q.end()) return error(400, "missing q", *snap);
    auto limit = parse_limit(q);
    if (!limit) return error(400, "limit must be a positive integer", *snap);
    bool ratings = true;
    if (auto r = q.find("ratings"); r != q.end()) {
      if (r->second == "true" || r->second == "1") ratings = true;
      else if (r->second == "false" || r->second == "0") ratings = false;
      else return error(400, "ratings must be true or false", *snap);
    }
    const auto results =
        etymo::search(query->second, snap->lexicon, snap->index, &snap->ranks, {*limit, ratings, opt_.lambda});
    if (store_ && !results.empty())
      store_->update_impressions([&](ImpressionMap& m) { record_impressions(m, results, opt_.top_R); });

    io::Json body;
    body["version"] = snap->version;
    body["query"] = query->second;
    body["results"] = io::Json::array();
    for (const auto& r : results) {
      const auto& doc = snap->documents.at(r.doc_id);
      const auto pt = point(*snap, r.doc_id);
      io::Json e;
      e["id"] = r.doc_id;
      e["title"] = doc.title;
      e["authors"] = doc.authors;
      e["venue"] = doc.venue;
      e["published"] = doc.published.str();
      e["text_score"] = r.text_score;
      e["network_rating"] = ratings ? r.network_rating : snap->ranks.rating(r.doc_id);
      e["final_score"] = r.final_score;
      e["position"] = r.position;
      e["x"] = pt.x;
      e["y"] = pt.y;
      body["results"].push_back(std::move(e));
    }
    return {200, std::move(body)};
  }

  ApiResponse paper(const std::string& id) {
    const auto snap = current();
    auto it = snap->documents.find(id);
    if (it == snap->documents.end() || !snap->graph.has_node(id)) return error(404, "unknown paper", *snap);
    const auto& d = it->second;
    auto body = to_json(d);
    body["version"] = snap->version;
    body["pagerank"] = score(snap->ranks.pagerank, id);
    body["reverse_pagerank"] = score(snap->ranks.reverse_pagerank, id);
    body["combined"] = snap->ranks.rating(id);
    const auto pt = point(*snap, id);
    body["x"] = pt.x;
    body["y"] = pt.y;
    return {200, std::move(body)};
  }

  ApiResponse related(const std::string& id, const QueryParams& q) {
    const auto snap = current();
    if (!snap->view.has(id)) return error(404, "unknown paper", *snap);
    auto limit = parse_limit(q);
    if (!limit) return error(400, "limit must be a positive integer", *snap);
    io::Json body;
    body["version"] = snap->version;
    body["id"] = id;
    body["related"] = io::Json::array();
    for (const auto& [other, w] : snap->view.related(id, *limit)) {
      io::Json e;
      e["id"] = other;
      e["weight"] = w;
      body["related"].push_back(std::move(e));
    }
    return {200, std::move(body)};
  }

  ApiResponse graph(const QueryParams& q) {
    const auto snap = current();
    auto ids_param = q.find("ids");
    if (ids_param == q.end() || ids_param->second.empty()) return error(400, "missing ids", *snap);
    int hops = 1;
    if (auto h = q.find("hops"); h != q.end()) {
      if (h->second != "0" && h->second != "1" && h->second != "2") return error(400, "hops must be 0, 1 or 2", *snap);
      hops = h->second[0] - '0';
    }
    std::set<std::string> seeds;
    std::string_view rest = ids_param->second;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto id = std::string(rest.substr(0, comma));
      if (!id.empty()) {
        if (!snap->view.has(id)) return error(404, "unknown paper '" + id + "'", *snap);
        seeds.insert(id);
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    const auto nodes = snap->view.expand(seeds, hops);
    if (nodes.size() > opt_.max_graph_nodes) return error(413, "subgraph too large", *snap);

    io::Json body;
    body["version"] = snap->version;
    body["nodes"] = io::Json::array();
    for (const auto& id : nodes) {
      const auto pt = point(*snap, id);
      io::Json n;
      n["id"] = id;
      n["x"] = pt.x;
      n["y"] = pt.y;
      n["combined"] = snap->ranks.rating(id);
      auto d = snap->documents.find(id);
      n["venue"] = d == snap->documents.end() ? std::string{} : d->second.venue;
      body["nodes"].push_back(std::move(n));
    }
    body["edges"] = io::Json::array();
    for (const auto& [k, w] : snap->graph.edges) {
      if (!nodes.contains(k.first) || !nodes.contains(k.second)) continue;
      io::Json e;
      e["s"] = k.first;
      e["t"] = k.second;
      e["w"] = w;
      body["edges"].push_back(std::move(e));
    }
    return {200, std::move(body)};
  }

  /// Logs the event; it reshapes the network at the next rebuild.
  ApiResponse feedback(std::string_view raw_body) {
    const auto snap = current();
    if (!store_) return error(503, "feedback store unavailable", *snap);
    io::Json j;
    try {
      j = io::Json::parse(raw_body);
    } catch (const io::Json::parse_error&) {
      return error(400, "body is not valid JSON", *snap);
    }
    if (!j.is_object()) return error(400, "body must be an object", *snap);
    for (auto f : {"user", "kind", "doc_id"})
      if (!j.contains(f) || !j.at(f).is_string()) return error(400, std::string("missing field ") + f, *snap);
    auto kind = parse_feedback_kind(j.at("kind").get<std::string>());
    if (!kind) return error(400, "kind must be star, click or library_add", *snap);
    FeedbackEvent e{j.at("user").get<std::string>(), *kind, j.at("doc_id").get<std::string>(), utc_now()};
    if (e.user.empty()) return error(400, "empty user", *snap);
    std::uint64_t seq = 0;
    try {
      seq = store_->append_feedback(e);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::NotFound) return error(404, "unknown paper", *snap);
      throw;
    }
    if (e.kind == FeedbackKind::Click)
      store_->update_impressions([&](ImpressionMap& m) { record_click(m, e.doc_id); });
    io::Json body;
    body["version"] = snap->version;
    body["seq"] = seq;
    return {202, std::move(body)};
  }

  ApiResponse feed(const QueryParams& q) {
    const auto snap = current();
    auto limit = parse_limit(q);
    if (!limit) return error(400, "limit must be a positive integer", *snap);
    const auto user_it = q.find("user");
    const std::string user = user_it == q.end() ? std::string{} : user_it->second;
    std::vector<FeedbackEvent> events;
    if (store_)
      for (auto& r : store_->list_feedback(0)) events.push_back(std::move(r.event));
    const auto items = etymo::feed(user, *limit, events, snap->view, snap->ranks);
    io::Json body;
    body["version"] = snap->version;
    body["user"] = user;
    body["items"] = io::Json::array();
    for (const auto& it : items) {
      io::Json e;
      e["id"] = it.doc_id;
      e["reason"] = std::string(to_string(it.reason));
      e["score"] = it.score;
      body["items"].push_back(std::move(e));
    }
    return {200, std::move(body)};
  }

 private:
  static ApiResponse error(int status, const std::string& message, const Snapshot& snap) {
    io::Json body;
    body["version"] = snap.version;
    body["error"] = message;
    return {status, std::move(body)};
  }

  std::optional<std::size_t> parse_limit(const QueryParams& q) const {
    auto it = q.find("limit");
    if (it == q.end()) return opt_.default_limit;
    const auto& v = it->second;
    if (v.empty() || v.size() > 6 || v.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
    const auto n = std::stoul(v);
    if (n == 0) return std::nullopt;
    return n;
  }

  static double score(const ScoreMap& m, std::string_view id) {
    auto it = m.find(id);
    return it == m.end() ? 0.0 : it->second;
  }

  static Point2D point(const Snapshot& snap, std::string_view id) {
    auto it = snap.layout.coords.find(id);
    return it == snap.layout.coords.end() ? Point2D{} : it->second;
  }

  mutable std::mutex swap_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  CorpusStore* store_;
  ApiOptions opt_;
};

/// cpp-httplib binding for Api.
class HttpServer {
 public:
  explicit HttpServer(Api& api) : api_(api) {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Headers", "Content-Type"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server_.Get("/api/search", [this](const auto& req, auto& res) { reply(res, [&] { return api_.search(params(req)); }); });
    server_.Get(R"(/api/papers/([^/]+)/related)", [this](const auto& req, auto& res) {
      reply(res, [&] { return api_.related(req.matches[1].str(), params(req)); });
    });
    server_.Get(R"(/api/papers/([^/]+))",
                [this](const auto& req, auto& res) { reply(res, [&] { return api_.paper(req.matches[1].str()); }); });
    server_.Get("/api/graph", [this](const auto& req, auto& res) { reply(res, [&] { return api_.graph(params(req)); }); });
    server_.Post("/api/feedback",
                 [this](const auto& req, auto& res) { reply(res, [&] { return api_.feedback(req.body); }); });
    server_.Get("/api/feed", [this](const auto& req, auto& res) { reply(res, [&] { return api_.feed(params(req)); }); });
  }

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port) {
    return port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
  }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static QueryParams params(const httplib::Request& req) {
    QueryParams out;
    for (const auto& [k, v] : req.params) out.emplace(k, v);
    return out;
  }

  template <typename Fn>
  static void reply(httplib::Response& res, Fn&& fn) {
    ApiResponse r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.status = 500;
      r.body = io::Json::object();
      r.body["error"] = e.what();
    }
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
  }

  Api& api_;
  httplib::Server server_;
};

/// Polls manifest.json and republishes the snapshot when its version moves.
class SnapshotReloader {
 public:
  SnapshotReloader(Api& api, std::filesystem::path dir, std::chrono::milliseconds interval)
      : api_(api), dir_(std::move(dir)), interval_(interval), thread_([this](std::stop_token st) { run(st); }) {}

  bool reload_now() {
    const auto m = Manifest::load(dir_);
    if (m.version() == api_.current()->version) return false;
    api_.publish(load_snapshot(dir_));
    return true;
  }

 private:
  void run(std::stop_token st) {
    while (!st.stop_requested()) {
      for (auto waited = std::chrono::milliseconds(0); waited < interval_ && !st.stop_requested();
           waited += std::chrono::milliseconds(50))
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      if (st.stop_requested()) break;
      try {
        reload_now();
      } catch (const std::exception&) {
        // A build may be mid-write; retry on the next tick.
      }
    }
  }

  Api& api_;
  std::filesystem::path dir_;
  std::chrono::milliseconds interval_;
  std::jthread thread_;
};

}  // namespace etymo

// SPDX-License-Identifier: Apache-2.0

// etymo: ingest a corpus, build the artifact pipeline, query it from the
// terminal, or serve it over HTTP.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error or missing/stale
// prerequisite.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "etymo/corpus.hpp"
#include "etymo/pipeline.hpp"
#include "etymo/search_feed.hpp"
#include "etymo/server.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

struct Globals {
  std::string data_dir = env_or("ETYMO_DATA", "data");
  std::string config_file;
  std::vector<std::string> settings;
  bool json = false;
};

etymo::PipelineConfig load_config(const Globals& g) {
  etymo::PipelineConfig cfg;
  std::filesystem::path file = g.config_file;
  if (file.empty() && std::filesystem::exists(std::filesystem::path(g.data_dir) / "etymo.toml"))
    file = std::filesystem::path(g.data_dir) / "etymo.toml";
  if (!file.empty()) etymo::apply_config_file(cfg, file);
  for (const auto& s : g.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw etymo::Error(etymo::ErrorCode::InvalidArgument, "--set expects key=value: " + s);
    etymo::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::string year_of(const etymo::Document& d) { return std::to_string(d.published.year); }

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

int cmd_search(const Globals& g, const std::string& query, std::size_t limit, bool no_ratings) {
  const auto cfg = load_config(g);
  const auto snap = etymo::load_snapshot(g.data_dir);
  const auto results = etymo::search(query, snap->lexicon, snap->index, no_ratings ? nullptr : &snap->ranks,
                                     {limit, !no_ratings, cfg.lambda});
  if (g.json) {
    auto arr = etymo::io::Json::array();
    for (const auto& r : results) {
      const auto& d = snap->documents.at(r.doc_id);
      etymo::io::Json e;
      e["position"] = r.position;
      e["id"] = r.doc_id;
      e["authors"] = d.authors;
      e["year"] = d.published.year;
      e["title"] = d.title;
      e["text_score"] = r.text_score;
      e["network_rating"] = r.network_rating;
      e["final_score"] = r.final_score;
      arr.push_back(std::move(e));
    }
    std::cout << arr.dump(1) << "\n";
    return kOk;
  }
  if (results.empty()) {
    std::cout << "no results\n";
    return kOk;
  }
  std::cout << "Authors | Year | Title\n";
  for (const auto& r : results) {
    const auto& d = snap->documents.at(r.doc_id);
    std::cout << join(d.authors, ", ") << " | " << year_of(d) << " | " << d.title << "\n";
  }
  return kOk;
}

std::atomic<etymo::HttpServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(const Globals& g, const std::string& addr, int reload_seconds) {
  const auto cfg = load_config(g);
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "error: --addr must be host:port\n";
    return kUsage;
  }
  const auto host = addr.substr(0, colon);
  const int port = std::stoi(addr.substr(colon + 1));
  etymo::CorpusStore store(g.data_dir);
  etymo::Api api(etymo::load_snapshot(g.data_dir), &store, {cfg.graph.top_R, cfg.lambda, 500, 10});
  etymo::HttpServer server(api);
  const int bound = server.bind(host, port);
  if (bound < 0) {
    std::cerr << "error: cannot bind " << addr << "\n";
    return kRuntime;
  }
  std::optional<etymo::SnapshotReloader> reloader;
  if (reload_seconds > 0) reloader.emplace(api, g.data_dir, std::chrono::seconds(reload_seconds));
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serving " << g.data_dir << " (version " << api.current()->version << ") on " << host << ":" << bound
            << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"etymo: similarity-network document discovery engine"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--data", g.data_dir, "Data directory (env ETYMO_DATA)");
  app.add_option("--config", g.config_file, "Config file (default <data>/etymo.toml)");
  app.add_option("--set", g.settings, "Override a config key: key=value");
  app.add_flag("--json", g.json, "JSON output");

  auto* ingest = app.add_subcommand("ingest", "Add documents from a JSONL file");
  std::string ingest_file;
  ingest->add_option("file", ingest_file)->required();

  auto* build = app.add_subcommand("build", "Run pipeline stages");
  std::string stage = "all";
  bool force = false;
  build->add_option("--stage", stage)->check(CLI::IsMember({"lexicon", "vectors", "graph", "rank", "layout", "all"}));
  build->add_flag("--force", force, "Run even if inputs are stale");

  auto* search = app.add_subcommand("search", "Query the index");
  std::string query;
  std::size_t limit = 5;
  bool no_ratings = false;
  search->add_option("query", query)->required();
  search->add_option("--limit", limit)->check(CLI::PositiveNumber);
  search->add_flag("--no-network-rating", no_ratings, "Rank by text score only");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  std::string addr = env_or("ETYMO_ADDR", "127.0.0.1:8080");
  int reload_seconds = 5;
  serve->add_option("--addr", addr, "host:port (env ETYMO_ADDR)");
  serve->add_option("--reload-interval", reload_seconds, "Seconds between snapshot checks (0 disables)");

  auto* insert = app.add_subcommand("insert", "Add documents to the built network incrementally");
  std::string insert_file;
  insert->add_option("file", insert_file)->required();

  auto* fb = app.add_subcommand("feedback", "Append a feedback event");
  std::string fb_user, fb_kind, fb_doc, fb_time;
  fb->add_option("user", fb_user)->required();
  fb->add_option("kind", fb_kind)->required()->check(CLI::IsMember({"star", "click", "library_add"}));
  fb->add_option("doc_id", fb_doc)->required();
  fb->add_option("--timestamp", fb_time, "ISO-8601 instant (default now)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) {
      etymo::DirectoryLock lock(g.data_dir);
      etymo::CorpusStore store(g.data_dir);
      const auto n = store.ingest_documents(ingest_file);
      if (g.json) std::cout << etymo::io::Json{{"ingested", n}}.dump() << "\n";
      else std::cout << "ingested " << n << " document(s)\n";
    } else if (*build) {
      etymo::DirectoryLock lock(g.data_dir);
      etymo::Pipeline pipeline(g.data_dir, load_config(g));
      if (stage == "all") {
        pipeline.build_all(force);
      } else {
        const etymo::Stage only[] = {*etymo::parse_stage(stage)};
        pipeline.build(only, force);
      }
      const auto m = etymo::Manifest::load(g.data_dir);
      if (g.json) std::cout << etymo::io::Json{{"version", m.version()}, {"stage", stage}}.dump() << "\n";
      else std::cout << "built " << stage << " (version " << m.version() << ")\n";
    } else if (*search) {
      return cmd_search(g, query, limit, no_ratings);
    } else if (*serve) {
      return cmd_serve(g, addr, reload_seconds);
    } else if (*insert) {
      etymo::DirectoryLock lock(g.data_dir);
      etymo::Pipeline pipeline(g.data_dir, load_config(g));
      const auto report = pipeline.insert(insert_file);
      if (g.json) {
        etymo::io::Json j;
        j["inserted"] = report.inserted;
        j["new_edges"] = report.new_edges;
        std::cout << j.dump() << "\n";
      } else {
        for (const auto& id : report.inserted)
          std::cout << "inserted " << id << " (" << report.new_edges.at(id) << " edge(s))\n";
      }
    } else if (*fb) {
      etymo::DirectoryLock lock(g.data_dir);
      etymo::CorpusStore store(g.data_dir);
      etymo::FeedbackEvent e{fb_user, *etymo::parse_feedback_kind(fb_kind), fb_doc,
                             fb_time.empty() ? etymo::utc_now() : fb_time};
      const auto seq = store.append_feedback(e);
      if (g.json) std::cout << etymo::io::Json{{"seq", seq}}.dump() << "\n";
      else std::cout << "seq " << seq << "\n";
    }
  } catch (const etymo::PrerequisiteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const etymo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == etymo::ErrorCode::InvalidArgument ? kUsage : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}

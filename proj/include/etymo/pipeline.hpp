// SPDX-License-Identifier: Apache-2.0

// Build pipeline over a data directory:
//
//   documents.jsonl -> lexicon -> vectors (+ index) -> graph -> ranks
//                                         \-> layout
//
// Every artifact is written deterministically from the config and the
// store. manifest.json records, per artifact, its content hash and the
// hashes of the inputs it was made from, so a partial build can refuse to
// run on missing or stale inputs.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "etymo/corpus.hpp"
#include "etymo/error.hpp"
#include "etymo/graph.hpp"
#include "etymo/io.hpp"
#include "etymo/layout.hpp"
#include "etymo/rank.hpp"
#include "etymo/search_feed.hpp"
#include "etymo/simnet.hpp"
#include "etymo/vectorize.hpp"

namespace etymo {

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
  GraphConfig graph;
  LayoutConfig layout;
  RankConfig rank;
  std::size_t embedding_dim = 256;
  std::uint64_t embedding_seed = 42;
  /// Optional embeddings.jsonl replacing the random-projection baseline.
  std::string embeddings_file;
  double lambda = 1.0;

  void validate() const {
    graph.validate();
    layout.validate();
    rank.validate();
    if (embedding_dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding_dim must be positive");
    if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw Error(ErrorCode::InvalidArgument, key + ": not a number: '" + v + "'");
  return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw Error(ErrorCode::InvalidArgument, key + ": not a nonnegative integer: '" + v + "'");
  return std::stoull(v);
}

}  // namespace detail

/// Sets one flat configuration key. Unknown keys are an error.
inline void apply_setting(PipelineConfig& c, const std::string& key, std::string value) {
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
  using detail::to_double;
  using detail::to_uint;
  if (key == "alpha") c.graph.alpha = to_double(key, value);
  else if (key == "mu") c.graph.mu = to_double(key, value);
  else if (key == "k") c.graph.k = to_uint(key, value);
  else if (key == "gamma_star") c.graph.gamma_star = to_double(key, value);
  else if (key == "delta_lib") c.graph.delta_lib = to_double(key, value);
  else if (key == "ctr_threshold") c.graph.ctr_threshold = to_double(key, value);
  else if (key == "top_R") c.graph.top_R = to_uint(key, value);
  else if (key == "demote_factor") c.graph.demote_factor = to_double(key, value);
  else if (key == "prune_floor") c.graph.prune_floor = to_double(key, value);
  else if (key == "min_impressions") c.graph.min_impressions = to_uint(key, value);
  else if (key == "perplexity") c.layout.perplexity = to_double(key, value);
  else if (key == "learning_rate") c.layout.learning_rate = to_double(key, value);
  else if (key == "layout_iterations") c.layout.iterations = static_cast<int>(to_uint(key, value));
  else if (key == "early_exaggeration") c.layout.early_exaggeration = to_double(key, value);
  else if (key == "exaggeration_iterations") c.layout.exaggeration_iterations = static_cast<int>(to_uint(key, value));
  else if (key == "initial_momentum") c.layout.initial_momentum = to_double(key, value);
  else if (key == "final_momentum") c.layout.final_momentum = to_double(key, value);
  else if (key == "momentum_switch") c.layout.momentum_switch = static_cast<int>(to_uint(key, value));
  else if (key == "layout_seed") c.layout.seed = to_uint(key, value);
  else if (key == "damping") c.rank.damping = to_double(key, value);
  else if (key == "rank_iterations") c.rank.iterations = static_cast<int>(to_uint(key, value));
  else if (key == "rank_tolerance") c.rank.tolerance = to_double(key, value);
  else if (key == "beta") c.rank.beta = to_double(key, value);
  else if (key == "embedding_dim") c.embedding_dim = to_uint(key, value);
  else if (key == "embedding_seed") c.embedding_seed = to_uint(key, value);
  else if (key == "embeddings_file") c.embeddings_file = value;
  else if (key == "lambda") c.lambda = to_double(key, value);
  else if (key == "seed") {
    c.embedding_seed = to_uint(key, value);
    c.layout.seed = c.embedding_seed;
  } else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
}

/// Reads a flat `key = value` file; `#` starts a comment.
inline void apply_config_file(PipelineConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::SchemaError, path.string() + ": expected key = value", line_no);
    apply_setting(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
}

inline io::Json to_json(const PipelineConfig& c) {
  io::Json j;
  j["graph"] = to_json(c.graph);
  j["layout"] = to_json(c.layout);
  io::Json r;
  r["damping"] = c.rank.damping;
  r["iterations"] = c.rank.iterations;
  r["tolerance"] = c.rank.tolerance;
  r["beta"] = c.rank.beta;
  j["rank"] = r;
  j["embedding_dim"] = c.embedding_dim;
  j["embedding_seed"] = c.embedding_seed;
  j["embeddings_file"] = c.embeddings_file;
  j["lambda"] = c.lambda;
  return j;
}

// ---------------------------------------------------------------------------
// Artifacts and manifest

namespace artifact {
inline constexpr std::string_view kDocuments = "documents.jsonl";
inline constexpr std::string_view kLexicon = "lexicon.json";
inline constexpr std::string_view kTfidf = "vectors_tfidf.jsonl";
inline constexpr std::string_view kDense = "vectors_dense.jsonl";
inline constexpr std::string_view kIndex = "index.json";
inline constexpr std::string_view kGraph = "graph.json";
inline constexpr std::string_view kRanks = "ranks.json";
inline constexpr std::string_view kLayout = "layout.json";
inline constexpr std::string_view kManifest = "manifest.json";
}  // namespace artifact

enum class Stage { Lexicon, Vectors, Graph, Rank, Layout };

inline constexpr Stage kAllStages[] = {Stage::Lexicon, Stage::Vectors, Stage::Graph, Stage::Rank, Stage::Layout};

constexpr std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Lexicon: return "lexicon";
    case Stage::Vectors: return "vectors";
    case Stage::Graph: return "graph";
    case Stage::Rank: return "rank";
    case Stage::Layout: return "layout";
  }
  return "";
}

inline std::optional<Stage> parse_stage(std::string_view s) {
  for (auto st : kAllStages)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

/// Files a stage reads (besides the store) and files it writes.
inline std::vector<std::string_view> stage_inputs(Stage s) {
  switch (s) {
    case Stage::Lexicon: return {artifact::kDocuments};
    case Stage::Vectors: return {artifact::kDocuments, artifact::kLexicon};
    case Stage::Graph: return {artifact::kDocuments, artifact::kTfidf, artifact::kDense};
    case Stage::Rank: return {artifact::kGraph};
    case Stage::Layout: return {artifact::kDense};
  }
  return {};
}

inline std::vector<std::string_view> stage_outputs(Stage s) {
  switch (s) {
    case Stage::Lexicon: return {artifact::kLexicon};
    case Stage::Vectors: return {artifact::kTfidf, artifact::kDense, artifact::kIndex};
    case Stage::Graph: return {artifact::kGraph};
    case Stage::Rank: return {artifact::kRanks};
    case Stage::Layout: return {artifact::kLayout};
  }
  return {};
}

/// Raised when a stage cannot run because an input is absent or stale.
class PrerequisiteError : public Error {
 public:
  PrerequisiteError(Stage stage, const std::string& what)
      : Error(ErrorCode::NotFound, "stage '" + std::string(to_string(stage)) + "': " + what), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

inline std::string utc_now() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto days = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{now - days};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

/// manifest.json: {version, built_at, stages: {name: timestamp}, config,
/// artifacts: {file: {hash, inputs: {file: hash}}}}.
class Manifest {
 public:
  static Manifest load(const std::filesystem::path& dir) {
    Manifest m;
    const auto path = dir / artifact::kManifest;
    if (std::filesystem::exists(path)) m.json_ = io::Json::parse(io::read_file(path));
    return m;
  }

  std::uint64_t version() const { return json_.value("version", std::uint64_t{0}); }
  void set_version(std::uint64_t v) { json_["version"] = v; }

  void record_stage(Stage s, const std::string& when) { json_["stages"][std::string(to_string(s))] = when; }
  void set_config(const io::Json& c) { json_["config"] = c; }
  void set_built_at(const std::string& when) { json_["built_at"] = when; }
  std::string built_at() const { return json_.value("built_at", std::string{}); }

  void record_artifact(std::string_view file, const std::string& hash, const std::map<std::string, std::string>& inputs) {
    io::Json e;
    e["hash"] = hash;
    e["inputs"] = io::Json::object();
    for (const auto& [f, h] : inputs) e["inputs"][f] = h;
    json_["artifacts"][std::string(file)] = e;
  }

  std::optional<std::string> hash_of(std::string_view file) const {
    if (!json_.contains("artifacts")) return std::nullopt;
    const auto& a = json_.at("artifacts");
    auto it = a.find(std::string(file));
    if (it == a.end()) return std::nullopt;
    return it->at("hash").get<std::string>();
  }

  /// Fresh: recorded, unchanged on disk, and made from inputs that are
  /// themselves unchanged.
  bool is_fresh(const std::filesystem::path& dir, std::string_view file) const {
    if (!json_.contains("artifacts")) return false;
    const auto& a = json_.at("artifacts");
    auto it = a.find(std::string(file));
    if (it == a.end()) return false;
    if (io::file_hash(dir / file) != it->at("hash").get<std::string>()) return false;
    for (const auto& [input, h] : it->at("inputs").items()) {
      if (!std::filesystem::exists(dir / input)) return false;
      if (io::file_hash(dir / input) != h.get<std::string>()) return false;
    }
    return true;
  }

  void save(const std::filesystem::path& dir) const {
    io::write_file_atomic(dir / artifact::kManifest, io::dump_pretty(json_));
  }

  const io::Json& json() const noexcept { return json_; }

 private:
  io::Json json_ = io::Json::object();
};

/// Exclusive advisory lock on `<dir>/.lock` for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto path = (dir / ".lock").string();
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw Error(ErrorCode::Io, "cannot open lock file " + path);
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::Io, "data directory is locked by another process: " + dir.string());
    }
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;
  ~DirectoryLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  int fd_ = -1;
};

// ---------------------------------------------------------------------------
// Pipeline

inline std::map<std::string, Date, std::less<>> publication_dates(const std::vector<Document>& docs) {
  std::map<std::string, Date, std::less<>> dates;
  for (const auto& d : docs) dates.emplace(d.id, d.published);
  return dates;
}

inline std::vector<FeedbackEvent> ordered_events(const CorpusStore& store) {
  std::vector<FeedbackEvent> out;
  for (auto& r : chronological(store.list_feedback(0))) out.push_back(std::move(r.event));
  return out;
}

class Pipeline {
 public:
  Pipeline(std::filesystem::path dir, PipelineConfig cfg) : dir_(std::move(dir)), cfg_(std::move(cfg)), store_(dir_) {
    cfg_.validate();
  }

  CorpusStore& store() noexcept { return store_; }
  const PipelineConfig& config() const noexcept { return cfg_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  /// Runs `stages` in dependency order. The version is bumped once per call.
  void build(std::span<const Stage> stages, bool force = false) {
    auto manifest = Manifest::load(dir_);
    std::set<Stage> requested(stages.begin(), stages.end());
    for (auto stage : kAllStages) {
      if (!requested.contains(stage)) continue;
      check_inputs(manifest, stage, force);
      run_stage(stage);
      record_outputs(manifest, stage);
    }
    manifest.set_version(manifest.version() + 1);
    manifest.set_config(to_json(cfg_));
    manifest.set_built_at(utc_now());
    manifest.save(dir_);
  }

  void build_all(bool force = false) { build(kAllStages, force); }

  struct InsertReport {
    std::vector<std::string> inserted;
    std::map<std::string, std::size_t> new_edges;
  };

  /// Adds new documents to the existing network against the current ranks,
  /// without recomputing the lexicon or the layout.
  InsertReport insert(const std::filesystem::path& file) {
    auto manifest = Manifest::load(dir_);
    for (auto f : {artifact::kLexicon, artifact::kTfidf, artifact::kDense, artifact::kIndex, artifact::kGraph,
                   artifact::kRanks, artifact::kLayout})
      if (!std::filesystem::exists(dir_ / f))
        throw PrerequisiteError(Stage::Graph, "insert needs " + std::string(f) + "; run build first");

    std::vector<Document> incoming;
    io::for_each_jsonl(file, [&](const io::Json& j, std::size_t line) { incoming.push_back(document_from_json(j, line)); });

    const auto lex = lexicon_from_json(io::Json::parse(io::read_file(dir_ / artifact::kLexicon)));
    auto vecs = read_vectors(dir_ / artifact::kTfidf, dir_ / artifact::kDense);
    auto graph = undirected_projection(graph_from_json(io::Json::parse(io::read_file(dir_ / artifact::kGraph))));
    const auto ranks = ranks_from_json(io::Json::parse(io::read_file(dir_ / artifact::kRanks)));
    auto layout = layout_from_json(io::Json::parse(io::read_file(dir_ / artifact::kLayout)));
    auto index = index_from_json(io::Json::parse(io::read_file(dir_ / artifact::kIndex)));
    const auto embedder = make_embedder();

    std::set<std::string> batch;
    for (const auto& d : incoming) {
      if (graph.has_node(d.id) || !batch.insert(d.id).second) throw Error(ErrorCode::DuplicateNode, d.id);
      auto sparse = tfidf_vector(d, lex);
      vecs.dense[d.id] = embedder->embed(d, sparse);
      vecs.tfidf[d.id] = std::move(sparse);
    }
    {
      std::string chunk;
      for (const auto& d : incoming) chunk += io::dump(to_json(d)) + "\n";
      std::istringstream in(chunk);
      store_.ingest_documents(in);
    }

    InsertReport report;
    for (const auto& d : incoming) {
      const auto before = graph.edges.size();
      graph = insert_paper(std::move(graph), ranks, d.id, vecs, cfg_.graph);
      index.add(d.id, vecs.tfidf.at(d.id));
      report.inserted.push_back(d.id);
      report.new_edges[d.id] = graph.edges.size() - before;
    }
    const auto oriented = orient_temporal(graph, publication_dates(store_.documents()));
    for (const auto& d : incoming) layout.coords[d.id] = interim_position(layout, oriented, d.id);

    io::write_file_atomic(dir_ / artifact::kTfidf, tfidf_jsonl(vecs));
    io::write_file_atomic(dir_ / artifact::kDense, dense_jsonl(vecs));
    io::write_file_atomic(dir_ / artifact::kIndex, io::dump(to_json(index)) + "\n");
    io::write_file_atomic(dir_ / artifact::kGraph, io::dump_pretty(graph_to_json(oriented, to_json(cfg_.graph))));
    write_ranks(oriented);
    io::write_file_atomic(dir_ / artifact::kLayout, io::dump_pretty(to_json(layout)));

    for (auto stage : {Stage::Vectors, Stage::Graph, Stage::Rank, Stage::Layout}) record_outputs(manifest, stage);
    manifest.set_version(manifest.version() + 1);
    manifest.set_built_at(utc_now());
    manifest.save(dir_);
    return report;
  }

 private:
  std::filesystem::path path(std::string_view f) const { return dir_ / f; }

  void check_inputs(const Manifest& m, Stage stage, bool force) const {
    for (auto f : stage_inputs(stage)) {
      if (!std::filesystem::exists(path(f)))
        throw PrerequisiteError(stage, "missing input " + std::string(f));
      if (f == artifact::kDocuments || force) continue;
      if (!m.is_fresh(dir_, f))
        throw PrerequisiteError(stage, "stale input " + std::string(f) + " (rebuild upstream stages or pass --force)");
    }
  }

  void record_outputs(Manifest& m, Stage stage) const {
    std::map<std::string, std::string> inputs;
    for (auto f : stage_inputs(stage)) inputs[std::string(f)] = io::file_hash(path(f));
    for (auto f : stage_outputs(stage)) m.record_artifact(f, io::file_hash(path(f)), inputs);
    m.record_stage(stage, utc_now());
  }

  std::unique_ptr<EmbeddingProvider> make_embedder() const {
    if (!cfg_.embeddings_file.empty()) {
      std::filesystem::path p = cfg_.embeddings_file;
      if (p.is_relative()) p = dir_ / p;
      return std::make_unique<FileEmbeddings>(p);
    }
    return std::make_unique<RandomProjectionEmbedder>(cfg_.embedding_dim, cfg_.embedding_seed);
  }

  void write_ranks(const SimilarityGraph& g) const {
    io::write_file_atomic(path(artifact::kRanks), io::dump_pretty(to_json(compute_ranks(g, cfg_.rank))));
  }

  void run_stage(Stage stage) {
    switch (stage) {
      case Stage::Lexicon: {
        const auto docs = store_.documents();
        io::write_file_atomic(path(artifact::kLexicon), io::dump_pretty(to_json(build_lexicon(docs))));
        break;
      }
      case Stage::Vectors: {
        const auto docs = store_.documents();
        const auto lex = lexicon_from_json(io::Json::parse(io::read_file(path(artifact::kLexicon))));
        const auto vecs = vectorize_all(docs, lex, *make_embedder());
        io::write_file_atomic(path(artifact::kTfidf), tfidf_jsonl(vecs));
        io::write_file_atomic(path(artifact::kDense), dense_jsonl(vecs));
        io::write_file_atomic(path(artifact::kIndex), io::dump(to_json(InvertedIndex(vecs.tfidf))) + "\n");
        break;
      }
      case Stage::Graph: {
        const auto docs = store_.documents();
        const auto vecs = read_vectors(path(artifact::kTfidf), path(artifact::kDense));
        const auto dates = publication_dates(docs);
        auto graph = build_graph(vecs, cfg_.graph);
        const auto events = ordered_events(store_);
        const auto impressions = store_.impressions();
        if (!events.empty() || !impressions.empty()) {
          // Click demotion needs a ranking; take it from the unadapted network.
          const auto prelim = compute_ranks(orient_temporal(graph, dates), cfg_.rank);
          graph = apply_feedback(std::move(graph), events, impressions, prelim, vecs, cfg_.graph);
        }
        const auto oriented = orient_temporal(graph, dates);
        io::write_file_atomic(path(artifact::kGraph), io::dump_pretty(graph_to_json(oriented, to_json(cfg_.graph))));
        break;
      }
      case Stage::Rank: {
        write_ranks(graph_from_json(io::Json::parse(io::read_file(path(artifact::kGraph)))));
        break;
      }
      case Stage::Layout: {
        const auto vecs = read_vectors(path(artifact::kTfidf), path(artifact::kDense));
        std::vector<std::string> ids;
        std::vector<DenseVector> points;
        for (const auto& [id, v] : vecs.dense) {
          ids.push_back(id);
          points.push_back(v);
        }
        io::write_file_atomic(path(artifact::kLayout), io::dump_pretty(to_json(tsne(ids, points, cfg_.layout))));
        break;
      }
    }
  }

  std::filesystem::path dir_;
  PipelineConfig cfg_;
  CorpusStore store_;
};

// ---------------------------------------------------------------------------
// Serving snapshot

/// Everything one build produced, loaded together and never mutated.
struct Snapshot {
  std::uint64_t version = 0;
  std::string built_at;
  std::map<std::string, Document, std::less<>> documents;
  TermLexicon lexicon;
  InvertedIndex index;
  SimilarityGraph graph;
  GraphView view;
  RankScores ranks;
  Layout layout;
};

inline std::shared_ptr<const Snapshot> load_snapshot(const std::filesystem::path& dir) {
  auto need = [&](std::string_view f) {
    const auto p = dir / f;
    if (!std::filesystem::exists(p)) throw Error(ErrorCode::NotFound, "missing artifact " + p.string() + "; run build");
    return io::Json::parse(io::read_file(p));
  };
  auto s = std::make_shared<Snapshot>();
  const auto manifest = Manifest::load(dir);
  s->version = manifest.version();
  s->built_at = manifest.built_at();
  CorpusStore store(dir);
  for (auto& d : store.documents()) s->documents.emplace(d.id, std::move(d));
  s->lexicon = lexicon_from_json(need(artifact::kLexicon));
  s->index = index_from_json(need(artifact::kIndex));
  s->graph = graph_from_json(need(artifact::kGraph));
  s->view = GraphView(s->graph);
  s->ranks = ranks_from_json(need(artifact::kRanks));
  s->layout = layout_from_json(need(artifact::kLayout));
  return s;
}

}  // namespace etymo

// SPDX-License-Identifier: Apache-2.0

// Tokenization, the global term lexicon, TF-IDF sparse vectors, dense
// document embeddings and cosine similarity.
//
// Weighting: sublinear tf (1 + ln tf), smoothed idf ln((1 + N) / (1 + df)) + 1,
// L2 normalization. The baseline dense embedding is a seeded random sign
// projection of the TF-IDF vector; trained vectors can be supplied through
// FileEmbeddings instead.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <ranges>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "etymo/corpus.hpp"
#include "etymo/error.hpp"
#include "etymo/io.hpp"

namespace etymo {

// ---------------------------------------------------------------------------
// Tokenizer

inline const std::set<std::string, std::less<>>& default_stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "a",    "an",   "and",   "are",  "as",    "at",   "be",   "by",   "for",  "from",
      "has",  "have", "in",    "is",   "it",    "its",  "of",   "on",   "or",   "that",
      "the",  "this", "to",    "was",  "were",  "which", "will", "with", "we",  "using"};
  return words;
}

class Tokenizer {
 public:
  Tokenizer() : stopwords_(default_stopwords()) {}
  explicit Tokenizer(std::set<std::string, std::less<>> stopwords)
      : stopwords_(std::move(stopwords)) {}

  /// Lowercases and splits on anything that is not a letter, a digit or a
  /// hyphen between two word characters. Bytes >= 0x80 count as letters so
  /// UTF-8 words stay whole. Tokens shorter than two bytes and stopwords are
  /// dropped.
  std::vector<std::string> operator()(std::string_view text) const {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
      if (cur.size() >= 2 && !stopwords_.contains(cur)) out.push_back(cur);
      cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
      const auto c = static_cast<unsigned char>(text[i]);
      if (is_word_byte(c)) {
        cur.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
      } else if (c == '-' && !cur.empty() && i + 1 < text.size() &&
                 is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
        cur.push_back('-');
      } else {
        flush();
      }
    }
    flush();
    return out;
  }

 private:
  static constexpr bool is_word_byte(unsigned char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
  }

  std::set<std::string, std::less<>> stopwords_;
};

inline std::vector<std::string> tokenize(std::string_view text) {
  static const Tokenizer tokenizer;
  return tokenizer(text);
}

/// Text that feeds the vectors: title, abstract and body, unweighted.
inline std::string document_text(const Document& d) {
  std::string s;
  s.reserve(d.title.size() + d.abstract.size() + d.body.size() + 2);
  s += d.title;
  s += ' ';
  s += d.abstract;
  s += ' ';
  s += d.body;
  return s;
}

// ---------------------------------------------------------------------------
// Lexicon

struct TermInfo {
  std::uint32_t term_id = 0;
  std::uint64_t df = 0;
  double idf = 0.0;
};

inline double smoothed_idf(std::uint64_t corpus_size, std::uint64_t df) {
  return std::log((1.0 + static_cast<double>(corpus_size)) / (1.0 + static_cast<double>(df))) + 1.0;
}

class TermLexicon {
 public:
  TermLexicon() = default;

  /// `df` maps each term to its document frequency; ids follow term order.
  TermLexicon(const std::map<std::string, std::uint64_t, std::less<>>& df, std::uint64_t corpus_size)
      : corpus_size_(corpus_size) {
    if (corpus_size == 0) throw Error(ErrorCode::EmptyCorpus, "lexicon over zero documents");
    by_id_.reserve(df.size());
    for (const auto& [term, count] : df) {
      if (count == 0 || count > corpus_size)
        throw Error(ErrorCode::InvalidArgument, "df out of range for '" + term + "'");
      const double idf = smoothed_idf(corpus_size, count);
      terms_.emplace(term, TermInfo{static_cast<std::uint32_t>(by_id_.size()), count, idf});
      by_id_.push_back(term);
      idf_by_id_.push_back(idf);
    }
  }

  const TermInfo* find(std::string_view term) const {
    auto it = terms_.find(term);
    return it == terms_.end() ? nullptr : &it->second;
  }
  const std::string& term(std::uint32_t id) const { return by_id_.at(id); }
  double idf(std::uint32_t id) const { return idf_by_id_.at(id); }
  std::size_t size() const noexcept { return by_id_.size(); }
  std::uint64_t corpus_size() const noexcept { return corpus_size_; }
  const std::map<std::string, TermInfo, std::less<>>& terms() const noexcept { return terms_; }

 private:
  std::uint64_t corpus_size_ = 0;
  std::map<std::string, TermInfo, std::less<>> terms_;
  std::vector<std::string> by_id_;
  std::vector<double> idf_by_id_;
};

template <std::ranges::input_range R>
  requires std::same_as<std::ranges::range_value_t<R>, Document>
TermLexicon build_lexicon(const R& documents, const Tokenizer& tokenizer = Tokenizer{}) {
  std::map<std::string, std::uint64_t, std::less<>> df;
  std::uint64_t n = 0;
  for (const Document& d : documents) {
    ++n;
    auto tokens = tokenizer(document_text(d));
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) ++df[t];
  }
  if (n == 0) throw Error(ErrorCode::EmptyCorpus, "no documents");
  return TermLexicon(df, n);
}

inline io::Json to_json(const TermLexicon& lex) {
  io::Json j;
  j["corpus_size"] = lex.corpus_size();
  auto terms = io::Json::array();
  for (const auto& [term, info] : lex.terms()) {
    io::Json t;
    t["term"] = term;
    t["term_id"] = info.term_id;
    t["df"] = info.df;
    t["idf"] = info.idf;
    terms.push_back(std::move(t));
  }
  j["terms"] = std::move(terms);
  return j;
}

inline TermLexicon lexicon_from_json(const io::Json& j) {
  std::map<std::string, std::uint64_t, std::less<>> df;
  for (const auto& t : j.at("terms")) df[t.at("term").get<std::string>()] = t.at("df").get<std::uint64_t>();
  return TermLexicon(df, j.at("corpus_size").get<std::uint64_t>());
}

// ---------------------------------------------------------------------------
// Vectors

/// Sparse vector over term ids; entries sorted by id.
struct SparseVector {
  std::vector<std::pair<std::uint32_t, double>> entries;
  double norm = 0.0;

  bool empty() const noexcept { return entries.empty(); }
  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

using DenseVector = std::vector<double>;

inline double dot(const SparseVector& a, const SparseVector& b) {
  double s = 0.0;
  auto i = a.entries.begin();
  auto j = b.entries.begin();
  while (i != a.entries.end() && j != b.entries.end()) {
    if (i->first < j->first) {
      ++i;
    } else if (j->first < i->first) {
      ++j;
    } else {
      s += i->second * j->second;
      ++i;
      ++j;
    }
  }
  return s;
}

inline double euclidean_norm(const SparseVector& v) {
  double s = 0.0;
  for (const auto& [_, w] : v.entries) s += w * w;
  return std::sqrt(s);
}

inline double euclidean_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// TF-IDF vector from an already tokenized text. Terms missing from the
/// lexicon are skipped.
inline SparseVector tfidf_from_tokens(std::span<const std::string> tokens, const TermLexicon& lex) {
  std::map<std::uint32_t, std::uint64_t> tf;
  for (const auto& t : tokens)
    if (const auto* info = lex.find(t)) ++tf[info->term_id];
  if (tf.empty()) throw Error(ErrorCode::EmptyVector, "no in-lexicon terms");
  SparseVector v;
  v.entries.reserve(tf.size());
  for (const auto& [id, count] : tf) {
    v.entries.emplace_back(id, (1.0 + std::log(static_cast<double>(count))) * lex.idf(id));
  }
  const double norm = euclidean_norm(v);
  for (auto& [_, w] : v.entries) w /= norm;
  v.norm = euclidean_norm(v);
  return v;
}

inline SparseVector tfidf_vector(const Document& doc, const TermLexicon& lex,
                                 const Tokenizer& tokenizer = Tokenizer{}) {
  auto tokens = tokenizer(document_text(doc));
  try {
    return tfidf_from_tokens(tokens, lex);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyVector)
      throw Error(ErrorCode::EmptyVector, "document '" + doc.id + "' has no in-lexicon terms");
    throw;
  }
}

/// Column `term_id` of the n x |lexicon| sign matrix: entries +-1/sqrt(n),
/// drawn from a stream seeded by (seed, term_id).
inline std::vector<double> projection_column(std::size_t n, std::uint64_t seed, std::uint32_t term_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffU),
                    static_cast<std::uint32_t>(seed >> 32), term_id};
  std::mt19937_64 gen(seq);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> col(n);
  for (auto& x : col) x = (gen() >> 63) ? scale : -scale;
  return col;
}

inline DenseVector random_projection(const SparseVector& v, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be positive");
  if (v.empty()) throw Error(ErrorCode::EmptyVector, "cannot project an empty vector");
  DenseVector out(n, 0.0);
  for (const auto& [id, w] : v.entries) {
    const auto col = projection_column(n, seed, id);
    for (std::size_t i = 0; i < n; ++i) out[i] += col[i] * w;
  }
  const double norm = euclidean_norm(out);
  if (!(norm > 0.0)) throw Error(ErrorCode::EmptyVector, "projection collapsed to zero");
  for (auto& x : out) x /= norm;
  return out;
}

/// Source of dense document vectors.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual DenseVector embed(const Document& doc, const SparseVector& tfidf) const = 0;
};

class RandomProjectionEmbedder final : public EmbeddingProvider {
 public:
  RandomProjectionEmbedder(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}
  std::size_t dim() const override { return n_; }
  DenseVector embed(const Document&, const SparseVector& tfidf) const override {
    return random_projection(tfidf, n_, seed_);
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
};

/// Externally trained vectors from `embeddings.jsonl` ({id, components}).
class FileEmbeddings final : public EmbeddingProvider {
 public:
  explicit FileEmbeddings(const std::filesystem::path& path) {
    io::for_each_jsonl(path, [&](const io::Json& j, std::size_t line) {
      if (!j.contains("id") || !j.contains("components") || !j.at("components").is_array())
        throw Error(ErrorCode::SchemaError, "bad embedding record", line);
      auto v = j.at("components").get<DenseVector>();
      if (v.empty() || (dim_ && v.size() != dim_))
        throw Error(ErrorCode::SchemaError, "inconsistent embedding dimension", line);
      for (double x : v)
        if (!std::isfinite(x)) throw Error(ErrorCode::SchemaError, "non-finite component", line);
      dim_ = v.size();
      vectors_[j.at("id").get<std::string>()] = std::move(v);
    });
  }
  std::size_t dim() const override { return dim_; }
  DenseVector embed(const Document& doc, const SparseVector&) const override {
    auto it = vectors_.find(doc.id);
    if (it == vectors_.end()) throw Error(ErrorCode::NotFound, "no embedding for '" + doc.id + "'");
    return it->second;
  }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, DenseVector, std::less<>> vectors_;
};

inline DenseVector embed(const Document& doc, const TermLexicon& lex, std::size_t n, std::uint64_t seed) {
  return random_projection(tfidf_vector(doc, lex), n, seed);
}

// ---------------------------------------------------------------------------
// Cosine similarity

namespace detail {
inline double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }
}  // namespace detail

/// sum(u_i v_i) / (|u| |v|), clamped to [-1, 1] against rounding.
inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!(uu > 0.0) || !(vv > 0.0)) throw Error(ErrorCode::ZeroNorm, "cosine of a zero vector");
  return detail::clamp_unit(uv / (std::sqrt(uu) * std::sqrt(vv)));
}

inline double cosine_similarity(const SparseVector& u, const SparseVector& v) {
  const double nu = euclidean_norm(u), nv = euclidean_norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) throw Error(ErrorCode::ZeroNorm, "cosine of a zero vector");
  return detail::clamp_unit(dot(u, v) / (nu * nv));
}

// ---------------------------------------------------------------------------
// Per-document vector sets and their files

struct DocumentVectors {
  std::map<std::string, SparseVector, std::less<>> tfidf;
  std::map<std::string, DenseVector, std::less<>> dense;
};

template <std::ranges::input_range R>
DocumentVectors vectorize_all(const R& documents, const TermLexicon& lex, const EmbeddingProvider& embedder) {
  DocumentVectors out;
  for (const Document& d : documents) {
    auto sparse = tfidf_vector(d, lex);
    out.dense.emplace(d.id, embedder.embed(d, sparse));
    out.tfidf.emplace(d.id, std::move(sparse));
  }
  return out;
}

inline io::Json to_json(const SparseVector& v) {
  auto entries = io::Json::array();
  for (const auto& [id, w] : v.entries) entries.push_back(io::Json::array({id, w}));
  return entries;
}

inline SparseVector sparse_from_json(const io::Json& entries) {
  SparseVector v;
  for (const auto& e : entries) v.entries.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<double>());
  std::sort(v.entries.begin(), v.entries.end());
  v.norm = euclidean_norm(v);
  return v;
}

inline std::string tfidf_jsonl(const DocumentVectors& vecs) {
  std::string out;
  for (const auto& [id, v] : vecs.tfidf) {
    io::Json j;
    j["id"] = id;
    j["entries"] = to_json(v);
    out += io::dump(j) + "\n";
  }
  return out;
}

inline std::string dense_jsonl(const DocumentVectors& vecs) {
  std::string out;
  for (const auto& [id, v] : vecs.dense) {
    io::Json j;
    j["id"] = id;
    j["components"] = v;
    out += io::dump(j) + "\n";
  }
  return out;
}

inline DocumentVectors read_vectors(const std::filesystem::path& tfidf_path,
                                    const std::filesystem::path& dense_path) {
  DocumentVectors out;
  io::for_each_jsonl(tfidf_path, [&](const io::Json& j, std::size_t) {
    out.tfidf[j.at("id").get<std::string>()] = sparse_from_json(j.at("entries"));
  });
  io::for_each_jsonl(dense_path, [&](const io::Json& j, std::size_t) {
    out.dense[j.at("id").get<std::string>()] = j.at("components").get<DenseVector>();
  });
  return out;
}

}  // namespace etymo

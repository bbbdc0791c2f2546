// SPDX-License-Identifier: Apache-2.0

// Exact O(N^2) t-SNE: Gaussian input affinities calibrated to a perplexity,
// Student-t output kernel, gradient descent with momentum, per-parameter
// gains and early exaggeration.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "etymo/error.hpp"
#include "etymo/graph.hpp"
#include "etymo/io.hpp"
#include "etymo/vectorize.hpp"

namespace etymo {

struct LayoutConfig {
  double perplexity = 30.0;
  double learning_rate = 200.0;
  int iterations = 500;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;
  std::uint64_t seed = 42;

  void validate() const {
    auto bad = [](const char* what) { return Error(ErrorCode::InvalidArgument, what); };
    if (!(perplexity > 1.0)) throw bad("perplexity must be > 1");
    if (!(learning_rate > 0.0)) throw bad("learning_rate must be > 0");
    if (iterations < 1) throw bad("iterations must be positive");
    if (!(early_exaggeration > 0.0)) throw bad("early_exaggeration must be > 0");
  }
};

inline io::Json to_json(const LayoutConfig& c) {
  io::Json j;
  j["perplexity"] = c.perplexity;
  j["learning_rate"] = c.learning_rate;
  j["iterations"] = c.iterations;
  j["early_exaggeration"] = c.early_exaggeration;
  j["exaggeration_iterations"] = c.exaggeration_iterations;
  j["initial_momentum"] = c.initial_momentum;
  j["final_momentum"] = c.final_momentum;
  j["momentum_switch"] = c.momentum_switch;
  j["seed"] = c.seed;
  return j;
}

/// Symmetric joint probabilities, row-major N x N with a zero diagonal.
struct Affinities {
  std::size_t n = 0;
  std::vector<double> p;
  /// Shannon entropy (bits) of each conditional row p_{.|i}.
  std::vector<double> row_entropy;
  /// Gaussian precision 1 / (2 sigma_i^2) found for each row.
  std::vector<double> precision;
  std::vector<std::string> warnings;

  double operator()(std::size_t i, std::size_t j) const { return p[i * n + j]; }
};

inline std::vector<double> squared_distances(std::span<const DenseVector> points) {
  const std::size_t n = points.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (points[i].size() != points[j].size()) throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
      double s = 0.0;
      for (std::size_t k = 0; k < points[i].size(); ++k) {
        const double diff = points[i][k] - points[j][k];
        s += diff * diff;
      }
      d[i * n + j] = d[j * n + i] = s;
    }
  return d;
}

namespace detail {

// Conditional row for precision `beta`, shifted by the smallest distance for
// stability. Returns the entropy in bits and fills `row`.
inline double gaussian_row(std::span<const double> dist, std::size_t self, double dmin, double beta,
                           std::span<double> row) {
  double z = 0.0, weighted = 0.0;
  for (std::size_t j = 0; j < dist.size(); ++j) {
    if (j == self) {
      row[j] = 0.0;
      continue;
    }
    const double shifted = dist[j] - dmin;
    row[j] = std::exp(-beta * shifted);
    z += row[j];
    weighted += shifted * row[j];
  }
  for (auto& v : row) v /= z;
  const double nats = std::log(z) + beta * weighted / z;
  return nats / std::numbers::ln2;
}

}  // namespace detail

/// Per-row bandwidth search: the conditional entropy of each row is driven
/// to log2(perplexity) (at most 50 bisection steps after bracketing; rows
/// missing the target by 1e-5 bits or more are reported in `warnings`), then
/// p_ij = (p_{j|i} + p_{i|j}) / (2N).
inline Affinities conditional_affinities(std::span<const DenseVector> points, double perplexity) {
  const std::size_t n = points.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "affinities need at least two points");
  if (!(perplexity > 0.0) || !(perplexity < static_cast<double>(n)))
    throw Error(ErrorCode::InvalidArgument, "perplexity must be below the number of points");

  constexpr double kTolerance = 1e-5;
  constexpr int kMaxBisections = 50;
  constexpr int kMaxBracketSteps = 200;
  const double target = std::log2(perplexity);

  Affinities out;
  out.n = n;
  out.row_entropy.assign(n, 0.0);
  out.precision.assign(n, 1.0);
  const auto dist = squared_distances(points);
  std::vector<double> cond(n * n, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> drow(dist.data() + i * n, n);
    std::span<double> prow(cond.data() + i * n, n);
    double dmin = std::numeric_limits<double>::infinity(), spread = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, drow[j]);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) spread += drow[j] - dmin;
    spread /= static_cast<double>(n - 1);

    auto entropy_at = [&](double beta) { return detail::gaussian_row(drow, i, dmin, beta, prow); };

    double beta = spread > 0.0 ? 1.0 / spread : 1.0;
    double h = entropy_at(beta);
    // Bracket the target in beta; entropy is nonincreasing in beta.
    double lo = beta, hi = beta;
    bool bracketed = h == target;
    for (int s = 0; !bracketed && s < kMaxBracketSteps; ++s) {
      if (h > target) {
        lo = beta;
        beta *= 2.0;
        hi = beta;
      } else {
        hi = beta;
        beta /= 2.0;
        lo = beta;
      }
      const double next = entropy_at(beta);
      bracketed = (next - target) * (h - target) <= 0.0;
      h = next;
    }
    if (bracketed && h != target) {
      // Bisect in log(beta) between lo (entropy above target) and hi.
      double llo = std::log(lo), lhi = std::log(hi);
      for (int s = 0; s < kMaxBisections && lhi - llo > 1e-15; ++s) {
        const double mid = 0.5 * (llo + lhi);
        beta = std::exp(mid);
        h = entropy_at(beta);
        if (h == target) break;
        (h > target ? llo : lhi) = mid;
      }
    }
    out.precision[i] = beta;
    out.row_entropy[i] = h;
    if (std::abs(h - target) >= kTolerance)
      out.warnings.push_back("row " + std::to_string(i) + ": entropy target unreachable, bandwidth clamped (H=" +
                             std::to_string(h) + " bits)");
  }

  out.p.assign(n * n, 0.0);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) out.p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
  return out;
}

/// Output coordinates, row-major (x0, y0, x1, y1, ...).
using Embedding2D = std::vector<double>;

/// KL(P || Q) with Q the normalized Student-t kernel over `y`.
inline double kl_divergence(const Affinities& p, std::span<const double> y) {
  const std::size_t n = p.n;
  double z = 0.0;
  std::vector<double> num(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      num[i * n + j] = num[j * n + i] = 1.0 / (1.0 + dx * dx + dy * dy);
      z += 2.0 * num[i * n + j];
    }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double pij = p.p[i * n + j];
      if (i == j || pij <= 0.0) continue;
      kl += pij * std::log(pij / (num[i * n + j] / z));
    }
  return kl;
}

/// dKL/dy_i = 4 sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2).
/// `exaggeration` scales P without renormalizing.
inline std::vector<double> kl_gradient(const Affinities& p, std::span<const double> y, double exaggeration = 1.0) {
  const std::size_t n = p.n;
  std::vector<double> num(n * n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      num[i * n + j] = num[j * n + i] = 1.0 / (1.0 + dx * dx + dy * dy);
      z += 2.0 * num[i * n + j];
    }
  std::vector<double> grad(2 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double gx = 0.0, gy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double nij = num[i * n + j];
      const double mult = (exaggeration * p.p[i * n + j] - nij / z) * nij;
      gx += mult * (y[2 * i] - y[2 * j]);
      gy += mult * (y[2 * i + 1] - y[2 * j + 1]);
    }
    grad[2 * i] = 4.0 * gx;
    grad[2 * i + 1] = 4.0 * gy;
  }
  return grad;
}

inline void recenter(std::span<double> y) {
  const std::size_t n = y.size() / 2;
  if (n == 0) return;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += y[2 * i];
    my += y[2 * i + 1];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[2 * i] -= mx;
    y[2 * i + 1] -= my;
  }
}

/// Standard normal draws via Box-Muller on a mt19937_64 stream, so the
/// sequence is the same on every standard library.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : gen_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = unit();
    } while (u1 <= 0.0);
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct Point2D {
  double x = 0.0;
  double y = 0.0;
  /// Interim placement (neighbor centroid), not produced by t-SNE.
  bool approx = false;
};

struct Layout {
  std::map<std::string, Point2D, std::less<>> coords;
  double kl_initial = 0.0;
  double kl_final = 0.0;
  std::vector<std::string> warnings;
};

/// Runs t-SNE on `points` labeled by `ids`. Points are processed in id
/// order, so relabeling the input permutes the output and nothing else.
inline Layout tsne(std::span<const std::string> ids, std::span<const DenseVector> points, const LayoutConfig& cfg) {
  cfg.validate();
  if (ids.size() != points.size()) throw Error(ErrorCode::IdMismatch, "ids and points differ in length");
  const std::size_t n = ids.size();
  Layout layout;
  if (n == 0) return layout;
  if (n == 1) {
    layout.coords[ids[0]] = {};
    return layout;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
  for (std::size_t i = 1; i < n; ++i)
    if (ids[order[i]] == ids[order[i - 1]]) throw Error(ErrorCode::DuplicateNode, ids[order[i]]);
  std::vector<DenseVector> sorted;
  sorted.reserve(n);
  for (auto i : order) sorted.push_back(points[i]);

  const double perplexity = std::max(std::min(cfg.perplexity, static_cast<double>(n - 1) / 3.0), 1.0);
  const auto p = conditional_affinities(sorted, perplexity);
  layout.warnings = p.warnings;

  Embedding2D y(2 * n);
  GaussianStream gauss(cfg.seed);
  for (auto& v : y) v = 1e-4 * gauss();
  recenter(y);
  layout.kl_initial = kl_divergence(p, y);

  std::vector<double> update(2 * n, 0.0), gains(2 * n, 1.0);
  for (int it = 0; it < cfg.iterations; ++it) {
    const double exaggeration = it < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum = it < cfg.momentum_switch ? cfg.initial_momentum : cfg.final_momentum;
    const auto grad = kl_gradient(p, y, exaggeration);
    for (std::size_t k = 0; k < y.size(); ++k) {
      gains[k] = (grad[k] > 0.0) != (update[k] > 0.0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], 0.01);
      update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    recenter(y);
  }
  layout.kl_final = kl_divergence(p, y);

  for (std::size_t r = 0; r < n; ++r) layout.coords[ids[order[r]]] = {y[2 * r], y[2 * r + 1], false};
  return layout;
}

/// Places a node that arrived after the last layout run at the
/// weight-averaged position of its laid-out neighbors (origin if none).
inline Point2D interim_position(const Layout& layout, const SimilarityGraph& g, const std::string& id) {
  const auto adj = g.undirected_adjacency();
  Point2D p{0.0, 0.0, true};
  auto it = adj.find(id);
  if (it == adj.end()) return p;
  double total = 0.0;
  for (const auto& [other, w] : it->second) {
    auto c = layout.coords.find(other);
    if (c == layout.coords.end() || c->second.approx) continue;
    p.x += w * c->second.x;
    p.y += w * c->second.y;
    total += w;
  }
  if (total > 0.0) {
    p.x /= total;
    p.y /= total;
  }
  return p;
}

/// layout.json: [{id, x, y}] sorted by id; interim placements carry approx: true.
inline io::Json to_json(const Layout& layout) {
  auto arr = io::Json::array();
  for (const auto& [id, pt] : layout.coords) {
    io::Json e;
    e["id"] = id;
    e["x"] = pt.x;
    e["y"] = pt.y;
    if (pt.approx) e["approx"] = true;
    arr.push_back(std::move(e));
  }
  return arr;
}

inline Layout layout_from_json(const io::Json& j) {
  Layout l;
  for (const auto& e : j)
    l.coords[e.at("id").get<std::string>()] = {e.at("x").get<double>(), e.at("y").get<double>(),
                                               e.value("approx", false)};
  return l;
}

}  // namespace etymo

// SPDX-License-Identifier: Apache-2.0
#include "koopman/embedding.hpp"

#include "koopman/data_io.hpp"
#include "koopman/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace koopman {

void DelayConfig::validate(Index samples) const {
  if (delays < 1 || delays >= samples)
    throw ConfigError("delays Q=" + std::to_string(delays) + " must satisfy 1 <= Q < N=" +
                      std::to_string(samples));
  const Index embeddable = samples - delays + 1;
  if (knn < 1 || knn >= embeddable)
    throw ConfigError("k_nn=" + std::to_string(knn) + " must satisfy 1 <= k_nn < N_e=" +
                      std::to_string(embeddable));
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite nonnegative number");
  if (!(epsilon_scale > 0.0) || !std::isfinite(epsilon_scale))
    throw ConfigError("epsilon_scale must be positive");
}

Matrix delay_embed(const Matrix& values, Index delays) {
  const Index n = values.rows();
  const Index d = values.cols();
  if (delays < 1 || delays >= n)
    throw ConfigError("delays Q=" + std::to_string(delays) + " must satisfy 1 <= Q < N=" + std::to_string(n));
  const Index ne = n - delays + 1;
  Matrix out(ne, delays * d);
  for (Index p = 0; p < ne; ++p) {
    const Index t = p + delays - 1;
    for (Index k = 0; k < delays; ++k) out.row(p).segment(k * d, d) = values.row(t - k);
  }
  return out;
}

Matrix pairwise_delay_distances(const Matrix& values, Index delays) {
  const Index n = values.rows();
  if (delays < 1 || delays >= n)
    throw ConfigError("delays Q=" + std::to_string(delays) + " must satisfy 1 <= Q < N=" + std::to_string(n));
  const Index ne = n - delays + 1;
  Matrix out = Matrix::Zero(ne, ne);
  const Matrix xt = values.transpose();  // column access per time step
  std::vector<long double> prefix(static_cast<std::size_t>(n) + 1);

  for (Index offset = 1; offset < ne; ++offset) {
    // prefix[m] = sum_{s < m} |x_s - x_{s+offset}|^2 along this diagonal
    const Index len = n - offset;
    prefix[0] = 0.0L;
    for (Index s = 0; s < len; ++s)
      prefix[static_cast<std::size_t>(s) + 1] =
          prefix[static_cast<std::size_t>(s)] +
          static_cast<long double>((xt.col(s) - xt.col(s + offset)).squaredNorm());
    for (Index a = 0; a + offset < ne; ++a) {
      const long double window =
          prefix[static_cast<std::size_t>(a + delays)] - prefix[static_cast<std::size_t>(a)];
      const double v = static_cast<double>(window / static_cast<long double>(delays));
      out(a, a + offset) = v;
      out(a + offset, a) = v;
    }
  }
  return out;
}

double DelayGraph::scaled_dist2(double dist2, double rho_i, double rho_j) const {
  if (config.mode == BandwidthMode::Fixed || config.alpha == 0.0) return dist2;
  return dist2 * std::pow(rho_i * rho_j, config.alpha);
}

double knn_density(double mean_knn_dist2, double mean_floor) {
  const double m = std::max(mean_knn_dist2, mean_floor);
  return m > 0.0 ? 1.0 / m : 1.0;
}

double tune_bandwidth(const std::vector<double>& scaled_dist2) {
  constexpr double kLowExp = -30.0;
  constexpr double kHighExp = 10.0;
  constexpr double kStep = 0.25;
  const int steps = static_cast<int>((kHighExp - kLowExp) / kStep) + 1;

  std::vector<double> log_s(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    const double eps = std::exp2(kLowExp + k * kStep);
    long double s = 0.0L;
    for (double d : scaled_dist2) s += std::exp(-d / eps);
    log_s[static_cast<std::size_t>(k)] = std::log(static_cast<double>(s));
  }

  double best_slope = 0.0;
  int best = -1;
  const double dlog_eps = 2.0 * kStep * std::log(2.0);
  for (int k = 1; k + 1 < steps; ++k) {
    const double slope =
        (log_s[static_cast<std::size_t>(k) + 1] - log_s[static_cast<std::size_t>(k) - 1]) / dlog_eps;
    if (slope > best_slope) {
      best_slope = slope;
      best = k;
    }
  }
  return best < 0 ? 1.0 : std::exp2(kLowExp + best * kStep);
}

DelayGraph build_graph(const Matrix& dist2, const DelayConfig& config) {
  const Index n = dist2.rows();
  if (dist2.cols() != n) throw ConfigError("distance table must be square");
  if (config.knn < 1 || config.knn >= n)
    throw ConfigError("k_nn=" + std::to_string(config.knn) + " must satisfy 1 <= k_nn < N_e=" + std::to_string(n));
  if (!(config.epsilon_scale > 0.0)) throw ConfigError("epsilon_scale must be positive");

  const auto k = static_cast<std::size_t>(config.knn);
  DelayGraph g;
  g.config = config;
  g.knn_radius.resize(n);
  Vector knn_mean(n);
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));

  std::vector<double> row;
  row.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    row.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) row.push_back(dist2(i, j));
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    const double radius = row[k - 1];
    // After nth_element the first k entries are the k smallest.
    std::sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k));
    knn_mean(i) = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
                  static_cast<double>(k);
    g.knn_radius(i) = radius;

    auto& ai = adj[static_cast<std::size_t>(i)];
    ai.push_back(i);
    for (Index j = 0; j < n; ++j) {
      if (j == i || dist2(i, j) > radius) continue;  // ties at the radius are kept
      ai.push_back(j);
      adj[static_cast<std::size_t>(j)].push_back(i);
    }
  }

  g.mean_floor = 1e-12 * knn_mean.maxCoeff();
  g.density.resize(n);
  for (Index i = 0; i < n; ++i) g.density(i) = knn_density(knn_mean(i), g.mean_floor);

  g.neighbors.resize(static_cast<std::size_t>(n));
  std::vector<double> scaled;
  for (Index i = 0; i < n; ++i) {
    auto& ai = adj[static_cast<std::size_t>(i)];
    std::sort(ai.begin(), ai.end());
    ai.erase(std::unique(ai.begin(), ai.end()), ai.end());
    auto& ni = g.neighbors[static_cast<std::size_t>(i)];
    ni.reserve(ai.size());
    for (Index j : ai) {
      const double d = i == j ? 0.0 : dist2(i, j);
      ni.push_back({j, d});
      scaled.push_back(g.scaled_dist2(d, g.density(i), g.density(j)));
    }
  }
  g.epsilon0 = tune_bandwidth(scaled);
  return g;
}

SparseMatrix kernel_matrix(const DelayGraph& graph) {
  const double eps = graph.bandwidth();
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw BandwidthError("bandwidth must be positive and finite, got " + format_double(eps));
  const Index n = graph.size();
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index i = 0; i < n; ++i)
    for (const auto& nb : graph.neighbors[static_cast<std::size_t>(i)]) {
      const double s = graph.scaled_dist2(nb.dist2, graph.density(i), graph.density(nb.index));
      triplets.emplace_back(i, nb.index, std::exp(-s / eps));
    }
  SparseMatrix K(n, n);
  K.setFromTriplets(triplets.begin(), triplets.end());
  return K;
}

MarkovMatrix markov_normalize(const SparseMatrix& K) {
  const Index n = K.rows();
  if (K.cols() != n) throw ConfigError("kernel matrix must be square");
  MarkovMatrix m;
  m.q = Vector::Zero(n);
  for (Index i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(K, i); it; ++it) m.q(i) += it.value();
  for (Index i = 0; i < n; ++i)
    if (!(m.q(i) > 0.0)) throw IsolatedPointError(static_cast<std::size_t>(i));

  const Vector q_inv_sqrt = m.q.cwiseSqrt().cwiseInverse();
  m.row_normalizer = K * q_inv_sqrt;
  m.P = K;
  for (Index i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(m.P, i); it; ++it)
      it.valueRef() = it.value() * q_inv_sqrt(it.col()) / m.row_normalizer(i);
  return m;
}

Vector MarkovMatrix::conjugator() const {
  return (row_normalizer.cwiseSqrt().array() / q.array().pow(0.25)).matrix();
}

Matrix MarkovMatrix::symmetric_conjugate() const {
  const Vector t = conjugator();
  const Index n = size();
  Matrix s = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(P, i); it; ++it) s(i, it.col()) = t(i) * it.value() / t(it.col());
  return 0.5 * (s + s.transpose());
}

Vector MarkovMatrix::stationary_weights() const {
  const Vector t = conjugator();
  Vector w = t.cwiseAbs2();
  return w * (static_cast<double>(w.size()) / w.sum());
}

// --- artifacts ---------------------------------------------------------------

void write_triplets_csv(const std::filesystem::path& path, const SparseMatrix& m) {
  std::string out = "i,j,value\n";
  for (Index i = 0; i < m.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(m, i); it; ++it)
      out += std::to_string(it.row()) + "," + std::to_string(it.col()) + "," + format_double(it.value()) + "\n";
  write_text(path, out);
}

SparseMatrix read_triplets_csv(const std::filesystem::path& path, Index n) {
  const std::string text = read_text(path);
  std::vector<Eigen::Triplet<double>> triplets;
  std::size_t pos = text.find('\n');
  std::size_t line = 1;
  while (pos != std::string::npos && pos + 1 < text.size()) {
    const std::size_t start = pos + 1;
    pos = text.find('\n', start);
    ++line;
    const std::string_view row(text.data() + start, (pos == std::string::npos ? text.size() : pos) - start);
    if (row.empty()) continue;
    long long i = 0, j = 0;
    double v = 0.0;
    const char* p = row.data();
    const char* end = row.data() + row.size();
    auto r1 = std::from_chars(p, end, i);
    if (r1.ec != std::errc() || r1.ptr == end || *r1.ptr != ',') throw ParseError(line, 1, "bad triplet row");
    auto r2 = std::from_chars(r1.ptr + 1, end, j);
    if (r2.ec != std::errc() || r2.ptr == end || *r2.ptr != ',') throw ParseError(line, 2, "bad triplet row");
    auto r3 = std::from_chars(r2.ptr + 1, end, v);
    if (r3.ec != std::errc()) throw ParseError(line, 3, "bad triplet value");
    if (i < 0 || j < 0 || i >= n || j >= n) throw ParseError(line, 1, "triplet index out of range");
    triplets.emplace_back(static_cast<Index>(i), static_cast<Index>(j), v);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

void write_graph(const std::filesystem::path& dir, const DelayGraph& graph, const MarkovMatrix& markov) {
  const Index n = graph.size();
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index i = 0; i < n; ++i)
    for (const auto& nb : graph.neighbors[static_cast<std::size_t>(i)]) triplets.emplace_back(i, nb.index, nb.dist2);
  SparseMatrix d2(n, n);
  d2.setFromTriplets(triplets.begin(), triplets.end());
  write_triplets_csv(dir / "graph.csv", d2);
  write_triplets_csv(dir / "markov.csv", markov.P);

  nlohmann::ordered_json header;
  header["n_points"] = n;
  header["Q"] = graph.config.delays;
  header["k_nn"] = graph.config.knn;
  header["epsilon0"] = graph.epsilon0;
  header["epsilon_scale"] = graph.config.epsilon_scale;
  header["alpha"] = graph.config.alpha;
  header["mode"] = graph.config.mode == BandwidthMode::Fixed ? "fixed" : "variable";
  write_text(dir / "graph.json", header.dump(2) + "\n");
}

}  // namespace koopman

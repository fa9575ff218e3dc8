// SPDX-License-Identifier: Apache-2.0
#include "koopman/phate.hpp"

#include "koopman/error.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>

namespace koopman {

namespace {

constexpr double kLogFloor = 1e-300;
constexpr double kSpectralFloor = 1e-12;

Matrix dense(const SparseMatrix& m) { return Matrix(m); }

double sq_dist(const Matrix& x, Index i, Index j) { return (x.row(i) - x.row(j)).squaredNorm(); }

}  // namespace

StationGraph station_graph(const LoadPanel& panel, Index knn, const DelayConfig& kernel) {
  const Index d = panel.stations();
  if (d < 2) throw ConfigError("station graph needs at least two stations");
  if (knn < 1) throw ConfigError("k_nn must be >= 1");
  const auto norm = minmax_normalize(panel);
  const Matrix points = norm.panel.values.transpose();

  DelayConfig cfg = kernel;
  cfg.delays = 1;
  cfg.knn = std::min(knn, d - 1);
  StationGraph out;
  out.graph = build_graph(pairwise_delay_distances(points, 1), cfg);
  out.markov = markov_normalize(kernel_matrix(out.graph));
  return out;
}

Vector entropy_curve(const Vector& eigenvalues, Index t_max) {
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
  std::vector<double> pos;
  for (Index i = 0; i < eigenvalues.size(); ++i)
    if (eigenvalues(i) > 0.0) pos.push_back(eigenvalues(i));
  Vector h = Vector::Zero(t_max);
  if (pos.empty()) return h;
  for (Index t = 1; t <= t_max; ++t) {
    double total = 0.0;
    for (double l : pos) total += std::pow(l, static_cast<double>(t));
    double s = 0.0;
    for (double l : pos) {
      const double p = std::pow(l, static_cast<double>(t)) / total;
      if (p > 0.0) s -= p * std::log(p);
    }
    h(t - 1) = s;
  }
  return h;
}

Index entropy_knee(const Vector& entropy, double fraction) {
  const Index t_max = entropy.size();
  if (t_max < 2) return 1;
  const double base = entropy(0) - entropy(1);
  if (!(base > 1e-15 * std::max(1.0, std::abs(entropy(0))))) return 1;
  for (Index t = 2; t <= t_max; ++t)
    if (entropy(t - 2) - entropy(t - 1) < fraction * base) return t;
  return t_max;
}

DiffusionTime select_diffusion_time(const MarkovMatrix& markov, Index t_max, double fraction) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(markov.symmetric_conjugate(), Eigen::EigenvaluesOnly);
  const Vector lambda = eig.eigenvalues().reverse();
  DiffusionTime out;
  out.entropy = entropy_curve(lambda, t_max);
  out.degenerate = lambda.size() < 2 || lambda.tail(lambda.size() - 1).maxCoeff() < kSpectralFloor;
  out.t = out.degenerate ? 1 : entropy_knee(out.entropy, fraction);
  return out;
}

Matrix potential_distances(const Matrix& P, Index t) {
  if (t < 1) throw ConfigError("diffusion time must be >= 1");
  if (P.rows() != P.cols()) throw ConfigError("diffusion operator must be square");
  Matrix result = Matrix::Identity(P.rows(), P.cols());
  Matrix base = P;
  for (Index e = t; e > 0; e >>= 1) {
    if (e & 1) result = result * base;
    if (e > 1) base = base * base;
  }
  const Matrix u = -result.cwiseMax(kLogFloor).array().log().matrix();
  const Index d = u.rows();
  Matrix g = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) g(i, j) = g(j, i) = std::sqrt(sq_dist(u, i, j));
  return g;
}

double mds_stress(const Matrix& distances, const Matrix& coordinates) {
  const Index d = distances.rows();
  double num = 0.0;
  double den = 0.0;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      if (i == j) continue;
      const double e = distances(i, j) - std::sqrt(sq_dist(coordinates, i, j));
      num += e * e;
      den += distances(i, j) * distances(i, j);
    }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

Matrix classical_mds(const Matrix& distances, Index m) {
  const Index d = distances.rows();
  const Matrix sq = distances.array().square().matrix();
  const Matrix centering = Matrix::Identity(d, d) - Matrix::Constant(d, d, 1.0 / static_cast<double>(d));
  const Matrix b = -0.5 * centering * sq * centering;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (b + b.transpose()));
  Matrix out = Matrix::Zero(d, m);
  for (Index c = 0; c < std::min(m, d); ++c) {
    const Index src = d - 1 - c;
    const double l = std::max(0.0, eig.eigenvalues()(src));
    Vector v = eig.eigenvectors().col(src);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.col(c) = std::sqrt(l) * v;
  }
  return out;
}

MdsResult metric_mds(const Matrix& distances, Index m, std::uint64_t seed, Index max_iterations,
                     double tolerance) {
  const Index d = distances.rows();
  if (m < 1) throw ConfigError("embedding dimension must be >= 1");
  if (distances.cols() != d) throw ConfigError("distance table must be square");
  MdsResult out;
  out.coordinates = Matrix::Zero(d, m);
  if (distances.cwiseAbs().maxCoeff() == 0.0) {
    out.stress_history.push_back(0.0);
    return out;
  }

  Matrix z = classical_mds(distances, m);
  if (z.cwiseAbs().maxCoeff() == 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, distances.maxCoeff());
    for (Index i = 0; i < z.size(); ++i) z.data()[i] = gauss(rng);
  }
  double stress = mds_stress(distances, z);
  out.stress_history.push_back(stress);

  for (Index it = 0; it < max_iterations && stress > 0.0; ++it) {
    Matrix b = Matrix::Zero(d, d);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < d; ++j) {
        if (i == j) continue;
        const double dist = std::sqrt(sq_dist(z, i, j));
        if (dist > 0.0) b(i, j) = -distances(i, j) / dist;
      }
      b(i, i) = -b.row(i).sum();
    }
    Matrix next = b * z / static_cast<double>(d);
    const double next_stress = mds_stress(distances, next);
    // majorization never increases stress; a rounding-level increase ends the run
    if (next_stress > stress) break;
    z = std::move(next);
    const double gain = stress - next_stress;
    stress = next_stress;
    out.stress_history.push_back(stress);
    if (gain <= tolerance * out.stress_history[out.stress_history.size() - 2]) break;
  }
  out.coordinates = z;
  out.stress = stress;
  return out;
}

KMeansResult kmeans(const Matrix& points, Index k, std::uint64_t seed, Index restarts, Index max_iterations) {
  const Index n = points.rows();
  if (k < 1 || k > n) throw ConfigError("k-means needs 1 <= k <= " + std::to_string(n) + ", got " + std::to_string(k));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (Index r = 0; r < std::max<Index>(1, restarts); ++r) {
    Matrix centers(k, points.cols());
    Vector closest = Vector::Constant(n, std::numeric_limits<double>::infinity());
    Index first = std::min<Index>(n - 1, static_cast<Index>(unit(rng) * static_cast<double>(n)));
    centers.row(0) = points.row(first);
    for (Index c = 1; c < k; ++c) {
      for (Index i = 0; i < n; ++i)
        closest(i) = std::min(closest(i), (points.row(i) - centers.row(c - 1)).squaredNorm());
      const double total = closest.sum();
      Index pick = 0;
      if (total > 0.0) {
        double target = unit(rng) * total;
        pick = n - 1;
        for (Index i = 0; i < n; ++i) {
          target -= closest(i);
          if (target < 0.0 && closest(i) > 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = std::min<Index>(n - 1, static_cast<Index>(unit(rng) * static_cast<double>(n)));
      }
      centers.row(c) = points.row(pick);
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    for (Index it = 0; it < max_iterations; ++it) {
      bool changed = false;
      for (Index i = 0; i < n; ++i) {
        Index arg = 0;
        (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&arg);
        if (labels[static_cast<std::size_t>(i)] != static_cast<int>(arg)) {
          labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
          changed = true;
        }
      }
      if (!changed) break;
      Matrix sums = Matrix::Zero(k, points.cols());
      Vector counts = Vector::Zero(k);
      for (Index i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
        counts(labels[static_cast<std::size_t>(i)]) += 1.0;
      }
      for (Index c = 0; c < k; ++c) {
        if (counts(c) > 0.0) {
          centers.row(c) = sums.row(c) / counts(c);
          continue;
        }
        // empty cluster: move it onto the point worst served by its center
        Index far = 0;
        double worst = -1.0;
        for (Index i = 0; i < n; ++i) {
          const double e = (points.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
          if (e > worst) {
            worst = e;
            far = i;
          }
        }
        centers.row(c) = points.row(far);
      }
    }

    double wcss = 0.0;
    for (Index i = 0; i < n; ++i)
      wcss += (points.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
    if (wcss < best.wcss) {
      best.wcss = wcss;
      best.labels = labels;
      best.centers = centers;
    }
  }

  // relabel in order of first appearance
  std::vector<int> map(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int& l : best.labels) {
    auto& m = map[static_cast<std::size_t>(l)];
    if (m < 0) m = next++;
    l = m;
  }
  Matrix centers = best.centers;
  for (Index c = 0; c < k; ++c)
    if (map[static_cast<std::size_t>(c)] >= 0) centers.row(map[static_cast<std::size_t>(c)]) = best.centers.row(c);
  best.centers = centers;
  return best;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw AlignmentError("label vectors differ in length");
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [key, v] : table) index += pairs(v);
  double sa = 0.0;
  for (const auto& [key, v] : rows) sa += pairs(v);
  double sb = 0.0;
  for (const auto& [key, v] : cols) sb += pairs(v);
  const double expected = sa * sb / pairs(n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

void PhateConfig::validate(Index stations) const {
  if (stations < 2) throw ConfigError("clustering needs at least two stations");
  if (knn < 1) throw ConfigError("phate k_nn must be >= 1");
  if (dimensions < 1) throw ConfigError("phate embedding dimension must be >= 1");
  if (clusters < 1 || clusters > stations)
    throw ConfigError("cluster count k=" + std::to_string(clusters) + " must satisfy 1 <= k <= d=" +
                      std::to_string(stations));
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
  if (!(knee_fraction > 0.0 && knee_fraction < 1.0)) throw ConfigError("knee fraction must lie in (0, 1)");
}

PhateEmbedding phate_cluster(const LoadPanel& panel, const PhateConfig& config) {
  config.validate(panel.stations());
  const auto sg = station_graph(panel, config.knn, config.kernel);
  const auto dt = select_diffusion_time(sg.markov, config.t_max, config.knee_fraction);
  const Matrix gamma = potential_distances(dense(sg.markov.P), dt.t);
  const auto mds = metric_mds(gamma, config.dimensions, config.seed);
  const auto km = kmeans(mds.coordinates, config.clusters, config.seed);

  PhateEmbedding out;
  out.coordinates = mds.coordinates;
  out.diffusion_time = dt.t;
  out.degenerate = dt.degenerate;
  out.entropy = dt.entropy;
  out.stress = mds.stress;
  out.stress_history = mds.stress_history;
  out.labels = km.labels;
  out.clusters = config.clusters;
  out.seed = config.seed;
  return out;
}

void write_phate(const std::filesystem::path& dir, const PhateEmbedding& embedding,
                 const std::vector<std::string>& station_ids) {
  std::string csv = "station_id";
  for (Index c = 0; c < embedding.coordinates.cols(); ++c) csv += ",z" + std::to_string(c + 1);
  csv += ",cluster\n";
  for (Index i = 0; i < embedding.coordinates.rows(); ++i) {
    csv += station_ids[static_cast<std::size_t>(i)];
    for (Index c = 0; c < embedding.coordinates.cols(); ++c) csv += "," + format_double(embedding.coordinates(i, c));
    csv += "," + std::to_string(embedding.labels[static_cast<std::size_t>(i)]) + "\n";
  }
  write_text(dir / "phate.csv", csv);

  nlohmann::ordered_json meta;
  meta["t_prime"] = embedding.diffusion_time;
  meta["stress"] = embedding.stress;
  meta["k"] = embedding.clusters;
  meta["seed"] = embedding.seed;
  meta["m"] = embedding.coordinates.cols();
  meta["degenerate_spectrum"] = embedding.degenerate;
  meta["stress_iterations"] = embedding.stress_history.size();
  write_text(dir / "phate_meta.json", meta.dump(2) + "\n");
}

}  // namespace koopman

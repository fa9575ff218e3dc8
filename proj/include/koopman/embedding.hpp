// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "koopman/types.hpp"

#include <filesystem>
#include <vector>

namespace koopman {

enum class BandwidthMode { Fixed, Variable };

struct DelayConfig {
  Index delays = 168;  // Q
  Index knn = 30;      // k_nn
  BandwidthMode mode = BandwidthMode::Variable;
  double alpha = 0.5;
  double epsilon_scale = 1.0;

  /// Checks Q and k_nn against a series of `samples` rows.
  void validate(Index samples) const;
};

/// Delay-coordinate map: row n of the result is (x_t, x_{t-1}, ..., x_{t-Q+1})
/// with t = n + Q - 1. Only indices with a complete history are embedded, so
/// the result has N - Q + 1 rows and Q*d columns.
Matrix delay_embed(const Matrix& values, Index delays);

/// Squared delay distances d_Q^2 between all embeddable points
/// ((1/Q) times the squared Euclidean distance of the embedded vectors).
/// Runs in O(N^2 d) using running sums along the diagonals of the
/// unlagged distance table.
Matrix pairwise_delay_distances(const Matrix& values, Index delays);

struct Neighbor {
  Index index;
  double dist2;
};

/// Symmetrized k-nearest-neighbor graph with per-point bandwidth data.
/// Each list is sorted by index and contains the point itself at distance 0.
struct DelayGraph {
  std::vector<std::vector<Neighbor>> neighbors;
  Vector density;       // rho(x_i) > 0
  Vector knn_radius;    // k_nn-th smallest d^2 to another point
  double mean_floor = 0.0;  // lower bound applied to the k-NN mean distance
  double epsilon0 = 1.0;    // auto-tuned global bandwidth
  DelayConfig config;

  Index size() const { return static_cast<Index>(neighbors.size()); }
  /// Bandwidth-scaled squared distance used inside the exponential.
  double scaled_dist2(double dist2, double rho_i, double rho_j) const;
  /// Effective global bandwidth epsilon0 * epsilon_scale.
  double bandwidth() const { return epsilon0 * config.epsilon_scale; }
};

/// Density estimate 1 / mean(k_nn smallest d^2), with the mean floored at `mean_floor`.
double knn_density(double mean_knn_dist2, double mean_floor);

/// Picks epsilon maximizing d log S / d log epsilon over 2^-30 .. 2^10, where
/// S(epsilon) = sum exp(-scaled_d2 / epsilon).
double tune_bandwidth(const std::vector<double>& scaled_dist2);

DelayGraph build_graph(const Matrix& dist2, const DelayConfig& config);

SparseMatrix kernel_matrix(const DelayGraph& graph);

/// Markov normalization P_ij = K_ij / ((sum_k K_ik q_k^-1/2) q_j^1/2).
struct MarkovMatrix {
  SparseMatrix P;
  Vector q;               // row sums of K
  Vector row_normalizer;  // D_i = sum_k K_ik q_k^-1/2

  Index size() const { return P.rows(); }
  /// Diagonal T with S = T P T^-1 symmetric: T = D^1/2 q^-1/4.
  Vector conjugator() const;
  /// Dense symmetric S = D^-1/2 q^-1/4 K q^-1/4 D^-1/2 (same spectrum as P).
  Matrix symmetric_conjugate() const;
  /// Stationary distribution of P scaled to unit mean (pi_i proportional to D_i q_i^-1/2).
  Vector stationary_weights() const;
};

MarkovMatrix markov_normalize(const SparseMatrix& K);

// --- artifacts ---------------------------------------------------------------

void write_triplets_csv(const std::filesystem::path& path, const SparseMatrix& m);
SparseMatrix read_triplets_csv(const std::filesystem::path& path, Index n);
void write_graph(const std::filesystem::path& dir, const DelayGraph& graph, const MarkovMatrix& markov);

}  // namespace koopman

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "koopman/data_io.hpp"
#include "koopman/embedding.hpp"
#include "koopman/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace koopman {

/// Markov kernel over stations: each station's min-max normalized series is
/// one point in R^N, compared without delays.
struct StationGraph {
  DelayGraph graph;
  MarkovMatrix markov;

  Index size() const { return markov.size(); }
};

/// `knn` is clipped to d - 1 so that tiny panels still form a graph.
StationGraph station_graph(const LoadPanel& panel, Index knn, const DelayConfig& kernel = {});

/// H(t) = -sum p_i log p_i with p_i = lambda_i^t / sum_j lambda_j^t over the
/// positive eigenvalues; entry t - 1 holds H(t).
Vector entropy_curve(const Vector& eigenvalues, Index t_max);

/// Smallest t >= 2 with H(t-1) - H(t) < fraction * (H(1) - H(2)), capped at
/// t_max; 1 when the curve is flat from the start.
Index entropy_knee(const Vector& entropy, double fraction);

struct DiffusionTime {
  Index t = 1;
  Vector entropy;
  bool degenerate = false;  // no eigenvalue besides the top one above 1e-12
};

DiffusionTime select_diffusion_time(const MarkovMatrix& markov, Index t_max = 100, double fraction = 0.05);

/// Pairwise row distances of -log(max(P^t, 1e-300)).
Matrix potential_distances(const Matrix& P, Index t);

struct MdsResult {
  Matrix coordinates;          // d x m
  double stress = 0.0;
  std::vector<double> stress_history;  // one entry per iteration, starting at the initialization
};

/// Normalized stress sqrt(sum (G_ij - |z_i - z_j|)^2 / sum G_ij^2).
double mds_stress(const Matrix& distances, const Matrix& coordinates);

/// Classical MDS coordinates (top m eigenpairs of the double-centered squared table).
Matrix classical_mds(const Matrix& distances, Index m);

/// SMACOF iterations from classical MDS; stops when stress improves by less
/// than `tolerance` relative, or after `max_iterations`.
MdsResult metric_mds(const Matrix& distances, Index m, std::uint64_t seed, Index max_iterations = 500,
                     double tolerance = 1e-8);

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;  // k x m
  double wcss = 0.0;
};

/// k-means++ seeding, Lloyd iterations, best of `restarts` by WCSS.
KMeansResult kmeans(const Matrix& points, Index k, std::uint64_t seed, Index restarts = 10,
                    Index max_iterations = 300);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct PhateConfig {
  Index knn = 5;
  Index dimensions = 3;  // m
  Index clusters = 10;   // k
  Index t_max = 100;
  double knee_fraction = 0.05;
  std::uint64_t seed = 1;
  DelayConfig kernel{1, 5};

  void validate(Index stations) const;
};

struct PhateEmbedding {
  Matrix coordinates;  // d x m
  Index diffusion_time = 1;
  bool degenerate = false;
  Vector entropy;
  double stress = 0.0;
  std::vector<double> stress_history;
  std::vector<int> labels;
  Index clusters = 1;
  std::uint64_t seed = 1;
};

PhateEmbedding phate_cluster(const LoadPanel& panel, const PhateConfig& config);

/// phate.csv and phate_meta.json.
void write_phate(const std::filesystem::path& dir, const PhateEmbedding& embedding,
                 const std::vector<std::string>& station_ids);

}  // namespace koopman

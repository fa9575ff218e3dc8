// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "koopman/data_io.hpp"
#include "koopman/embedding.hpp"
#include "koopman/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace koopman {

/// Leading eigenpairs of the Markov matrix.
///
/// Eigenfunctions are the right eigenvectors of P. They are orthonormal under
/// the weighted empirical inner product <f, g> = (1/N_e) sum_n w_n f_n g_n,
/// where w is the stationary distribution of P scaled to unit mean; w is
/// uniform whenever the kernel has constant row sums (uniformly sampled
/// orbits).
struct KernelEigenbasis {
  Vector eigenvalues;  // lambda_1 >= lambda_2 >= ...
  Matrix functions;    // N_e x l, column j samples phi_j
  Vector eta;          // (1/epsilon)(1/lambda_j - 1)
  Vector weights;      // sampling weights of the inner product, unit mean
  double bandwidth = 1.0;
  bool degenerate = false;  // repeated unit eigenvalue (disconnected graph)

  Index size() const { return eigenvalues.size(); }
  Index samples() const { return functions.rows(); }
  /// Gram matrix of the eigenfunctions under the weighted inner product.
  Matrix gram() const;
};

KernelEigenbasis kernel_eigs(const MarkovMatrix& markov, Index count, double bandwidth);

/// Time derivative of each column by second-order finite differences with
/// spacing `tau` (central inside, one-sided at both ends).
Matrix generator_action(const Matrix& functions, double tau);

/// Galerkin matrices restricted to the nontrivial eigenfunctions 2..l; the
/// constant mode is handled analytically by galerkin_solve.
struct GalerkinSystem {
  Matrix A;
  Matrix B;
};

GalerkinSystem galerkin_matrices(const KernelEigenbasis& basis, const Matrix& generator, double theta);

/// Koopman eigenvalues and sampled eigenfunctions, ordered by Dirichlet energy.
struct KoopmanBasis {
  CVector eigenvalues;            // gamma_k, units 1/s
  Vector omega;                   // Im(gamma_k), rad/s
  CMatrix functions;              // N_e x l', column k samples psi_k
  Vector energy;                  // Dirichlet energy E(psi_k)
  CMatrix coefficients;           // l x l', psi_k = sum_j c_jk phi_j
  std::vector<Index> partner;     // conjugate partner of each mode (itself when real)
  double sample_interval = 3600.0;

  Index size() const { return eigenvalues.size(); }
  Index samples() const { return functions.rows(); }
  double frequency_hz(Index k) const;
  /// One-step rotation angle theta_k with sin(theta_k) = omega_k tau: the
  /// phase advance per sample that the central-difference generator implies
  /// for a sampled exponential.
  double step_angle(Index k) const;
};

/// Solves A c = gamma B c and assembles the Koopman basis. The constant
/// eigenfunction is prepended with gamma = 0 and E = 0. Keeps at most
/// `count` modes without splitting a conjugate pair.
KoopmanBasis galerkin_solve(const GalerkinSystem& system, const KernelEigenbasis& basis, Index count,
                            double tau);

/// Parameters of the full eigenfunction approximation.
struct SpectralConfig {
  DelayConfig delay;
  Index kernel_modes = 100;  // l
  Index koopman_modes = 50;  // l'
  double theta = 1e-9;

  void validate(Index samples) const;
};

struct KoopmanAnalysis {
  DelayGraph graph;
  MarkovMatrix markov;
  KernelEigenbasis kernel;
  KoopmanBasis koopman;
  Index delays = 1;

  /// Panel row of embedded sample n.
  Index panel_row(Index n) const { return n + delays - 1; }
};

/// Distances, graph, kernel, Markov matrix, kernel eigenpairs, Galerkin solve.
KoopmanAnalysis analyze(const LoadPanel& normalized, const SpectralConfig& config);

/// Spectral invariants every analysis must satisfy.
struct BasisCheck {
  double lambda1_error = 0.0;       // |lambda_1 - 1|
  double constant_deviation = 0.0;  // max |phi_1 - 1|
  double trivial_omega = 0.0;
  double trivial_energy = 0.0;
  bool energies_sorted = true;
  double pair_gamma_error = 0.0;    // max |gamma_partner - conj(gamma)|
  double pair_energy_error = 0.0;

  bool ok() const;
  std::string describe() const;
};

BasisCheck check_basis(const KoopmanAnalysis& analysis);

/// Out-of-sample evaluation of eigenfunctions from a Q-row history window.
class NystromExtension {
 public:
  NystromExtension(const Matrix& values, const DelayGraph& graph, const MarkovMatrix& markov);

  /// Normalized kernel row p(x, x_j) over the landmarks for the point whose
  /// delay window is `history` (Q rows, oldest first). Sums to one.
  Vector kernel_row(const Matrix& history) const;

  Vector extend(const KernelEigenbasis& basis, const Matrix& history) const;
  CVector extend(const KoopmanBasis& koopman, const KernelEigenbasis& basis, const Matrix& history) const;

 private:
  Matrix values_;
  DelayGraph graph_;
  Vector q_inv_sqrt_;
};

/// max_{1 <= t <= horizon} |psi(. + t) - e^{i omega t tau} psi| / |psi| over the
/// overlapping window.
double coherence_diagnostic(const CVector& psi, double omega, double tau, Index horizon);

void write_koopman_basis(const std::filesystem::path& dir, const KoopmanBasis& basis,
                         const SpectralConfig& config);

}  // namespace koopman

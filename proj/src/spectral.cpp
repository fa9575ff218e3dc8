// SPDX-License-Identifier: Apache-2.0
#include "koopman/spectral.hpp"

#include "koopman/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace koopman {

namespace {

constexpr double kUnitTolerance = 1e-10;

// Rotates c so that the largest-modulus sample of Phi c is real and positive.
void fix_phase(CVector& c, const Matrix& phi) {
  const CVector psi = phi.cast<Complex>() * c;
  Index arg = 0;
  psi.cwiseAbs().maxCoeff(&arg);
  const double mag = std::abs(psi(arg));
  if (mag > 0.0) c *= std::conj(psi(arg)) / mag;
}

}  // namespace

// --- kernel eigenpairs -----------------------------------------------------------

Matrix KernelEigenbasis::gram() const {
  const Matrix wf = weights.asDiagonal() * functions;
  return functions.transpose() * wf / static_cast<double>(samples());
}

KernelEigenbasis kernel_eigs(const MarkovMatrix& markov, Index count, double bandwidth) {
  const Index n = markov.size();
  if (count < 1 || count > n)
    throw ConfigError("kernel eigenfunction count l=" + std::to_string(count) + " must be in [1, " +
                      std::to_string(n) + "]");
  if (!(bandwidth > 0.0)) throw BandwidthError("bandwidth must be positive");

  const Matrix s = markov.symmetric_conjugate();
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success) {
    throw SolverError("symmetric eigensolver did not converge (n=" + std::to_string(n) + ")");
  }

  const Vector t = markov.conjugator();
  KernelEigenbasis basis;
  basis.bandwidth = bandwidth;
  basis.weights = markov.stationary_weights();
  basis.eigenvalues.resize(count);
  basis.functions.resize(n, count);
  const double scale = std::sqrt(t.squaredNorm());
  for (Index j = 0; j < count; ++j) {
    const Index src = n - 1 - j;  // ascending order from the solver
    basis.eigenvalues(j) = es.eigenvalues()(src);
    Vector phi = scale * (es.eigenvectors().col(src).array() / t.array()).matrix();
    Index arg = 0;
    phi.cwiseAbs().maxCoeff(&arg);
    if (phi(arg) < 0.0) phi = -phi;
    basis.functions.col(j) = phi;
  }

  // Residual check on the original (non-symmetric) problem.
  const Matrix residual = markov.P * basis.functions - basis.functions * basis.eigenvalues.asDiagonal();
  for (Index j = 0; j < count; ++j) {
    const double r = residual.col(j).norm() / std::max(1.0, basis.functions.col(j).norm());
    if (!(r < 1e-6))
      throw SolverError("eigenpair " + std::to_string(j) + " residual " + format_double(r) + " exceeds 1e-6");
  }

  basis.degenerate = count > 1 && basis.eigenvalues(1) > 1.0 - kUnitTolerance;
  basis.eta = ((basis.eigenvalues.array().inverse() - 1.0) / bandwidth).matrix();
  basis.eta(0) = 0.0;
  return basis;
}

Matrix generator_action(const Matrix& functions, double tau) {
  const Index n = functions.rows();
  if (n < 3) throw InsufficientData("generator needs at least 3 samples");
  if (!(tau > 0.0)) throw ConfigError("sample interval must be positive");
  Matrix out(n, functions.cols());
  const double h2 = 2.0 * tau;
  out.row(0) = (-3.0 * functions.row(0) + 4.0 * functions.row(1) - functions.row(2)) / h2;
  out.middleRows(1, n - 2) = (functions.bottomRows(n - 2) - functions.topRows(n - 2)) / h2;
  out.row(n - 1) = (3.0 * functions.row(n - 1) - 4.0 * functions.row(n - 2) + functions.row(n - 3)) / h2;
  return out;
}

// --- Galerkin ----------------------------------------------------------------------

GalerkinSystem galerkin_matrices(const KernelEigenbasis& basis, const Matrix& generator, double theta) {
  if (!(theta >= 0.0)) throw ConfigError("theta must be nonnegative");
  const Index l = basis.size();
  if (l < 2) throw ConfigError("Galerkin approximation needs l >= 2");
  if (generator.rows() != basis.samples() || generator.cols() != l)
    throw AlignmentError("generator action does not match the kernel basis");
  for (Index j = 1; j < l; ++j) {
    if (!(basis.eigenvalues(j) > 0.0) || !(basis.eta(j) > 0.0) || !std::isfinite(basis.eta(j)))
      throw DegenerateSpectrum("eta_" + std::to_string(j + 1) + " = " + format_double(basis.eta(j)) +
                               " (lambda = " + format_double(basis.eigenvalues(j)) +
                               "); reduce l or check graph connectivity");
  }

  const Index m = l - 1;
  const double n = static_cast<double>(basis.samples());
  const Matrix phi = basis.functions.rightCols(m);
  const Matrix weighted = basis.weights.asDiagonal() * phi;
  const Matrix v_part = weighted.transpose() * generator.rightCols(m) / n;  // <phi_i, V phi_j>
  const Matrix gram = weighted.transpose() * phi / n;                        // <phi_i, phi_j>
  const Vector inv_eta = basis.eta.tail(m).cwiseInverse();

  GalerkinSystem sys;
  // phi2_j = phi_j / eta_j and Delta phi2_j = phi_j.
  sys.A = v_part * inv_eta.asDiagonal() - theta * gram;
  sys.B = gram * inv_eta.asDiagonal();
  return sys;
}

double KoopmanBasis::frequency_hz(Index k) const { return omega(k) / (2.0 * std::numbers::pi); }

double KoopmanBasis::step_angle(Index k) const {
  return std::asin(std::clamp(omega(k) * sample_interval, -1.0, 1.0));
}

KoopmanBasis galerkin_solve(const GalerkinSystem& system, const KernelEigenbasis& basis, Index count,
                            double tau) {
  const Index l = basis.size();
  const Index m = l - 1;
  if (system.A.rows() != m || system.B.rows() != m)
    throw AlignmentError("Galerkin system does not match the kernel basis");
  if (count < 1 || count > l)
    throw ConfigError("Koopman mode count l'=" + std::to_string(count) + " must be in [1, l=" +
                      std::to_string(l) + "]");

  {
    Eigen::JacobiSVD<Matrix> svd(system.B);
    const auto& sv = svd.singularValues();
    if (sv.size() > 0 && !(sv(sv.size() - 1) > 1e-14 * sv(0)))
      throw SolverError("Galerkin matrix B is numerically singular (condition > 1e14)");
  }

  Eigen::GeneralizedEigenSolver<Matrix> ges(system.A, system.B, true);
  if (ges.info() != Eigen::Success) throw SolverError("QZ iteration did not converge");

  const Matrix gram = basis.gram();
  const Vector& eta = basis.eta;

  struct Mode {
    Complex gamma;
    CVector c;
    double energy;
  };
  std::vector<Mode> modes;
  modes.reserve(static_cast<std::size_t>(m));
  const double beta_tol = 1e-14 * std::max(1.0, system.B.cwiseAbs().maxCoeff());
  for (Index i = 0; i < m; ++i) {
    const double beta = ges.betas()(i);
    if (std::abs(beta) <= beta_tol) continue;
    const Complex gamma = ges.alphas()(i) / beta;
    if (!std::isfinite(gamma.real()) || !std::isfinite(gamma.imag())) continue;

    CVector c = CVector::Zero(l);
    // Solutions are coefficients on phi2_j = phi_j / eta_j.
    c.tail(m) = ges.eigenvectors().col(i).cwiseQuotient(eta.tail(m).cast<Complex>());
    const double norm2 = (c.adjoint() * gram.cast<Complex>() * c)(0).real();
    if (!(norm2 > 0.0)) continue;
    c /= std::sqrt(norm2);
    fix_phase(c, basis.functions);
    const double energy = (c.adjoint() * gram.cast<Complex>() * eta.asDiagonal() * c)(0).real();
    modes.push_back({gamma, std::move(c), energy});
  }
  if (static_cast<Index>(modes.size()) + 1 < count)
    throw TruncationError("only " + std::to_string(modes.size() + 1) + " finite eigenvalues, " +
                          std::to_string(count) + " requested");

  std::stable_sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
    if (a.energy != b.energy) return a.energy < b.energy;
    if (std::abs(a.gamma.imag()) != std::abs(b.gamma.imag()))
      return std::abs(a.gamma.imag()) < std::abs(b.gamma.imag());
    return a.gamma.imag() > b.gamma.imag();
  });

  // Trivial mode first, then as many nontrivial modes as fit without
  // splitting a conjugate pair.
  std::vector<Mode> kept;
  {
    CVector c = CVector::Zero(l);
    c(0) = 1.0;
    kept.push_back({Complex(0.0, 0.0), std::move(c), 0.0});
  }
  std::vector<Index> partner{0};
  std::vector<bool> used(modes.size(), false);
  for (std::size_t i = 0; i < modes.size() && static_cast<Index>(kept.size()) < count; ++i) {
    if (used[i]) continue;
    used[i] = true;
    const auto& mi = modes[i];
    if (mi.gamma.imag() == 0.0) {
      partner.push_back(static_cast<Index>(kept.size()));
      kept.push_back(mi);
      continue;
    }
    std::size_t best = modes.size();
    double best_err = 1e-6 * std::max(1.0, std::abs(mi.gamma));
    for (std::size_t j = i + 1; j < modes.size(); ++j) {
      if (used[j]) continue;
      const double err = std::abs(modes[j].gamma - std::conj(mi.gamma));
      if (err <= best_err) {
        best_err = err;
        best = j;
      }
    }
    if (best == modes.size()) continue;  // unpaired complex value: not a valid real-operator mode
    if (static_cast<Index>(kept.size()) + 2 > count) break;
    used[best] = true;
    const auto first = static_cast<Index>(kept.size());
    partner.push_back(first + 1);
    partner.push_back(first);
    kept.push_back(mi);
    kept.push_back(modes[best]);
  }

  KoopmanBasis out;
  const auto kc = static_cast<Index>(kept.size());
  out.sample_interval = tau;
  out.eigenvalues.resize(kc);
  out.omega.resize(kc);
  out.energy.resize(kc);
  out.coefficients.resize(l, kc);
  for (Index k = 0; k < kc; ++k) {
    const auto& mk = kept[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = mk.gamma;
    out.omega(k) = mk.gamma.imag();
    out.energy(k) = mk.energy;
    out.coefficients.col(k) = mk.c;
  }
  out.functions = basis.functions.cast<Complex>() * out.coefficients;
  out.partner = std::move(partner);
  return out;
}

// --- pipeline --------------------------------------------------------------------

void SpectralConfig::validate(Index samples) const {
  delay.validate(samples);
  const Index ne = samples - delay.delays + 1;
  if (ne < 3) throw ConfigError("need at least 3 embedded samples");
  if (kernel_modes < 2 || kernel_modes > ne)
    throw ConfigError("l=" + std::to_string(kernel_modes) + " must satisfy 2 <= l <= N_e=" + std::to_string(ne));
  if (koopman_modes < 1 || koopman_modes > kernel_modes)
    throw ConfigError("l'=" + std::to_string(koopman_modes) + " must satisfy 1 <= l' <= l=" +
                      std::to_string(kernel_modes));
  if (!(theta >= 0.0)) throw ConfigError("theta must be nonnegative");
}

KoopmanAnalysis analyze(const LoadPanel& normalized, const SpectralConfig& config) {
  normalized.validate();
  config.validate(normalized.samples());
  KoopmanAnalysis out;
  out.delays = config.delay.delays;
  const Matrix dist2 = pairwise_delay_distances(normalized.values, config.delay.delays);
  out.graph = build_graph(dist2, config.delay);
  out.markov = markov_normalize(kernel_matrix(out.graph));
  out.kernel = kernel_eigs(out.markov, config.kernel_modes, out.graph.bandwidth());
  if (out.kernel.degenerate)
    throw DegenerateSpectrum("repeated unit eigenvalue: the k-NN graph is disconnected; increase k_nn");
  const Matrix generator = generator_action(out.kernel.functions, normalized.sample_interval);
  const auto system = galerkin_matrices(out.kernel, generator, config.theta);
  out.koopman = galerkin_solve(system, out.kernel, config.koopman_modes, normalized.sample_interval);
  return out;
}

bool BasisCheck::ok() const {
  return lambda1_error <= 1e-8 && constant_deviation <= 1e-8 && std::abs(trivial_omega) == 0.0 &&
         trivial_energy <= 1e-8 && energies_sorted && pair_gamma_error <= 1e-6 && pair_energy_error <= 1e-6;
}

std::string BasisCheck::describe() const {
  return "lambda1 error " + format_double(lambda1_error) + ", constant deviation " + format_double(constant_deviation) +
         ", trivial omega " + format_double(trivial_omega) + ", trivial energy " + format_double(trivial_energy) +
         ", sorted " + (energies_sorted ? "yes" : "no") + ", pair gamma error " + format_double(pair_gamma_error) +
         ", pair energy error " + format_double(pair_energy_error);
}

BasisCheck check_basis(const KoopmanAnalysis& analysis) {
  BasisCheck out;
  const auto& kernel = analysis.kernel;
  const auto& koop = analysis.koopman;
  out.lambda1_error = std::abs(kernel.eigenvalues(0) - 1.0);
  out.constant_deviation = (kernel.functions.col(0).array() - 1.0).abs().maxCoeff();
  out.trivial_omega = koop.omega(0);
  out.trivial_energy = std::abs(koop.energy(0));
  for (Index k = 1; k < koop.size(); ++k)
    if (koop.energy(k) < koop.energy(k - 1) - 1e-12 * std::max(1.0, std::abs(koop.energy(k - 1))))
      out.energies_sorted = false;
  for (Index k = 0; k < koop.size(); ++k) {
    const Index p = koop.partner[static_cast<std::size_t>(k)];
    out.pair_gamma_error = std::max(out.pair_gamma_error, std::abs(koop.eigenvalues(p) - std::conj(koop.eigenvalues(k))));
    out.pair_energy_error = std::max(out.pair_energy_error, std::abs(koop.energy(p) - koop.energy(k)));
  }
  return out;
}

// --- Nystrom -------------------------------------------------------------------------

NystromExtension::NystromExtension(const Matrix& values, const DelayGraph& graph, const MarkovMatrix& markov)
    : values_(values), graph_(graph), q_inv_sqrt_(markov.q.cwiseSqrt().cwiseInverse()) {
  if (values_.rows() - graph_.config.delays + 1 != graph_.size())
    throw AlignmentError("panel length does not match the graph");
}

Vector NystromExtension::kernel_row(const Matrix& history) const {
  const Index q = graph_.config.delays;
  const Index d = values_.cols();
  if (history.rows() != q || history.cols() != d)
    throw HistoryError("history must be " + std::to_string(q) + " x " + std::to_string(d) + ", got " +
                       std::to_string(history.rows()) + " x " + std::to_string(history.cols()));
  if (!history.allFinite()) throw HistoryError("history contains non-finite values");

  const Index ne = graph_.size();
  Vector dist2(ne);
  for (Index a = 0; a < ne; ++a) dist2(a) = (values_.middleRows(a, q) - history).squaredNorm() / static_cast<double>(q);

  // A landmark at distance zero plays the role of the point itself.
  std::vector<double> sorted(dist2.data(), dist2.data() + ne);
  std::sort(sorted.begin(), sorted.end());
  const auto k = static_cast<std::size_t>(graph_.config.knn);
  const std::size_t skip = sorted.front() == 0.0 ? 1 : 0;
  const std::size_t avail = sorted.size() - skip;
  const std::size_t kk = std::min(k, avail);
  const double mean =
      kk ? std::accumulate(sorted.begin() + static_cast<std::ptrdiff_t>(skip),
                           sorted.begin() + static_cast<std::ptrdiff_t>(skip + kk), 0.0) /
               static_cast<double>(kk)
         : 0.0;
  const double radius = kk ? sorted[skip + kk - 1] : 0.0;
  const double rho = knn_density(mean, graph_.mean_floor);
  const double eps = graph_.bandwidth();

  Vector row = Vector::Zero(ne);
  double total = 0.0;
  for (Index j = 0; j < ne; ++j) {
    if (!(dist2(j) <= radius || dist2(j) <= graph_.knn_radius(j))) continue;
    const double s = graph_.scaled_dist2(dist2(j), rho, graph_.density(j));
    row(j) = std::exp(-s / eps) * q_inv_sqrt_(j);
    total += row(j);
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw IllConditioned(IllConditioned::npos, "kernel row vanishes: point is far from every landmark");
  return row / total;
}

Vector NystromExtension::extend(const KernelEigenbasis& basis, const Matrix& history) const {
  if (basis.samples() != graph_.size()) throw AlignmentError("basis does not match the landmarks");
  for (Index i = 0; i < basis.size(); ++i)
    if (!(std::abs(basis.eigenvalues(i)) > 1e-10))
      throw IllConditioned(static_cast<std::size_t>(i),
                           "eigenvalue " + std::to_string(i) + " too close to zero for extension");
  const Vector row = kernel_row(history);
  return (basis.functions.transpose() * row).cwiseQuotient(basis.eigenvalues);
}

CVector NystromExtension::extend(const KoopmanBasis& koopman, const KernelEigenbasis& basis,
                                 const Matrix& history) const {
  const Vector phi = extend(basis, history);
  return koopman.coefficients.transpose() * phi.cast<Complex>();
}

// --- diagnostics -------------------------------------------------------------------

double coherence_diagnostic(const CVector& psi, double omega, double tau, Index horizon) {
  const Index n = psi.size();
  if (horizon < 1 || horizon >= n)
    throw ConfigError("coherence horizon must satisfy 1 <= T < N_e");
  double worst = 0.0;
  for (Index t = 1; t <= horizon; ++t) {
    const Index len = n - t;
    const Complex phase = std::polar(1.0, omega * static_cast<double>(t) * tau);
    const double num = (psi.segment(t, len) - phase * psi.head(len)).norm();
    const double den = psi.head(len).norm();
    worst = std::max(worst, den > 0.0 ? num / den : 0.0);
  }
  return worst;
}

void write_koopman_basis(const std::filesystem::path& dir, const KoopmanBasis& basis,
                         const SpectralConfig& config) {
  nlohmann::ordered_json j;
  j["Q"] = config.delay.delays;
  j["l"] = config.kernel_modes;
  j["l_prime"] = config.koopman_modes;
  j["theta"] = config.theta;
  j["sample_interval"] = basis.sample_interval;
  auto gamma = nlohmann::ordered_json::array();
  auto freq = nlohmann::ordered_json::array();
  auto energy = nlohmann::ordered_json::array();
  auto pairs = nlohmann::ordered_json::array();
  for (Index k = 0; k < basis.size(); ++k) {
    gamma.push_back({basis.eigenvalues(k).real(), basis.eigenvalues(k).imag()});
    freq.push_back(basis.frequency_hz(k));
    energy.push_back(basis.energy(k));
    pairs.push_back(basis.partner[static_cast<std::size_t>(k)]);
  }
  j["gamma"] = std::move(gamma);
  j["omega_hz"] = std::move(freq);
  j["energy"] = std::move(energy);
  j["pair"] = std::move(pairs);
  write_text(dir / "koopman_basis.json", j.dump(2) + "\n");

  std::vector<std::string> header;
  Matrix values(basis.samples(), 2 * basis.size());
  for (Index k = 0; k < basis.size(); ++k) {
    header.push_back("psi" + std::to_string(k) + "_re");
    header.push_back("psi" + std::to_string(k) + "_im");
    values.col(2 * k) = basis.functions.col(k).real();
    values.col(2 * k + 1) = basis.functions.col(k).imag();
  }
  write_matrix_csv(dir / "psi.csv", header, values);
}

}  // namespace koopman

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "koopman/data_io.hpp"
#include "koopman/error.hpp"
#include "koopman/spectral.hpp"
#include "koopman/types.hpp"

#include <cmath>
#include <vector>

namespace koopman {

/// A group of realified coordinates evolving together: a 2x2 block for a
/// conjugate pair, 1x1 for a real mode.
struct ModeBlock {
  Index start = 0;
  Index size = 1;
  double omega = 0.0;  // rad/s
  double energy = 0.0;
  double angle = 0.0;  // one-step rotation, see KoopmanBasis::step_angle
};

/// Eigenfunction samples in the realified pair basis: each conjugate pair
/// (psi, conj psi) becomes (sqrt2 Re psi, sqrt2 Im psi).
struct RealBasis {
  Matrix samples;  // l' x N_e, column n is the state at embedded sample n
  std::vector<ModeBlock> blocks;
  double sample_interval = 3600.0;

  Index modes() const { return samples.rows(); }
  Index steps() const { return samples.cols(); }
};

RealBasis realify(const KoopmanBasis& basis);
/// Realified coordinates of one complex state psi (size l'), in realify() order.
Vector realify_state(const KoopmanBasis& basis, const CVector& psi);
/// Keeps the leading blocks holding at most `count` coordinates.
RealBasis truncate(const RealBasis& basis, Index count);

/// Least-squares K with samples(:, 1:) ~= K samples(:, :-1), via normal equations.
Matrix fit_evolution(const Matrix& samples);
/// Least-squares C with targets ~= C samples; targets is d x T (columns are time).
Matrix fit_decoder(const Matrix& targets, const Matrix& samples);

/// Block rotation by each pair's step angle; unit multiplier for real modes.
Matrix phase_evolution(const std::vector<ModeBlock>& blocks, Index size);

enum class Evolution { Regression, Phase };

struct ForecastModel {
  Matrix evolution;  // K_psi
  Matrix decoder;    // C, d x l'
  std::vector<ModeBlock> blocks;
  Evolution mode = Evolution::Regression;
  double sample_interval = 3600.0;
};

/// Fits K_psi (or builds the phase rotation) and C from aligned training data.
/// `targets` is the normalized panel restricted to the embedded rows (T x d).
ForecastModel fit_model(const RealBasis& basis, const Matrix& targets, Evolution mode);

/// Rolls `horizon` steps forward from `state`; row h is the decoded state
/// h + 1 steps after the origin.
Matrix forecast(const ForecastModel& model, const Vector& state, Index horizon);

/// Root mean squared difference.
template <typename A, typename B>
double rmse(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xf) {
  if (x.rows() != xf.rows() || x.cols() != xf.cols()) throw AlignmentError("rmse: size mismatch");
  if (x.size() < 1) throw AlignmentError("rmse: empty input");
  return std::sqrt((x - xf).squaredNorm() / static_cast<double>(x.size()));
}

/// Residual split into the decoded mode plane and its orthogonal complement.
struct NoiseSplit {
  Matrix modal;       // time x station
  Matrix innovation;  // time x station
};

/// eta_m(t) = C C^+ r(t), eta_i(t) = (I - C C^+) r(t); rows of `residual` are time steps.
NoiseSplit noise_split(const Matrix& residual, const Matrix& decoder);

struct BlockDiagonality {
  double off_block_fraction = 0.0;     // |K outside blocks|_F^2 / |K|_F^2
  std::vector<double> skew_deviation;  // per 2x2 block: |b + c| / (|b| + |c|)
};

BlockDiagonality block_diagonality(const Matrix& evolution, const std::vector<ModeBlock>& blocks);

}  // namespace koopman

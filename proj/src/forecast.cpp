// SPDX-License-Identifier: Apache-2.0
#include "koopman/forecast.hpp"

#include "koopman/error.hpp"

#include <Eigen/Eigenvalues>

#include <numbers>
#include <string>

namespace koopman {

namespace {

constexpr double kRidgeCondition = 1e12;
constexpr double kRidgeScale = 1e-10;

// Solves min_M |Y - M X| for M with X (p x T), Y (r x T).
Matrix normal_equations(const Matrix& X, const Matrix& Y, const char* what) {
  if (X.cols() != Y.cols()) throw AlignmentError(std::string(what) + ": column counts differ");
  const Index p = X.rows();
  Matrix gram = X * X.transpose();
  const Matrix rhs = X * Y.transpose();
  const double trace = gram.trace();
  if (!(trace > 0.0) || !std::isfinite(trace)) throw FitError(std::string(what) + ": regressors vanish");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(p - 1);
  if (!(lo > 0.0) || hi / lo > kRidgeCondition)
    gram.diagonal().array() += kRidgeScale * trace / static_cast<double>(p);

  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw FitError(std::string(what) + ": normal equations not positive definite");
  Matrix sol = llt.solve(rhs).transpose();
  if (!sol.allFinite()) throw FitError(std::string(what) + ": non-finite solution");
  return sol;
}

}  // namespace

RealBasis realify(const KoopmanBasis& basis) {
  const Index n = basis.samples();
  const double r2 = std::numbers::sqrt2;
  std::vector<Vector> rows;
  RealBasis out;
  out.sample_interval = basis.sample_interval;
  for (Index k = 0; k < basis.size(); ++k) {
    const Index p = basis.partner[static_cast<std::size_t>(k)];
    if (p < k) continue;
    ModeBlock block{static_cast<Index>(rows.size()), 1, basis.omega(k), basis.energy(k), basis.step_angle(k)};
    if (p == k) {
      rows.push_back(basis.functions.col(k).real());
    } else {
      block.size = 2;
      rows.push_back(r2 * basis.functions.col(k).real());
      rows.push_back(r2 * basis.functions.col(k).imag());
    }
    out.blocks.push_back(block);
  }
  out.samples.resize(static_cast<Index>(rows.size()), n);
  for (std::size_t i = 0; i < rows.size(); ++i) out.samples.row(static_cast<Index>(i)) = rows[i].transpose();
  return out;
}

Vector realify_state(const KoopmanBasis& basis, const CVector& psi) {
  if (psi.size() != basis.size()) throw AlignmentError("state size does not match the basis");
  std::vector<double> out;
  for (Index k = 0; k < basis.size(); ++k) {
    const Index p = basis.partner[static_cast<std::size_t>(k)];
    if (p < k) continue;
    if (p == k) {
      out.push_back(psi(k).real());
    } else {
      out.push_back(std::numbers::sqrt2 * psi(k).real());
      out.push_back(std::numbers::sqrt2 * psi(k).imag());
    }
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Index>(out.size()));
}

RealBasis truncate(const RealBasis& basis, Index count) {
  RealBasis out;
  out.sample_interval = basis.sample_interval;
  Index used = 0;
  for (const auto& b : basis.blocks) {
    if (used + b.size > count) break;
    out.blocks.push_back(b);
    used += b.size;
  }
  out.samples = basis.samples.topRows(used);
  return out;
}

Matrix fit_evolution(const Matrix& samples) {
  if (samples.cols() < samples.rows() + 1)
    throw FitError("need at least l' + 1 samples, got " + std::to_string(samples.cols()));
  const Index t = samples.cols() - 1;
  return normal_equations(samples.leftCols(t), samples.rightCols(t), "fit_evolution");
}

Matrix fit_decoder(const Matrix& targets, const Matrix& samples) {
  return normal_equations(samples, targets, "fit_decoder");
}

Matrix phase_evolution(const std::vector<ModeBlock>& blocks, Index size) {
  Matrix K = Matrix::Zero(size, size);
  for (const auto& b : blocks) {
    if (b.size == 1) {
      K(b.start, b.start) = 1.0;
      continue;
    }
    const double c = std::cos(b.angle);
    const double s = std::sin(b.angle);
    K.block<2, 2>(b.start, b.start) << c, -s, s, c;
  }
  return K;
}

ForecastModel fit_model(const RealBasis& basis, const Matrix& targets, Evolution mode) {
  if (targets.rows() != basis.steps())
    throw AlignmentError("training panel has " + std::to_string(targets.rows()) + " rows, basis has " +
                         std::to_string(basis.steps()) + " samples");
  ForecastModel model;
  model.blocks = basis.blocks;
  model.mode = mode;
  model.sample_interval = basis.sample_interval;
  model.evolution = mode == Evolution::Regression
                        ? fit_evolution(basis.samples)
                        : phase_evolution(basis.blocks, basis.modes());
  model.decoder = fit_decoder(targets.transpose(), basis.samples);
  return model;
}

Matrix forecast(const ForecastModel& model, const Vector& state, Index horizon) {
  if (horizon <= 0) throw ConfigError("forecast horizon must be positive");
  if (state.size() != model.evolution.rows()) throw AlignmentError("state size does not match the model");
  Matrix out(horizon, model.decoder.rows());
  Vector s = state;
  for (Index h = 0; h < horizon; ++h) {
    s = model.evolution * s;
    if (!s.allFinite()) throw DivergenceError(static_cast<std::size_t>(h + 1));
    out.row(h) = (model.decoder * s).transpose();
  }
  return out;
}

NoiseSplit noise_split(const Matrix& residual, const Matrix& decoder) {
  if (residual.cols() != decoder.rows())
    throw AlignmentError("residual has " + std::to_string(residual.cols()) + " stations, decoder has " +
                         std::to_string(decoder.rows()));
  const Matrix pinv = decoder.completeOrthogonalDecomposition().pseudoInverse();
  const Matrix projector = decoder * pinv;
  NoiseSplit out;
  out.modal = residual * projector.transpose();
  out.innovation = residual - out.modal;
  return out;
}

BlockDiagonality block_diagonality(const Matrix& evolution, const std::vector<ModeBlock>& blocks) {
  BlockDiagonality out;
  const double total = evolution.squaredNorm();
  double inside = 0.0;
  for (const auto& b : blocks) {
    if (b.start + b.size > evolution.rows()) break;
    const auto blk = evolution.block(b.start, b.start, b.size, b.size);
    inside += blk.squaredNorm();
    if (b.size == 2) {
      const double denom = std::abs(blk(0, 1)) + std::abs(blk(1, 0));
      out.skew_deviation.push_back(denom > 0.0 ? std::abs(blk(0, 1) + blk(1, 0)) / denom : 0.0);
    }
  }
  out.off_block_fraction = total > 0.0 ? std::max(0.0, total - inside) / total : 0.0;
  return out;
}

}  // namespace koopman

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "koopman/data_io.hpp"
#include "koopman/spectral.hpp"
#include "koopman/types.hpp"

#include <filesystem>
#include <vector>

namespace koopman {

/// Koopman modes of the panel observable.
///
/// lags[k] is Q x d; row q holds A_k(q tau) = mean_n conj(psi_k(n)) x_{n-q}.
/// Embedded sample n is aligned with panel row n + offset, where offset is
/// the number of panel rows preceding the first embedded sample.
struct ModeProjection {
  std::vector<CMatrix> lags;
  Index offset = 0;
  Index delays = 1;

  Index modes() const { return static_cast<Index>(lags.size()); }
  /// |A_k(0)| per station.
  Vector spatial(Index k) const { return lags[static_cast<std::size_t>(k)].row(0).cwiseAbs().transpose(); }
};

/// `panel` holds N >= N_e rows; its last N_e rows line up with the basis samples.
ModeProjection project_modes(const LoadPanel& panel, const KoopmanBasis& basis, Index delays);

/// Sum over `modes` of x_n^(k) = (1/Q') sum_{q<Q'} A_k(q tau) psi_k(n + q), with
/// Q' = min(Q, N_e - n). Returns the N_e aligned rows; the input panel supplies
/// timestamps and station ids.
LoadPanel reconstruct(const ModeProjection& projection, const KoopmanBasis& basis,
                      const std::vector<Index>& modes, const LoadPanel& panel);

struct PowerSpectrum {
  Vector frequency_hz;  // ascending, two-sided
  Vector power;         // sums to one
  double bin_width = 0.0;
};

PowerSpectrum mode_power_spectrum(const KoopmanBasis& basis, Index k);

/// Fraction of power within `bins` bins of the mode's own frequency.
double band_power_fraction(const PowerSpectrum& spectrum, double frequency_hz, Index bins);

/// modes.csv, temporal_<k>.csv and spectrum_<k>.csv for every mode.
void write_mode_artifacts(const std::filesystem::path& dir, const ModeProjection& projection,
                          const KoopmanBasis& basis, const LoadPanel& panel);

}  // namespace koopman

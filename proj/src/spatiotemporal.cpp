// SPDX-License-Identifier: Apache-2.0
#include "koopman/spatiotemporal.hpp"

#include "koopman/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <numeric>
#include <sstream>
#include <string>

namespace koopman {

namespace {
constexpr double kImaginaryTolerance = 1e-8;
}

ModeProjection project_modes(const LoadPanel& panel, const KoopmanBasis& basis, Index delays) {
  const Index ne = basis.samples();
  const Index n = panel.samples();
  if (delays < 1) throw ConfigError("delays must be >= 1");
  if (n < ne) throw AlignmentError("panel has " + std::to_string(n) + " rows but the basis has " +
                                   std::to_string(ne) + " samples");
  ModeProjection out;
  out.offset = n - ne;
  out.delays = delays;
  out.lags.reserve(static_cast<std::size_t>(basis.size()));
  const CMatrix x = panel.values.cast<Complex>();
  for (Index k = 0; k < basis.size(); ++k) {
    const CVector psi = basis.functions.col(k).conjugate();
    CMatrix a(delays, panel.stations());
    for (Index q = 0; q < delays; ++q) {
      // panel row of x_{n-q} is n + offset - q
      const Index first = std::max<Index>(0, q - out.offset);
      const Index count = ne - first;
      if (count <= 0) {
        a.row(q).setZero();
        continue;
      }
      a.row(q) = psi.segment(first, count).transpose() * x.middleRows(first + out.offset - q, count) /
                 static_cast<double>(count);
    }
    out.lags.push_back(std::move(a));
  }
  return out;
}

LoadPanel reconstruct(const ModeProjection& projection, const KoopmanBasis& basis,
                      const std::vector<Index>& modes, const LoadPanel& panel) {
  const Index ne = basis.samples();
  const Index d = panel.stations();
  if (projection.modes() != basis.size()) throw AlignmentError("projection and basis disagree on mode count");
  for (Index k : modes) {
    if (k < 0 || k >= basis.size()) throw RangeError("mode index " + std::to_string(k) + " out of range");
    const Index p = basis.partner[static_cast<std::size_t>(k)];
    if (std::find(modes.begin(), modes.end(), p) == modes.end())
      throw PairingError("mode " + std::to_string(k) + " needs its conjugate partner " + std::to_string(p));
  }

  CMatrix sum = CMatrix::Zero(ne, d);
  for (Index k : modes) {
    const CMatrix& a = projection.lags[static_cast<std::size_t>(k)];
    const auto psi = basis.functions.col(k);
    for (Index n = 0; n < ne; ++n) {
      const Index qp = std::min(projection.delays, ne - n);
      sum.row(n) += (psi.segment(n, qp).transpose() * a.topRows(qp)) / static_cast<double>(qp);
    }
  }
  const double norm = sum.norm();
  const double residue = sum.imag().norm();
  if (residue > kImaginaryTolerance * std::max(norm, 1e-300) && residue > 0.0)
    throw PairingError("reconstruction has imaginary residue " + std::to_string(residue / norm));

  LoadPanel out;
  out.values = sum.real();
  out.sample_interval = panel.sample_interval;
  out.station_ids = panel.station_ids;
  out.start_timestamp = panel.timestamp(projection.offset);
  return out;
}

PowerSpectrum mode_power_spectrum(const KoopmanBasis& basis, Index k) {
  const Index n = basis.samples();
  if (n < 8) throw InsufficientData("power spectrum needs at least 8 samples");
  std::vector<Complex> in(basis.functions.col(k).data(), basis.functions.col(k).data() + n);
  std::vector<Complex> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, in);

  const double width = 1.0 / (static_cast<double>(n) * basis.sample_interval);
  PowerSpectrum out;
  out.bin_width = width;
  out.frequency_hz.resize(n);
  out.power.resize(n);
  // negative frequencies first
  const Index neg = n / 2;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Index bin = (i + n - neg) % n;
    const Index signed_bin = bin > (n - 1) / 2 ? bin - n : bin;
    out.frequency_hz(i) = static_cast<double>(signed_bin) * width;
    out.power(i) = std::norm(spec[static_cast<std::size_t>(bin)]);
    total += out.power(i);
  }
  if (total > 0.0) out.power /= total;
  return out;
}

double band_power_fraction(const PowerSpectrum& spectrum, double frequency_hz, Index bins) {
  double sum = 0.0;
  const double reach = (static_cast<double>(bins) + 0.5) * spectrum.bin_width;
  for (Index i = 0; i < spectrum.power.size(); ++i)
    if (std::abs(spectrum.frequency_hz(i) - frequency_hz) <= reach) sum += spectrum.power(i);
  return sum;
}

void write_mode_artifacts(const std::filesystem::path& dir, const ModeProjection& projection,
                          const KoopmanBasis& basis, const LoadPanel& panel) {
  std::vector<std::string> header{"mode", "omega_hz", "energy"};
  for (const auto& id : panel.station_ids) header.push_back(id);
  Matrix modes(basis.size(), 3 + panel.stations());
  for (Index k = 0; k < basis.size(); ++k) {
    modes(k, 0) = static_cast<double>(k);
    modes(k, 1) = basis.frequency_hz(k);
    modes(k, 2) = basis.energy(k);
    modes.row(k).tail(panel.stations()) = projection.spatial(k).transpose();
  }
  write_matrix_csv(dir / "modes.csv", header, modes);

  for (Index k = 0; k < basis.size(); ++k) {
    Matrix temporal(basis.samples(), 3);
    for (Index n = 0; n < basis.samples(); ++n) {
      temporal(n, 0) = panel.timestamp(n + projection.offset);
      temporal(n, 1) = basis.functions(n, k).real();
      temporal(n, 2) = basis.functions(n, k).imag();
    }
    write_matrix_csv(dir / ("temporal_" + std::to_string(k) + ".csv"), {"time", "re", "im"}, temporal);

    const auto spec = mode_power_spectrum(basis, k);
    Matrix table(spec.power.size(), 2);
    table.col(0) = spec.frequency_hz;
    table.col(1) = spec.power;
    write_matrix_csv(dir / ("spectrum_" + std::to_string(k) + ".csv"), {"freq_hz", "power"}, table);
  }
}

}  // namespace koopman

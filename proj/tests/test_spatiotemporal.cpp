#include "koopman/error.hpp"
#include "koopman/spatiotemporal.hpp"
#include "koopman/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace koopman;

namespace {

constexpr double kPi = std::numbers::pi;

// Basis of the constant mode and one exponential pair at `period` samples.
KoopmanBasis exponential_basis(Index n, double period) {
  KoopmanBasis b;
  b.sample_interval = 3600.0;
  const double w = 2 * kPi / period;
  b.functions.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    b.functions(i, 0) = 1.0;
    b.functions(i, 1) = std::polar(1.0, w * static_cast<double>(i));
    b.functions(i, 2) = std::conj(b.functions(i, 1));
  }
  b.omega = Vector(3);
  b.omega << 0.0, w / b.sample_interval, -w / b.sample_interval;
  b.eigenvalues = b.omega.cast<Complex>() * Complex(0.0, 1.0);
  b.energy = Vector::Zero(3);
  b.partner = {0, 2, 1};
  return b;
}

LoadPanel cosine_panel(Index n, double period, double amplitude, double mean) {
  LoadPanel p;
  p.values.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    p.values(i, 0) = mean + amplitude * std::cos(2 * kPi * static_cast<double>(i) / period);
    p.values(i, 1) = mean;
  }
  p.station_ids = {"a", "b"};
  return p;
}

}  // namespace

TEST_CASE("projection onto the constant mode gives column means") {
  const Index n = 240;
  const auto p = cosine_panel(n, 24.0, 0.3, 0.5);
  const auto b = exponential_basis(n, 24.0);
  const auto proj = project_modes(p, b, 1);
  CHECK(proj.offset == 0);
  const Vector means = p.values.colwise().mean();
  CHECK(std::abs(proj.lags[0](0, 0) - means(0)) < 1e-12);
  CHECK(std::abs(proj.lags[0](0, 1) - means(1)) < 1e-12);
}

TEST_CASE("projection of a cosine onto its exponential") {
  const Index n = 240;  // whole number of periods
  const auto p = cosine_panel(n, 24.0, 0.3, 0.5);
  const auto b = exponential_basis(n, 24.0);
  const auto proj = project_modes(p, b, 5);
  CHECK(std::abs(std::abs(proj.lags[1](0, 0)) - 0.15) < 1e-3);
  CHECK(std::abs(proj.lags[1](0, 1)) < 1e-12);
  // conjugate modes have conjugate A_k at every lag
  CHECK((proj.lags[2] - proj.lags[1].conjugate()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(proj.spatial(1)(0) == doctest::Approx(0.15).epsilon(1e-3));
}

TEST_CASE("zero panel has zero modes") {
  LoadPanel p;
  p.values = Matrix::Zero(100, 3);
  p.station_ids = {"a", "b", "c"};
  const auto proj = project_modes(p, exponential_basis(100, 24.0), 4);
  for (const auto& a : proj.lags) CHECK(a.isZero());
}

TEST_CASE("reconstruction examples") {
  const Index n = 240;
  const auto p = cosine_panel(n, 24.0, 0.3, 0.5);
  const auto b = exponential_basis(n, 24.0);
  const auto proj = project_modes(p, b, 1);

  const auto mean = reconstruct(proj, b, {0}, p);
  CHECK((mean.values.col(0).array() - p.values.col(0).mean()).abs().maxCoeff() < 1e-12);

  CHECK(reconstruct(proj, b, {}, p).values.isZero());

  const auto full = reconstruct(proj, b, {0, 1, 2}, p);
  CHECK((full.values - p.values).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(full.station_ids == p.station_ids);

  CHECK_THROWS_AS(reconstruct(proj, b, {0, 1}, p), PairingError);
  CHECK_THROWS_AS(reconstruct(proj, b, {7}, p), RangeError);
}

TEST_CASE("reconstruction with lags on a longer panel") {
  // The panel carries Q - 1 extra leading rows, as after delay embedding.
  const Index q = 12;
  const Index ne = 240;
  const auto p = cosine_panel(ne + q - 1, 24.0, 0.3, 0.5);
  const auto b = exponential_basis(ne, 24.0);
  const auto proj = project_modes(p, b, q);
  CHECK(proj.offset == q - 1);
  const auto r = reconstruct(proj, b, {0, 1, 2}, p);
  CHECK(r.samples() == ne);
  CHECK(r.start_timestamp == p.timestamp(q - 1));
  CHECK((r.values - p.values.bottomRows(ne)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("projection rejects a short panel") {
  const auto p = cosine_panel(50, 24.0, 0.3, 0.5);
  CHECK_THROWS_AS(project_modes(p, exponential_basis(60, 24.0), 1), AlignmentError);
}

TEST_CASE("power spectra") {
  const Index n = 24 * 14;
  const auto b = exponential_basis(n, 24.0);
  const auto flat = mode_power_spectrum(b, 0);
  CHECK(flat.power.sum() == doctest::Approx(1.0));
  Index arg = 0;
  flat.power.maxCoeff(&arg);
  CHECK(flat.frequency_hz(arg) == 0.0);
  CHECK(flat.power(arg) == doctest::Approx(1.0));

  const auto daily = mode_power_spectrum(b, 1);
  daily.power.maxCoeff(&arg);
  CHECK(std::abs(daily.frequency_hz(arg) - 1.0 / 86400.0) <= daily.bin_width);
  CHECK(band_power_fraction(daily, 1.0 / 86400.0, 0) == doctest::Approx(1.0));
  const auto neg = mode_power_spectrum(b, 2);
  neg.power.maxCoeff(&arg);
  CHECK(neg.frequency_hz(arg) < 0.0);
  for (Index i = 1; i < daily.frequency_hz.size(); ++i) CHECK(daily.frequency_hz(i) > daily.frequency_hz(i - 1));

  // off-grid frequency still peaks within one bin
  const auto odd = exponential_basis(n, 23.3);
  const auto s = mode_power_spectrum(odd, 1);
  s.power.maxCoeff(&arg);
  CHECK(std::abs(s.frequency_hz(arg) - 1.0 / (23.3 * 3600.0)) <= s.bin_width);
}

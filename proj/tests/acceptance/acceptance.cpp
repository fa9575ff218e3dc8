// Acceptance checks on synthetic panels. Prints one PASS/FAIL line per
// criterion and exits nonzero if any fails.

#include "koopman/error.hpp"
#include "koopman/forecast.hpp"
#include "koopman/phate.hpp"
#include "koopman/spatiotemporal.hpp"
#include "koopman/spectral.hpp"
#include "koopman/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace koopman;

namespace {

// Pinned tolerances.
constexpr double kFrequencyTolerance = 0.02;
constexpr double kRuntimeLimit = 60.0;  // seconds
constexpr double kUnitTolerance = 1e-8;
constexpr double kTrivialEnergy = 1e-8;
constexpr double kPairTolerance = 1e-6;
constexpr double kReconstructionRmse = 0.05;
constexpr double kNoiselessForecastRmse = 0.02;
constexpr double kNoisyForecastRmse = 0.1;
constexpr double kInnovationRatio = 2.0;
constexpr double kSplitExactness = 1e-12;
constexpr double kSplitOrthogonality = 1e-10;
constexpr double kMinAri = 0.9;
constexpr double kDenseMatch = 1e-12;
constexpr double kNystromRelative = 1e-6;

constexpr double kDaily = 1.0 / 86400.0;
constexpr double kWeekly = 1.0 / 604800.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Every analysis run here also feeds criteria 2 and 3.
std::vector<BasisCheck> g_checks;

KoopmanAnalysis run_analysis(const LoadPanel& normalized, const SpectralConfig& config) {
  auto a = analyze(normalized, config);
  g_checks.push_back(check_basis(a));
  return a;
}

SpectralConfig operating_point() {
  SpectralConfig c;
  c.delay.delays = 168;
  c.delay.knn = 30;
  c.kernel_modes = 100;
  c.koopman_modes = 50;
  c.theta = 1e-9;
  return c;
}

double nearest_ratio(const KoopmanBasis& k, double target) {
  double best = 1e300;
  for (Index i = 0; i < k.size(); ++i) best = std::min(best, std::abs(std::abs(k.frequency_hz(i)) / target - 1.0));
  return best;
}

Outcome frequency_recovery() {
  SynthConfig s;  // daily and weekly tones
  s.samples = 1344;
  s.stations = 10;
  s.noise = 0.05;
  const auto panel = minmax_normalize(synthesize(s).panel).panel;
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = run_analysis(panel, operating_point());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double daily = nearest_ratio(a.koopman, kDaily);
  const double weekly = nearest_ratio(a.koopman, kWeekly);
  return {daily <= kFrequencyTolerance && weekly <= kFrequencyTolerance && secs < kRuntimeLimit,
          "daily rel. error " + fmt(daily) + ", weekly rel. error " + fmt(weekly) + ", runtime " + fmt(secs) + " s"};
}

Outcome trivial_mode() {
  bool ok = !g_checks.empty();
  double lambda = 0.0, constant = 0.0, omega = 0.0, energy = 0.0;
  bool sorted = true;
  for (const auto& c : g_checks) {
    lambda = std::max(lambda, c.lambda1_error);
    constant = std::max(constant, c.constant_deviation);
    omega = std::max(omega, std::abs(c.trivial_omega));
    energy = std::max(energy, c.trivial_energy);
    sorted = sorted && c.energies_sorted;
  }
  ok = ok && lambda <= kUnitTolerance && constant <= kUnitTolerance && omega == 0.0 && energy <= kTrivialEnergy &&
       sorted;
  return {ok, std::to_string(g_checks.size()) + " analyses; max |lambda1-1| " + fmt(lambda) + ", max |phi1-1| " +
                  fmt(constant) + ", max |omega0| " + fmt(omega) + ", max E0 " + fmt(energy) +
                  (sorted ? ", energies sorted" : ", energies NOT sorted")};
}

Outcome pair_symmetry() {
  double gamma = 0.0, energy = 0.0;
  for (const auto& c : g_checks) {
    gamma = std::max(gamma, c.pair_gamma_error);
    energy = std::max(energy, c.pair_energy_error);
  }
  return {!g_checks.empty() && gamma <= kPairTolerance && energy <= kPairTolerance,
          std::to_string(g_checks.size()) + " analyses; max |gamma' - conj(gamma)| " + fmt(gamma) +
              ", max energy mismatch " + fmt(energy)};
}

Outcome reconstruction() {
  SynthConfig s;
  s.samples = 1344;
  s.stations = 10;
  s.noise = 0.05;
  s.families = {Family{{Tone{168, 1.0}, Tone{84, 0.6}, Tone{56, 0.4}}, 0.0}};
  const auto syn = synthesize(s);
  const auto norm = minmax_normalize(syn.panel);
  const auto a = run_analysis(norm.panel, operating_point());

  // Leading eight entries by energy, minus a trailing partner-less one.
  std::vector<Index> modes;
  for (Index k = 0; k < std::min<Index>(8, a.koopman.size()); ++k) modes.push_back(k);
  while (!modes.empty() && a.koopman.partner[static_cast<std::size_t>(modes.back())] > modes.back()) modes.pop_back();

  const auto projection = project_modes(norm.panel, a.koopman, a.delays);
  const auto rec = reconstruct(projection, a.koopman, modes, norm.panel);
  LoadPanel clean = syn.panel;
  clean.values = syn.clean;
  const Matrix truth = normalize_with(clean, norm.stats).values.bottomRows(rec.samples());
  double worst = 0.0;
  for (Index st = 0; st < truth.cols(); ++st) worst = std::max(worst, rmse(truth.col(st), rec.values.col(st)));
  return {worst < kReconstructionRmse,
          std::to_string(modes.size()) + " modes; worst station RMSE vs clean signal " + fmt(worst)};
}

Outcome block_trend() {
  std::vector<double> off, coherence;
  for (Index q : {100, 500, 1000}) {
    SynthConfig s;
    s.samples = 1000 + q - 1;  // same number of embedded samples for every Q
    s.stations = 10;
    s.noise = 0.3;
    s.families = {Family{{Tone{24.0, 1.0}, Tone{37.3, 0.7}}, 0.0}};
    const auto panel = minmax_normalize(synthesize(s).panel).panel;
    auto cfg = operating_point();
    cfg.delay.delays = q;
    const auto a = run_analysis(panel, cfg);
    const auto rb = realify(a.koopman);
    off.push_back(block_diagonality(fit_evolution(rb.samples), rb.blocks).off_block_fraction);
    double sum = 0.0;
    Index count = 0;
    for (Index k = 1; k < std::min<Index>(a.koopman.size(), 11); ++k) {
      const double w = a.koopman.step_angle(k) / a.koopman.sample_interval;
      sum += coherence_diagnostic(a.koopman.functions.col(k), w, a.koopman.sample_interval, 24);
      ++count;
    }
    coherence.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }
  const bool ok = off[1] < off[0] && off[2] < off[1] && coherence[1] < coherence[0] && coherence[2] < coherence[1];
  return {ok, "off-block fraction " + fmt(off[0]) + " > " + fmt(off[1]) + " > " + fmt(off[2]) +
                  "; mean coherence residual " + fmt(coherence[0]) + " > " + fmt(coherence[1]) + " > " +
                  fmt(coherence[2])};
}

struct ForecastRun {
  double rmse = 0.0;
  double innovation = 0.0;
  double injected = 0.0;
};

// Fits on rows [0, 1344) and forecasts the following 168 rows.
ForecastRun week_ahead(const SynthConfig& s, Index koopman_modes) {
  const auto syn = synthesize(s);
  const auto sr = split(syn.panel, {{0, 1344}, {1344, 1512}});
  auto cfg = operating_point();
  cfg.koopman_modes = koopman_modes;
  const auto a = run_analysis(sr.train, cfg);
  const auto rb = realify(a.koopman);
  const auto model = fit_model(rb, sr.train.values.bottomRows(rb.steps()), Evolution::Regression);
  const Matrix fc = forecast(model, rb.samples.col(rb.steps() - 1), 168);
  const Matrix residual = sr.test.values - fc;
  Matrix injected = syn.noise.bottomRows(168);
  for (Index c = 0; c < injected.cols(); ++c)
    if (!sr.stats.constant[static_cast<std::size_t>(c)]) injected.col(c) /= sr.stats.max(c) - sr.stats.min(c);
  return {rmse(sr.test.values, fc), noise_split(residual, model.decoder).innovation.norm(), injected.norm()};
}

Outcome forecast_oracle() {
  SynthConfig clean;
  clean.samples = 1512;
  clean.stations = 10;
  const auto a = week_ahead(clean, 50);

  // More stations than modes, so the innovation plane is not empty.
  SynthConfig noisy = clean;
  noisy.stations = 200;
  noisy.noise = 0.05;
  const auto b = week_ahead(noisy, 50);
  const double ratio = b.innovation / b.injected;
  const bool ok = a.rmse < kNoiselessForecastRmse && b.rmse < kNoisyForecastRmse && ratio <= kInnovationRatio &&
                  ratio >= 1.0 / kInnovationRatio;
  return {ok, "noiseless RMSE " + fmt(a.rmse) + "; 5% noise RMSE " + fmt(b.rmse) + ", innovation/injected norm " +
                  fmt(b.innovation) + "/" + fmt(b.injected) + " = " + fmt(ratio)};
}

Outcome noise_exactness() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  auto random = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = g(rng);
    return m;
  };
  double sum_err = 0.0, orth = 0.0;
  for (auto [d, l] : std::vector<std::pair<Index, Index>>{{10, 3}, {50, 21}, {200, 49}, {8, 12}}) {
    const Matrix C = random(d, l);
    const Matrix r = random(168, d);
    const auto ns = noise_split(r, C);
    sum_err = std::max(sum_err, (ns.modal + ns.innovation - r).cwiseAbs().maxCoeff());
    for (Index t = 0; t < r.rows(); ++t) orth = std::max(orth, std::abs(ns.modal.row(t).dot(ns.innovation.row(t))));
  }
  return {sum_err <= kSplitExactness && orth <= kSplitOrthogonality,
          "max |eta_m + eta_i - r| " + fmt(sum_err) + ", max per-step |<eta_m, eta_i>| " + fmt(orth)};
}

Outcome innovation_trend() {
  SynthConfig s;
  s.samples = 1512;
  s.stations = 80;
  s.amplitude_jitter = 0.5;
  s.phase_jitter = 1.5;
  s.families.clear();
  for (int f = 0; f < 3; ++f) {
    Family fam;
    fam.phase = f;
    for (int j : {1, 2, 3, 4, 5, 6, 7, 14, 21}) fam.tones.push_back(Tone{168.0 / j, 1.0 / (1.0 + 0.3 * j)});
    s.families.push_back(fam);
  }
  std::vector<double> norms;
  std::string detail = "innovation norm for l' = 5, 10, 20, 50:";
  for (Index l : {5, 10, 20, 50}) {
    norms.push_back(week_ahead(s, l).innovation);
    detail += " " + fmt(norms.back());
  }
  bool ok = true;
  for (std::size_t i = 1; i < norms.size(); ++i) ok = ok && norms[i] < norms[i - 1];
  return {ok, detail};
}

Outcome clustering() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1u, 2u, 3u, 7u}) {
    SynthConfig s;
    s.samples = 1344;
    s.stations = 30;
    s.noise = 0.05;
    s.seed = seed;
    s.families = {Family{{Tone{24, 1}, Tone{168, 0.5}}, 0.0}, Family{{Tone{24, 1}, Tone{12, 0.6}}, 2.0},
                  Family{{Tone{168, 1}, Tone{8, 0.4}}, 4.0}};
    const auto syn = synthesize(s);
    PhateConfig pc;
    pc.clusters = 3;
    const auto e = phate_cluster(syn.panel, pc);
    const auto again = phate_cluster(syn.panel, pc);
    const double ari = adjusted_rand_index(e.labels, syn.family);
    bool monotone = true;
    for (std::size_t i = 1; i < e.stress_history.size(); ++i) monotone = monotone && e.stress_history[i] <= e.stress_history[i - 1];
    const bool same = again.labels == e.labels && again.coordinates == e.coordinates;
    ok = ok && ari >= kMinAri && monotone && same;
    detail += (detail.empty() ? "" : "; ") + std::string("panel seed ") + std::to_string(seed) + ": ARI " + fmt(ari) +
              (monotone ? ", stress nonincreasing" : ", stress INCREASED") + (same ? ", repeatable" : ", NOT repeatable");
  }
  return {ok, detail};
}

Outcome brute_force() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.05);
  const Index n = 50, d = 3, q = 4;
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = 0.5 + 0.4 * std::sin(0.3 * static_cast<double>(i) + 2.0 * j) + g(rng);
  const Index ne = n - q + 1;
  DelayConfig dc{q, ne - 1};
  const auto graph = build_graph(pairwise_delay_distances(x, q), dc);
  const auto markov = markov_normalize(kernel_matrix(graph));

  // Dense evaluation straight from the delay vectors.
  Matrix dist2(ne, ne);
  for (Index i = 0; i < ne; ++i)
    for (Index j = 0; j < ne; ++j) {
      double s = 0.0;
      for (Index k = 0; k < q; ++k) s += (x.row(i + q - 1 - k) - x.row(j + q - 1 - k)).squaredNorm();
      dist2(i, j) = s / static_cast<double>(q);
    }
  Vector rho(ne);
  for (Index i = 0; i < ne; ++i) rho(i) = static_cast<double>(ne - 1) / dist2.row(i).sum();
  const double eps = graph.epsilon0;
  Matrix K(ne, ne);
  for (Index i = 0; i < ne; ++i)
    for (Index j = 0; j < ne; ++j) K(i, j) = std::exp(-dist2(i, j) * std::sqrt(rho(i) * rho(j)) / eps);
  const Vector qv = K.rowwise().sum();
  const Vector qis = qv.cwiseSqrt().cwiseInverse();
  const Vector D = K * qis;
  Matrix P(ne, ne);
  for (Index i = 0; i < ne; ++i)
    for (Index j = 0; j < ne; ++j) P(i, j) = K(i, j) * qis(j) / D(i);

  const double k_err = (Matrix(kernel_matrix(graph)) - K).cwiseAbs().maxCoeff();
  const double p_err = (Matrix(markov.P) - P).cwiseAbs().maxCoeff();

  const auto basis = kernel_eigs(markov, 20, graph.bandwidth());
  const NystromExtension ext(x, graph, markov);
  double worst = 0.0;
  Index used = 0;
  for (Index j = 0; j < basis.size(); ++j)
    if (std::abs(basis.eigenvalues(j)) > 1e-6) ++used;
  const auto trimmed = [&] {
    KernelEigenbasis b = basis;
    b.eigenvalues = basis.eigenvalues.head(used);
    b.functions = basis.functions.leftCols(used);
    b.eta = basis.eta.head(used);
    return b;
  }();
  Matrix extended(ne, used);
  for (Index i = 0; i < ne; ++i) extended.row(i) = ext.extend(trimmed, x.middleRows(i, q)).transpose();
  for (Index j = 0; j < used; ++j)
    worst = std::max(worst, (extended.col(j) - trimmed.functions.col(j)).cwiseAbs().maxCoeff() /
                                trimmed.functions.col(j).cwiseAbs().maxCoeff());
  return {k_err <= kDenseMatch && p_err <= kDenseMatch && worst <= kNystromRelative,
          "N=50, Q=4, full k_nn: max |K - K_dense| " + fmt(k_err) + ", max |P - P_dense| " + fmt(p_err) +
              "; Nystrom at landmarks, " + std::to_string(used) + " eigenfunctions, max rel. error " + fmt(worst)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  // 2 and 3 summarize the analyses of every other criterion, so they run last.
  const std::vector<Criterion> order{
      {1, "frequency recovery", frequency_recovery},
      {4, "reconstruction", reconstruction},
      {5, "block-diagonality trend", block_trend},
      {6, "forecast oracle", forecast_oracle},
      {7, "noise decomposition exactness", noise_exactness},
      {8, "innovation-noise trend", innovation_trend},
      {9, "clustering", clustering},
      {10, "brute-force equivalence", brute_force},
      {2, "trivial-mode invariants", trivial_mode},
      {3, "conjugate-pair symmetry", pair_symmetry},
  };
  std::vector<std::pair<int, std::string>> lines;
  int failures = 0;
  for (const auto& c : order) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    lines.emplace_back(c.id, std::string(o.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + " (" +
                                 c.name + "): " + o.detail);
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& [id, text] : lines) std::printf("%s\n", text.c_str());
  return failures == 0 ? 0 : 1;
}

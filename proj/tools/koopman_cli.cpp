// SPDX-License-Identifier: Apache-2.0
// koopman: command line front end for the load-dynamics pipeline.

#include "koopman/error.hpp"
#include "koopman/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

using namespace koopman;

// Flag values that, when given, override the config file.
struct Overrides {
  std::optional<std::string> input, out, evolution, clusters, bandwidth_mode, forecast_dir, truth, train, test;
  std::optional<Index> delays, knn, kernel_modes, koopman_modes, horizon, k, m, t_max, phate_knn;
  std::optional<double> theta, alpha, epsilon_scale, noise;
  std::optional<std::uint64_t> seed, synth_seed;
  std::optional<Index> samples, stations;
  bool reanchor = false;
};

IndexRange parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("range '" + text + "' must look like begin:end");
  try {
    return {std::stoll(text.substr(0, colon)), std::stoll(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ConfigError("range '" + text + "' must look like begin:end");
  }
}

void apply(const Overrides& o, PipelineConfig& c) {
  if (o.input) c.input = *o.input;
  if (o.out) c.output = *o.out;
  if (o.delays) c.spectral.delay.delays = *o.delays;
  if (o.knn) c.spectral.delay.knn = *o.knn;
  if (o.kernel_modes) c.spectral.kernel_modes = *o.kernel_modes;
  if (o.koopman_modes) c.spectral.koopman_modes = *o.koopman_modes;
  if (o.theta) c.spectral.theta = *o.theta;
  if (o.alpha) c.spectral.delay.alpha = *o.alpha;
  if (o.epsilon_scale) c.spectral.delay.epsilon_scale = *o.epsilon_scale;
  if (o.bandwidth_mode) {
    if (*o.bandwidth_mode == "variable") c.spectral.delay.mode = BandwidthMode::Variable;
    else if (*o.bandwidth_mode == "fixed") c.spectral.delay.mode = BandwidthMode::Fixed;
    else throw ConfigError("--bandwidth-mode must be variable or fixed");
  }
  if (o.horizon) c.forecast.horizon = *o.horizon;
  if (o.evolution) {
    if (*o.evolution == "regression") c.forecast.evolution = Evolution::Regression;
    else if (*o.evolution == "phase") c.forecast.evolution = Evolution::Phase;
    else throw ConfigError("--evolution must be regression or phase");
  }
  if (o.reanchor) c.forecast.reanchor = true;
  if (o.clusters) c.forecast.clusters = *o.clusters;
  if (o.k) c.phate.clusters = *o.k;
  if (o.m) c.phate.dimensions = *o.m;
  if (o.t_max) c.phate.t_max = *o.t_max;
  if (o.phate_knn) c.phate.knn = *o.phate_knn;
  if (o.seed) c.phate.seed = *o.seed;
  if (o.forecast_dir) c.forecast_dir = *o.forecast_dir;
  if (o.truth) c.truth = *o.truth;
  if (o.train || o.test) {
    if (!o.train || !o.test) throw ConfigError("--train and --test must be given together");
    c.split = SplitSpec{parse_range(*o.train), parse_range(*o.test)};
  }
  if (o.samples) c.synth.samples = *o.samples;
  if (o.stations) c.synth.stations = *o.stations;
  if (o.noise) c.synth.noise = *o.noise;
  if (o.synth_seed) c.synth.seed = *o.synth_seed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman spectral analysis of multivariate load time series"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--out", o.out, "output directory");
  };
  auto data = [&](CLI::App* sub) {
    sub->add_option("--input", o.input, "input CSV panel");
    sub->add_option("--train", o.train, "training rows begin:end");
    sub->add_option("--test", o.test, "test rows begin:end");
  };
  auto spectral = [&](CLI::App* sub) {
    sub->add_option("--delays,-Q", o.delays, "number of delays Q");
    sub->add_option("--knn", o.knn, "nearest neighbors per point");
    sub->add_option("--kernel-modes,-l", o.kernel_modes, "kernel eigenfunctions l");
    sub->add_option("--koopman-modes", o.koopman_modes, "Koopman eigenfunctions l'");
    sub->add_option("--theta", o.theta, "Koopman regularization");
    sub->add_option("--alpha", o.alpha, "variable bandwidth exponent");
    sub->add_option("--bandwidth-mode", o.bandwidth_mode, "variable or fixed");
    sub->add_option("--epsilon-scale", o.epsilon_scale, "multiplier on the tuned bandwidth");
  };
  auto phate = [&](CLI::App* sub) {
    sub->add_option("--k", o.k, "cluster count");
    sub->add_option("--m", o.m, "embedding dimension");
    sub->add_option("--t-max", o.t_max, "largest diffusion time");
    sub->add_option("--phate-knn", o.phate_knn, "station nearest neighbors");
    sub->add_option("--seed", o.seed, "clustering seed");
  };

  auto* spectra = app.add_subcommand("spectra", "kernel and Koopman eigenfunctions, modes and spectra");
  common(spectra), data(spectra), spectral(spectra);
  auto* cluster = app.add_subcommand("cluster", "PHATE embedding and k-means of stations");
  common(cluster), data(cluster), spectral(cluster), phate(cluster);
  auto* fc = app.add_subcommand("forecast", "cluster-wise Koopman forecast of the test window");
  common(fc), data(fc), spectral(fc), phate(fc);
  fc->add_option("--horizon,-H", o.horizon, "forecast horizon in samples");
  fc->add_option("--evolution", o.evolution, "regression or phase");
  fc->add_option("--clusters", o.clusters, "'phate' or a phate.csv file; empty for one model");
  fc->add_flag("--reanchor", o.reanchor, "re-evaluate psi from observed history each step");
  auto* ev = app.add_subcommand("evaluate", "RMSE of forecast artifacts against a truth panel");
  common(ev);
  ev->add_option("--forecast", o.forecast_dir, "forecast output directory");
  ev->add_option("--truth", o.truth, "truth CSV panel");
  auto* synth = app.add_subcommand("synth", "write a synthetic load panel");
  common(synth);
  synth->add_option("--samples", o.samples, "rows");
  synth->add_option("--stations", o.stations, "columns");
  synth->add_option("--noise", o.noise, "noise level relative to each station's range");
  synth->add_option("--seed", o.synth_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::Config);
  }

  try {
    PipelineConfig config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    apply(o, config);
    RunResult r;
    if (*spectra) r = run_spectra(config);
    else if (*cluster) r = run_cluster(config);
    else if (*fc) r = run_forecast(config);
    else if (*ev) r = run_evaluate(config);
    else r = run_synth(config);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << r.output.string() << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "error [" << e.qualified_code() << "]: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

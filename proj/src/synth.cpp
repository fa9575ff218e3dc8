// SPDX-License-Identifier: Apache-2.0
#include "koopman/synth.hpp"

#include "koopman/error.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace koopman {

SynthPanel synthesize(const SynthConfig& config) {
  if (config.samples < 2 || config.stations < 1) throw ConfigError("synthetic panel needs N >= 2 and d >= 1");
  if (config.families.empty()) throw ConfigError("at least one family is required");
  if (!(config.sample_interval > 0.0)) throw ConfigError("sample interval must be positive");

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Index n = config.samples;
  const Index d = config.stations;
  const auto nf = static_cast<Index>(config.families.size());
  SynthPanel out;
  out.clean.resize(n, d);
  out.noise = Matrix::Zero(n, d);
  out.family.resize(static_cast<std::size_t>(d));

  for (Index s = 0; s < d; ++s) {
    const auto& fam = config.families[static_cast<std::size_t>(s % nf)];
    out.family[static_cast<std::size_t>(s)] = static_cast<int>(s % nf);
    Vector x = Vector::Zero(n);
    for (const auto& tone : fam.tones) {
      const double amp = tone.amplitude * (1.0 + config.amplitude_jitter * unit(rng));
      const double phase = fam.phase + config.phase_jitter * unit(rng);
      const double w = 2.0 * std::numbers::pi / tone.period;
      for (Index t = 0; t < n; ++t) x(t) += amp * std::cos(w * static_cast<double>(t) + phase);
    }
    const double range = x.maxCoeff() - x.minCoeff();
    for (const auto& shift : config.level_shifts)
      for (Index t = shift.start; t < std::min(n, shift.start + shift.length); ++t) x(t) += shift.delta * range;
    out.clean.col(s) = (config.base_level + config.scale * x.array()).matrix();
    if (config.noise > 0.0) {
      const double sd = config.noise * config.scale * range;
      for (Index t = 0; t < n; ++t) out.noise(t, s) = sd * gauss(rng);
    }
  }

  out.panel.values = out.clean + out.noise;
  out.panel.sample_interval = config.sample_interval;
  out.panel.start_timestamp = config.start_timestamp;
  out.panel.station_ids.reserve(static_cast<std::size_t>(d));
  for (Index s = 0; s < d; ++s) out.panel.station_ids.push_back("S" + std::to_string(s));
  return out;
}

}  // namespace koopman

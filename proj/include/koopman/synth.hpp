// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "koopman/data_io.hpp"

#include <cstdint>
#include <vector>

namespace koopman {

struct Tone {
  double period = 24.0;  // in samples
  double amplitude = 1.0;
};

/// Stations in one family share tones; each station gets its own random
/// amplitude and phase perturbation around the family template.
struct Family {
  std::vector<Tone> tones;
  double phase = 0.0;  // radians, applied to every tone of the family
};

struct LevelShift {
  Index start = 0;
  Index length = 24;
  double delta = -0.3;  // relative to the station's clean peak-to-peak range
};

struct SynthConfig {
  Index samples = 1344;
  Index stations = 10;
  double sample_interval = 3600.0;
  double start_timestamp = 1388534400.0;  // 2014-01-01T00:00:00Z
  std::vector<Family> families{Family{{Tone{24.0, 1.0}, Tone{168.0, 0.5}}, 0.0}};
  double base_level = 100.0;
  double scale = 10.0;             // MWh/h per unit amplitude
  double amplitude_jitter = 0.2;   // relative, uniform
  double phase_jitter = 0.5;       // radians, uniform
  double noise = 0.0;              // noise sd relative to the clean peak-to-peak range
  std::vector<LevelShift> level_shifts;
  std::uint64_t seed = 7;
};

struct SynthPanel {
  LoadPanel panel;
  Matrix clean;                 // noise-free values
  std::vector<int> family;      // family label of each station
  Matrix noise;                 // injected additive noise
};

/// Station i belongs to family i mod (number of families).
SynthPanel synthesize(const SynthConfig& config);

}  // namespace koopman

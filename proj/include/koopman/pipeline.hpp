// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "koopman/data_io.hpp"
#include "koopman/forecast.hpp"
#include "koopman/phate.hpp"
#include "koopman/spectral.hpp"
#include "koopman/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace koopman {

struct ForecastOptions {
  Index horizon = 168;
  Evolution evolution = Evolution::Regression;
  /// Re-evaluate psi from the observed history at every test step (Nystrom)
  /// instead of rolling out from the training origin.
  bool reanchor = false;
  /// "" runs one model on all stations, "phate" clusters first, anything else
  /// is read as a phate.csv file.
  std::string clusters;
};

struct PipelineConfig {
  std::string input;
  CsvSchema schema;
  NormMode normalization = NormMode::PerStation;
  SpectralConfig spectral;
  ForecastOptions forecast;
  PhateConfig phate;
  std::optional<SplitSpec> split;
  std::string output = "out";
  // evaluate
  std::string forecast_dir;
  std::string truth;
  // synth
  SynthConfig synth;

  /// Checks everything that does not depend on the data.
  void validate() const;
};

PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::filesystem::path& path);
/// Canonical JSON echo of every field.
std::string dump_config(const PipelineConfig& config);

/// 64-bit FNV-1a of a byte string, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Collects artifacts in a sibling staging directory and moves them into
/// place only on commit; an uncommitted stage is removed on destruction.
class ArtifactStage {
 public:
  explicit ArtifactStage(std::filesystem::path target);
  ~ArtifactStage();
  ArtifactStage(const ArtifactStage&) = delete;
  ArtifactStage& operator=(const ArtifactStage&) = delete;

  const std::filesystem::path& dir() const { return staging_; }
  /// Writes manifest.json (`manifest_json` plus file hashes and a timestamp)
  /// and renames the staging directory onto the target.
  void commit(const std::string& command, const std::string& config_json, const std::string& extra_json = "{}");

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

struct RunResult {
  std::filesystem::path output;
  std::vector<std::string> warnings;
};

RunResult run_spectra(const PipelineConfig& config);
RunResult run_cluster(const PipelineConfig& config);
RunResult run_forecast(const PipelineConfig& config);
RunResult run_evaluate(const PipelineConfig& config);
RunResult run_synth(const PipelineConfig& config);

}  // namespace koopman

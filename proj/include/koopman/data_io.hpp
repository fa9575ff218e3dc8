// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "koopman/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace koopman {

/// Time-ordered load samples: rows are time, columns are stations.
struct LoadPanel {
  Matrix values;                       // N x d
  double sample_interval = 3600.0;     // seconds between rows
  std::vector<std::string> station_ids;
  double start_timestamp = 0.0;        // epoch seconds of row 0

  Index samples() const { return values.rows(); }
  Index stations() const { return values.cols(); }
  double timestamp(Index row) const {
    return start_timestamp + static_cast<double>(row) * sample_interval;
  }

  /// Rows [first, first + count) as a new panel.
  LoadPanel slice(Index first, Index count) const;
  /// Subset of stations, in the given order.
  LoadPanel select(const std::vector<Index>& columns) const;

  /// Throws InsufficientData / ConfigError on a malformed panel.
  void validate() const;
};

/// Per-column min/max used by the min-max map (x - min) / (max - min).
struct NormStats {
  Vector min;
  Vector max;
  std::vector<bool> constant;

  Index size() const { return min.size(); }
};

enum class NormMode { PerStation, Global };

struct CsvSchema {
  /// Empty means "first column".
  std::string timestamp_column;
  /// Stations to keep, in order; empty keeps every column.
  std::vector<std::string> stations;
};

/// Half-open row range.
struct IndexRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
};

struct SplitSpec {
  IndexRange train;
  IndexRange test;
};

struct SplitResult {
  LoadPanel train;
  LoadPanel test;
  NormStats stats;
};

/// Parses epoch seconds or an ISO-8601 stamp (YYYY-MM-DD[T ]HH:MM[:SS[.fff]][Z|+hh:mm]).
/// Returns false if `text` is neither.
bool parse_timestamp(std::string_view text, double& epoch_seconds);

LoadPanel load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
LoadPanel parse_csv(std::string_view text, const CsvSchema& schema = {});
void write_panel_csv(const std::filesystem::path& path, const LoadPanel& panel);

NormStats compute_norm_stats(const Matrix& values, NormMode mode = NormMode::PerStation);
LoadPanel normalize_with(const LoadPanel& panel, const NormStats& stats);
LoadPanel denormalize(const LoadPanel& panel, const NormStats& stats);

struct Normalized {
  LoadPanel panel;
  NormStats stats;
};
Normalized minmax_normalize(const LoadPanel& panel, NormMode mode = NormMode::PerStation);

/// Splits into train/test windows; both are normalized with statistics of the
/// training window only.
SplitResult split(const LoadPanel& panel, const SplitSpec& spec,
                  NormMode mode = NormMode::PerStation);

// --- generic artifact writers ---------------------------------------------

/// Shortest round-trip-safe text with 17 significant digits.
std::string format_double(double value);
/// Integral values print without a fractional part.
std::string format_timestamp(double epoch_seconds);

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Matrix& values);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace koopman

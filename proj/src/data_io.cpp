// SPDX-License-Identifier: Apache-2.0
#include "koopman/data_io.hpp"

#include "koopman/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace koopman {

namespace {

constexpr double kSpacingTolerance = 1.0;  // seconds

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_real(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_int(std::string_view s, std::size_t len, int& out) {
  if (s.size() < len) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + len, out);
  return ec == std::errc() && ptr == s.data() + len;
}

// Days since 1970-01-01 of a proleptic Gregorian date.
long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

bool parse_iso8601(std::string_view s, double& out) {
  int year, month, day, hour = 0, minute = 0;
  double second = 0.0;
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return false;
  if (!parse_int(s, 4, year) || !parse_int(s.substr(5), 2, month) || !parse_int(s.substr(8), 2, day))
    return false;
  if (month < 1 || month > 12 || day < 1 || day > 31) return false;
  s.remove_prefix(10);
  double offset = 0.0;
  if (!s.empty()) {
    if (s[0] != 'T' && s[0] != ' ') return false;
    s.remove_prefix(1);
    if (s.size() < 5 || s[2] != ':') return false;
    if (!parse_int(s, 2, hour) || !parse_int(s.substr(3), 2, minute)) return false;
    s.remove_prefix(5);
    if (!s.empty() && s[0] == ':') {
      s.remove_prefix(1);
      std::size_t n = 0;
      while (n < s.size() && (std::isdigit(static_cast<unsigned char>(s[n])) || s[n] == '.')) ++n;
      if (n == 0 || !parse_real(s.substr(0, n), second)) return false;
      s.remove_prefix(n);
    }
    if (!s.empty()) {
      if (s == "Z") {
        s.remove_prefix(1);
      } else if (s[0] == '+' || s[0] == '-') {
        int oh, om = 0;
        const double sign = s[0] == '-' ? -1.0 : 1.0;
        s.remove_prefix(1);
        if (!parse_int(s, 2, oh)) return false;
        s.remove_prefix(2);
        if (!s.empty() && s[0] == ':') s.remove_prefix(1);
        if (!s.empty()) {
          if (!parse_int(s, 2, om) || s.size() != 2) return false;
        }
        offset = sign * (oh * 3600.0 + om * 60.0);
      } else {
        return false;
      }
    }
  }
  if (hour > 23 || minute > 59 || second >= 61.0) return false;
  const double days = static_cast<double>(days_from_civil(year, static_cast<unsigned>(month),
                                                          static_cast<unsigned>(day)));
  out = days * 86400.0 + hour * 3600.0 + minute * 60.0 + second - offset;
  return true;
}

}  // namespace

bool parse_timestamp(std::string_view text, double& epoch_seconds) {
  text = trim(text);
  if (parse_real(text, epoch_seconds)) return true;
  return parse_iso8601(text, epoch_seconds);
}

// --- LoadPanel ---------------------------------------------------------------

LoadPanel LoadPanel::slice(Index first, Index count) const {
  LoadPanel out;
  out.values = values.middleRows(first, count);
  out.sample_interval = sample_interval;
  out.station_ids = station_ids;
  out.start_timestamp = timestamp(first);
  return out;
}

LoadPanel LoadPanel::select(const std::vector<Index>& columns) const {
  LoadPanel out;
  out.values.resize(samples(), static_cast<Index>(columns.size()));
  out.station_ids.reserve(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out.values.col(static_cast<Index>(c)) = values.col(columns[c]);
    out.station_ids.push_back(station_ids.at(static_cast<std::size_t>(columns[c])));
  }
  out.sample_interval = sample_interval;
  out.start_timestamp = start_timestamp;
  return out;
}

void LoadPanel::validate() const {
  if (values.rows() < 2) throw InsufficientData("panel needs at least 2 samples");
  if (values.cols() < 1) throw InsufficientData("panel needs at least 1 station");
  if (static_cast<Index>(station_ids.size()) != values.cols())
    throw ConfigError("station id count does not match column count");
  if (!(sample_interval > 0.0)) throw ConfigError("sample interval must be positive");
  if (!values.allFinite()) throw InsufficientData("panel contains non-finite values");
}

// --- CSV ---------------------------------------------------------------------

LoadPanel parse_csv(std::string_view text, const CsvSchema& schema) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      auto pos = text.find('\n', start);
      if (pos == std::string_view::npos) pos = text.size();
      auto line = text.substr(start, pos - start);
      if (!trim(line).empty()) lines.push_back(line);
      start = pos + 1;
    }
  }
  if (lines.empty()) throw InsufficientData("empty CSV");

  const auto header = split_fields(lines.front());
  std::size_t ts_col = 0;
  if (!schema.timestamp_column.empty()) {
    const auto it = std::find(header.begin(), header.end(), schema.timestamp_column);
    if (it == header.end()) throw ConfigError("timestamp column '" + schema.timestamp_column + "' not found");
    ts_col = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<std::size_t> value_cols;
  std::vector<std::string> ids;
  if (schema.stations.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == ts_col) continue;
      value_cols.push_back(c);
      ids.emplace_back(header[c]);
    }
  } else {
    for (const auto& s : schema.stations) {
      const auto it = std::find(header.begin(), header.end(), s);
      if (it == header.end()) throw ConfigError("station column '" + s + "' not found");
      value_cols.push_back(static_cast<std::size_t>(it - header.begin()));
      ids.push_back(s);
    }
  }
  if (value_cols.empty()) throw InsufficientData("CSV has no station columns");

  const std::size_t n = lines.size() - 1;
  if (n < 2) throw InsufficientData("CSV needs at least 2 data rows, found " + std::to_string(n));

  Matrix values(static_cast<Index>(n), static_cast<Index>(value_cols.size()));
  std::vector<double> stamps(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto fields = split_fields(lines[r + 1]);
    const std::size_t file_row = r + 2;
    if (fields.size() != header.size())
      throw ParseError(file_row, std::min(fields.size(), header.size()) + 1,
                       "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    if (!parse_timestamp(fields[ts_col], stamps[r]))
      throw ParseError(file_row, ts_col + 1, "bad timestamp '" + std::string(fields[ts_col]) + "'");
    for (std::size_t c = 0; c < value_cols.size(); ++c) {
      double v;
      const auto& cell = fields[value_cols[c]];
      if (!parse_real(cell, v))
        throw ParseError(file_row, value_cols[c] + 1, "bad value '" + std::string(cell) + "'");
      values(static_cast<Index>(r), static_cast<Index>(c)) = v;
    }
  }

  const double tau = stamps[1] - stamps[0];
  if (!(tau > 0.0)) throw SpacingError("timestamps must be strictly increasing");
  for (std::size_t r = 1; r < n; ++r) {
    const double step = stamps[r] - stamps[r - 1];
    if (std::abs(step - tau) > kSpacingTolerance)
      throw SpacingError("row " + std::to_string(r + 2) + ": spacing " + format_double(step) +
                         " s differs from " + format_double(tau) + " s");
  }

  LoadPanel panel;
  panel.values = std::move(values);
  panel.sample_interval = tau;
  panel.station_ids = std::move(ids);
  panel.start_timestamp = stamps.front();
  return panel;
}

LoadPanel load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return parse_csv(read_text(path), schema);
}

void write_panel_csv(const std::filesystem::path& path, const LoadPanel& panel) {
  std::string out = "timestamp";
  for (const auto& id : panel.station_ids) out += "," + id;
  out += '\n';
  for (Index r = 0; r < panel.samples(); ++r) {
    out += format_timestamp(panel.timestamp(r));
    for (Index c = 0; c < panel.stations(); ++c) out += "," + format_double(panel.values(r, c));
    out += '\n';
  }
  write_text(path, out);
}

// --- normalization -------------------------------------------------------------

NormStats compute_norm_stats(const Matrix& values, NormMode mode) {
  NormStats stats;
  const Index d = values.cols();
  if (mode == NormMode::Global) {
    stats.min = Vector::Constant(d, values.minCoeff());
    stats.max = Vector::Constant(d, values.maxCoeff());
  } else {
    stats.min = values.colwise().minCoeff().transpose();
    stats.max = values.colwise().maxCoeff().transpose();
  }
  stats.constant.resize(static_cast<std::size_t>(d));
  for (Index c = 0; c < d; ++c) stats.constant[static_cast<std::size_t>(c)] = !(stats.max(c) > stats.min(c));
  return stats;
}

LoadPanel normalize_with(const LoadPanel& panel, const NormStats& stats) {
  if (stats.size() != panel.stations()) throw AlignmentError("normalization stats do not match station count");
  LoadPanel out = panel;
  for (Index c = 0; c < panel.stations(); ++c) {
    if (stats.constant[static_cast<std::size_t>(c)]) {
      out.values.col(c).setZero();
    } else {
      out.values.col(c) = (panel.values.col(c).array() - stats.min(c)) / (stats.max(c) - stats.min(c));
    }
  }
  return out;
}

LoadPanel denormalize(const LoadPanel& panel, const NormStats& stats) {
  if (stats.size() != panel.stations()) throw AlignmentError("normalization stats do not match station count");
  LoadPanel out = panel;
  for (Index c = 0; c < panel.stations(); ++c) {
    const double range = stats.constant[static_cast<std::size_t>(c)] ? 0.0 : stats.max(c) - stats.min(c);
    out.values.col(c) = panel.values.col(c).array() * range + stats.min(c);
  }
  return out;
}

Normalized minmax_normalize(const LoadPanel& panel, NormMode mode) {
  auto stats = compute_norm_stats(panel.values, mode);
  auto normalized = normalize_with(panel, stats);
  return {std::move(normalized), std::move(stats)};
}

SplitResult split(const LoadPanel& panel, const SplitSpec& spec, NormMode mode) {
  const Index n = panel.samples();
  const auto& tr = spec.train;
  const auto& te = spec.test;
  if (tr.begin < 0 || te.begin < 0 || tr.end > n || te.end > n)
    throw RangeError("split ranges exceed [0, " + std::to_string(n) + ")");
  if (tr.size() <= 0 || te.size() <= 0) throw RangeError("split ranges must be non-empty");
  if (tr.end > te.begin) throw RangeError("training range must precede and not overlap the test range");

  SplitResult out;
  const LoadPanel train_raw = panel.slice(tr.begin, tr.size());
  const LoadPanel test_raw = panel.slice(te.begin, te.size());
  out.stats = compute_norm_stats(train_raw.values, mode);
  out.train = normalize_with(train_raw, out.stats);
  out.test = normalize_with(test_raw, out.stats);
  return out;
}

// --- writers -----------------------------------------------------------------

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

std::string format_timestamp(double epoch_seconds) {
  if (std::floor(epoch_seconds) == epoch_seconds && std::abs(epoch_seconds) < 9e15)
    return std::to_string(static_cast<long long>(epoch_seconds));
  return format_double(epoch_seconds);
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Matrix& values) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
  if (!header.empty()) out += '\n';
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) out += (c ? "," : "") + format_double(values(r, c));
    out += '\n';
  }
  write_text(path, out);
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot open '" + path.string() + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw FileError("write failed for '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace koopman

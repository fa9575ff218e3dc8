// SPDX-License-Identifier: Apache-2.0
#include "koopman/pipeline.hpp"

#include "koopman/error.hpp"
#include "koopman/spatiotemporal.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <map>
#include <set>
#include <sstream>

namespace koopman {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// --- configuration -------------------------------------------------------------

namespace {

void check_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

IndexRange read_range(const json& v, const char* what) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
    throw ConfigError(std::string(what) + " must be [begin, end]");
  return {v[0].get<Index>(), v[1].get<Index>()};
}

}  // namespace

void PipelineConfig::validate() const {
  const auto& d = spectral.delay;
  if (d.delays < 1) throw ConfigError("delays must be >= 1");
  if (d.knn < 1) throw ConfigError("knn must be >= 1");
  if (spectral.kernel_modes < 2) throw ConfigError("kernel_modes must be >= 2");
  if (spectral.koopman_modes < 1 || spectral.koopman_modes > spectral.kernel_modes)
    throw ConfigError("koopman_modes l'=" + std::to_string(spectral.koopman_modes) + " must satisfy 1 <= l' <= l=" +
                      std::to_string(spectral.kernel_modes));
  if (!(spectral.theta >= 0.0)) throw ConfigError("theta must be >= 0");
  if (!(d.alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(d.epsilon_scale > 0.0)) throw ConfigError("bandwidth scale must be positive");
  if (forecast.horizon < 1) throw ConfigError("forecast horizon must be >= 1");
  if (phate.knn < 1 || phate.dimensions < 1 || phate.clusters < 1 || phate.t_max < 1)
    throw ConfigError("phate knn, m, k and t_max must be >= 1");
  if (!(phate.knee_fraction > 0.0 && phate.knee_fraction < 1.0)) throw ConfigError("knee_fraction must lie in (0, 1)");
  if (split) {
    const auto& s = *split;
    if (s.train.begin < 0 || s.train.size() <= 0 || s.test.size() <= 0 || s.train.end > s.test.begin)
      throw ConfigError("split must hold non-empty train then test ranges");
  }
  if (output.empty()) throw ConfigError("output directory is required");
}

namespace {

PipelineConfig config_from_json(const json& j) {
  check_keys(j, "config",
             {"input", "output", "schema", "normalization", "delays", "knn", "kernel_modes", "koopman_modes", "theta",
              "bandwidth", "split", "forecast", "phate", "evaluate", "synth"});
  PipelineConfig c;
  read(j, "input", c.input);
  read(j, "output", c.output);
  if (j.contains("schema")) {
    const auto& s = j["schema"];
    check_keys(s, "schema", {"timestamp_column", "stations"});
    read(s, "timestamp_column", c.schema.timestamp_column);
    read(s, "stations", c.schema.stations);
  }
  if (j.contains("normalization")) {
    const auto mode = j["normalization"].get<std::string>();
    if (mode == "per_station") c.normalization = NormMode::PerStation;
    else if (mode == "global") c.normalization = NormMode::Global;
    else throw ConfigError("normalization must be per_station or global");
  }
  read(j, "delays", c.spectral.delay.delays);
  read(j, "knn", c.spectral.delay.knn);
  read(j, "kernel_modes", c.spectral.kernel_modes);
  read(j, "koopman_modes", c.spectral.koopman_modes);
  read(j, "theta", c.spectral.theta);
  if (j.contains("bandwidth")) {
    const auto& b = j["bandwidth"];
    check_keys(b, "bandwidth", {"mode", "alpha", "scale"});
    if (b.contains("mode")) {
      const auto mode = b["mode"].get<std::string>();
      if (mode == "variable") c.spectral.delay.mode = BandwidthMode::Variable;
      else if (mode == "fixed") c.spectral.delay.mode = BandwidthMode::Fixed;
      else throw ConfigError("bandwidth mode must be variable or fixed");
    }
    read(b, "alpha", c.spectral.delay.alpha);
    read(b, "scale", c.spectral.delay.epsilon_scale);
  }
  if (j.contains("split") && !j["split"].is_null()) {
    const auto& s = j["split"];
    check_keys(s, "split", {"train", "test"});
    if (!s.contains("train") || !s.contains("test")) throw ConfigError("split needs train and test");
    c.split = SplitSpec{read_range(s["train"], "split.train"), read_range(s["test"], "split.test")};
  }
  if (j.contains("forecast")) {
    const auto& f = j["forecast"];
    check_keys(f, "forecast", {"horizon", "evolution", "reanchor", "clusters"});
    read(f, "horizon", c.forecast.horizon);
    if (f.contains("evolution")) {
      const auto mode = f["evolution"].get<std::string>();
      if (mode == "regression") c.forecast.evolution = Evolution::Regression;
      else if (mode == "phase") c.forecast.evolution = Evolution::Phase;
      else throw ConfigError("evolution must be regression or phase");
    }
    read(f, "reanchor", c.forecast.reanchor);
    read(f, "clusters", c.forecast.clusters);
  }
  if (j.contains("phate")) {
    const auto& p = j["phate"];
    check_keys(p, "phate", {"knn", "m", "k", "t_max", "knee_fraction", "seed"});
    read(p, "knn", c.phate.knn);
    read(p, "m", c.phate.dimensions);
    read(p, "k", c.phate.clusters);
    read(p, "t_max", c.phate.t_max);
    read(p, "knee_fraction", c.phate.knee_fraction);
    read(p, "seed", c.phate.seed);
  }
  if (j.contains("evaluate")) {
    const auto& e = j["evaluate"];
    check_keys(e, "evaluate", {"forecast_dir", "truth"});
    read(e, "forecast_dir", c.forecast_dir);
    read(e, "truth", c.truth);
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    check_keys(s, "synth",
               {"samples", "stations", "interval", "start", "base", "scale", "amplitude_jitter", "phase_jitter", "noise",
                "seed", "families", "level_shifts"});
    auto& y = c.synth;
    read(s, "samples", y.samples);
    read(s, "stations", y.stations);
    read(s, "interval", y.sample_interval);
    read(s, "start", y.start_timestamp);
    read(s, "base", y.base_level);
    read(s, "scale", y.scale);
    read(s, "amplitude_jitter", y.amplitude_jitter);
    read(s, "phase_jitter", y.phase_jitter);
    read(s, "noise", y.noise);
    read(s, "seed", y.seed);
    if (s.contains("families")) {
      y.families.clear();
      for (const auto& f : s["families"]) {
        check_keys(f, "synth.families[]", {"tones", "phase"});
        Family fam;
        read(f, "phase", fam.phase);
        if (f.contains("tones"))
          for (const auto& t : f["tones"]) {
            if (!t.is_array() || t.size() != 2) throw ConfigError("tones are [period, amplitude] pairs");
            fam.tones.push_back(Tone{t[0].get<double>(), t[1].get<double>()});
          }
        y.families.push_back(std::move(fam));
      }
    }
    if (s.contains("level_shifts")) {
      for (const auto& l : s["level_shifts"]) {
        if (!l.is_array() || l.size() != 3) throw ConfigError("level shifts are [start, length, delta]");
        y.level_shifts.push_back(LevelShift{l[0].get<Index>(), l[1].get<Index>(), l[2].get<double>()});
      }
    }
  }
  return c;
}

}  // namespace

PipelineConfig parse_config(std::string_view text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

PipelineConfig load_config(const fs::path& path) { return parse_config(read_text(path)); }

std::string dump_config(const PipelineConfig& c) {
  ojson j;
  j["input"] = c.input;
  j["output"] = c.output;
  j["schema"] = {{"timestamp_column", c.schema.timestamp_column}, {"stations", c.schema.stations}};
  j["normalization"] = c.normalization == NormMode::PerStation ? "per_station" : "global";
  j["delays"] = c.spectral.delay.delays;
  j["knn"] = c.spectral.delay.knn;
  j["kernel_modes"] = c.spectral.kernel_modes;
  j["koopman_modes"] = c.spectral.koopman_modes;
  j["theta"] = c.spectral.theta;
  ojson bw;
  bw["mode"] = c.spectral.delay.mode == BandwidthMode::Variable ? "variable" : "fixed";
  bw["alpha"] = c.spectral.delay.alpha;
  bw["scale"] = c.spectral.delay.epsilon_scale;
  j["bandwidth"] = bw;
  if (c.split) {
    ojson s;
    s["train"] = {c.split->train.begin, c.split->train.end};
    s["test"] = {c.split->test.begin, c.split->test.end};
    j["split"] = s;
  } else {
    j["split"] = nullptr;
  }
  ojson f;
  f["horizon"] = c.forecast.horizon;
  f["evolution"] = c.forecast.evolution == Evolution::Regression ? "regression" : "phase";
  f["reanchor"] = c.forecast.reanchor;
  f["clusters"] = c.forecast.clusters;
  j["forecast"] = f;
  ojson p;
  p["knn"] = c.phate.knn;
  p["m"] = c.phate.dimensions;
  p["k"] = c.phate.clusters;
  p["t_max"] = c.phate.t_max;
  p["knee_fraction"] = c.phate.knee_fraction;
  p["seed"] = c.phate.seed;
  j["phate"] = p;
  j["evaluate"] = {{"forecast_dir", c.forecast_dir}, {"truth", c.truth}};
  ojson y;
  y["samples"] = c.synth.samples;
  y["stations"] = c.synth.stations;
  y["interval"] = c.synth.sample_interval;
  y["start"] = c.synth.start_timestamp;
  y["base"] = c.synth.base_level;
  y["scale"] = c.synth.scale;
  y["amplitude_jitter"] = c.synth.amplitude_jitter;
  y["phase_jitter"] = c.synth.phase_jitter;
  y["noise"] = c.synth.noise;
  y["seed"] = c.synth.seed;
  ojson fams = ojson::array();
  for (const auto& fam : c.synth.families) {
    ojson tones = ojson::array();
    for (const auto& t : fam.tones) tones.push_back({t.period, t.amplitude});
    fams.push_back({{"tones", tones}, {"phase", fam.phase}});
  }
  y["families"] = fams;
  ojson shifts = ojson::array();
  for (const auto& s : c.synth.level_shifts) shifts.push_back({s.start, s.length, s.delta});
  y["level_shifts"] = shifts;
  j["synth"] = y;
  return j.dump(2);
}

// --- staging and manifest -----------------------------------------------------------

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ArtifactStage::ArtifactStage(fs::path target) : target_(std::move(target)) {
  target_ = target_.lexically_normal();
  if (target_.filename().empty()) target_ = target_.parent_path();
  if (target_.empty()) throw ConfigError("output directory is required");
  const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  staging_ = parent / ("." + target_.filename().string() + ".staging");
  fs::remove_all(staging_, ec);
  if (!fs::create_directories(staging_, ec) || ec)
    throw FileError("cannot create staging directory " + staging_.string());
}

ArtifactStage::~ArtifactStage() {
  if (committed_) return;
  std::error_code ec;
  fs::remove_all(staging_, ec);
}

void ArtifactStage::commit(const std::string& command, const std::string& config_json, const std::string& extra_json) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(staging_))
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());

  ojson files = ojson::object();
  for (const auto& n : names) files[n] = fnv1a_hex(read_text(staging_ / n));

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);

  ojson manifest;
  manifest["command"] = command;
  manifest["timestamp"] = stamp;
  manifest["config"] = ojson::parse(config_json);
  manifest["files"] = files;
  const ojson extra = ojson::parse(extra_json);
  for (const auto& [key, value] : extra.items()) manifest[key] = value;
  write_text(staging_ / "manifest.json", manifest.dump(2) + "\n");

  std::error_code ec;
  fs::path old;
  if (fs::exists(target_)) {
    old = target_;
    old += ".old";
    fs::remove_all(old, ec);
    fs::rename(target_, old, ec);
    if (ec) throw FileError("cannot move existing output " + target_.string() + " aside");
  }
  fs::rename(staging_, target_, ec);
  if (ec) {
    if (!old.empty()) fs::rename(old, target_, ec);
    throw FileError("cannot move staged artifacts to " + target_.string());
  }
  committed_ = true;
  if (!old.empty()) fs::remove_all(old, ec);
}

// --- helpers ------------------------------------------------------------------------------

namespace {

LoadPanel training_window(const LoadPanel& panel, const PipelineConfig& c) {
  if (!c.split) return panel;
  const auto& r = c.split->train;
  if (r.end > panel.samples()) throw RangeError("training range exceeds the panel");
  return panel.slice(r.begin, r.size());
}

void write_norm_stats(const fs::path& path, const NormStats& stats, const std::vector<std::string>& ids) {
  std::string out = "station_id,min,max,constant\n";
  for (Index i = 0; i < stats.size(); ++i)
    out += ids[static_cast<std::size_t>(i)] + "," + format_double(stats.min(i)) + "," + format_double(stats.max(i)) +
           "," + (stats.constant[static_cast<std::size_t>(i)] ? "1" : "0") + "\n";
  write_text(path, out);
}

std::vector<std::vector<std::string>> read_rows(const fs::path& path, std::vector<std::string>& header) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.emplace_back();
    if (first) {
      header = std::move(fields);
      first = false;
    } else {
      rows.push_back(std::move(fields));
    }
  }
  return rows;
}

double to_double(const std::string& s, const fs::path& file, std::size_t row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(row, 0, "bad number '" + s + "' in " + file.string());
  }
}

/// Cluster label of every station of `panel`.
std::vector<int> read_assignments(const fs::path& path, const std::vector<std::string>& ids) {
  std::vector<std::string> header;
  const auto rows = read_rows(path, header);
  if (header.empty() || header.front() != "station_id" || header.back() != "cluster")
    throw ParseError(1, 1, path.string() + " needs station_id ... cluster columns");
  std::map<std::string, int> label;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) throw ParseError(r + 2, 1, "wrong field count in " + path.string());
    label[rows[r].front()] = static_cast<int>(to_double(rows[r].back(), path, r + 2));
  }
  std::vector<int> out;
  std::string missing;
  for (const auto& id : ids) {
    auto it = label.find(id);
    if (it == label.end()) missing += (missing.empty() ? "" : ", ") + id;
    else out.push_back(it->second);
  }
  if (!missing.empty()) throw AlignmentError("stations without a cluster: " + missing);
  return out;
}

PhateConfig phate_settings(const PipelineConfig& c) {
  PhateConfig p = c.phate;
  p.kernel = c.spectral.delay;
  p.kernel.delays = 1;
  p.kernel.knn = p.knn;
  return p;
}

ojson check_json(const BasisCheck& b) {
  ojson j;
  j["lambda1_error"] = b.lambda1_error;
  j["constant_deviation"] = b.constant_deviation;
  j["trivial_omega"] = b.trivial_omega;
  j["trivial_energy"] = b.trivial_energy;
  j["energies_sorted"] = b.energies_sorted;
  j["pair_gamma_error"] = b.pair_gamma_error;
  j["pair_energy_error"] = b.pair_energy_error;
  j["ok"] = b.ok();
  return j;
}

KoopmanAnalysis checked_analysis(const LoadPanel& normalized, const SpectralConfig& config) {
  auto a = analyze(normalized, config);
  const auto check = check_basis(a);
  if (!check.ok()) throw SolverError("spectral invariants violated: " + check.describe());
  return a;
}

}  // namespace

// --- commands ----------------------------------------------------------------------------

RunResult run_spectra(const PipelineConfig& config) {
  config.validate();
  ArtifactStage stage(config.output);
  const auto panel = load_csv(config.input, config.schema);
  const auto norm = minmax_normalize(training_window(panel, config), config.normalization);
  const auto a = checked_analysis(norm.panel, config.spectral);

  const auto& dir = stage.dir();
  write_graph(dir, a.graph, a.markov);
  Matrix eig(a.kernel.size(), 3);
  for (Index j = 0; j < a.kernel.size(); ++j) {
    eig(j, 0) = static_cast<double>(j + 1);
    eig(j, 1) = a.kernel.eigenvalues(j);
    eig(j, 2) = a.kernel.eta(j);
  }
  write_matrix_csv(dir / "kernel_eigs.csv", {"j", "lambda", "eta"}, eig);
  write_koopman_basis(dir, a.koopman, config.spectral);
  const auto projection = project_modes(norm.panel, a.koopman, a.delays);
  write_mode_artifacts(dir, projection, a.koopman, norm.panel);
  write_norm_stats(dir / "norm_stats.csv", norm.stats, norm.panel.station_ids);

  ojson extra;
  extra["invariants"] = check_json(check_basis(a));
  extra["embedded_samples"] = a.kernel.samples();
  extra["koopman_modes"] = a.koopman.size();
  stage.commit("spectra", dump_config(config), extra.dump());
  return {config.output, {}};
}

RunResult run_cluster(const PipelineConfig& config) {
  config.validate();
  ArtifactStage stage(config.output);
  const auto panel = load_csv(config.input, config.schema);
  const auto window = training_window(panel, config);
  const auto emb = phate_cluster(window, phate_settings(config));
  write_phate(stage.dir(), emb, window.station_ids);

  ojson extra;
  extra["t_prime"] = emb.diffusion_time;
  extra["stress"] = emb.stress;
  stage.commit("cluster", dump_config(config), extra.dump());
  return {config.output, {}};
}

RunResult run_forecast(const PipelineConfig& config) {
  config.validate();
  ArtifactStage stage(config.output);
  const auto panel = load_csv(config.input, config.schema);
  const Index h = config.forecast.horizon;
  SplitSpec spec;
  if (config.split) {
    spec = *config.split;
  } else {
    if (panel.samples() <= h) throw InsufficientData("panel is not longer than the forecast horizon");
    spec = {{0, panel.samples() - h}, {panel.samples() - h, panel.samples()}};
  }
  const auto sr = split(panel, spec, config.normalization);
  const Index d = panel.stations();

  std::vector<int> labels(static_cast<std::size_t>(d), 0);
  if (config.forecast.clusters == "phate") {
    labels = phate_cluster(panel.slice(spec.train.begin, spec.train.size()), phate_settings(config)).labels;
  } else if (!config.forecast.clusters.empty()) {
    labels = read_assignments(config.forecast.clusters, panel.station_ids);
  }
  int k = 0;
  for (int l : labels) {
    if (l < 0) throw ConfigError("cluster labels must be nonnegative");
    k = std::max(k, l + 1);
  }

  const Index available = std::min(h, sr.test.samples());
  Matrix predicted = Matrix::Zero(h, d);
  Matrix modal = Matrix::Zero(available, d);
  Matrix innovation = Matrix::Zero(available, d);
  Vector station_rmse = Vector::Zero(d);
  RunResult result{config.output, {}};
  ojson fits = ojson::array();
  ojson kpsi;
  kpsi["clusters"] = ojson::array();
  std::vector<std::string> cluster_rows;

  for (int c = 0; c < k; ++c) {
    std::vector<Index> cols;
    for (Index s = 0; s < d; ++s)
      if (labels[static_cast<std::size_t>(s)] == c) cols.push_back(s);
    if (cols.empty()) {
      result.warnings.push_back("cluster " + std::to_string(c) + " has no stations; skipped");
      continue;
    }
    const auto train = sr.train.select(cols);
    const auto test = sr.test.select(cols);
    const auto a = checked_analysis(train, config.spectral);
    const auto rb = realify(a.koopman);
    const auto model = fit_model(rb, train.values.bottomRows(rb.steps()), config.forecast.evolution);

    Matrix pred;
    if (!config.forecast.reanchor) {
      pred = forecast(model, rb.samples.col(rb.steps() - 1), h);
    } else {
      // one-step forecasts from psi re-evaluated on the observed history
      const NystromExtension ext(train.values, a.graph, a.markov);
      const Index q = a.delays;
      Matrix history(train.samples() + test.samples(), static_cast<Index>(cols.size()));
      history << train.values, test.values;
      pred.resize(h, static_cast<Index>(cols.size()));
      Vector s = rb.samples.col(rb.steps() - 1);
      for (Index step = 0; step < h; ++step) {
        const Index last = train.samples() - 1 + step;  // newest observed row
        if (step > 0 && last < history.rows())
          s = realify_state(a.koopman, ext.extend(a.koopman, a.kernel, history.middleRows(last - q + 1, q)));
        s = model.evolution * s;
        if (!s.allFinite()) throw DivergenceError(static_cast<std::size_t>(step + 1));
        pred.row(step) = (model.decoder * s).transpose();
      }
    }

    const Matrix actual = test.values.topRows(available);
    const Matrix residual = actual - pred.topRows(available);
    const auto noise = noise_split(residual, model.decoder);
    const auto bd = block_diagonality(model.evolution, model.blocks);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const Index s = cols[i];
      predicted.col(s) = pred.col(static_cast<Index>(i));
      modal.col(s) = noise.modal.col(static_cast<Index>(i));
      innovation.col(s) = noise.innovation.col(static_cast<Index>(i));
      station_rmse(s) = available > 0 ? rmse(actual.col(static_cast<Index>(i)), pred.col(static_cast<Index>(i)).head(available)) : 0.0;
    }
    const double cluster_rmse = available > 0 ? rmse(actual, pred.topRows(available)) : 0.0;
    cluster_rows.push_back(std::to_string(c) + "," + std::to_string(cols.size()) + "," +
                           std::to_string(rb.modes()) + "," + format_double(cluster_rmse) + "," +
                           format_double(bd.off_block_fraction));

    ojson fit;
    fit["cluster"] = c;
    fit["stations"] = cols.size();
    fit["modes"] = rb.modes();
    fits.push_back(fit);
    ojson kc;
    kc["cluster"] = c;
    kc["modes"] = rb.modes();
    kc["off_block_fraction"] = bd.off_block_fraction;
    kc["skew_deviation"] = bd.skew_deviation;
    ojson rows = ojson::array();
    for (Index r = 0; r < model.evolution.rows(); ++r) {
      std::vector<double> row(model.evolution.cols());
      for (Index cc = 0; cc < model.evolution.cols(); ++cc) row[static_cast<std::size_t>(cc)] = model.evolution(r, cc);
      rows.push_back(row);
    }
    kc["matrix"] = rows;
    kpsi["clusters"].push_back(kc);
  }

  const auto& dir = stage.dir();
  const double origin = sr.test.start_timestamp;
  std::string out = "timestamp,station,predicted,actual\n";
  for (Index s = 0; s < d; ++s)
    for (Index t = 0; t < h; ++t) {
      out += format_timestamp(origin + static_cast<double>(t) * panel.sample_interval) + "," +
             panel.station_ids[static_cast<std::size_t>(s)] + "," + format_double(predicted(t, s)) + ",";
      if (t < available) out += format_double(sr.test.values(t, s));
      out += "\n";
    }
  write_text(dir / "forecast.csv", out);

  std::string rm = "station,cluster,rmse\n";
  std::string asg = "station_id,cluster\n";
  for (Index s = 0; s < d; ++s) {
    const auto& id = panel.station_ids[static_cast<std::size_t>(s)];
    rm += id + "," + std::to_string(labels[static_cast<std::size_t>(s)]) + "," + format_double(station_rmse(s)) + "\n";
    asg += id + "," + std::to_string(labels[static_cast<std::size_t>(s)]) + "\n";
  }
  write_text(dir / "rmse.csv", rm);
  write_text(dir / "assignments.csv", asg);
  std::string cl = "cluster,stations,modes,rmse,off_block_fraction\n";
  for (const auto& r : cluster_rows) cl += r + "\n";
  write_text(dir / "clusters.csv", cl);

  std::vector<std::string> header{"timestamp"};
  for (const auto& id : panel.station_ids) header.push_back(id);
  Matrix m(available, d + 1);
  Matrix inn(available, d + 1);
  for (Index t = 0; t < available; ++t) m(t, 0) = inn(t, 0) = origin + static_cast<double>(t) * panel.sample_interval;
  m.rightCols(d) = modal;
  inn.rightCols(d) = innovation;
  write_matrix_csv(dir / "noise_modal.csv", header, m);
  write_matrix_csv(dir / "noise_innovation.csv", header, inn);
  write_text(dir / "kpsi.json", kpsi.dump(2) + "\n");
  write_norm_stats(dir / "norm_stats.csv", sr.stats, panel.station_ids);

  ojson extra;
  extra["model_fits"] = fits;
  extra["warnings"] = result.warnings;
  extra["units"] = "normalized";
  stage.commit("forecast", dump_config(config), extra.dump());
  return result;
}

RunResult run_evaluate(const PipelineConfig& config) {
  config.validate();
  if (config.forecast_dir.empty() || config.truth.empty())
    throw ConfigError("evaluate needs a forecast directory and a truth panel");
  ArtifactStage stage(config.output);
  const fs::path fdir = config.forecast_dir;
  const auto truth = load_csv(config.truth, config.schema);

  std::vector<std::string> header;
  const auto rows = read_rows(fdir / "forecast.csv", header);
  if (header.size() != 4 || header[0] != "timestamp" || header[1] != "station" || header[2] != "predicted")
    throw ParseError(1, 1, "forecast.csv has an unexpected header");
  std::vector<std::string> ids;
  std::map<std::string, std::vector<std::pair<double, double>>> per_station;  // (timestamp, predicted)
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 4) throw ParseError(r + 2, 1, "forecast.csv: wrong field count");
    if (!per_station.count(row[1])) ids.push_back(row[1]);
    per_station[row[1]].push_back({to_double(row[0], fdir / "forecast.csv", r + 2),
                                   to_double(row[2], fdir / "forecast.csv", r + 2)});
  }

  if (ids != truth.station_ids) {
    std::string bad;
    const std::size_t n = std::max(ids.size(), truth.station_ids.size());
    for (std::size_t i = 0; i < n; ++i) {
      const std::string a = i < ids.size() ? ids[i] : "<none>";
      const std::string b = i < truth.station_ids.size() ? truth.station_ids[i] : "<none>";
      if (a != b) bad += (bad.empty() ? "" : ", ") + a + "/" + b;
    }
    throw AlignmentError("station ids differ (forecast/truth): " + bad);
  }

  std::vector<std::string> nh;
  const auto nrows = read_rows(fdir / "norm_stats.csv", nh);
  std::map<std::string, std::array<double, 3>> stats;
  for (std::size_t r = 0; r < nrows.size(); ++r) {
    if (nrows[r].size() != 4) throw ParseError(r + 2, 1, "norm_stats.csv: wrong field count");
    stats[nrows[r][0]] = {to_double(nrows[r][1], fdir / "norm_stats.csv", r + 2),
                          to_double(nrows[r][2], fdir / "norm_stats.csv", r + 2),
                          to_double(nrows[r][3], fdir / "norm_stats.csv", r + 2)};
  }
  std::vector<int> labels(ids.size(), 0);
  if (fs::exists(fdir / "assignments.csv")) labels = read_assignments(fdir / "assignments.csv", ids);

  std::map<int, std::pair<double, double>> cluster_acc;  // (sum sq, count)
  double total_sq = 0.0;
  double total_n = 0.0;
  std::string station_csv = "station,cluster,rmse\n";
  ojson stations = ojson::object();
  std::string bad_ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = stats.find(ids[i]);
    if (it == stats.end()) {
      bad_ids += (bad_ids.empty() ? "" : ", ") + ids[i];
      continue;
    }
    const auto [lo, hi, constant] = it->second;
    double sq = 0.0;
    const auto& series = per_station[ids[i]];
    for (const auto& [ts, pred] : series) {
      const double pos = (ts - truth.start_timestamp) / truth.sample_interval;
      const auto row = static_cast<Index>(std::llround(pos));
      if (std::abs(pos - static_cast<double>(row)) > 1e-6 || row < 0 || row >= truth.samples())
        throw AlignmentError("timestamp " + format_timestamp(ts) + " of station " + ids[i] + " is not in the truth panel");
      const double x = truth.values(row, static_cast<Index>(i));
      const double xn = constant != 0.0 ? 0.0 : (x - lo) / (hi - lo);
      sq += (xn - pred) * (xn - pred);
    }
    const double n = static_cast<double>(series.size());
    const double e = n > 0 ? std::sqrt(sq / n) : 0.0;
    station_csv += ids[i] + "," + std::to_string(labels[i]) + "," + format_double(e) + "\n";
    stations[ids[i]] = e;
    cluster_acc[labels[i]].first += sq;
    cluster_acc[labels[i]].second += n;
    total_sq += sq;
    total_n += n;
  }
  if (!bad_ids.empty()) throw AlignmentError("no normalization statistics for: " + bad_ids);

  std::string cluster_csv = "cluster,rmse\n";
  ojson clusters = ojson::object();
  for (const auto& [c, acc] : cluster_acc) {
    const double e = acc.second > 0 ? std::sqrt(acc.first / acc.second) : 0.0;
    cluster_csv += std::to_string(c) + "," + format_double(e) + "\n";
    clusters[std::to_string(c)] = e;
  }
  ojson summary;
  summary["overall"] = total_n > 0 ? std::sqrt(total_sq / total_n) : 0.0;
  summary["clusters"] = clusters;
  summary["stations"] = stations;

  const auto& dir = stage.dir();
  write_text(dir / "evaluation_stations.csv", station_csv);
  write_text(dir / "evaluation_clusters.csv", cluster_csv);
  write_text(dir / "evaluation.json", summary.dump(2) + "\n");
  stage.commit("evaluate", dump_config(config));
  return {config.output, {}};
}

RunResult run_synth(const PipelineConfig& config) {
  if (config.output.empty()) throw ConfigError("output directory is required");
  ArtifactStage stage(config.output);
  const auto syn = synthesize(config.synth);
  write_panel_csv(stage.dir() / "panel.csv", syn.panel);
  LoadPanel clean = syn.panel;
  clean.values = syn.clean;
  write_panel_csv(stage.dir() / "clean.csv", clean);
  std::string fam = "station_id,family\n";
  for (Index s = 0; s < syn.panel.stations(); ++s)
    fam += syn.panel.station_ids[static_cast<std::size_t>(s)] + "," + std::to_string(syn.family[static_cast<std::size_t>(s)]) + "\n";
  write_text(stage.dir() / "families.csv", fam);
  stage.commit("synth", dump_config(config));
  return {config.output, {}};
}

}  // namespace koopman

#pragma once

// Experiment commands behind the assimlab executable. Each command reads a Config,
// writes its outputs under `out`, and leaves a resolved_config.txt next to them.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "assimlab/binary_io.hpp"
#include "assimlab/codanet.hpp"
#include "assimlab/config.hpp"
#include "assimlab/fourdvar.hpp"
#include "assimlab/lorenz96.hpp"
#include "assimlab/obsmodel.hpp"
#include "assimlab/parallel.hpp"
#include "assimlab/training.hpp"

namespace assimlab::cli {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Logging

enum class LogLevel { Quiet = 0, Error, Warn, Info, Debug };

inline LogLevel log_level() {
  const char* env = std::getenv("ASSIMLAB_LOG");
  if (!env) return LogLevel::Warn;
  const std::string v = env;
  if (v == "quiet" || v == "off") return LogLevel::Quiet;
  if (v == "error") return LogLevel::Error;
  if (v == "info") return LogLevel::Info;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Warn;
}

inline void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"", "error", "warn", "info", "debug"};
  if (level > log_level()) return;
  std::cerr << "assimlab " << names[static_cast<int>(level)] << ": " << msg << '\n';
}

// ---------------------------------------------------------------------------
// CSV

inline std::string num(double v) { return Config::format(v); }

/// Line-buffered CSV file: a schema comment, a header, then one flushed line per row.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header, bool append = false)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    if (!append) {
      out_ << "# schema_version=" << kSchemaVersion << '\n';
      row(header);
    }
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed");
  }

 private:
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError(FormatError::Code::Corrupt, "csv: missing column '" + name + "'");
  }
};

/// Reads a CSV written by CsvWriter. A trailing line without newline is ignored.
inline CsvTable read_csv(const fs::path& path) {
  const auto bytes = io::read_file(path);
  std::string text(bytes.begin(), bytes.end());
  CsvTable t;
  std::size_t pos = 0;
  bool schema_seen = false;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) break;
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.rfind("# schema_version=", 0) == 0) {
      if (line != "# schema_version=" + std::to_string(kSchemaVersion)) {
        throw FormatError(FormatError::Code::VersionMismatch, path.string() + ": unsupported " + line.substr(2));
      }
      schema_seen = true;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size()) {
        throw FormatError(FormatError::Code::Corrupt, path.string() + ": row width differs from header");
      }
      t.rows.push_back(std::move(fields));
    }
  }
  if (!schema_seen) throw FormatError(FormatError::Code::Corrupt, path.string() + ": missing schema line");
  return t;
}

/// Drops a partially written last line so appends start on a fresh row.
inline void truncate_partial_line(const fs::path& path) {
  const auto bytes = io::read_file(path);
  std::size_t keep = bytes.size();
  while (keep > 0 && bytes[keep - 1] != '\n') --keep;
  if (keep != bytes.size()) fs::resize_file(path, keep);
}

inline void write_resolved(const Config& cfg, const fs::path& out) {
  io::write_text(out / "resolved_config.txt", cfg.resolved_text());
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Shared config sections

inline l96::Lorenz96Config read_dynamics(Config& c) {
  l96::Lorenz96Config d;
  d.n = c.count("n", d.n);
  d.forcing = c.real("forcing", d.forcing);
  d.dt = c.real("dt", d.dt);
  d.spinup_steps = c.count("spinup_steps", d.spinup_steps);
  d.validate();
  return d;
}

inline net::NetworkConfig read_network(Config& c) {
  net::NetworkConfig n;
  n.window_half_width = c.count("window_half_width", n.window_half_width);
  n.hidden_channels = c.count("hidden_channels", n.hidden_channels);
  n.depth = c.count("depth", n.depth);
  n.kernel_width = c.count("kernel_width", n.kernel_width);
  n.sigma_floor = c.real("sigma_floor", n.sigma_floor);
  n.input_scale = c.real("input_scale", n.input_scale);
  n.output_scale = c.real("output_scale", n.output_scale);
  return n;
}

inline metrics::SsrelWeighting read_weighting(Config& c) {
  const std::string w = c.str("ssrel_weighting", "count");
  if (w == "count") return metrics::SsrelWeighting::CountWeighted;
  if (w == "unweighted") return metrics::SsrelWeighting::Unweighted;
  throw ConfigError(c.source() + ": ssrel_weighting must be 'count' or 'unweighted'");
}

// ---------------------------------------------------------------------------
// Datasets on disk: trajectory.l96t, observations.l96o, manifest.txt

inline obs::AssimDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.txt";
  if (!fs::exists(manifest_path)) throw IoError("no dataset manifest at " + manifest_path.string());
  Config m = Config::load(manifest_path);
  if (m.str("format", "") != "assimlab-dataset") {
    throw FormatError(FormatError::Code::MagicMismatch, manifest_path.string() + ": not a dataset manifest");
  }
  if (m.count("version", 0) != 1) {
    throw FormatError(FormatError::Code::VersionMismatch, manifest_path.string() + ": unsupported version");
  }
  const fs::path traj = dir / m.str("trajectory", "trajectory.l96t");
  const fs::path obsf = dir / m.str("observations", "observations.l96o");
  for (const auto& [file, key] : {std::pair{traj, "trajectory.fnv1a64"}, std::pair{obsf, "observations.fnv1a64"}}) {
    const std::string want = m.str(key, "");
    if (hex64(io::fnv1a64(io::read_file(file))) != want) {
      throw FormatError(FormatError::Code::Corrupt, file.string() + ": hash does not match manifest");
    }
  }
  obs::AssimDataset ds;
  ds.truth = obs::load_trajectory(traj);
  ds.observations = obs::load_observations(obsf);
  ds.split = m.count("split", 0);
  if (ds.observations.rows() != ds.truth.states.dim(0) || ds.observations.n() != ds.truth.n()) {
    throw FormatError(FormatError::Code::ShapeMismatch, dir.string() + ": trajectory and observations disagree");
  }
  if (ds.split == 0 || ds.split >= ds.truth.states.dim(0)) {
    throw FormatError(FormatError::Code::Corrupt, manifest_path.string() + ": split out of range");
  }
  const std::size_t per_row = obs::observed_per_step(ds.observations.n(), ds.observations.coverage);
  for (std::size_t t = 0; t < ds.observations.rows(); ++t) {
    std::size_t k = 0;
    for (double v : ds.observations.mask.row(t)) k += v != 0.0;
    if (k != per_row) throw FormatError(FormatError::Code::Corrupt, obsf.string() + ": mask count differs from coverage");
  }
  return ds;
}

inline std::string dataset_id(const fs::path& dir) {
  Config m = Config::load(dir / "manifest.txt");
  return m.str("observations.fnv1a64", "");
}

// ---------------------------------------------------------------------------
// generate

inline void cmd_generate(Config& cfg, const fs::path& out) {
  obs::DatasetSpec spec;
  spec.dynamics = read_dynamics(cfg);
  spec.steps = cfg.count("steps", spec.steps);
  spec.coverage = cfg.real("coverage", spec.coverage);
  spec.noise_std = cfg.real("noise_std", spec.noise_std);
  spec.val_fraction = cfg.real("val_fraction", spec.val_fraction);
  spec.seed = cfg.u64("seed", spec.seed);
  cfg.count("workers", 1);
  cfg.finish();
  if (!(spec.coverage > 0.0 && spec.coverage <= 1.0)) throw ConfigError("coverage must lie in (0, 1]");
  if (!(spec.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (spec.steps < 2) throw ConfigError("steps must be >= 2");

  ensure_dir(out);
  log(LogLevel::Info, "generating " + std::to_string(spec.steps) + " steps");
  const obs::AssimDataset ds = obs::make_dataset(spec);
  const auto traj = obs::encode_trajectory(ds.truth);
  const auto obsb = obs::encode_observations(ds.observations);
  io::write_file(out / "trajectory.l96t", traj);
  io::write_file(out / "observations.l96o", obsb);

  std::ostringstream m;
  m << "format = assimlab-dataset\n"
    << "version = 1\n"
    << "seed = " << spec.seed << "\n"
    << "seed.trajectory = " << derive_seed(spec.seed, "trajectory") << "\n"
    << "seed.mask = " << derive_seed(spec.seed, "mask") << "\n"
    << "seed.noise = " << derive_seed(spec.seed, "noise") << "\n"
    << "steps = " << spec.steps << "\n"
    << "n = " << spec.dynamics.n << "\n"
    << "split = " << ds.split << "\n"
    << "coverage = " << num(spec.coverage) << "\n"
    << "noise_std = " << num(spec.noise_std) << "\n"
    << "trajectory = trajectory.l96t\n"
    << "trajectory.fnv1a64 = " << hex64(io::fnv1a64(traj)) << "\n"
    << "observations = observations.l96o\n"
    << "observations.fnv1a64 = " << hex64(io::fnv1a64(obsb)) << "\n";
  io::write_text(out / "manifest.txt", m.str());
  write_resolved(cfg, out);
}

// ---------------------------------------------------------------------------
// train

inline void write_train_log(const fs::path& path, const std::vector<train::EpochLog>& log) {
  CsvWriter w(path, {"epoch", "train_loss", "val_loss", "val_crps", "val_ssrat", "val_ssrel", "wall_seconds"});
  for (const auto& e : log) {
    w.row({std::to_string(e.epoch), num(e.train_loss), num(e.val_loss), num(e.val_crps), num(e.val_ssrat),
           num(e.val_ssrel), num(e.wall_seconds)});
  }
}

inline train::TrainResult train_logged(const train::TrainConfig& tc, const net::NetworkConfig& nc,
                                       const obs::AssimDataset& ds, const fs::path& out, const std::string& tag) {
  try {
    return train::train(tc, nc, ds, [&](const train::EpochLog& e) {
      log(LogLevel::Info, tag + " epoch " + std::to_string(e.epoch) + " val_loss " + num(e.val_loss) + " val_crps " +
                              num(e.val_crps));
    });
  } catch (const train::TrainingDivergence& d) {
    net::save_checkpoint(d.last_finite(), out / (tag + ".partial.coda"));
    throw;
  }
}

inline void cmd_train(Config& cfg, const fs::path& out) {
  const fs::path data_dir = cfg.path("dataset");
  if (data_dir.empty()) throw ConfigError(cfg.source() + ": missing required key 'dataset'");
  net::NetworkConfig nc = read_network(cfg);
  const std::string mode = cfg.str("mode", "variational");
  const std::vector<double> lambdas = cfg.reals("lambda", "1");
  const std::vector<double> rates = cfg.reals("dropout_rate", "0");
  train::TrainConfig tc;
  tc.horizon = cfg.count("horizon", tc.horizon);
  tc.mc_samples = cfg.count("mc_samples", tc.mc_samples);
  tc.batch_size = cfg.count("batch_size", tc.batch_size);
  tc.epochs = cfg.count("epochs", tc.epochs);
  tc.windows_per_epoch = cfg.count("windows_per_epoch", tc.windows_per_epoch);
  tc.lr = cfg.real("lr", tc.lr);
  tc.seed = cfg.u64("seed", tc.seed);
  tc.detach_target = cfg.flag("detach_target", tc.detach_target);
  tc.val_samples = cfg.count("val_samples", tc.val_samples);
  tc.n_bins = cfg.count("n_bins", tc.n_bins);
  tc.record_time = cfg.flag("timing", false);
  const std::size_t members = cfg.count("members", 5);
  const std::size_t workers = cfg.count("workers", 1);
  cfg.finish();

  if (lambdas.empty()) throw ConfigError(cfg.source() + ": lambda needs at least one value");
  if (rates.empty()) throw ConfigError(cfg.source() + ": dropout_rate needs at least one value");
  const bool ensemble = mode == "ensemble";
  tc.mode = train::train_mode_from_string(ensemble ? "dropout" : mode);
  nc.output_mode = tc.mode == train::TrainMode::Variational ? net::OutputMode::Gaussian : net::OutputMode::Deterministic;
  if (tc.mode != train::TrainMode::Variational && lambdas.size() > 1) {
    throw ConfigError(cfg.source() + ": a lambda list (calibration) needs mode = variational");
  }
  if (tc.mode != train::TrainMode::Dropout && (rates.size() > 1 || rates[0] != 0.0)) {
    throw ConfigError(cfg.source() + ": dropout_rate applies to modes dropout and ensemble");
  }
  if (ensemble && members < 1) throw ConfigError(cfg.source() + ": members must be >= 1");
  tc.lambda = lambdas[0];
  nc.dropout_rate = rates[0];
  nc.validate();

  ensure_dir(out);
  write_resolved(cfg, out);
  const obs::AssimDataset ds = load_dataset(data_dir);
  tc.dataset_id = dataset_id(data_dir);

  if (rates.size() > 1) {
    log(LogLevel::Info, "tuning dropout rate over " + std::to_string(rates.size()) + " values");
    train::DropoutTuning tuning = train::tune_dropout(rates, tc, nc, ds);
    CsvWriter w(out / "dropout_tuning.csv", {"dropout_rate", "val_crps", "selected"});
    for (const auto& [p, crps] : tuning.crps_by_rate) w.row({num(p), num(crps), p == tuning.rate ? "1" : "0"});
    nc.dropout_rate = tuning.rate;
  }

  if (ensemble) {
    ordered_parallel_for<train::TrainResult>(
        members, workers,
        [&](std::size_t k) {
          train::TrainConfig m = tc;
          m.seed = train::member_seed(tc.seed, k);
          return train_logged(m, nc, ds, out, "member" + std::to_string(k));
        },
        [&](std::size_t k, train::TrainResult& r) {
          net::save_checkpoint(r.best, out / ("member" + std::to_string(k) + ".coda"));
          write_train_log(out / ("train_log_member" + std::to_string(k) + ".csv"), r.log);
        });
    return;
  }

  if (lambdas.size() > 1) {
    log(LogLevel::Info, "calibrating lambda over " + std::to_string(lambdas.size()) + " candidates");
    train::Calibration cal = train::calibrate_lambda(lambdas, tc, nc, ds, workers);
    CsvWriter w(out / "calibration.csv",
                {"lambda", "val_crps", "val_ssrat", "val_ssrel", "median_sigma", "best_epoch", "diverged", "selected"});
    for (std::size_t i = 0; i < cal.runs.size(); ++i) {
      const auto& r = cal.runs[i];
      w.row({num(r.lambda), num(r.crps), num(r.ssrat), num(r.ssrel), num(r.median_sigma),
             std::to_string(r.result.best_epoch), r.diverged ? "1" : "0", i == cal.best_index ? "1" : "0"});
      if (r.diverged) continue;
      net::save_checkpoint(r.result.best, out / ("checkpoint_lambda" + std::to_string(i) + ".coda"));
      write_train_log(out / ("train_log_lambda" + std::to_string(i) + ".csv"), r.result.log);
    }
    net::save_checkpoint(cal.runs[cal.best_index].result.best, out / "checkpoint.coda");
    return;
  }

  train::TrainResult r = train_logged(tc, nc, ds, out, "checkpoint");
  net::save_checkpoint(r.best, out / "checkpoint.coda");
  write_train_log(out / "train_log.csv", r.log);
}

// ---------------------------------------------------------------------------
// evaluate

inline void cmd_evaluate(Config& cfg, const fs::path& out) {
  const fs::path data_dir = cfg.path("dataset");
  if (data_dir.empty()) throw ConfigError(cfg.source() + ": missing required key 'dataset'");
  const std::vector<fs::path> ck_paths = cfg.paths("checkpoints");
  const std::size_t samples = cfg.count("samples", 100);
  const std::uint64_t seed = cfg.u64("seed", 0);
  const std::size_t n_bins = cfg.count("n_bins", 20);
  const metrics::SsrelWeighting weighting = read_weighting(cfg);
  const std::size_t clim_members = cfg.count("climatology_members", 100);
  cfg.count("workers", 1);
  cfg.finish();
  if (ck_paths.empty()) throw ConfigError(cfg.source() + ": 'checkpoints' needs at least one path");

  ensure_dir(out);
  write_resolved(cfg, out);
  const obs::AssimDataset ds = load_dataset(data_dir);
  train::Ensemble ens;
  for (const auto& p : ck_paths) ens.members.push_back(net::load_checkpoint(p));
  try {
    ens.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("evaluate: ") + e.what());
  }
  const std::size_t w = ens.members.front().config.window_half_width;
  const auto ranges = train::window_ranges(ds.observations.rows(), ds.split, w, 0);
  if (ranges.val_eval.empty()) {
    throw ConfigError("evaluate: validation split too short for window half-width " + std::to_string(w));
  }
  const train::Evaluation ev =
      train::evaluate(ens, ds.observations, ds.truth, ranges.val_eval, samples, seed, n_bins, weighting);
  const double clim = train::climatology_crps(ds, ranges.val_eval, clim_members);

  CsvWriter m(out / "metrics.csv", {"metric", "value"});
  const auto& s = ev.scores;
  m.row({"crps", num(s.crps)});
  m.row({"mae", num(s.mae)});
  m.row({"rmse", num(s.rmse)});
  m.row({"spread", num(s.table.spread)});
  m.row({"ssrat", num(s.table.ssrat)});
  m.row({"ssrel", num(s.table.ssrel)});
  m.row({"climatology_crps", num(clim)});
  if (ev.sampled) {
    m.row({"crps_sampled", num(ev.sampled->crps)});
    m.row({"ssrat_sampled", num(ev.sampled->table.ssrat)});
  }
  if (train::is_gaussian(ens.members.front()) && ens.members.size() == 1) m.row({"median_sigma", num(ev.median_sigma)});
  m.row({"members", std::to_string(ev.members)});
  m.row({"cells", std::to_string(s.table.total)});
  m.row({"dropped_bins", std::to_string(s.table.dropped_bins)});

  CsvWriter b(out / "spread_skill.csv", {"bin_lo", "bin_hi", "mean_spread", "skill", "count"});
  for (const auto& bin : s.table.bins) {
    b.row({num(bin.lo), num(bin.hi), num(bin.spread), num(bin.skill), std::to_string(bin.count)});
  }
}

// ---------------------------------------------------------------------------
// assimilate

inline const std::vector<std::string>& sweep_header() {
  static const std::vector<std::string> h{"window_length", "variant", "repeat_seed", "mse",
                                          "final_cost", "iters_used", "wall_seconds", "status"};
  return h;
}

inline std::string row_status(const var4d::SweepRow& r) {
  if (!r.error.empty()) {
    std::string e = r.error;
    for (char& c : e)
      if (c == ',' || c == '\n' || c == '\r') c = ';';
    return "error: " + e;
  }
  return r.line_search_failed ? "line_search_failed" : "ok";
}

inline std::vector<std::string> sweep_fields(const var4d::SweepRow& r) {
  return {std::to_string(r.length), r.variant,         std::to_string(r.repeat_seed), num(r.mse),
          num(r.final_cost),        std::to_string(r.iters_used), num(r.wall_seconds), row_status(r)};
}

inline std::string strip_workers(const std::string& text) {
  std::istringstream is(text);
  std::string line, out;
  while (std::getline(is, line))
    if (line.rfind("workers =", 0) != 0) out += line + "\n";
  return out;
}

inline void dump_states(const var4d::SweepConfig& sc, const var4d::SweepRow& row, std::size_t margin,
                        const fs::path& dir) {
  ensure_dir(dir);
  const std::string stem = "T" + std::to_string(row.length) + "_" + row.variant + "_r" + std::to_string(row.repeat);
  l96::Trajectory est;
  est.states = row.result.states;
  est.config = sc.dynamics;
  est.seed = row.repeat_seed;
  obs::save_trajectory(est, dir / (stem + ".l96t"));
  const obs::AssimDataset inst = var4d::sweep_instance(sc, margin, row.length, row.repeat);
  CsvWriter w(dir / (stem + "_diff.csv"), {"t", "variable", "truth", "estimate", "diff"});
  for (std::size_t t = 0; t < est.states.dim(0); ++t)
    for (std::size_t i = 0; i < est.states.dim(1); ++i) {
      const double truth = inst.truth.states(margin + t, i);
      const double x = est.states(t, i);
      w.row({std::to_string(t), std::to_string(i), num(truth), num(x), num(x - truth)});
    }
}

inline void cmd_assimilate(Config& cfg, const fs::path& out) {
  const fs::path ck_path = cfg.path("checkpoint");
  var4d::SweepConfig sc;
  sc.dynamics = read_dynamics(cfg);
  sc.lengths = cfg.counts("lengths", "1000");
  sc.repeats = cfg.count("repeats", sc.repeats);
  sc.variants = cfg.words("variants", "nearest_init,coda_init,coda_init_bg,coda_init_bg_fg");
  sc.seed = cfg.u64("seed", sc.seed);
  sc.coverage = cfg.real("coverage", sc.coverage);
  sc.noise_std = cfg.real("noise_std", sc.noise_std);
  sc.alpha = cfg.real("alpha", sc.alpha);
  sc.margin = cfg.count("margin", sc.margin);
  sc.lbfgs.max_iters = cfg.count("max_iters", sc.lbfgs.max_iters);
  sc.lbfgs.memory_size = cfg.count("memory_size", sc.lbfgs.memory_size);
  sc.lbfgs.grad_tol = cfg.real("grad_tol", sc.lbfgs.grad_tol);
  sc.chunk_length = cfg.count("chunk_length", sc.chunk_length);
  sc.record_time = cfg.flag("timing", false);
  sc.workers = cfg.count("workers", 1);
  const bool dump = cfg.flag("dump_states", false);
  cfg.finish();

  if (sc.lengths.empty()) throw ConfigError(cfg.source() + ": lengths needs at least one value");
  for (std::size_t len : sc.lengths)
    if (len < 1) throw ConfigError(cfg.source() + ": window lengths must be >= 1");
  if (sc.repeats < 1) throw ConfigError(cfg.source() + ": repeats must be >= 1");
  bool needs_net = false;
  for (const auto& v : sc.variants) needs_net |= var4d::variant_by_label(v).init == var4d::InitStrategy::Coda;
  std::shared_ptr<const net::Checkpoint> ck;
  if (!ck_path.empty()) ck = std::make_shared<const net::Checkpoint>(net::load_checkpoint(ck_path));
  if (needs_net && !ck) throw ConfigError(cfg.source() + ": CODA variants need a 'checkpoint'");
  const std::size_t margin = var4d::sweep_margin(sc, ck.get());

  ensure_dir(out);
  const fs::path csv = out / "sweep.csv";
  const fs::path resolved = out / "resolved_config.txt";
  const auto cells = var4d::sweep_cells(sc);
  std::vector<bool> skip(cells.size(), false);
  bool resume = fs::exists(csv);
  if (resume) {
    if (!fs::exists(resolved) ||
        strip_workers(io::read_text(resolved)) != strip_workers(cfg.resolved_text())) {
      throw ConfigError("assimilate: " + out.string() + " holds a sweep with a different config");
    }
    truncate_partial_line(csv);
    const CsvTable done = read_csv(csv);
    std::set<std::tuple<std::size_t, std::string, std::uint64_t>> keys;
    const std::size_t cl = done.column("window_length"), cv = done.column("variant"), cs = done.column("repeat_seed");
    for (const auto& r : done.rows) keys.emplace(net::parse_size(r[cl]), r[cv], std::stoull(r[cs]));
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto seed = var4d::repeat_seed(sc.seed, cells[i].length, cells[i].repeat);
      skip[i] = keys.count({cells[i].length, cells[i].variant, seed}) != 0;
      skipped += skip[i];
    }
    log(LogLevel::Info, "resuming sweep, " + std::to_string(skipped) + " cells already done");
  } else {
    write_resolved(cfg, out);
  }

  CsvWriter w(csv, sweep_header(), resume);
  var4d::sweep(
      sc, ck,
      [&](const var4d::SweepRow& r) {
        w.row(sweep_fields(r));
        if (!r.error.empty()) log(LogLevel::Warn, "cell failed: " + r.error);
        if (r.line_search_failed) log(LogLevel::Warn, "line search failed in T=" + std::to_string(r.length) + " " + r.variant);
        log(LogLevel::Info, "T=" + std::to_string(r.length) + " " + r.variant + " repeat " + std::to_string(r.repeat) +
                                " mse " + num(r.mse));
        if (dump && r.error.empty()) dump_states(sc, r, margin, out / "states");
      },
      skip, dump);
}

// ---------------------------------------------------------------------------
// report

inline std::vector<var4d::SweepRow> read_sweep(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cl = t.column("window_length"), cv = t.column("variant"), cs = t.column("repeat_seed"),
                    cm = t.column("mse"), cf = t.column("final_cost"), ci = t.column("iters_used"),
                    cw = t.column("wall_seconds"), cst = t.column("status");
  std::vector<var4d::SweepRow> rows;
  for (const auto& r : t.rows) {
    var4d::SweepRow s;
    s.length = net::parse_size(r[cl]);
    s.variant = r[cv];
    s.repeat_seed = std::stoull(r[cs]);
    s.mse = net::parse_double(r[cm]);
    s.final_cost = net::parse_double(r[cf]);
    s.iters_used = net::parse_size(r[ci]);
    s.wall_seconds = net::parse_double(r[cw]);
    if (r[cst].rfind("error", 0) == 0) s.error = r[cst];
    s.line_search_failed = r[cst] == "line_search_failed";
    rows.push_back(std::move(s));
  }
  return rows;
}

inline std::vector<var4d::SummaryRow> cmd_report(Config& cfg, const fs::path& out) {
  const fs::path sweep_path = cfg.path("sweep");
  if (sweep_path.empty()) throw ConfigError(cfg.source() + ": missing required key 'sweep'");
  cfg.count("workers", 1);
  cfg.finish();
  ensure_dir(out);
  write_resolved(cfg, out);
  const auto rows = read_sweep(sweep_path);
  const auto summary = var4d::summarize(rows);
  CsvWriter w(out / "summary.csv", {"window_length", "variant", "count", "mean_mse", "std_mse"});
  for (const auto& s : summary) {
    w.row({std::to_string(s.length), s.variant, std::to_string(s.count), num(s.mean_mse), num(s.std_mse)});
  }
  return summary;
}

}  // namespace assimlab::cli

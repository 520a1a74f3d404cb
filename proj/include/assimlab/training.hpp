#pragma once

// Unsupervised training of the state-estimation network from observations only.
//
// Deterministic loss, per window centered at t:
//   sum_{i=0..h} |m_{t+i} * (y_{t+i} - M^i(x_t))|^2 + lambda |x_{t+h} - M^h(x_t)|^2
// with x_t the network mean at t and x_{t+h} the mean at the shifted window.
// Variational loss replaces x_t by reparameterized draws mu_t + sigma_t z and the
// consistency term by the Gaussian NLL of M^h(draw) under (mu_{t+h}, sigma_{t+h}).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "assimlab/autodiff.hpp"
#include "assimlab/codanet.hpp"
#include "assimlab/lorenz96.hpp"
#include "assimlab/metrics.hpp"
#include "assimlab/obsmodel.hpp"
#include "assimlab/optim.hpp"
#include "assimlab/parallel.hpp"

namespace assimlab::train {

enum class TrainMode { Deterministic, Variational, Dropout };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Deterministic: return "deterministic";
    case TrainMode::Variational: return "variational";
    case TrainMode::Dropout: return "dropout";
  }
  return "?";
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "deterministic") return TrainMode::Deterministic;
  if (s == "variational") return TrainMode::Variational;
  if (s == "dropout") return TrainMode::Dropout;
  throw ConfigError("unknown training mode '" + s + "'");
}

struct TrainConfig {
  std::size_t horizon = 10;
  double lambda = 1.0;
  std::size_t mc_samples = 1;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::size_t windows_per_epoch = 0;  // 0 = every training window
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string dataset_id;
  TrainMode mode = TrainMode::Variational;
  bool detach_target = false;
  std::size_t val_samples = 20;  // dropout ensemble size for per-epoch validation metrics
  std::size_t n_bins = 20;
  bool record_time = false;

  void validate() const {
    if (horizon < 1) throw ConfigError("train: horizon must be >= 1");
    if (mc_samples < 1) throw ConfigError("train: mc_samples must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  }
};

/// Training divergence; carries the last checkpoint whose losses were finite.
class TrainingDivergence : public NumericalError {
 public:
  TrainingDivergence(const std::string& what, net::Checkpoint last_finite)
      : NumericalError(what), last_finite_(std::move(last_finite)) {}
  const net::Checkpoint& last_finite() const noexcept { return last_finite_; }

 private:
  net::Checkpoint last_finite_;
};

// ---------------------------------------------------------------------------
// Losses

/// Sum_i [log sigma_i + (x_i - mu_i)^2 / (2 sigma_i^2)] + (n/2) log 2 pi, n = cell count.
inline double gaussian_nll(std::span<const double> x, std::span<const double> mu, std::span<const double> sigma) {
  if (x.size() != mu.size() || x.size() != sigma.size()) throw ContractError("gaussian_nll: shape mismatch");
  double s = 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mu[i]) / sigma[i];
    s += std::log(sigma[i]) + 0.5 * z * z;
  }
  if (!std::isfinite(s)) throw NumericalError("gaussian_nll: non-finite value");
  return s;
}

inline ad::Var gaussian_nll(ad::Var x, ad::Var mu, ad::Var sigma) {
  ad::Var z = (x - mu) / sigma;
  return ad::sum(ad::log(sigma)) + ad::squared_norm(z) * 0.5 +
         0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
}

/// Observations over the horizon for a batch of window centers.
struct WindowBatch {
  std::vector<std::size_t> centers;
  Tensor input;    // (2B, C, n): windows at t then windows at t+h
  Tensor targets;  // (h+1, B, n) zero-filled y_{t+i}
  Tensor masks;    // (h+1, B, n)
};

inline WindowBatch make_batch(const obs::ObservationSet& o, std::span<const std::size_t> centers,
                              const net::NetworkConfig& cfg, std::size_t h) {
  const std::size_t B = centers.size(), n = o.n(), w = cfg.window_half_width;
  WindowBatch b;
  b.centers.assign(centers.begin(), centers.end());
  std::vector<std::size_t> all(centers.begin(), centers.end());
  for (std::size_t c : centers) {
    if (c < w || c + h + w >= o.rows()) {
      throw ContractError("make_batch: window at " + std::to_string(c) + " with horizon " + std::to_string(h) +
                          " leaves the series");
    }
    all.push_back(c + h);
  }
  b.input = net::make_input(o, all, cfg);
  b.targets = Tensor(Shape{h + 1, B, n});
  b.masks = Tensor(Shape{h + 1, B, n});
  for (std::size_t i = 0; i <= h; ++i) {
    for (std::size_t k = 0; k < B; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        const double m = o.mask(centers[k] + i, j);
        b.masks[(i * B + k) * n + j] = m;
        b.targets[(i * B + k) * n + j] = m * o.values(centers[k] + i, j);
      }
    }
  }
  return b;
}

namespace detail {

inline Tensor horizon_slice(const Tensor& t, std::size_t i) {
  const std::size_t stride = t.size() / t.dim(0);
  std::vector<double> d(t.data().begin() + i * stride, t.data().begin() + (i + 1) * stride);
  return Tensor(Shape{t.dim(1), t.dim(2)}, std::move(d));
}

// Masked observation misfit of x propagated through the horizon; returns the final state.
inline ad::Var observation_term(ad::Var x0, const WindowBatch& b, std::size_t h, const l96::Lorenz96Config& dyn,
                                ad::Var* final_state) {
  ad::Graph& g = x0.graph();
  ad::Var x = x0;
  ad::Var total;
  for (std::size_t i = 0; i <= h; ++i) {
    if (i > 0) x = l96::rk4_step(x, dyn);
    ad::Var m = g.constant(horizon_slice(b.masks, i));
    ad::Var y = g.constant(horizon_slice(b.targets, i));
    ad::Var term = ad::squared_norm(m * (x - y));
    total = i == 0 ? term : total + term;
  }
  *final_state = x;
  return total;
}

inline ad::Var maybe_detach(ad::Var v, bool detach) { return detach ? v.graph().constant(v.value()) : v; }

}  // namespace detail

/// Deterministic loss from given means at t and t+h (each (B, n)); averaged over the batch.
inline ad::Var coda_loss(ad::Var mu_t, ad::Var mu_th, const WindowBatch& b, std::size_t h, double lambda,
                         const l96::Lorenz96Config& dyn, bool detach_target = false) {
  const double inv_b = 1.0 / static_cast<double>(b.centers.size());
  ad::Var xh;
  ad::Var obs_term = detail::observation_term(mu_t, b, h, dyn, &xh);
  if (lambda == 0.0) return obs_term * inv_b;
  ad::Var consistency = ad::squared_norm(detail::maybe_detach(mu_th, detach_target) - xh);
  return (obs_term + consistency * lambda) * inv_b;
}

/// Monte-Carlo variational loss from given fields; draws use common random numbers
/// across the observation and likelihood terms. `z` holds one (B, n) tensor per sample.
inline ad::Var variational_loss(ad::Var mu_t, ad::Var sigma_t, ad::Var mu_th, ad::Var sigma_th, const WindowBatch& b,
                                std::size_t h, double lambda, const l96::Lorenz96Config& dyn,
                                std::span<const Tensor> z, bool detach_target = false) {
  if (z.empty()) throw ContractError("variational_loss: need at least one Monte-Carlo draw");
  const double inv = 1.0 / (static_cast<double>(b.centers.size()) * static_cast<double>(z.size()));
  ad::Var m_th = detail::maybe_detach(mu_th, detach_target);
  ad::Var s_th = detail::maybe_detach(sigma_th, detach_target);
  ad::Var total;
  for (std::size_t s = 0; s < z.size(); ++s) {
    ad::Var x = net::sample(mu_t, sigma_t, z[s]);
    ad::Var xh;
    ad::Var term = detail::observation_term(x, b, h, dyn, &xh);
    if (lambda != 0.0) term = term + gaussian_nll(xh, m_th, s_th) * lambda;
    total = s == 0 ? term : total + term;
  }
  return total * inv;
}

inline std::vector<Tensor> draw_noise(std::size_t samples, const Shape& shape, std::uint64_t seed) {
  std::vector<Tensor> z;
  for (std::size_t s = 0; s < samples; ++s) z.push_back(net::standard_normal(shape, derive_seed(seed, "mc", s)));
  return z;
}

/// Full training objective on a batch for network parameters `params`.
inline ad::Var batch_loss(ad::Graph& g, std::span<const ad::Var> params, const WindowBatch& b,
                          const net::NetworkConfig& net_cfg, const TrainConfig& tc, const l96::Lorenz96Config& dyn,
                          std::uint64_t step_seed) {
  const std::size_t B = b.centers.size();
  std::optional<std::uint64_t> dseed;
  if (tc.mode == TrainMode::Dropout) dseed = derive_seed(step_seed, "dropout");
  net::ForwardVars f = net::forward(g, params, g.constant(b.input), net_cfg, dseed);
  ad::Var mu_t = ad::slice(f.mu, 0, 0, B), mu_th = ad::slice(f.mu, 0, B, 2 * B);
  if (tc.mode != TrainMode::Variational) {
    return coda_loss(mu_t, mu_th, b, tc.horizon, tc.lambda, dyn, tc.detach_target);
  }
  if (net_cfg.output_mode != net::OutputMode::Gaussian) {
    throw ConfigError("variational training requires gaussian output mode");
  }
  ad::Var s_t = ad::slice(f.sigma, 0, 0, B), s_th = ad::slice(f.sigma, 0, B, 2 * B);
  const auto z = draw_noise(tc.mc_samples, mu_t.shape(), step_seed);
  return variational_loss(mu_t, s_t, mu_th, s_th, b, tc.horizon, tc.lambda, dyn, z, tc.detach_target);
}

inline ad::ValueAndGrad batch_value_and_grad(std::span<const net::NamedTensor> params, const WindowBatch& b,
                                             const net::NetworkConfig& net_cfg, const TrainConfig& tc,
                                             const l96::Lorenz96Config& dyn, std::uint64_t step_seed) {
  std::vector<Tensor> at;
  for (const auto& p : params) at.push_back(p.value);
  return ad::value_and_grad(
      [&](ad::Graph& g, std::span<const ad::Var> pv) { return batch_loss(g, pv, b, net_cfg, tc, dyn, step_seed); },
      std::span<const Tensor>(at));
}

// ---------------------------------------------------------------------------
// Window ranges

struct WindowRanges {
  std::vector<std::size_t> train;     // centers with t..t+h windows inside [0, split)
  std::vector<std::size_t> val_loss;  // same, inside [split, rows)
  std::vector<std::size_t> val_eval;  // centers whose single window lies inside [split, rows)
};

inline WindowRanges window_ranges(std::size_t rows, std::size_t split, std::size_t w, std::size_t h) {
  WindowRanges r;
  for (std::size_t c = w; c + h + w < split; ++c) r.train.push_back(c);
  for (std::size_t c = split + w; c + h + w < rows; ++c) r.val_loss.push_back(c);
  for (std::size_t c = split + w; c + w < rows; ++c) r.val_eval.push_back(c);
  return r;
}

// ---------------------------------------------------------------------------
// Prediction and evaluation

/// Ensemble of independently trained members sharing one network config.
struct Ensemble {
  std::vector<net::Checkpoint> members;

  void validate() const {
    if (members.empty()) throw ContractError("ensemble: no members");
    for (const auto& m : members) {
      if (!(m.config == members.front().config)) throw ContractError("ensemble: member configs differ");
    }
  }
};

/// Whether a checkpoint is sampled through its Gaussian head or through dropout.
inline bool is_gaussian(const net::Checkpoint& ck) { return ck.config.output_mode == net::OutputMode::Gaussian; }

/// `count` samples per center from one member: (count, B, n).
inline Tensor member_samples(const net::Checkpoint& ck, const obs::ObservationSet& o,
                             std::span<const std::size_t> centers, std::size_t count, std::uint64_t seed) {
  const std::size_t B = centers.size(), n = o.n();
  Tensor out(Shape{count, B, n});
  if (is_gaussian(ck)) {
    net::GaussianField f = net::predict(o, centers, ck.params, ck.config);
    for (std::size_t s = 0; s < count; ++s) {
      Tensor x = net::sample(f, derive_seed(seed, "sample", s));
      std::copy(x.data().begin(), x.data().end(), out.data().begin() + s * B * n);
    }
  } else {
    const bool stochastic = ck.config.dropout_rate > 0.0;
    for (std::size_t s = 0; s < count; ++s) {
      std::optional<std::uint64_t> d;
      if (stochastic) d = derive_seed(seed, "dropout", s);
      net::GaussianField f = net::predict(o, centers, ck.params, ck.config, d);
      std::copy(f.mu.data().begin(), f.mu.data().end(), out.data().begin() + s * B * n);
    }
  }
  return out;
}

/// Pooled equiprobable samples from every member for one window: M * samples_per_member states.
inline std::vector<Tensor> ensemble_predict(const Ensemble& ens, const Tensor& window_values, const Tensor& window_mask,
                                            std::size_t samples_per_member, std::uint64_t seed) {
  ens.validate();
  obs::ObservationSet o;
  o.values = window_values;
  o.mask = window_mask;
  const std::size_t center = ens.members.front().config.window_half_width;
  std::vector<Tensor> pooled;
  for (std::size_t k = 0; k < ens.members.size(); ++k) {
    Tensor s = member_samples(ens.members[k], o, std::span(&center, 1), samples_per_member,
                              derive_seed(seed, "member", k));
    const std::size_t n = window_values.dim(1);
    for (std::size_t j = 0; j < samples_per_member; ++j) {
      pooled.push_back(Tensor(Shape{n}, std::vector<double>(s.data().begin() + j * n, s.data().begin() + (j + 1) * n)));
    }
  }
  return pooled;
}

struct Evaluation {
  metrics::Scores scores;      // primary: closed form for Gaussian single models, else pooled ensemble
  std::optional<metrics::Scores> sampled;  // ensemble-form cross-check for Gaussian models
  std::size_t members = 0;     // ensemble size used for the ensemble form
  double median_sigma = 0.0;   // Gaussian models only
};

inline std::vector<double> truth_at(const l96::Trajectory& truth, std::span<const std::size_t> centers) {
  std::vector<double> t;
  t.reserve(centers.size() * truth.n());
  for (std::size_t c : centers) {
    auto r = truth.states.row(c);
    t.insert(t.end(), r.begin(), r.end());
  }
  return t;
}

/// Evaluate an ensemble (one member = a single model) at the given centers.
/// Gaussian single members are scored in closed form and, when `samples >= 1`,
/// also by the ensemble formula on `samples` draws.
inline Evaluation evaluate(const Ensemble& ens, const obs::ObservationSet& o, const l96::Trajectory& truth,
                           std::span<const std::size_t> centers, std::size_t samples, std::uint64_t seed,
                           std::size_t n_bins = 20,
                           metrics::SsrelWeighting weighting = metrics::SsrelWeighting::CountWeighted) {
  ens.validate();
  const std::vector<double> t = truth_at(truth, centers);
  Evaluation ev;
  const net::Checkpoint& first = ens.members.front();
  const bool single_gaussian = ens.members.size() == 1 && is_gaussian(first);
  if (single_gaussian) {
    net::GaussianField f = net::predict(o, centers, first.params, first.config);
    ev.scores = metrics::score_gaussian(f.mu.data(), f.sigma.data(), t, n_bins, weighting);
    std::vector<double> s(f.sigma.data().begin(), f.sigma.data().end());
    std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(s.size() / 2), s.end());
    ev.median_sigma = s[s.size() / 2];
  }
  if (!single_gaussian || samples > 0) {
    const bool deterministic_single =
        ens.members.size() == 1 && !is_gaussian(first) && first.config.dropout_rate == 0.0;
    const std::size_t per_member = deterministic_single ? 1 : std::max<std::size_t>(samples / ens.members.size(), 1);
    const std::size_t m = per_member * ens.members.size();
    const std::size_t cells = t.size();
    std::vector<double> members(cells * m);
    for (std::size_t k = 0; k < ens.members.size(); ++k) {
      Tensor s = member_samples(ens.members[k], o, centers, per_member, derive_seed(seed, "member", k));
      for (std::size_t j = 0; j < per_member; ++j)
        for (std::size_t c = 0; c < cells; ++c) members[c * m + k * per_member + j] = s[j * cells + c];
    }
    metrics::Scores es = metrics::score_ensemble(members, m, t, n_bins, weighting);
    ev.members = m;
    if (single_gaussian) ev.sampled = es;
    else ev.scores = es;
  }
  return ev;
}

/// CRPS of a climatological ensemble: for each variable, `members` truth values from
/// the training range at evenly spaced times.
inline double climatology_crps(const obs::AssimDataset& ds, std::span<const std::size_t> centers,
                               std::size_t members = 100) {
  const std::size_t n = ds.truth.n();
  const std::size_t span_rows = ds.split;
  std::vector<double> clim(members);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < members; ++k) clim[k] = ds.truth.states(k * span_rows / members, i);
    for (std::size_t c : centers) total += metrics::crps_ensemble(clim, ds.truth.states(c, i));
  }
  return total / static_cast<double>(n * centers.size());
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_crps = 0.0;
  double val_ssrat = 0.0;
  double val_ssrel = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  net::Checkpoint best;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

inline net::Checkpoint make_checkpoint(const net::NetworkConfig& cfg, const std::vector<net::NamedTensor>& params,
                                       const TrainConfig& tc, std::size_t epoch) {
  net::Checkpoint ck;
  ck.config = cfg;
  ck.params = params;
  ck.metadata = {{"train.lambda", net::format_double(tc.lambda)},
                 {"train.horizon", std::to_string(tc.horizon)},
                 {"train.seed", std::to_string(tc.seed)},
                 {"train.mode", to_string(tc.mode)},
                 {"train.dataset", tc.dataset_id},
                 {"train.epoch", std::to_string(epoch)}};
  return ck;
}

inline double mean_batch_loss(const std::vector<net::NamedTensor>& params, const obs::ObservationSet& o,
                              std::span<const std::size_t> centers, const net::NetworkConfig& net_cfg,
                              const TrainConfig& tc, const l96::Lorenz96Config& dyn, std::uint64_t seed) {
  if (centers.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  std::size_t count = 0;
  ad::Graph dummy;
  for (std::size_t a = 0; a < centers.size(); a += tc.batch_size) {
    const std::size_t e = std::min(centers.size(), a + tc.batch_size);
    WindowBatch b = make_batch(o, centers.subspan(a, e - a), net_cfg, tc.horizon);
    ad::Graph g;
    std::vector<ad::Var> pv;
    for (const auto& p : params) pv.push_back(g.constant(p.value));
    total += batch_loss(g, pv, b, net_cfg, tc, dyn, derive_seed(seed, "val", a)).value().item() *
             static_cast<double>(e - a);
    count += e - a;
  }
  return total / static_cast<double>(count);
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam over shuffled window batches; returns the checkpoint with the lowest validation loss.
inline TrainResult train(const TrainConfig& tc, const net::NetworkConfig& net_cfg, const obs::AssimDataset& ds,
                         const EpochCallback& on_epoch = {}) {
  tc.validate();
  net_cfg.validate();
  const l96::Lorenz96Config& dyn = ds.truth.config;
  const obs::ObservationSet& o = ds.observations;
  const WindowRanges ranges = window_ranges(o.rows(), ds.split, net_cfg.window_half_width, tc.horizon);
  if (ranges.train.empty()) throw ConfigError("train: dataset too short for one window plus horizon");

  std::vector<net::NamedTensor> params = net::init_params(net_cfg, derive_seed(tc.seed, "init"));
  AdamState adam;
  adam.lr = tc.lr;
  TrainResult result;
  result.best = make_checkpoint(net_cfg, params, tc, 0);
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = ranges.train;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    CounterRng shuffle(derive_seed(tc.seed, "shuffle", epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    const std::size_t used = tc.windows_per_epoch ? std::min(tc.windows_per_epoch, order.size()) : order.size();

    double train_sum = 0.0;
    for (std::size_t a = 0; a < used; a += tc.batch_size) {
      const std::size_t e = std::min(used, a + tc.batch_size);
      WindowBatch b = make_batch(o, std::span(order).subspan(a, e - a), net_cfg, tc.horizon);
      ad::ValueAndGrad vg;
      try {
        vg = batch_value_and_grad(params, b, net_cfg, tc, dyn, derive_seed(tc.seed, "step", step));
      } catch (const NumericalError& err) {
        throw TrainingDivergence(std::string("train: divergence at epoch ") + std::to_string(epoch) + ": " +
                                     err.what(),
                                 result.best);
      }
      std::vector<Tensor> values;
      for (auto& p : params) values.push_back(std::move(p.value));
      adam_step(values, vg.grads, adam);
      for (std::size_t k = 0; k < params.size(); ++k) params[k].value = std::move(values[k]);
      train_sum += vg.value * static_cast<double>(e - a);
      ++step;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = train_sum / static_cast<double>(used);
    try {
      log.val_loss = mean_batch_loss(params, o, ranges.val_loss, net_cfg, tc, dyn, derive_seed(tc.seed, "val"));
      net::Checkpoint current = make_checkpoint(net_cfg, params, tc, epoch);
      Evaluation ev = evaluate(Ensemble{{current}}, o, ds.truth, ranges.val_eval,
                               tc.mode == TrainMode::Dropout ? tc.val_samples : 0, derive_seed(tc.seed, "val.eval"),
                               tc.n_bins);
      log.val_crps = ev.scores.crps;
      log.val_ssrat = ev.scores.table.ssrat;
      log.val_ssrel = ev.scores.table.ssrel;
      if (!std::isfinite(log.train_loss) || !std::isfinite(log.val_loss)) {
        throw NumericalError("non-finite epoch loss");
      }
      if (log.val_loss < best_val) {
        best_val = log.val_loss;
        result.best = std::move(current);
        result.best_epoch = epoch;
      }
    } catch (const TrainingDivergence&) {
      throw;
    } catch (const NumericalError& err) {
      throw TrainingDivergence(std::string("train: divergence at epoch ") + std::to_string(epoch) + ": " + err.what(),
                               result.best);
    }
    if (tc.record_time) {
      log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Calibration and baselines

struct CandidateRun {
  double lambda = 0.0;
  double ssrat = 0.0;
  double crps = 0.0;
  double ssrel = 0.0;
  double median_sigma = 0.0;
  bool diverged = false;
  TrainResult result;
};

struct Calibration {
  double lambda = 0.0;
  std::size_t best_index = 0;
  std::vector<CandidateRun> runs;
};

/// Score a trained Gaussian model on the validation windows of `ds`.
inline Evaluation validation_evaluation(const net::Checkpoint& ck, const obs::AssimDataset& ds, std::size_t horizon,
                                        std::size_t samples, std::uint64_t seed, std::size_t n_bins = 20) {
  const auto r = window_ranges(ds.observations.rows(), ds.split, ck.config.window_half_width, horizon);
  return evaluate(Ensemble{{ck}}, ds.observations, ds.truth, r.val_eval, samples, seed, n_bins);
}

/// Train one model per candidate; pick the one whose validation SSRAT is closest to 1,
/// ties resolved toward the smaller lambda. A single candidate is returned unchanged.
/// Candidates run on `workers` threads; the outcome does not depend on the count.
inline Calibration calibrate_lambda(std::span<const double> candidates, const TrainConfig& base,
                                    const net::NetworkConfig& net_cfg, const obs::AssimDataset& ds,
                                    std::size_t workers = 1) {
  if (candidates.empty()) throw ConfigError("calibrate_lambda: no candidates");
  Calibration cal;
  if (candidates.size() == 1) {
    cal.lambda = candidates[0];
    return cal;
  }
  ordered_parallel_for<CandidateRun>(
      candidates.size(), workers,
      [&](std::size_t i) {
        CandidateRun run;
        run.lambda = candidates[i];
        TrainConfig tc = base;
        tc.lambda = candidates[i];
        try {
          run.result = train(tc, net_cfg, ds);
          Evaluation ev =
              validation_evaluation(run.result.best, ds, tc.horizon, 0, derive_seed(tc.seed, "cal"), tc.n_bins);
          run.ssrat = ev.scores.table.ssrat;
          run.crps = ev.scores.crps;
          run.ssrel = ev.scores.table.ssrel;
          run.median_sigma = ev.median_sigma;
        } catch (const NumericalError&) {
          run.diverged = true;
        }
        return run;
      },
      [&](std::size_t, CandidateRun& run) { cal.runs.push_back(std::move(run)); });
  bool found = false;
  for (std::size_t i = 0; i < cal.runs.size(); ++i) {
    const auto& r = cal.runs[i];
    if (r.diverged || !std::isfinite(r.ssrat)) continue;
    const double d = std::abs(r.ssrat - 1.0);
    const auto& b = cal.runs[cal.best_index];
    const double bd = std::abs(b.ssrat - 1.0);
    if (!found || d < bd || (d == bd && r.lambda < b.lambda)) {
      cal.best_index = i;
      found = true;
    }
  }
  if (!found) throw NumericalError("calibrate_lambda: every candidate run diverged");
  cal.lambda = cal.runs[cal.best_index].lambda;
  return cal;
}

struct DropoutTuning {
  double rate = 0.0;
  std::vector<std::pair<double, double>> crps_by_rate;
  net::Checkpoint best;
};

/// Train dropout-mode models over a grid of rates; keep the rate minimizing validation CRPS.
inline DropoutTuning tune_dropout(std::span<const double> rates, const TrainConfig& base, net::NetworkConfig net_cfg,
                                  const obs::AssimDataset& ds, std::size_t samples = 100) {
  if (rates.empty()) throw ConfigError("tune_dropout: empty grid");
  DropoutTuning out;
  double best = std::numeric_limits<double>::infinity();
  for (double p : rates) {
    TrainConfig tc = base;
    tc.mode = TrainMode::Dropout;
    net_cfg.dropout_rate = p;
    net_cfg.output_mode = net::OutputMode::Deterministic;
    TrainResult r = train(tc, net_cfg, ds);
    const double crps =
        validation_evaluation(r.best, ds, tc.horizon, samples, derive_seed(tc.seed, "dropout.tune")).scores.crps;
    out.crps_by_rate.emplace_back(p, crps);
    if (crps < best) {
      best = crps;
      out.rate = p;
      out.best = r.best;
    }
  }
  return out;
}

inline std::uint64_t member_seed(std::uint64_t root, std::size_t k) { return derive_seed(root, "ensemble.member", k); }

}  // namespace assimlab::train

#pragma once

// Weak-constraint 4D-Var over x_0..x_T:
//   J = sum_t |m_t * (x_t - y_t)|^2 + alpha sum_{t>=1} |x_t - M(x_{t-1})|^2
//       + beta |x_0 - mu_0|^2_{Sigma_0} + gamma |x_T - mu_T|^2_{Sigma_T}
// with (mu, Sigma) from the network at the window ends.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "assimlab/autodiff.hpp"
#include "assimlab/codanet.hpp"
#include "assimlab/lorenz96.hpp"
#include "assimlab/obsmodel.hpp"
#include "assimlab/optim.hpp"
#include "assimlab/parallel.hpp"

namespace assimlab::var4d {

enum class InitStrategy { Nearest, Coda };

struct Variant {
  const char* label;
  InitStrategy init;
  bool background;
  bool foreground;
};

inline constexpr std::array<Variant, 4> kVariants{{
    {"nearest_init", InitStrategy::Nearest, false, false},
    {"coda_init", InitStrategy::Coda, false, false},
    {"coda_init_bg", InitStrategy::Coda, true, false},
    {"coda_init_bg_fg", InitStrategy::Coda, true, true},
}};

inline const Variant& variant_by_label(const std::string& label) {
  for (const auto& v : kVariants)
    if (label == v.label) return v;
  throw ConfigError("unknown 4D-Var variant '" + label + "'");
}

/// Squared Mahalanobis distance with diagonal standard deviations sigma.
inline double weighted_norm_sq(std::span<const double> x, std::span<const double> mu, std::span<const double> sigma) {
  if (x.size() != mu.size() || x.size() != sigma.size()) throw ContractError("weighted_norm_sq: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw ContractError("weighted_norm_sq: sigma must be > 0");
    const double d = (x[i] - mu[i]) / sigma[i];
    s += d * d;
  }
  return s;
}

inline ad::Var weighted_norm_sq(ad::Var x, const Tensor& mu, const Tensor& sigma) {
  for (double s : sigma.data())
    if (!(s > 0.0)) throw ContractError("weighted_norm_sq: sigma must be > 0");
  ad::Graph& g = x.graph();
  return ad::squared_norm((x - g.constant(mu)) / g.constant(sigma));
}

struct Priors {
  net::GaussianField first;  // (n) at t = 0
  net::GaussianField last;   // (n) at t = T
};

struct AssimilationProblem {
  obs::ObservationSet observations;  // rows t = -margin .. T + margin
  std::optional<l96::Trajectory> truth;  // same rows; evaluation only
  std::size_t margin = 0;
  l96::Lorenz96Config dynamics;
  double alpha = 1e7;
  double beta = 0.0;
  double gamma = 0.0;
  double obs_weight = 1.0;  // inverse observation variance
  InitStrategy init = InitStrategy::Nearest;
  std::shared_ptr<const net::Checkpoint> checkpoint;
  LbfgsOptions lbfgs;
  std::size_t chunk_length = 512;  // 0 = single graph over the whole window
  std::string label = "custom";

  std::size_t window_steps() const {
    if (observations.rows() < 2 * margin + 1) throw ContractError("assimilation window shorter than its margins");
    return observations.rows() - 2 * margin - 1;
  }

  void validate() const {
    if ((beta != 0.0 || gamma != 0.0 || init == InitStrategy::Coda) && !checkpoint) {
      throw ConfigError("4D-Var: priors or CODA init require a checkpoint");
    }
    if (checkpoint && margin < checkpoint->config.window_half_width) {
      throw ConfigError("4D-Var: margin " + std::to_string(margin) + " smaller than network half-width " +
                        std::to_string(checkpoint->config.window_half_width));
    }
    if (!(alpha >= 0.0)) throw ConfigError("4D-Var: alpha must be >= 0");
    (void)window_steps();
  }
};

/// Network (mu, sigma) at the first and last state of the window.
inline Priors build_priors(const net::Checkpoint& ck, const obs::ObservationSet& o, std::size_t margin) {
  if (margin < ck.config.window_half_width || o.rows() < 2 * margin + 1) {
    throw ContractError("build_priors: observations lack a margin of " + std::to_string(ck.config.window_half_width));
  }
  const std::size_t T = o.rows() - 2 * margin - 1;
  const std::array<std::size_t, 2> centers{margin, margin + T};
  net::GaussianField f = net::predict(o, centers, ck.params, ck.config);
  const std::size_t n = o.n();
  auto row = [&](const Tensor& t, std::size_t r) {
    return Tensor(Shape{n}, std::vector<double>(t.data().begin() + r * n, t.data().begin() + (r + 1) * n));
  };
  Priors p;
  p.first = {row(f.mu, 0), row(f.sigma, 0)};
  p.last = {row(f.mu, 1), row(f.sigma, 1)};
  if (ck.config.output_mode != net::OutputMode::Gaussian) {
    p.first.sigma = Tensor(Shape{n}, 1.0);
    p.last.sigma = Tensor(Shape{n}, 1.0);
  }
  return p;
}

namespace detail {

inline Tensor rows_of(const Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t n = t.dim(1);
  return Tensor(Shape{end - begin, n},
                std::vector<double>(t.data().begin() + begin * n, t.data().begin() + end * n));
}

// Cost of rows [a, b) plus transitions into them; graph parameter covers rows [base, b).
inline ad::Var chunk_cost(ad::Var p, std::size_t a, std::size_t b, std::size_t base, const AssimilationProblem& pr,
                          const Priors* priors) {
  ad::Graph& g = p.graph();
  const std::size_t T = pr.window_steps(), n = pr.observations.n(), m = pr.margin;
  ad::Var x = ad::slice(p, 0, a - base, b - base);
  ad::Var mask = g.constant(rows_of(pr.observations.mask, m + a, m + b));
  ad::Var y = g.constant(rows_of(pr.observations.values, m + a, m + b));
  ad::Var cost = ad::squared_norm(mask * (x - y));
  if (pr.obs_weight != 1.0) cost = cost * pr.obs_weight;
  const std::size_t first = std::max<std::size_t>(a, 1);
  if (pr.alpha != 0.0 && first < b) {
    ad::Var prev = ad::slice(p, 0, first - 1 - base, b - 1 - base);
    ad::Var next = ad::slice(p, 0, first - base, b - base);
    cost = cost + ad::squared_norm(next - l96::rk4_step(prev, pr.dynamics)) * pr.alpha;
  }
  if (a == 0 && pr.beta != 0.0) {
    ad::Var x0 = ad::reshape(ad::slice(p, 0, 0 - base, 1 - base), Shape{n});
    cost = cost + weighted_norm_sq(x0, priors->first.mu, priors->first.sigma) * pr.beta;
  }
  if (b == T + 1 && pr.gamma != 0.0) {
    ad::Var xt = ad::reshape(ad::slice(p, 0, T - base, T + 1 - base), Shape{n});
    cost = cost + weighted_norm_sq(xt, priors->last.mu, priors->last.sigma) * pr.gamma;
  }
  return cost;
}

}  // namespace detail

/// Cost and gradient with respect to states (T+1, n). Chunks of `chunk_length`
/// rows are differentiated independently and summed in order.
inline std::pair<double, Tensor> cost_and_gradient(const Tensor& states, const AssimilationProblem& pr,
                                                   const Priors* priors) {
  const std::size_t T = pr.window_steps(), n = pr.observations.n();
  if (states.shape() != Shape{T + 1, n}) {
    throw ContractError("4D-Var cost: states " + shape_str(states.shape()) + " expected " + shape_str({T + 1, n}));
  }
  if ((pr.beta != 0.0 || pr.gamma != 0.0) && !priors) throw ContractError("4D-Var cost: priors required");
  const std::size_t chunk = pr.chunk_length == 0 ? T + 1 : pr.chunk_length;
  double total = 0.0;
  Tensor grad(states.shape());
  for (std::size_t a = 0; a <= T; a += chunk) {
    const std::size_t b = std::min(T + 1, a + chunk);
    const std::size_t base = a > 0 ? a - 1 : 0;
    ad::Graph g;
    ad::Var p = g.parameter(detail::rows_of(states, base, b));
    ad::Var c = detail::chunk_cost(p, a, b, base, pr, priors);
    total += c.value().item();
    std::array<ad::Var, 1> wrt{p};
    Tensor gp = g.backward(c, wrt)[0];
    for (std::size_t i = 0; i < gp.size(); ++i) grad[base * n + i] += gp[i];
  }
  return {total, std::move(grad)};
}

inline double cost(const Tensor& states, const AssimilationProblem& pr, const Priors* priors) {
  return cost_and_gradient(states, pr, priors).first;
}

struct AssimilationResult {
  Tensor states;
  double final_cost = 0.0;
  double mse_vs_truth = std::numeric_limits<double>::quiet_NaN();
  double init_mse = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> cost_trace;
  std::size_t iterations = 0;
  bool line_search_failed = false;
  std::string label;
};

inline double window_mse(const Tensor& states, const l96::Trajectory& truth, std::size_t margin) {
  const std::size_t n = states.dim(1);
  double s = 0.0;
  for (std::size_t t = 0; t < states.dim(0); ++t)
    for (std::size_t i = 0; i < n; ++i) {
      const double d = states(t, i) - truth.states(margin + t, i);
      s += d * d;
    }
  return s / static_cast<double>(states.size());
}

/// Initial states for the problem's strategy.
inline Tensor initial_states(const AssimilationProblem& pr) {
  const std::size_t T = pr.window_steps();
  if (pr.init == InitStrategy::Nearest) {
    return detail::rows_of(obs::nearest_init(pr.observations), pr.margin, pr.margin + T + 1);
  }
  std::vector<std::size_t> centers(T + 1);
  for (std::size_t t = 0; t <= T; ++t) centers[t] = pr.margin + t;
  return net::predict(pr.observations, centers, pr.checkpoint->params, pr.checkpoint->config).mu;
}

inline AssimilationResult assimilate(const AssimilationProblem& pr) {
  pr.validate();
  std::optional<Priors> priors;
  if (pr.beta != 0.0 || pr.gamma != 0.0) priors = build_priors(*pr.checkpoint, pr.observations, pr.margin);
  const Priors* pp = priors ? &*priors : nullptr;
  Tensor x0 = initial_states(pr);
  AssimilationResult res;
  res.label = pr.label;
  if (pr.truth) res.init_mse = window_mse(x0, *pr.truth, pr.margin);
  LbfgsResult opt = lbfgs_minimize([&](const Tensor& x) { return cost_and_gradient(x, pr, pp); }, std::move(x0),
                                   pr.lbfgs);
  res.states = std::move(opt.x);
  res.final_cost = opt.value;
  res.cost_trace = std::move(opt.trace);
  res.iterations = opt.iterations;
  res.line_search_failed = opt.line_search_failed;
  if (pr.truth) res.mse_vs_truth = window_mse(res.states, *pr.truth, pr.margin);
  return res;
}

// ---------------------------------------------------------------------------
// Window-length sweep

struct SweepConfig {
  std::vector<std::size_t> lengths{1000};
  std::size_t repeats = 10;
  std::vector<std::string> variants{"nearest_init", "coda_init", "coda_init_bg", "coda_init_bg_fg"};
  std::uint64_t seed = 0;
  l96::Lorenz96Config dynamics;
  double coverage = 0.25;
  double noise_std = 1.0;
  double alpha = 1e7;
  std::size_t margin = 32;  // overridden by the checkpoint half-width when a checkpoint is given
  LbfgsOptions lbfgs;
  std::size_t chunk_length = 512;
  std::size_t workers = 1;
  bool record_time = false;
};

struct SweepCell {
  std::size_t length = 0;
  std::string variant;
  std::size_t repeat = 0;
};

struct SweepRow {
  std::size_t length = 0;
  std::string variant;
  std::size_t repeat = 0;
  std::uint64_t repeat_seed = 0;
  double mse = 0.0;
  double final_cost = 0.0;
  double init_mse = 0.0;
  std::size_t iters_used = 0;
  double wall_seconds = 0.0;
  bool line_search_failed = false;
  std::string error;  // non-empty when the cell failed
  AssimilationResult result;  // kept only when requested by the caller
};

inline std::uint64_t repeat_seed(std::uint64_t root, std::size_t length, std::size_t repeat) {
  return derive_seed(derive_seed(root, "sweep.length", length), "sweep.repeat", repeat);
}

/// Truth and observations over rows -margin .. T + margin for one sweep instance.
inline obs::AssimDataset sweep_instance(const SweepConfig& cfg, std::size_t margin, std::size_t length,
                                        std::size_t repeat) {
  const std::uint64_t s = repeat_seed(cfg.seed, length, repeat);
  obs::AssimDataset ds;
  ds.truth = l96::simulate(cfg.dynamics, std::nullopt, length + 2 * margin, derive_seed(s, "trajectory"));
  const Tensor mask = obs::make_mask(cfg.dynamics.n, length + 2 * margin, cfg.coverage, derive_seed(s, "mask"));
  ds.observations = obs::observe(ds.truth, mask, cfg.noise_std, derive_seed(s, "noise"));
  ds.observations.coverage = cfg.coverage;
  ds.observations.seed = s;
  return ds;
}

inline AssimilationProblem make_problem(const SweepConfig& cfg, const obs::AssimDataset& inst, std::size_t margin,
                                        const Variant& v, std::shared_ptr<const net::Checkpoint> ck) {
  AssimilationProblem pr;
  pr.observations = inst.observations;
  pr.truth = inst.truth;
  pr.margin = margin;
  pr.dynamics = cfg.dynamics;
  pr.alpha = cfg.alpha;
  pr.beta = v.background ? 1.0 : 0.0;
  pr.gamma = v.foreground ? 1.0 : 0.0;
  pr.obs_weight = 1.0 / (cfg.noise_std * cfg.noise_std);
  pr.init = v.init;
  pr.checkpoint = std::move(ck);
  pr.lbfgs = cfg.lbfgs;
  pr.chunk_length = cfg.chunk_length;
  pr.label = v.label;
  return pr;
}

inline std::vector<SweepCell> sweep_cells(const SweepConfig& cfg) {
  std::vector<SweepCell> cells;
  for (std::size_t len : cfg.lengths)
    for (std::size_t r = 0; r < cfg.repeats; ++r)
      for (const auto& v : cfg.variants) cells.push_back({len, v, r});
  return cells;
}

inline std::size_t sweep_margin(const SweepConfig& cfg, const net::Checkpoint* ck) {
  return ck ? ck->config.window_half_width : cfg.margin;
}

inline SweepRow run_cell(const SweepConfig& cfg, const SweepCell& cell, std::shared_ptr<const net::Checkpoint> ck,
                         bool keep_result = false) {
  const auto t0 = std::chrono::steady_clock::now();
  SweepRow row;
  row.length = cell.length;
  row.variant = cell.variant;
  row.repeat = cell.repeat;
  row.repeat_seed = repeat_seed(cfg.seed, cell.length, cell.repeat);
  try {
    const Variant& v = variant_by_label(cell.variant);
    const std::size_t margin = sweep_margin(cfg, ck.get());
    obs::AssimDataset inst = sweep_instance(cfg, margin, cell.length, cell.repeat);
    AssimilationResult r = assimilate(make_problem(cfg, inst, margin, v, ck));
    row.mse = r.mse_vs_truth;
    row.final_cost = r.final_cost;
    row.init_mse = r.init_mse;
    row.iters_used = r.iterations;
    row.line_search_failed = r.line_search_failed;
    if (keep_result) row.result = std::move(r);
  } catch (const Error& e) {
    row.error = e.what();
    row.mse = row.final_cost = row.init_mse = std::numeric_limits<double>::quiet_NaN();
  }
  if (cfg.record_time) row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

/// Runs every (length, repeat, variant) cell. Rows arrive through on_row in cell order.
/// Cells listed in `skip` (by index) are not run.
inline std::vector<SweepRow> sweep(const SweepConfig& cfg, std::shared_ptr<const net::Checkpoint> ck,
                                   const std::function<void(const SweepRow&)>& on_row = {},
                                   const std::vector<bool>& skip = {}, bool keep_results = false) {
  const auto cells = sweep_cells(cfg);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (skip.empty() || !skip[i]) todo.push_back(i);
  std::vector<SweepRow> rows;
  ordered_parallel_for<SweepRow>(
      todo.size(), cfg.workers, [&](std::size_t k) { return run_cell(cfg, cells[todo[k]], ck, keep_results); },
      [&](std::size_t, SweepRow& r) {
        if (on_row) on_row(r);
        rows.push_back(std::move(r));
      });
  return rows;
}

struct SummaryRow {
  std::size_t length = 0;
  std::string variant;
  std::size_t count = 0;
  double mean_mse = 0.0;
  double std_mse = 0.0;
};

/// Mean and sample standard deviation of MSE per (length, variant), failed cells excluded.
inline std::vector<SummaryRow> summarize(std::span<const SweepRow> rows) {
  std::vector<SummaryRow> out;
  for (const auto& r : rows) {
    if (!r.error.empty() || !std::isfinite(r.mse)) continue;
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const SummaryRow& s) { return s.length == r.length && s.variant == r.variant; });
    if (it == out.end()) {
      out.push_back({r.length, r.variant, 0, 0.0, 0.0});
      it = out.end() - 1;
    }
    ++it->count;
    it->mean_mse += r.mse;
  }
  for (auto& s : out) s.mean_mse /= static_cast<double>(s.count);
  for (const auto& r : rows) {
    if (!r.error.empty() || !std::isfinite(r.mse)) continue;
    for (auto& s : out)
      if (s.length == r.length && s.variant == r.variant) s.std_mse += (r.mse - s.mean_mse) * (r.mse - s.mean_mse);
  }
  for (auto& s : out) s.std_mse = s.count > 1 ? std::sqrt(s.std_mse / static_cast<double>(s.count - 1)) : 0.0;
  return out;
}

}  // namespace assimlab::var4d

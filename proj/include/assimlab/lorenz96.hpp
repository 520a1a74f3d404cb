#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "assimlab/autodiff.hpp"
#include "assimlab/rng.hpp"
#include "assimlab/tensor.hpp"

namespace assimlab::l96 {

struct Lorenz96Config {
  std::size_t n = 40;
  double forcing = 8.0;
  double dt = 0.01;
  std::size_t spinup_steps = 1000;

  void validate() const {
    if (n < 4) throw ConfigError("lorenz96: n must be >= 4, got " + std::to_string(n));
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("lorenz96: dt must be positive");
    if (!std::isfinite(forcing)) throw ConfigError("lorenz96: forcing must be finite");
  }
};

/// Ground-truth states, shape (T+1, n).
struct Trajectory {
  Tensor states;
  Lorenz96Config config;
  std::uint64_t seed = 0;

  std::size_t steps() const { return states.dim(0) - 1; }
  std::size_t n() const { return states.dim(1); }
};

/// dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F with periodic indices.
inline void tendency(std::span<const double> x, double forcing, std::span<double> out) {
  const std::size_t n = x.size();
  if (n < 4) throw ConfigError("lorenz96: n must be >= 4, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double xp1 = x[(i + 1) % n];
    const double xm2 = x[(i + n - 2) % n];
    const double xm1 = x[(i + n - 1) % n];
    out[i] = (xp1 - xm2) * xm1 - x[i] + forcing;
  }
}

inline std::vector<double> tendency(std::span<const double> x, double forcing) {
  std::vector<double> out(x.size());
  tendency(x, forcing, out);
  return out;
}

/// Classical RK4 step; rows of a batched (B, n) buffer are stepped independently.
inline void rk4_step_inplace(std::span<double> x, std::size_t n, double forcing, double dt) {
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (std::size_t r = 0; r * n < x.size(); ++r) {
    std::span<double> xs = x.subspan(r * n, n);
    tendency(xs, forcing, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = xs[i] + 0.5 * dt * k1[i];
    tendency(tmp, forcing, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = xs[i] + 0.5 * dt * k2[i];
    tendency(tmp, forcing, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = xs[i] + dt * k3[i];
    tendency(tmp, forcing, k4);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(xs[i])) {
        throw IntegrationError("rk4_step: non-finite state (dt = " + std::to_string(dt) + " too large?)");
      }
    }
  }
}

inline std::vector<double> rk4_step(std::span<const double> x, double forcing, double dt) {
  std::vector<double> out(x.begin(), x.end());
  rk4_step_inplace(out, x.size(), forcing, dt);
  return out;
}

/// k RK4 steps applied to a state (n) or a batch (B, n).
inline Tensor propagate(Tensor x, std::size_t k, const Lorenz96Config& cfg) {
  const std::size_t n = x.shape().back();
  for (std::size_t s = 0; s < k; ++s) rk4_step_inplace(x.data(), n, cfg.forcing, cfg.dt);
  return x;
}

/// Spin up from F*1 + 0.01 N(0,1) when x0 is absent, then record steps+1 states.
inline Trajectory simulate(const Lorenz96Config& cfg, std::optional<std::vector<double>> x0,
                           std::size_t steps, std::uint64_t seed) {
  cfg.validate();
  std::vector<double> x;
  if (x0) {
    if (x0->size() != cfg.n) throw ContractError("simulate: x0 has wrong length");
    x = *x0;
  } else {
    CounterRng rng(derive_seed(seed, "l96.init"));
    x.assign(cfg.n, cfg.forcing);
    for (double& v : x) v += 0.01 * rng.normal();
    for (std::size_t s = 0; s < cfg.spinup_steps; ++s) rk4_step_inplace(x, cfg.n, cfg.forcing, cfg.dt);
  }
  Trajectory tr;
  tr.config = cfg;
  tr.seed = seed;
  tr.states = Tensor(Shape{steps + 1, cfg.n});
  std::copy(x.begin(), x.end(), tr.states.row(0).begin());
  for (std::size_t t = 1; t <= steps; ++t) {
    rk4_step_inplace(x, cfg.n, cfg.forcing, cfg.dt);
    std::copy(x.begin(), x.end(), tr.states.row(t).begin());
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Differentiable dynamics

/// Tendency as a single registered primitive over (n) or (B, n), with its own VJP.
inline ad::Var tendency(ad::Var x, double forcing) {
  const std::size_t n = x.shape().back();
  if (n < 4) throw ConfigError("lorenz96: n must be >= 4, got " + std::to_string(n));
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r * n < xv.size(); ++r) {
    tendency(xv.data().subspan(r * n, n), forcing, out.data().subspan(r * n, n));
  }
  return x.graph().record("l96_tendency", {x}, std::move(out), [n](ad::BackwardContext& ctx) {
    const Tensor& xv = ctx.input(0);
    const Tensor& g = ctx.grad_output();
    auto gx = ctx.grad(0);
    for (std::size_t r = 0; r * n < xv.size(); ++r) {
      const double* xs = xv.data().data() + r * n;
      const double* gs = g.data().data() + r * n;
      double* d = gx.data() + r * n;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ip1 = (i + 1) % n, im1 = (i + n - 1) % n, im2 = (i + n - 2) % n;
        const double a = gs[i];
        d[ip1] += a * xs[im1];
        d[im2] -= a * xs[im1];
        d[im1] += a * (xs[ip1] - xs[im2]);
        d[i] -= a;
      }
    }
  });
}

/// The same stencil written with generic primitives (roll = slice + concat).
inline ad::Var tendency_composite(ad::Var x, double forcing) {
  return (ad::roll(x, -1) - ad::roll(x, 2)) * ad::roll(x, 1) - x + forcing;
}

inline ad::Var rk4_step(ad::Var x, const Lorenz96Config& cfg) {
  const double dt = cfg.dt;
  ad::Var k1 = tendency(x, cfg.forcing);
  ad::Var k2 = tendency(x + k1 * (0.5 * dt), cfg.forcing);
  ad::Var k3 = tendency(x + k2 * (0.5 * dt), cfg.forcing);
  ad::Var k4 = tendency(x + k3 * dt, cfg.forcing);
  return x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
}

/// M^(k): k differentiable RK4 steps; k = 0 is the identity.
inline ad::Var propagate_k(ad::Var x, std::size_t k, const Lorenz96Config& cfg) {
  for (std::size_t s = 0; s < k; ++s) x = rk4_step(x, cfg);
  return x;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Perturbation doubling time ln2 / lambda_max, lambda_max estimated by repeated
/// renormalization of a tiny separation along a trajectory on the attractor.
inline double doubling_time(const Lorenz96Config& cfg, std::uint64_t seed, double separation = 1e-8,
                            double renorm_interval = 1.0, std::size_t intervals = 200,
                            std::size_t transient_intervals = 10) {
  Trajectory base = simulate(cfg, std::nullopt, 0, seed);
  std::vector<double> a(base.states.row(0).begin(), base.states.row(0).end());
  CounterRng rng(derive_seed(seed, "l96.perturbation"));
  std::vector<double> dir(cfg.n);
  double norm = 0.0;
  for (double& v : dir) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  std::vector<double> b(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) b[i] = a[i] + separation * dir[i] / norm;
  const auto steps = static_cast<std::size_t>(std::llround(renorm_interval / cfg.dt));
  double log_growth = 0.0;
  for (std::size_t it = 0; it < transient_intervals + intervals; ++it) {
    for (std::size_t s = 0; s < steps; ++s) {
      rk4_step_inplace(a, cfg.n, cfg.forcing, cfg.dt);
      rk4_step_inplace(b, cfg.n, cfg.forcing, cfg.dt);
    }
    double d = 0.0;
    for (std::size_t i = 0; i < cfg.n; ++i) d += (b[i] - a[i]) * (b[i] - a[i]);
    d = std::sqrt(d);
    if (it >= transient_intervals) log_growth += std::log(d / separation);
    for (std::size_t i = 0; i < cfg.n; ++i) b[i] = a[i] + (b[i] - a[i]) * separation / d;
  }
  const double lambda = log_growth / (static_cast<double>(intervals) * static_cast<double>(steps) * cfg.dt);
  return std::log(2.0) / lambda;
}

}  // namespace assimlab::l96

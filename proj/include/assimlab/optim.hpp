#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "assimlab/tensor.hpp"

namespace assimlab {

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update, in place. Moments are created on first use.
inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size()) throw ContractError("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: state/params count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(params[k], grads[k], "adam_step grad");
    require_same_shape(params[k], state.m[k], "adam_step moment");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data();
    auto g = grads[k].data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// L-BFGS

struct LbfgsOptions {
  std::size_t max_iters = 5000;
  std::size_t memory_size = 100;
  double grad_tol = 1e-7;  // on the infinity norm
  double armijo_c = 1e-4;
  int max_halvings = 30;
  // Near the optimum the Armijo decrease drops below rounding in f. A trial is
  // then also accepted when f grows by at most flat_tol * |f| and the slope
  // along d satisfies the approximate Wolfe bounds.
  double flat_tol = 1e-12;
  double wolfe_sigma = 0.9;
};

struct LbfgsPair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho = 0.0;  // 1 / s'y
};

struct LbfgsState {
  std::deque<LbfgsPair> memory;
  std::size_t memory_size = 100;
  std::size_t iteration = 0;
  std::size_t skipped_pairs = 0;
};

struct LbfgsResult {
  Tensor x;
  double value = 0.0;
  std::size_t iterations = 0;
  double grad_inf_norm = 0.0;
  bool line_search_failed = false;
  std::vector<double> trace;  // objective after each accepted step, trace[0] = f(x0)
};

namespace detail {

using ConstMap = Eigen::Map<const Eigen::VectorXd>;

inline ConstMap as_vec(std::span<const double> a) { return {a.data(), static_cast<Eigen::Index>(a.size())}; }

inline double dot(std::span<const double> a, std::span<const double> b) { return as_vec(a).dot(as_vec(b)); }

inline double inf_norm(std::span<const double> a) {
  return a.empty() ? 0.0 : as_vec(a).lpNorm<Eigen::Infinity>();
}

// d = -H g by the two-loop recursion.
inline Eigen::VectorXd lbfgs_direction(const LbfgsState& st, std::span<const double> g) {
  Eigen::VectorXd q = as_vec(g);
  const std::size_t m = st.memory.size();
  std::vector<double> alpha(m);
  for (std::size_t j = m; j-- > 0;) {
    const auto& p = st.memory[j];
    alpha[j] = p.rho * p.s.dot(q);
    q.noalias() -= alpha[j] * p.y;
  }
  const auto& last = st.memory.back();
  q *= last.s.dot(last.y) / last.y.squaredNorm();
  for (std::size_t j = 0; j < m; ++j) {
    const auto& p = st.memory[j];
    const double beta = p.rho * p.y.dot(q);
    q.noalias() += (alpha[j] - beta) * p.s;
  }
  return -q;
}

inline Eigen::VectorXd scaled_steepest(std::span<const double> g) {
  const double l1 = g.empty() ? 0.0 : as_vec(g).lpNorm<1>();
  const double c = l1 > 0.0 ? std::min(1.0, 1.0 / l1) : 1.0;
  return -c * as_vec(g);
}

}  // namespace detail

/// Minimize f with limited-memory BFGS: unit trial step, Armijo backtracking by
/// halving. `f(const Tensor&) -> std::pair<double, Tensor>` returns value and gradient.
/// Evaluation failures (NumericalError) inside the line search count as rejected trials.
/// Pairs violating s'y > 0 are skipped. Never throws on line-search failure; the
/// best iterate is returned with `line_search_failed` set.
template <class F>
LbfgsResult lbfgs_minimize(F&& f, Tensor x0, const LbfgsOptions& opt = {}) {
  LbfgsState st;
  st.memory_size = opt.memory_size;
  LbfgsResult res;
  auto [fx, g] = f(x0);
  if (!std::isfinite(fx)) throw NumericalError("lbfgs_minimize: non-finite objective at x0");
  Tensor x = std::move(x0);
  res.trace.push_back(fx);

  while (st.iteration < opt.max_iters) {
    if (detail::inf_norm(g.data()) < opt.grad_tol) break;
    Eigen::VectorXd d = st.memory.empty() ? detail::scaled_steepest(g.data())
                                              : detail::lbfgs_direction(st, g.data());
    double gd = detail::as_vec(g.data()).dot(d);
    if (!(gd < 0.0)) {
      st.memory.clear();
      d = detail::scaled_steepest(g.data());
      gd = detail::as_vec(g.data()).dot(d);
    }

    bool accepted = false;
    double t = 1.0;
    Tensor xn(x.shape());
    double fn = 0.0;
    Tensor gn;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      Eigen::Map<Eigen::VectorXd>(xn.storage().data(), d.size()) = detail::as_vec(x.data()) + t * d;
      try {
        auto [fv, gv] = f(xn);
        const bool armijo = fv <= fx + opt.armijo_c * t * gd;
        bool flat = false;
        if (!armijo && std::isfinite(fv) && fv <= fx + opt.flat_tol * std::abs(fx)) {
          const double gnd = detail::as_vec(gv.data()).dot(d);
          flat = gnd >= opt.wolfe_sigma * gd && gnd <= (1.0 - 2.0 * opt.armijo_c) * -gd;
        }
        if (std::isfinite(fv) && (armijo || flat)) {
          fn = fv;
          gn = std::move(gv);
          accepted = true;
          break;
        }
      } catch (const NumericalError&) {
      }
    }
    if (!accepted) {
      if (!st.memory.empty()) {
        st.memory.clear();  // retry from a scaled gradient step
        continue;
      }
      res.line_search_failed = true;
      break;
    }

    Eigen::VectorXd s = detail::as_vec(xn.data()) - detail::as_vec(x.data());
    Eigen::VectorXd y = detail::as_vec(gn.data()) - detail::as_vec(g.data());
    const double sy = s.dot(y);
    if (sy > std::numeric_limits<double>::epsilon() * y.squaredNorm()) {
      if (st.memory.size() == st.memory_size) st.memory.pop_front();
      st.memory.push_back({std::move(s), std::move(y), 1.0 / sy});
    } else {
      ++st.skipped_pairs;
    }
    x = std::move(xn);
    fx = fn;
    g = std::move(gn);
    ++st.iteration;
    res.trace.push_back(fx);
  }
  res.x = std::move(x);
  res.value = fx;
  res.iterations = st.iteration;
  res.grad_inf_norm = detail::inf_norm(g.data());
  return res;
}

}  // namespace assimlab

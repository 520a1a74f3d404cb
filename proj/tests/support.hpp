#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "assimlab/autodiff.hpp"
#include "assimlab/rng.hpp"
#include "assimlab/tensor.hpp"

namespace testing_support {

using assimlab::Shape;
using assimlab::Tensor;
namespace ad = assimlab::ad;

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  assimlab::CounterRng rng(seed);
  Tensor t(shape);
  for (double& v : t.storage()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

inline Tensor random_normal(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  assimlab::CounterRng rng(seed);
  Tensor t(shape);
  for (double& v : t.storage()) v = scale * rng.normal();
  return t;
}

using Builder = std::function<ad::Var(ad::Graph&, std::span<const ad::Var>)>;

/// Scalar value of a graph built from constants only.
inline double evaluate(const Builder& f, const std::vector<Tensor>& at) {
  ad::Graph g;
  std::vector<ad::Var> vars;
  for (const Tensor& t : at) vars.push_back(g.constant(t));
  return f(g, vars).value().item();
}

/// Central finite-difference gradient, one coordinate at a time.
inline std::vector<Tensor> fd_gradient(const Builder& f, std::vector<Tensor> at, double h = 1e-5) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < at.size(); ++k) {
    Tensor gk(at[k].shape());
    for (std::size_t i = 0; i < at[k].size(); ++i) {
      const double x = at[k][i];
      at[k][i] = x + h;
      const double fp = evaluate(f, at);
      at[k][i] = x - h;
      const double fm = evaluate(f, at);
      at[k][i] = x;
      gk[i] = (fp - fm) / (2.0 * h);
    }
    out.push_back(std::move(gk));
  }
  return out;
}

/// ||a - b|| / max(||b||, tiny) over all tensors jointly.
inline double relative_error(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      num += (a[k][i] - b[k][i]) * (a[k][i] - b[k][i]);
      den += b[k][i] * b[k][i];
    }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

inline double gradient_check(const Builder& f, const std::vector<Tensor>& at, double h = 1e-5) {
  const auto analytic = ad::grad(f, at);
  return relative_error(analytic, fd_gradient(f, at, h));
}

/// Reduce any node to a scalar through a fixed random weighting so every output
/// coordinate contributes to the checked gradient.
inline ad::Var weighted_sum(ad::Var v, std::uint64_t seed) {
  Tensor w = random_tensor(v.shape(), seed, 0.5, 1.5);
  return ad::sum(v * v.graph().constant(std::move(w)));
}

}  // namespace testing_support

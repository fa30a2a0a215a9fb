#pragma once

// Finite-difference verification of tape gradients. Checks rerun the graph in
// 64-bit so truncation noise stays far below the tolerances being asserted.

#include <functional>

#include "mimlab/autograd.hpp"
#include "mimlab/rng.hpp"
#include "mimlab/tensor.hpp"

namespace mimlab {

// Builds a scalar loss on the tape, registering on it every parameter it
// reads (by the same names used in `params`).
using GraphBuilder = std::function<Var(Tape<double>&, const ParamMap<double>&)>;

namespace detail {

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

inline double eval_loss(const GraphBuilder& build, const ParamMap<double>& params) {
  Tape<double> tape;
  Var loss = build(tape, params);
  const double f = tape.value(loss).at(0);
  if (!std::isfinite(f)) throw std::runtime_error("finite_diff_check: non-finite loss value");
  return f;
}

inline ParamMap<double> analytic_grads(const GraphBuilder& build, const ParamMap<double>& params) {
  Tape<double> tape;
  Var loss = build(tape, params);
  tape.backward(loss);
  ParamMap<double> g;
  for (const auto& [name, v] : params) {
    if (tape.params().count(name))
      g.emplace(name, tape.param_grad(name));
    else
      g.emplace(name, Tensor64(v.shape));  // parameter unused by this graph
  }
  return g;
}

inline void check_eps(double eps) {
  if (!(eps >= 1e-4 && eps <= 1e-2))
    throw std::invalid_argument("finite_diff_check: eps must lie in [1e-4, 1e-2]");
}

}  // namespace detail

// Central differences per coordinate. Only viable for small parameter sets.
inline double finite_diff_check(const GraphBuilder& build, const ParamMap<double>& params,
                                double eps = 1e-3) {
  detail::check_eps(eps);
  const ParamMap<double> analytic = detail::analytic_grads(build, params);
  double worst = 0.0;
  ParamMap<double> p = params;
  for (auto& [name, tensor] : p) {
    const Tensor64& g = analytic.at(name);
    for (size_t i = 0; i < tensor.data.size(); ++i) {
      const double saved = tensor.data[i];
      tensor.data[i] = saved + eps;
      const double fp = detail::eval_loss(build, p);
      tensor.data[i] = saved - eps;
      const double fm = detail::eval_loss(build, p);
      tensor.data[i] = saved;
      const double fd = (fp - fm) / (2.0 * eps);
      worst = std::max(worst, detail::rel_err(fd, g.data[i]));
    }
  }
  return worst;
}

// Central differences along random unit directions over the whole parameter
// vector; compares against the analytic directional derivative.
inline double finite_diff_check_probes(const GraphBuilder& build, const ParamMap<double>& params,
                                       double eps, int n_probes, RngStream& rng) {
  detail::check_eps(eps);
  const ParamMap<double> analytic = detail::analytic_grads(build, params);
  double worst = 0.0;
  for (int probe = 0; probe < n_probes; ++probe) {
    ParamMap<double> dir;
    double norm2 = 0.0;
    for (const auto& [name, tensor] : params) {
      Tensor64 u(tensor.shape);
      for (auto& x : u.data) {
        x = rng.normal();
        norm2 += x * x;
      }
      dir.emplace(name, std::move(u));
    }
    const double inv_norm = 1.0 / std::sqrt(norm2);

    ParamMap<double> p = params;
    double directional = 0.0;
    for (auto& [name, tensor] : p) {
      const Tensor64& u = dir.at(name);
      const Tensor64& g = analytic.at(name);
      for (size_t i = 0; i < tensor.data.size(); ++i) {
        const double step = u.data[i] * inv_norm;
        tensor.data[i] += eps * step;
        directional += g.data[i] * step;
      }
    }
    const double fp = detail::eval_loss(build, p);
    for (auto& [name, tensor] : p) {
      const Tensor64& u = dir.at(name);
      for (size_t i = 0; i < tensor.data.size(); ++i)
        tensor.data[i] = params.at(name).data[i] - eps * u.data[i] * inv_norm;
    }
    const double fm = detail::eval_loss(build, p);
    const double fd = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, detail::rel_err(fd, directional));
  }
  return worst;
}

}  // namespace mimlab

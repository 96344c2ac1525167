#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "methanol/tensor.hpp"

namespace methanol {

// Central-difference gradient verification, run entirely in double precision.
//
// `f` evaluates a fresh scalar from the current contents of `params` each
// time it is called. The analytic pass runs reverse-mode once; the numeric
// pass perturbs every coordinate by +/- epsilon. Returns
//   max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|).
inline double grad_check(const std::function<TensorT<double>()>& f,
                         const std::vector<TensorT<double>*>& params, double epsilon) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw ConfigError("grad_check: epsilon " + std::to_string(epsilon) +
                      " outside [1e-6, 1e-3]");
  }
  for (auto* p : params) {
    if (!p || !p->requires_grad) {
      throw ConfigError("grad_check: every checked parameter must require gradients");
    }
    p->zero_grad();
  }

  TensorT<double> root = f();
  if (!std::isfinite(root.item())) {
    throw OracleError("grad_check: non-finite function value at the base point");
  }
  backward(root);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grads());

  double max_err = 0.0;
  {
    NoGradGuard no_grad;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      auto& vals = params[pi]->values();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double saved = vals[i];
        vals[i] = saved + epsilon;
        const double f_plus = f().item();
        vals[i] = saved - epsilon;
        const double f_minus = f().item();
        vals[i] = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
          throw OracleError("grad_check: non-finite function value at a perturbed point");
        }
        const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
        const double a = analytic[pi][i];
        const double err = std::abs(a - numeric) /
                           std::max({1.0, std::abs(a), std::abs(numeric)});
        max_err = std::max(max_err, err);
      }
    }
  }
  return max_err;
}

}  // namespace methanol

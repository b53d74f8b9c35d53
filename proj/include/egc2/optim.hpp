#pragma once

#include <cmath>
#include <vector>

#include "egc2/graph.hpp"

namespace egc2 {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  long long step = 0;
  std::vector<Matrix> m, v;
};

inline OptimizerState make_adam(const std::vector<Matrix*>& params, AdamConfig config) {
  OptimizerState s;
  s.config = config;
  for (const Matrix* p : params) {
    s.m.push_back(Matrix::Zero(p->rows(), p->cols()));
    s.v.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return s;
}

// One bias-corrected Adam update of every parameter in place.
inline void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, OptimizerState& s) {
  if (params.size() != grads.size() || params.size() != s.m.size())
    throw ContractError("adam_step: parameter, gradient and state counts differ");
  ++s.step;
  const auto& c = s.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& g = grads[k];
    if (g.rows() != params[k]->rows() || g.cols() != params[k]->cols())
      throw DimensionError("adam_step: gradient shape does not match parameter");
    s.m[k] = c.beta1 * s.m[k] + (1.0 - c.beta1) * g;
    s.v[k] = c.beta2 * s.v[k] + (1.0 - c.beta2) * g.cwiseProduct(g);
    const auto mhat = s.m[k].array() / bc1;
    const auto vhat = s.v[k].array() / bc2;
    params[k]->array() -= c.lr * mhat / (vhat.sqrt() + c.eps);
  }
}

}  // namespace egc2

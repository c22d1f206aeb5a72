// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/optim.hpp"

#include <cmath>

#include "slowvit/errors.hpp"

namespace slowvit {

void AdamW::step(const std::string& key, Matrix& param, const Matrix& grad, bool decay) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw ContractError("AdamW: gradient shape differs for '" + key + "'");
  }
  State& s = state_[key];
  if (s.t == 0) {
    s.m = Matrix::Zero(param.rows(), param.cols());
    s.v = Matrix::Zero(param.rows(), param.cols());
  }
  ++s.t;
  const auto& c = config_;
  s.m = c.beta1 * s.m + (1.0 - c.beta1) * grad;
  s.v = c.beta2 * s.v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
  if (decay && c.weight_decay > 0.0) param *= (1.0 - c.lr * c.weight_decay);
  param.array() -= c.lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + c.eps);
}

void AdamW::step(Parameters& params, const Gradients& grads) {
  for (const auto& [name, g] : grads) {
    const bool decay = name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0;
    step(name, params[name], g, decay);
  }
}

}  // namespace slowvit

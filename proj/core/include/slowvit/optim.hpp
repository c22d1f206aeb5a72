// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "slowvit/autograd.hpp"
#include "slowvit/vit.hpp"

namespace slowvit {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay; one moment pair per named tensor.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  /// Updates `param` in place. `decay` selects whether weight decay applies.
  void step(const std::string& key, Matrix& param, const Matrix& grad, bool decay = true);

  /// Steps every parameter that has a gradient. Decay applies to weight
  /// matrices (names ending in ".w"), not to biases, norms or embeddings.
  void step(Parameters& params, const Gradients& grads);

 private:
  struct State {
    Matrix m;
    Matrix v;
    long t = 0;
  };
  AdamWConfig config_;
  std::map<std::string, State> state_;
};

}  // namespace slowvit

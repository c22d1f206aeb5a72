// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "slowvit/flops.hpp"
#include "slowvit/random.hpp"
#include "slowvit/trace.hpp"
#include "slowvit/vit.hpp"

namespace slowvit::testing {

// Naive dense linear algebra that counts every scalar multiply it performs.
class MultiplyCounter {
 public:
  std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int n, int k, int m) {
    std::vector<double> c(static_cast<std::size_t>(n) * m, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int t = 0; t < k; ++t) {
          acc += a[static_cast<std::size_t>(i) * k + t] * b[static_cast<std::size_t>(t) * m + j];
          ++multiplies;
        }
        c[static_cast<std::size_t>(i) * m + j] = acc;
      }
    }
    return c;
  }
  std::int64_t multiplies = 0;
};

inline std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

// Runs the linear algebra of one block on random data; two FLOPs per multiply.
inline std::int64_t brute_block(int n, int d, int heads_active, int heads_total, int hidden, bool on, Rng& rng) {
  if (!on) return 0;
  MultiplyCounter c;
  const int dh = d / heads_total;
  const auto x = random_vec(rng, static_cast<std::size_t>(n) * d);
  std::vector<double> concat(static_cast<std::size_t>(n) * d, 0.0);
  for (int h = 0; h < heads_active; ++h) {
    const auto q = c.matmul(x, random_vec(rng, static_cast<std::size_t>(d) * dh), n, d, dh);
    const auto k = c.matmul(x, random_vec(rng, static_cast<std::size_t>(d) * dh), n, d, dh);
    const auto v = c.matmul(x, random_vec(rng, static_cast<std::size_t>(d) * dh), n, d, dh);
    std::vector<double> kt(static_cast<std::size_t>(dh) * n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dh; ++j) kt[static_cast<std::size_t>(j) * n + i] = k[static_cast<std::size_t>(i) * dh + j];
    }
    const auto logits = c.matmul(q, kt, n, dh, n);
    const auto out = c.matmul(logits, v, n, n, dh);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dh; ++j) concat[static_cast<std::size_t>(i) * d + h * dh + j] = out[static_cast<std::size_t>(i) * dh + j];
    }
  }
  const auto proj = c.matmul(concat, random_vec(rng, static_cast<std::size_t>(d) * d), n, d, d);
  const auto hid = c.matmul(proj, random_vec(rng, static_cast<std::size_t>(d) * hidden), n, d, hidden);
  c.matmul(hid, random_vec(rng, static_cast<std::size_t>(hidden) * d), n, hidden, d);
  return 2 * c.multiplies;
}

inline std::int64_t brute_model(const ModelConfig& cfg, const ComputeTrace& t, Rng& rng) {
  MultiplyCounter c;
  c.matmul(random_vec(rng, static_cast<std::size_t>(cfg.num_patches()) * cfg.patch_features()),
           random_vec(rng, static_cast<std::size_t>(cfg.patch_features()) * cfg.embed_dim), cfg.num_patches(),
           cfg.patch_features(), cfg.embed_dim);
  c.matmul(random_vec(rng, static_cast<std::size_t>(cfg.embed_dim)),
           random_vec(rng, static_cast<std::size_t>(cfg.embed_dim) * cfg.num_classes), 1, cfg.embed_dim,
           cfg.num_classes);
  std::int64_t total = 2 * c.multiplies;
  for (const LayerTrace& lt : t.layers) {
    total += brute_block(lt.retained_tokens, cfg.embed_dim, lt.heads_active, cfg.num_heads, cfg.mlp_hidden(),
                         lt.block_on, rng);
  }
  return total;
}

}  // namespace slowvit::testing

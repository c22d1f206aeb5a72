// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "slowvit/autograd.hpp"
#include "slowvit/config.hpp"
#include "slowvit/image.hpp"
#include "slowvit/trace.hpp"

namespace slowvit {

/// Named parameter tensors. Ordered so that iteration (checksums, files,
/// optimizer state) is deterministic.
class Parameters {
 public:
  Matrix& operator[](const std::string& name) { return tensors_[name]; }
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const std::map<std::string, Matrix>& tensors() const { return tensors_; }
  std::map<std::string, Matrix>& tensors() { return tensors_; }
  std::size_t scalar_count() const;
  /// FNV-1a over names, shapes and raw values.
  std::uint64_t checksum() const;

 private:
  std::map<std::string, Matrix> tensors_;
};

using Gradients = std::map<std::string, Matrix>;

/// Parameters bound to one tape on first use.
class ParamBinding {
 public:
  ParamBinding(ag::Tape& tape, const Parameters& params, bool requires_grad)
      : tape_(&tape), params_(&params), requires_grad_(requires_grad) {}

  ag::Var operator()(const std::string& name);
  ag::Tape& tape() const { return *tape_; }
  /// Adds the gradient of every bound parameter into `out` (creating entries).
  void accumulate_grads(Gradients& out) const;

 private:
  ag::Tape* tape_;
  const Parameters* params_;
  bool requires_grad_;
  std::unordered_map<std::string, ag::Var> bound_;
};

/// Token embeddings plus activity. Slot 0 is the class token and is always active.
struct TokenState {
  static constexpr int class_token_index = 0;
  ag::Var embeddings;
  std::vector<bool> active;

  int num_tokens() const { return static_cast<int>(active.size()); }
  int active_count() const;
};

/// Real-valued gates of one block. `token` is n x 1 (key weight and residual
/// update gate), `head` is 1 x H, `block` is 1 x 1. Constants for hard
/// masking, graph nodes for soft decisions.
struct BlockGates {
  ag::Var token;
  ag::Var head;
  ag::Var block;
};

struct BlockOutput {
  TokenState state;
  std::vector<ag::Var> attention;  // per head, n x n
  std::vector<ag::Var> values;     // per head, n x head_dim
};

enum class MaskMode { hard, soft };

struct ForwardOptions {
  /// Track d(loss)/d(pixels).
  bool input_grad = false;
  /// Track d(loss)/d(parameters).
  bool param_grad = false;
  /// Gating decisions: hard masks (measurement) or soft relaxations (attack).
  MaskMode mask_mode = MaskMode::hard;
  /// Hard decisions with straight-through gradients (training).
  bool straight_through = false;
  std::uint64_t gumbel_seed = 0;
  /// When false the adaptive policy is bypassed and every token, head and
  /// block runs (the unpruned reference model).
  bool apply_policy = true;
};

struct ForwardResult {
  ag::Var logits;  // 1 x C
  /// Normalized patch matrix fed to the embedding (num_patches x p*p*3).
  ag::Var input;
  ComputeTrace trace;
};

/// Minimal vision transformer with pre-norm blocks and hooks for token, head
/// and block gating.
class VisionTransformer {
 public:
  /// Random initialization, deterministic per seed.
  VisionTransformer(ModelConfig config, std::uint64_t seed);
  VisionTransformer(ModelConfig config, Parameters params);

  const ModelConfig& config() const { return config_; }
  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }

  /// Normalized patch matrix of `image`; throws ConfigError on size mismatch.
  Matrix patchify(const Image& image) const;

  /// Embeds an image: class token + one token per patch, all active.
  TokenState patch_embed(ParamBinding& bind, const Image& image, bool input_grad, ag::Var* input_out = nullptr) const;

  /// One transformer block under the given gates.
  BlockOutput block_forward(ParamBinding& bind, const TokenState& state, int layer, const BlockGates& gates) const;

  /// Convenience form with boolean masks. `block_on == false` returns the
  /// input unchanged.
  BlockOutput block_forward(ParamBinding& bind, const TokenState& state, int layer, const std::vector<bool>& head_mask,
                            bool block_on) const;

  /// Full forward pass with the configured adaptive policy.
  ForwardResult forward(ParamBinding& bind, const Image& image, const ForwardOptions& options = {}) const;

  /// d(loss)/d(pixel) in pixel units, from the gradient of `result.input`.
  Image pixel_gradient(const ForwardResult& result) const;

 private:
  BlockGates constant_gates(ag::Tape& tape, const std::vector<bool>& active) const;

  ModelConfig config_;
  Parameters params_;
};

/// Parameter name of block `layer` (0-based), e.g. block_name(2, "qkv_w").
std::string block_name(int layer, const char* what);

}  // namespace slowvit

// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/vit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "slowvit/ats.hpp"
#include "slowvit/errors.hpp"
#include "slowvit/random.hpp"

namespace slowvit {

// --- Parameters ----------------------------------------------------------------

const Matrix& Parameters::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors_) n += static_cast<std::size_t>(m.size());
  return n;
}

std::uint64_t Parameters::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) h = (h ^ p[i]) * 0x100000001b3ULL;
  };
  for (const auto& [name, m] : tensors_) {
    mix(name.data(), name.size());
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    mix(dims, sizeof(dims));
    mix(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  return h;
}

ag::Var ParamBinding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  ag::Var v = tape_->external(params_->at(name), requires_grad_);
  bound_.emplace(name, v);
  return v;
}

void ParamBinding::accumulate_grads(Gradients& out) const {
  for (const auto& [name, v] : bound_) {
    if (!v.requires_grad()) continue;
    auto it = out.find(name);
    if (it == out.end()) {
      out.emplace(name, v.grad());
    } else {
      it->second += v.grad();
    }
  }
}

int TokenState::active_count() const { return static_cast<int>(std::count(active.begin(), active.end(), true)); }

std::vector<int> ComputeTrace::retained_counts() const {
  std::vector<int> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l.retained_tokens);
  return out;
}

std::string block_name(int layer, const char* what) { return "blocks." + std::to_string(layer) + "." + what; }

// --- construction ------------------------------------------------------------

namespace {

Matrix normal_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double std) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) {
      // Truncated at two standard deviations.
      double z;
      do {
        z = normal(rng);
      } while (std::abs(z) > 2.0);
      m(i, j) = z * std;
    }
  }
  return m;
}

}  // namespace

VisionTransformer::VisionTransformer(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, "init"));
  const int d = config_.embed_dim;
  const int hidden = config_.mlp_hidden();
  const double std = 0.02;
  params_["patch_embed.w"] = normal_matrix(rng, config_.patch_features(), d, std);
  params_["patch_embed.b"] = Matrix::Zero(1, d);
  params_["cls_token"] = normal_matrix(rng, 1, d, std);
  params_["pos_embed"] = normal_matrix(rng, config_.num_tokens(), d, std);
  for (int l = 0; l < config_.num_layers; ++l) {
    params_[block_name(l, "ln1.g")] = Matrix::Ones(1, d);
    params_[block_name(l, "ln1.b")] = Matrix::Zero(1, d);
    params_[block_name(l, "qkv.w")] = normal_matrix(rng, d, 3 * d, std);
    params_[block_name(l, "qkv.b")] = Matrix::Zero(1, 3 * d);
    params_[block_name(l, "proj.w")] = normal_matrix(rng, d, d, std);
    params_[block_name(l, "ln2.g")] = Matrix::Ones(1, d);
    params_[block_name(l, "ln2.b")] = Matrix::Zero(1, d);
    params_[block_name(l, "fc1.w")] = normal_matrix(rng, d, hidden, std);
    params_[block_name(l, "fc1.b")] = Matrix::Zero(1, hidden);
    params_[block_name(l, "fc2.w")] = normal_matrix(rng, hidden, d, std);
    params_[block_name(l, "fc2.b")] = Matrix::Zero(1, d);
    if (config_.adaptive_policy == AdaptivePolicy::adavit) {
      const double b = config_.decision.init_bias;
      params_[block_name(l, "decision.patch.w")] = normal_matrix(rng, d, 1, std);
      params_[block_name(l, "decision.patch.b")] = Matrix::Constant(1, 1, b);
      params_[block_name(l, "decision.head.w")] = normal_matrix(rng, d, config_.num_heads, std);
      params_[block_name(l, "decision.head.b")] = Matrix::Constant(1, config_.num_heads, b);
      params_[block_name(l, "decision.block.w")] = normal_matrix(rng, d, 1, std);
      params_[block_name(l, "decision.block.b")] = Matrix::Constant(1, 1, b);
    }
  }
  params_["norm.g"] = Matrix::Ones(1, d);
  params_["norm.b"] = Matrix::Zero(1, d);
  params_["head.w"] = normal_matrix(rng, d, config_.num_classes, std);
  params_["head.b"] = Matrix::Zero(1, config_.num_classes);
}

VisionTransformer::VisionTransformer(ModelConfig config, Parameters params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  // Shape check against a freshly initialized model of the same config.
  VisionTransformer reference(config_, std::uint64_t{0});
  for (const auto& [name, m] : reference.params_.tensors()) {
    if (!params_.contains(name)) throw ConfigError("checkpoint lacks parameter '" + name + "'");
    const Matrix& got = params_.at(name);
    if (got.rows() != m.rows() || got.cols() != m.cols()) {
      throw ConfigError("parameter '" + name + "' has the wrong shape");
    }
  }
}

// --- front end ---------------------------------------------------------------

Matrix VisionTransformer::patchify(const Image& image) const {
  const int s = config_.image_size;
  if (image.height != s || image.width != s || image.pixels.size() != static_cast<std::size_t>(s) * s * 3) {
    throw ConfigError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                      ", model expects " + std::to_string(s) + "x" + std::to_string(s));
  }
  const int p = config_.patch_size;
  const int g = config_.grid();
  Matrix x(config_.num_patches(), config_.patch_features());
  for (int gr = 0; gr < g; ++gr) {
    for (int gc = 0; gc < g; ++gc) {
      const int row = gr * g + gc;
      for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
          for (int ch = 0; ch < 3; ++ch) {
            const double v = image.at(gr * p + r, gc * p + c, ch) / 255.0;
            x(row, (r * p + c) * 3 + ch) = (v - config_.pixel_mean[ch]) / config_.pixel_std[ch];
          }
        }
      }
    }
  }
  return x;
}

TokenState VisionTransformer::patch_embed(ParamBinding& bind, const Image& image, bool input_grad,
                                          ag::Var* input_out) const {
  ag::Tape& tape = bind.tape();
  ag::Var x = tape.leaf(patchify(image), input_grad);
  if (input_out != nullptr) *input_out = x;
  ag::Var tokens = ag::add_row(ag::matmul(x, bind("patch_embed.w")), bind("patch_embed.b"));
  const ag::Var parts[] = {bind("cls_token"), tokens};
  TokenState state;
  state.embeddings = ag::add(ag::vcat(parts), bind("pos_embed"));
  state.active.assign(static_cast<std::size_t>(config_.num_tokens()), true);
  return state;
}

Image VisionTransformer::pixel_gradient(const ForwardResult& result) const {
  const Matrix& g = result.input.grad();
  const int p = config_.patch_size;
  const int grid = config_.grid();
  Image out(config_.image_size, config_.image_size);
  for (int gr = 0; gr < grid; ++gr) {
    for (int gc = 0; gc < grid; ++gc) {
      for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
          for (int ch = 0; ch < 3; ++ch) {
            out.at(gr * p + r, gc * p + c, ch) =
                g(gr * grid + gc, (r * p + c) * 3 + ch) / (255.0 * config_.pixel_std[ch]);
          }
        }
      }
    }
  }
  return out;
}

// --- blocks -------------------------------------------------------------------

BlockOutput VisionTransformer::block_forward(ParamBinding& bind, const TokenState& state, int layer,
                                             const BlockGates& gates) const {
  const int n = state.num_tokens();
  const int d = config_.embed_dim;
  const int heads = config_.num_heads;
  const int dh = config_.head_dim();
  if (layer < 0 || layer >= config_.num_layers) throw ContractError("block_forward: layer out of range");
  if (state.embeddings.rows() != n || state.embeddings.cols() != d) {
    throw ContractError("block_forward: embeddings do not match the token state");
  }
  if (gates.token.rows() != n || gates.token.cols() != 1 || gates.head.rows() != 1 || gates.head.cols() != heads ||
      gates.block.rows() != 1 || gates.block.cols() != 1) {
    throw ContractError("block_forward: gate shapes do not match the block");
  }

  const ag::Var x = state.embeddings;
  const ag::Var xn = ag::layer_norm(x, bind(block_name(layer, "ln1.g")), bind(block_name(layer, "ln1.b")));
  const ag::Var qkv = ag::add_row(ag::matmul(xn, bind(block_name(layer, "qkv.w"))), bind(block_name(layer, "qkv.b")));

  BlockOutput out;
  std::vector<ag::Var> head_out;
  head_out.reserve(static_cast<std::size_t>(heads));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    const ag::Var q = ag::cols(qkv, h * dh, dh);
    const ag::Var k = ag::cols(qkv, d + h * dh, dh);
    const ag::Var v = ag::cols(qkv, 2 * d + h * dh, dh);
    const ag::Var a = ag::gated_softmax(ag::scale(ag::matmul_nt(q, k), inv_sqrt), gates.token);
    head_out.push_back(ag::mul_scalar(ag::matmul(a, v), ag::cols(gates.head, h, 1)));
    out.attention.push_back(a);
    out.values.push_back(v);
  }
  const ag::Var attn = ag::matmul(ag::hcat(head_out), bind(block_name(layer, "proj.w")));
  const ag::Var row_gate = ag::mul_scalar(gates.token, gates.block);
  const ag::Var x1 = ag::add(x, ag::mul_col(attn, row_gate));

  const ag::Var hidden = ag::gelu(ag::add_row(
      ag::matmul(ag::layer_norm(x1, bind(block_name(layer, "ln2.g")), bind(block_name(layer, "ln2.b"))),
                 bind(block_name(layer, "fc1.w"))),
      bind(block_name(layer, "fc1.b"))));
  const ag::Var mlp = ag::add_row(ag::matmul(hidden, bind(block_name(layer, "fc2.w"))), bind(block_name(layer, "fc2.b")));
  out.state.embeddings = ag::add(x1, ag::mul_col(mlp, row_gate));
  out.state.active = state.active;
  return out;
}

BlockOutput VisionTransformer::block_forward(ParamBinding& bind, const TokenState& state, int layer,
                                             const std::vector<bool>& head_mask, bool block_on) const {
  if (static_cast<int>(head_mask.size()) != config_.num_heads) {
    throw ContractError("block_forward: head_mask length must equal num_heads");
  }
  if (!block_on) {
    BlockOutput out;
    out.state = state;
    return out;
  }
  ag::Tape& tape = bind.tape();
  BlockGates gates = constant_gates(tape, state.active);
  Matrix hm(1, config_.num_heads);
  for (int h = 0; h < config_.num_heads; ++h) hm(0, h) = head_mask[static_cast<std::size_t>(h)] ? 1.0 : 0.0;
  gates.head = tape.constant(std::move(hm));
  return block_forward(bind, state, layer, gates);
}

BlockGates VisionTransformer::constant_gates(ag::Tape& tape, const std::vector<bool>& active) const {
  Matrix tok(static_cast<Eigen::Index>(active.size()), 1);
  for (std::size_t i = 0; i < active.size(); ++i) tok(static_cast<Eigen::Index>(i), 0) = active[i] ? 1.0 : 0.0;
  return BlockGates{tape.constant(std::move(tok)), tape.constant(Matrix::Ones(1, config_.num_heads)),
                    tape.constant(1.0)};
}

// --- forward -----------------------------------------------------------------

namespace {

void record_attention(LayerTrace& lt, const BlockOutput& out) {
  lt.attention.reserve(out.attention.size());
  for (const ag::Var& a : out.attention) lt.attention.push_back(a.value());
  lt.attention_vars = out.attention;
}

int count_true(const std::vector<bool>& v) { return static_cast<int>(std::count(v.begin(), v.end(), true)); }

}  // namespace

ForwardResult VisionTransformer::forward(ParamBinding& bind, const Image& image, const ForwardOptions& options) const {
  ag::Tape& tape = bind.tape();
  ForwardResult result;
  TokenState state = patch_embed(bind, image, options.input_grad, &result.input);
  const int n = state.num_tokens();
  const int k = n - 1;
  const int layers = config_.num_layers;
  const int heads = config_.num_heads;
  ComputeTrace& trace = result.trace;
  trace.policy = options.apply_policy ? config_.adaptive_policy : AdaptivePolicy::none;
  trace.layers.reserve(static_cast<std::size_t>(layers));

  switch (trace.policy) {
    case AdaptivePolicy::none: {
      for (int l = 0; l < layers; ++l) {
        LayerTrace lt;
        lt.active = state.active;
        lt.retained_tokens = n;
        lt.heads_active = heads;
        BlockOutput out = block_forward(bind, state, l, constant_gates(tape, state.active));
        record_attention(lt, out);
        state = std::move(out.state);
        trace.layers.push_back(std::move(lt));
      }
      break;
    }

    case AdaptivePolicy::avit: {
      avit::HaltingTracker tracker(k, layers, config_.halting);
      for (int l = 0; l < layers; ++l) {
        state.active[0] = true;
        for (int i = 0; i < k; ++i) state.active[static_cast<std::size_t>(i + 1)] = tracker.active()[static_cast<std::size_t>(i)];
        LayerTrace lt;
        lt.active = state.active;
        lt.retained_tokens = state.active_count();
        lt.heads_active = heads;
        BlockOutput out = block_forward(bind, state, l, constant_gates(tape, state.active));
        record_attention(lt, out);
        const ag::Var h = avit::halting_score(out.state.embeddings, config_.halting);
        const ag::Var masked = tracker.observe(ag::rows(h, 1, k));
        lt.halting = Vector::Zero(n);
        lt.halting.tail(k) = masked.value().col(0);
        state = std::move(out.state);
        trace.layers.push_back(std::move(lt));
      }
      trace.halting = tracker.finish();
      break;
    }

    case AdaptivePolicy::ats: {
      const auto& ats_layers = config_.ats.ats_layers;
      for (int l = 0; l < layers; ++l) {
        LayerTrace lt;
        lt.active = state.active;
        lt.retained_tokens = state.active_count();
        lt.heads_active = heads;
        BlockOutput out = block_forward(bind, state, l, constant_gates(tape, state.active));
        record_attention(lt, out);
        if (std::find(ats_layers.begin(), ats_layers.end(), l + 1) != ats_layers.end()) {
          Vector mean_scores = Vector::Zero(n);
          bool fallback = false;
          for (int h = 0; h < heads; ++h) {
            const Matrix& a = out.attention[static_cast<std::size_t>(h)].value();
            const Vector norms = out.values[static_cast<std::size_t>(h)].value().rowwise().norm();
            ats::SignificanceScores s = ats::significance_scores(a.row(0), norms, state.active);
            mean_scores += s.scores;
            fallback = fallback || s.uniform_fallback;
          }
          mean_scores /= static_cast<double>(heads);
          const int incoming = state.active_count() - 1;
          const int n_target = std::min(incoming, config_.ats.max_tokens);
          std::vector<int> kept;
          if (n_target > 0) {
            kept = ats::inverse_transform_sample(ats::SignificanceScores{mean_scores, fallback}, n_target);
          } else {
            kept = {0};
          }
          std::vector<bool> next(static_cast<std::size_t>(n), false);
          for (int idx : kept) next[static_cast<std::size_t>(idx)] = true;
          out.state.active = std::move(next);
          lt.sampled = std::move(kept);
          lt.ats_uniform_fallback = fallback;
        }
        state = std::move(out.state);
        trace.layers.push_back(std::move(lt));
      }
      break;
    }

    case AdaptivePolicy::adavit: {
      adavit::KeepMasks masks;
      const bool hard = options.mask_mode == MaskMode::hard || options.straight_through;
      const double temp = config_.decision.gumbel_temperature;
      for (int l = 0; l < layers; ++l) {
        adavit::DecisionWeights w{bind(block_name(l, "decision.patch.w")), bind(block_name(l, "decision.patch.b")),
                                  bind(block_name(l, "decision.head.w")),  bind(block_name(l, "decision.head.b")),
                                  bind(block_name(l, "decision.block.w")), bind(block_name(l, "decision.block.b"))};
        const adavit::DecisionLogits logits = adavit::decision_forward(state.embeddings, w);
        const auto seed = [&](int which) {
          return derive_seed(options.gumbel_seed, static_cast<std::uint64_t>(l * 3 + which));
        };
        const ag::Var patch_mask = adavit::gumbel_mask(ag::rows(logits.patch, 1, k), temp, hard, seed(0));
        const ag::Var head_mask = adavit::gumbel_mask(logits.head, temp, hard, seed(1));
        const ag::Var block_mask = adavit::gumbel_mask(logits.block, temp, hard, seed(2));
        const ag::Var token_parts[] = {tape.constant(1.0), patch_mask};
        const BlockGates gates{ag::vcat(token_parts), head_mask, block_mask};

        LayerTrace lt;
        lt.token_keep = gates.token.value().col(0);
        lt.head_keep = head_mask.value().row(0);
        lt.block_keep = block_mask.item();
        lt.active.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) lt.active[static_cast<std::size_t>(i)] = lt.token_keep(i) > 0.5;
        lt.retained_tokens = count_true(lt.active);
        lt.heads_active = static_cast<int>((lt.head_keep.array() > 0.5).count());
        lt.block_on = lt.block_keep > 0.5;

        BlockOutput out = block_forward(bind, state, l, gates);
        record_attention(lt, out);
        state.embeddings = out.state.embeddings;
        masks.patch.push_back(patch_mask);
        masks.head.push_back(head_mask);
        masks.block.push_back(block_mask);
        trace.layers.push_back(std::move(lt));
      }
      trace.masks = std::move(masks);
      break;
    }
  }

  const ag::Var cls = ag::layer_norm(ag::rows(state.embeddings, 0, 1), bind("norm.g"), bind("norm.b"));
  result.logits = ag::add_row(ag::matmul(cls, bind("head.w")), bind("head.b"));
  trace.logits = result.logits.value().row(0);
  return result;
}

}  // namespace slowvit

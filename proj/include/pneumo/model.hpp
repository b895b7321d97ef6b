#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pneumo/adapters.hpp"
#include "pneumo/emitter.hpp"
#include "pneumo/engine.hpp"
#include "pneumo/errors.hpp"
#include "pneumo/matrix.hpp"
#include "pneumo/rng.hpp"
#include "pneumo/tape.hpp"

namespace pneumo {

/// Frozen stand-in for a pretrained vision encoder: a seeded linear embed
/// into inner_tokens rows, then `layers` residual mixing layers; every
/// tap_every-th layer contributes its pooled (column-mean) row as one source
/// token. Emits exactly layers / tap_every tokens of width token_dim.
struct EncoderConfig {
  std::size_t input_dim = 8;
  std::size_t token_dim = 24;    // n
  std::size_t layers = 12;       // E
  std::size_t tap_every = 2;     // k
  std::size_t inner_tokens = 4;  // internal rows being mixed and pooled
};

struct StackConfig {
  std::size_t layers = 4;      // L
  std::size_t heads = 4;       // H
  std::size_t width = 64;      // n'
  std::size_t adapter_dim = 8; // r
};

enum class Pooling { kDiagnosisMean, kSourceMean, kLastToken };
enum class PromptSource { kNone, kFixed, kConditional, kEngine };

struct ModelConfig {
  EncoderConfig encoder;
  StackConfig stack;
  std::size_t diag_tokens = 4;  // m
  PromptSource prompt = PromptSource::kEngine;
  SoftmaxAxis engine_axis = SoftmaxAxis::kColumn;
  bool adapters = true;
  bool emitter_mask = true;
  std::size_t neck_hidden = 128;
  Pooling pooling = Pooling::kDiagnosisMean;
  AttnScale attn_scale = AttnScale::kHeadDim;
  double ln_eps = 1e-5;
  std::uint64_t seed = 42;

  std::size_t source_tokens() const { return encoder.layers / encoder.tap_every; }

  void validate() const {
    if (encoder.input_dim == 0 || encoder.token_dim == 0 ||
        encoder.inner_tokens == 0)
      throw ConfigError("encoder dims must be >= 1");
    if (encoder.layers == 0 || encoder.tap_every == 0 ||
        encoder.layers % encoder.tap_every != 0)
      throw ConfigError("encoder layers must be a positive multiple of tap_every");
    if (stack.layers == 0) throw ConfigError("stack needs at least one layer");
    if (stack.heads == 0 || stack.width % stack.heads != 0)
      throw ConfigError("stack width " + std::to_string(stack.width) +
                        " not divisible by heads " + std::to_string(stack.heads));
    if (stack.adapter_dim == 0) throw ConfigError("adapter_dim must be >= 1");
    if (neck_hidden == 0) throw ConfigError("neck_hidden must be >= 1");
    if (ln_eps <= 0.0) throw ConfigError("ln_eps must be positive");
    if ((prompt == PromptSource::kNone) != (diag_tokens == 0))
      throw ConfigError("diag_tokens must be 0 exactly when prompt is 'none'");
    if (diag_tokens == 0 && pooling == Pooling::kDiagnosisMean)
      throw ConfigError(
          "no diagnosis tokens to pool; select source_mean or last_token pooling "
          "explicitly");
  }
};

struct ToyEncoder {
  EncoderConfig cfg;
  Param embed_w;  // input_dim x (inner_tokens * n), frozen
  Param embed_b;  // 1 x (inner_tokens * n)
  std::vector<Param> mix_w;  // n x n each, frozen
  std::vector<Param> mix_b;  // 1 x n each

  std::size_t source_tokens() const { return cfg.layers / cfg.tap_every; }

  static ToyEncoder init(const EncoderConfig& cfg, Rng& rng) {
    ToyEncoder enc;
    enc.cfg = cfg;
    const std::size_t n = cfg.token_dim;
    enc.embed_w = Param(
        init_uniform(cfg.input_dim, cfg.inner_tokens * n, cfg.input_dim, rng), false);
    Matrix eb(1, cfg.inner_tokens * n);
    for (std::size_t j = 0; j < eb.size(); ++j) eb.data()[j] = rng.uniform(-0.1, 0.1);
    enc.embed_b = Param(std::move(eb), false);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      enc.mix_w.emplace_back(init_uniform(n, n, n, rng), false);
      Matrix mb(1, n);
      for (std::size_t j = 0; j < n; ++j) mb.data()[j] = rng.uniform(-0.1, 0.1);
      enc.mix_b.emplace_back(std::move(mb), false);
    }
    return enc;
  }

  /// d x n source tokens; deterministic in (seed, input).
  Matrix encode(const std::vector<double>& input) const {
    if (input.size() != cfg.input_dim)
      throw DimensionError("encode: input length " + std::to_string(input.size()) +
                           " vs embed width " + std::to_string(cfg.input_dim));
    const std::size_t n = cfg.token_dim;
    const std::size_t p_cnt = cfg.inner_tokens;
    Matrix state(p_cnt, n);
    for (std::size_t p = 0; p < p_cnt; ++p)
      for (std::size_t j = 0; j < n; ++j) {
        double a = embed_b.value(0, p * n + j);
        for (std::size_t i = 0; i < cfg.input_dim; ++i)
          a += input[i] * embed_w.value(i, p * n + j);
        state(p, j) = silu(a);
      }
    Matrix x(source_tokens(), n);
    std::size_t tap = 0;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      Matrix mixed = matmul(state, mix_w[l].value);
      for (std::size_t p = 0; p < p_cnt; ++p)
        for (std::size_t j = 0; j < n; ++j)
          state(p, j) += silu(mixed(p, j) + mix_b[l].value(0, j));
      if ((l + 1) % cfg.tap_every == 0) {
        for (std::size_t j = 0; j < n; ++j) {
          double a = 0.0;
          for (std::size_t p = 0; p < p_cnt; ++p) a += state(p, j);
          x(tap, j) = a / static_cast<double>(p_cnt);
        }
        ++tap;
      }
    }
    return x;
  }
};

/// Single-logit classification head, zero-initialized so an untrained model
/// predicts probability one half.
struct HeadParams {
  Param w;  // n' x 1
  Param b;  // 1 x 1

  static HeadParams init(std::size_t n_prime) {
    HeadParams h;
    h.w = Param(Matrix(n_prime, 1));
    h.b = Param(Matrix(1, 1));
    return h;
  }
};

/// The assembled classifier: frozen encoder, token provider, trainable neck,
/// frozen masked-attention stack with trainable adapters, trainable head.
struct PneumoModel {
  ModelConfig config;
  ToyEncoder encoder;
  std::optional<EngineParams> engine;
  std::optional<FixedPromptParams> fixed_prompt;
  std::optional<CocoopStyleParams> cocoop;
  NeckParams neck;
  std::vector<StackLayer> stack;
  HeadParams head;
  EmitterMask mask;

  static PneumoModel init(const ModelConfig& cfg) {
    cfg.validate();
    PneumoModel model;
    model.config = cfg;
    {
      Rng rng(derive_seed(cfg.seed, 1));
      model.encoder = ToyEncoder::init(cfg.encoder, rng);
    }
    const std::size_t n = cfg.encoder.token_dim;
    const std::size_t m = cfg.diag_tokens;
    switch (cfg.prompt) {
      case PromptSource::kNone:
        break;
      case PromptSource::kEngine: {
        Rng rng(derive_seed(cfg.seed, 2));
        model.engine = EngineParams::init(n, m, rng);
        break;
      }
      case PromptSource::kFixed: {
        Rng rng(derive_seed(cfg.seed, 3));
        model.fixed_prompt = FixedPromptParams::init(m, n, rng);
        break;
      }
      case PromptSource::kConditional: {
        Rng rng(derive_seed(cfg.seed, 4));
        model.cocoop = CocoopStyleParams::init(m, n, rng);
        break;
      }
    }
    {
      Rng rng(derive_seed(cfg.seed, 5));
      model.neck = NeckParams::init(
          n, NeckParams::clamp_hidden(cfg.neck_hidden, cfg.stack.width),
          cfg.stack.width, rng);
    }
    for (std::size_t l = 0; l < cfg.stack.layers; ++l) {
      StackLayer layer;
      {
        Rng rng(derive_seed(cfg.seed, 100 + l));
        layer.weights = BlockWeights::init(cfg.stack.width, cfg.stack.heads, rng);
      }
      if (cfg.adapters) {
        Rng rng(derive_seed(cfg.seed, 200 + l));
        layer.adapter = AdapterParams::init(cfg.stack.width, cfg.stack.adapter_dim, rng);
      }
      model.stack.push_back(std::move(layer));
    }
    model.head = HeadParams::init(cfg.stack.width);
    const std::size_t d = cfg.source_tokens();
    model.mask = cfg.emitter_mask ? build_mask(d, m) : build_unmasked(d, m);
    return model;
  }

  /// Every parameter in declaration order with stable names. The trainable
  /// set is exactly {engine/prompt, neck, adapters, head}.
  std::vector<NamedParam> params() {
    std::vector<NamedParam> out;
    out.push_back({"encoder.embed_w", &encoder.embed_w});
    out.push_back({"encoder.embed_b", &encoder.embed_b});
    for (std::size_t l = 0; l < encoder.mix_w.size(); ++l) {
      out.push_back({"encoder.mix_w." + std::to_string(l), &encoder.mix_w[l]});
      out.push_back({"encoder.mix_b." + std::to_string(l), &encoder.mix_b[l]});
    }
    if (engine) {
      out.push_back({"engine.w1", &engine->w1});
      out.push_back({"engine.b1", &engine->b1});
      out.push_back({"engine.w2", &engine->w2});
      out.push_back({"engine.b2", &engine->b2});
    }
    if (fixed_prompt) out.push_back({"prompt.tokens", &fixed_prompt->tokens});
    if (cocoop) {
      out.push_back({"cocoop.tokens", &cocoop->tokens});
      out.push_back({"cocoop.w_off", &cocoop->w_off});
      out.push_back({"cocoop.b_off", &cocoop->b_off});
    }
    out.push_back({"neck.w1", &neck.w1});
    out.push_back({"neck.b1", &neck.b1});
    out.push_back({"neck.w2", &neck.w2});
    out.push_back({"neck.b2", &neck.b2});
    for (std::size_t l = 0; l < stack.size(); ++l) {
      const std::string base = "stack." + std::to_string(l) + ".";
      BlockWeights& w = stack[l].weights;
      for (std::size_t h = 0; h < w.heads(); ++h) {
        out.push_back({base + "w_q." + std::to_string(h), &w.w_q[h]});
        out.push_back({base + "w_k." + std::to_string(h), &w.w_k[h]});
        out.push_back({base + "w_v." + std::to_string(h), &w.w_v[h]});
      }
      out.push_back({base + "w_o", &w.w_o});
      out.push_back({base + "w_ff1", &w.w_ff1});
      out.push_back({base + "w_ff2", &w.w_ff2});
      out.push_back({base + "ln1_gain", &w.ln1_gain});
      out.push_back({base + "ln1_bias", &w.ln1_bias});
      out.push_back({base + "ln2_gain", &w.ln2_gain});
      out.push_back({base + "ln2_bias", &w.ln2_bias});
      if (stack[l].adapter) {
        out.push_back({base + "adapter.down", &stack[l].adapter->down});
        out.push_back({base + "adapter.up", &stack[l].adapter->up});
      }
    }
    out.push_back({"head.w", &head.w});
    out.push_back({"head.b", &head.b});
    return out;
  }

  void zero_grads() {
    for (NamedParam np : params()) np.param->zero_grad();
  }

  struct Trace {
    Matrix x;          // d x n source tokens
    Tape::Var xhat;    // m x n diagnosis tokens; invalid when m = 0
    Tape::Var tokens;  // d' x n concatenated tokens
    Tape::Var y;       // d' x n' neck output
    Tape::Var z;       // d' x n' stack output
    Tape::Var pooled;  // 1 x n'
    Tape::Var logit;   // 1 x 1
  };

  /// Full forward pass on the caller's tape. xhat_override substitutes the
  /// diagnosis tokens with a fixed matrix (test hook for the emitter
  /// invariance properties).
  Trace forward_trace(Tape& t, const std::vector<double>& input,
                      const Matrix* xhat_override = nullptr) {
    Trace tr;
    tr.x = encoder.encode(input);
    Tape::Var x_var = t.input(tr.x);
    const std::size_t m = config.diag_tokens;
    if (m > 0) {
      if (xhat_override) {
        if (xhat_override->rows() != m ||
            xhat_override->cols() != config.encoder.token_dim)
          throw DimensionError("forward: diagnosis override " +
                               xhat_override->shape_str() + " vs expected " +
                               std::to_string(m) + "x" +
                               std::to_string(config.encoder.token_dim));
        tr.xhat = t.input(*xhat_override);
      } else {
        switch (config.prompt) {
          case PromptSource::kEngine:
            tr.xhat = engine_forward(t, x_var, *engine, config.engine_axis).diag_tokens;
            break;
          case PromptSource::kFixed:
            tr.xhat = fixed_prompt_forward(t, *fixed_prompt);
            break;
          case PromptSource::kConditional:
            tr.xhat = conditional_prompt_forward(t, x_var, *cocoop);
            break;
          case PromptSource::kNone:
            break;
        }
      }
      tr.tokens = t.concat_rows(x_var, tr.xhat);
    } else {
      tr.tokens = x_var;
    }
    tr.y = neck_forward(t, tr.tokens, neck);
    tr.z = stack_forward(t, tr.y, stack, mask, config.attn_scale, config.ln_eps);
    const std::size_t d = config.source_tokens();
    switch (config.pooling) {
      case Pooling::kDiagnosisMean:
        tr.pooled = t.mean_rows(tr.z, d, d + m);
        break;
      case Pooling::kSourceMean:
        tr.pooled = t.mean_rows(tr.z, 0, d);
        break;
      case Pooling::kLastToken:
        tr.pooled = t.mean_rows(tr.z, d + m - 1, d + m);
        break;
    }
    tr.logit = t.add(t.matmul(tr.pooled, t.param(head.w)), t.param(head.b));
    if (!std::isfinite(t.scalar(tr.logit)))
      throw VerifyError("model forward produced a non-finite logit");
    return tr;
  }

  Tape::Var forward(Tape& t, const std::vector<double>& input) {
    return forward_trace(t, input).logit;
  }

  /// Convenience inference on a throwaway tape.
  double logit_value(const std::vector<double>& input) {
    Tape t;
    return t.scalar(forward(t, input));
  }
};

struct Census {
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  double ratio() const {
    const std::size_t total = trainable + frozen;
    return total == 0 ? 0.0 : static_cast<double>(trainable) / static_cast<double>(total);
  }
};

inline Census parameter_census(PneumoModel& model) {
  Census c;
  for (NamedParam np : model.params()) {
    if (np.param->trainable)
      c.trainable += np.param->value.size();
    else
      c.frozen += np.param->value.size();
  }
  return c;
}

}  // namespace pneumo

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "methanol/ops.hpp"
#include "methanol/tensor.hpp"

namespace methanol {

// A K-layer causal decoder with two language heads: the usual one after the
// final block, and a second one (with its own RMS scale) reading the residual
// stream as it leaves block `thinking_layer`. Blocks are 1-based in all
// reporting; `thinking_layer` = k means the tap sits after block k and before
// block k+1.
struct ModelConfig {
  int vocab_size = 102;
  int d_model = 128;
  int n_heads = 4;
  int n_layers = 8;
  int thinking_layer = 6;
  int max_seq_len = 256;
  int ffn_hidden = 128;
  float norm_eps = 1e-5f;
  std::uint64_t init_seed = 0;

  void validate() const {
    if (vocab_size <= 0 || d_model <= 0 || n_heads <= 0 || n_layers <= 0 || ffn_hidden <= 0) {
      throw ConfigError("model config: all dimensions must be positive");
    }
    if (thinking_layer <= 0 || thinking_layer >= n_layers) {
      throw ConfigError("model config: thinking layer k=" + std::to_string(thinking_layer) +
                        " violates 0 < k < K with K=" + std::to_string(n_layers));
    }
    if (d_model % n_heads != 0) {
      throw ConfigError("model config: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (max_seq_len < 8) {
      throw ConfigError("model config: max_seq_len must be at least 8");
    }
  }

  bool operator==(const ModelConfig&) const = default;

  int head_dim() const { return d_model / n_heads; }
};

enum class HeadInit { copy, random };

template <typename T>
struct TransformerBlockT {
  TensorT<T> attn_norm;           // [d]
  TensorT<T> wq, wk, wv, wo;      // [d x d]
  TensorT<T> mlp_norm;            // [d]
  TensorT<T> w_gate, w_up;        // [d x ffn]
  TensorT<T> w_down;              // [ffn x d]
};

template <typename T>
struct ThinkingTransformerT {
  ModelConfig config;
  TensorT<T> tok_embedding;               // [V x d]
  TensorT<T> pos_embedding;               // [max_seq_len x d]
  std::vector<TransformerBlockT<T>> blocks;
  TensorT<T> think_norm;                  // [d]
  TensorT<T> think_head;                  // [d x V]
  TensorT<T> final_norm;                  // [d]
  TensorT<T> final_head;                  // [d x V]
};

using TransformerBlock = TransformerBlockT<float>;
using ThinkingTransformer = ThinkingTransformerT<float>;

template <typename T>
struct ForwardResultT {
  TensorT<T> hidden_k;   // residual stream leaving block k
  TensorT<T> hidden_K;   // residual stream leaving block K
  TensorT<T> logits_k;   // think head over hidden_k
  TensorT<T> logits_K;   // final head over hidden_K
};

using ForwardResult = ForwardResultT<float>;

// Iterates parameters in a fixed order with a stable (name, layer) labeling:
// embeddings are layer 0, blocks are 1..K, the think head group carries the
// thinking-layer index, and the final head group carries K.
template <typename T, typename F>
void for_each_param(ThinkingTransformerT<T>& m, F&& f) {
  f("tok_embedding", 0, m.tok_embedding);
  f("pos_embedding", 0, m.pos_embedding);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const int layer = static_cast<int>(i) + 1;
    const std::string p = "block" + std::to_string(layer) + ".";
    auto& b = m.blocks[i];
    f(p + "attn_norm", layer, b.attn_norm);
    f(p + "wq", layer, b.wq);
    f(p + "wk", layer, b.wk);
    f(p + "wv", layer, b.wv);
    f(p + "wo", layer, b.wo);
    f(p + "mlp_norm", layer, b.mlp_norm);
    f(p + "w_gate", layer, b.w_gate);
    f(p + "w_up", layer, b.w_up);
    f(p + "w_down", layer, b.w_down);
    if (layer == m.config.thinking_layer) {
      f("think_norm", layer, m.think_norm);
      f("think_head", layer, m.think_head);
    }
  }
  f("final_norm", m.config.n_layers, m.final_norm);
  f("final_head", m.config.n_layers, m.final_head);
}

template <typename T, typename F>
void for_each_param(const ThinkingTransformerT<T>& m, F&& f) {
  for_each_param(const_cast<ThinkingTransformerT<T>&>(m),
                 [&](const std::string& name, int layer, TensorT<T>& t) {
                   f(name, layer, static_cast<const TensorT<T>&>(t));
                 });
}

// Deterministic in config.init_seed. Copy mode makes the think head/norm
// bitwise copies of the final head/norm; random mode redraws the think head
// from N(0, 0.02) instead.
inline ThinkingTransformer init_model(const ModelConfig& config, HeadInit head_init) {
  config.validate();
  std::mt19937_64 rng(config.init_seed);
  std::normal_distribution<float> dist(0.0f, 0.02f);
  auto normal = [&](Shape shape) {
    std::vector<float> vals(numel_of(shape));
    for (auto& v : vals) v = dist(rng);
    return Tensor::from(std::move(shape), std::move(vals), true);
  };
  auto ones = [&](int n) {
    return Tensor::from({n}, std::vector<float>(static_cast<std::size_t>(n), 1.0f), true);
  };

  ThinkingTransformer m;
  m.config = config;
  const int d = config.d_model, v = config.vocab_size, h = config.ffn_hidden;
  m.tok_embedding = normal({v, d});
  m.pos_embedding = normal({config.max_seq_len, d});
  m.blocks.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& b : m.blocks) {
    b.attn_norm = ones(d);
    b.wq = normal({d, d});
    b.wk = normal({d, d});
    b.wv = normal({d, d});
    b.wo = normal({d, d});
    b.mlp_norm = ones(d);
    b.w_gate = normal({d, h});
    b.w_up = normal({d, h});
    b.w_down = normal({h, d});
  }
  m.final_norm = ones(d);
  m.final_head = normal({d, v});
  m.think_norm = Tensor::from({d}, m.final_norm.values(), true);
  if (head_init == HeadInit::copy) {
    m.think_head = Tensor::from({d, v}, m.final_head.values(), true);
  } else {
    m.think_head = normal({d, v});
  }
  return m;
}

// Re-initializes the think head/norm from the current final head/norm (or
// randomly), keeping everything else. Used when a trained base model is
// adapted to the dual-head objective.
inline void reset_think_head(ThinkingTransformer& m, HeadInit head_init,
                             std::uint64_t seed = 0) {
  m.think_norm = Tensor::from({m.config.d_model}, m.final_norm.values(), true);
  if (head_init == HeadInit::copy) {
    m.think_head =
        Tensor::from({m.config.d_model, m.config.vocab_size}, m.final_head.values(), true);
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 0.02f);
    std::vector<float> vals(static_cast<std::size_t>(m.config.d_model) *
                            static_cast<std::size_t>(m.config.vocab_size));
    for (auto& v : vals) v = dist(rng);
    m.think_head = Tensor::from({m.config.d_model, m.config.vocab_size}, std::move(vals), true);
  }
}

template <typename T>
TensorT<T> block_forward(const TransformerBlockT<T>& b, const TensorT<T>& x, int n_heads,
                         double norm_eps) {
  const int d = x.dim(1);
  const int hd = d / n_heads;
  TensorT<T> h = rmsnorm_rows(x, b.attn_norm, norm_eps);
  TensorT<T> q = matmul(h, b.wq);
  TensorT<T> k = matmul(h, b.wk);
  TensorT<T> v = matmul(h, b.wv);
  std::vector<TensorT<T>> ctx;
  ctx.reserve(static_cast<std::size_t>(n_heads));
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int head = 0; head < n_heads; ++head) {
    TensorT<T> qh = slice_cols(q, head * hd, hd);
    TensorT<T> kh = slice_cols(k, head * hd, hd);
    TensorT<T> vh = slice_cols(v, head * hd, hd);
    TensorT<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_hd);
    TensorT<T> probs = causal_softmax_rows(scores);
    ctx.push_back(matmul(probs, vh));
  }
  TensorT<T> attn_out = matmul(concat(ctx, 1), b.wo);
  TensorT<T> x1 = add(x, attn_out);
  TensorT<T> h2 = rmsnorm_rows(x1, b.mlp_norm, norm_eps);
  TensorT<T> gate = silu(matmul(h2, b.w_gate));
  TensorT<T> up = matmul(h2, b.w_up);
  TensorT<T> mlp_out = matmul(mul(gate, up), b.w_down);
  return add(x1, mlp_out);
}

// Full teacher-forced forward over a token sequence. Both logit streams are
// produced from one pass; the think stream reads the block-k output, so its
// graph never touches blocks k+1..K or the final head.
template <typename T>
ForwardResultT<T> forward(const ThinkingTransformerT<T>& m, std::span<const int> ids) {
  const auto& cfg = m.config;
  const int t_len = static_cast<int>(ids.size());
  if (t_len == 0) throw ShapeError("forward: empty token sequence");
  if (t_len > cfg.max_seq_len) {
    throw SequenceTooLongError("forward: sequence length " + std::to_string(t_len) +
                               " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= cfg.vocab_size) {
      throw TokenIdError("forward: token id " + std::to_string(ids[i]) + " at position " +
                         std::to_string(i) + " outside [0, " + std::to_string(cfg.vocab_size) +
                         ")");
    }
  }

  ForwardResultT<T> out;
  TensorT<T> x = add(gather_rows(m.tok_embedding, ids), slice_rows(m.pos_embedding, 0, t_len));
  for (int layer = 1; layer <= cfg.n_layers; ++layer) {
    x = block_forward(m.blocks[static_cast<std::size_t>(layer - 1)], x, cfg.n_heads,
                      cfg.norm_eps);
    if (layer == cfg.thinking_layer) out.hidden_k = x;
  }
  out.hidden_K = x;
  out.logits_k = matmul(rmsnorm_rows(out.hidden_k, m.think_norm, cfg.norm_eps), m.think_head);
  out.logits_K = matmul(rmsnorm_rows(out.hidden_K, m.final_norm, cfg.norm_eps), m.final_head);
  return out;
}

struct ParamDelta {
  std::string name;
  int layer_index = 0;
  double l2 = 0.0;
  double max_abs = 0.0;
};

// Per-parameter-group differences between two models of identical config,
// in for_each_param order (layer index ascending).
inline std::vector<ParamDelta> param_delta_report(const ThinkingTransformer& a,
                                                  const ThinkingTransformer& b) {
  if (!(a.config == b.config)) {
    throw ConfigError("param_delta_report: model configs differ");
  }
  std::vector<ParamDelta> report;
  std::vector<const Tensor*> b_params;
  for_each_param(b, [&](const std::string&, int, const Tensor& t) { b_params.push_back(&t); });
  std::size_t idx = 0;
  for_each_param(a, [&](const std::string& name, int layer, const Tensor& t) {
    const Tensor& other = *b_params[idx++];
    double sq = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double d = static_cast<double>(t.values()[i]) - static_cast<double>(other.values()[i]);
      sq += d * d;
      mx = std::max(mx, std::abs(d));
    }
    report.push_back({name, layer, std::sqrt(sq), mx});
  });
  return report;
}

// Double-precision shadow of a float model, for the finite-difference oracle.
inline ThinkingTransformerT<double> to_double(const ThinkingTransformer& m) {
  ThinkingTransformerT<double> out;
  out.config = m.config;
  auto cast = [](const Tensor& t) {
    std::vector<double> vals(t.values().begin(), t.values().end());
    return TensorT<double>::from(t.shape, std::move(vals), true);
  };
  out.tok_embedding = cast(m.tok_embedding);
  out.pos_embedding = cast(m.pos_embedding);
  out.blocks.resize(m.blocks.size());
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const auto& b = m.blocks[i];
    auto& o = out.blocks[i];
    o.attn_norm = cast(b.attn_norm);
    o.wq = cast(b.wq);
    o.wk = cast(b.wk);
    o.wv = cast(b.wv);
    o.wo = cast(b.wo);
    o.mlp_norm = cast(b.mlp_norm);
    o.w_gate = cast(b.w_gate);
    o.w_up = cast(b.w_up);
    o.w_down = cast(b.w_down);
  }
  out.think_norm = cast(m.think_norm);
  out.think_head = cast(m.think_head);
  out.final_norm = cast(m.final_norm);
  out.final_head = cast(m.final_head);
  return out;
}

}  // namespace methanol

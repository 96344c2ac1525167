#include "methanol/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace methanol {

DecodeCache::DecodeCache(const ModelConfig& config, std::uint64_t sample_seed)
    : config_(config), rng_(sample_seed) {
  config.validate();
  const std::size_t per_layer =
      static_cast<std::size_t>(config.max_seq_len) * static_cast<std::size_t>(config.d_model);
  k_cache_.assign(static_cast<std::size_t>(config.n_layers), std::vector<float>(per_layer));
  v_cache_.assign(static_cast<std::size_t>(config.n_layers), std::vector<float>(per_layer));
  boundary_.assign(per_layer, 0.0f);
  block_evals_.assign(static_cast<std::size_t>(config.n_layers), 0);
}

namespace {

void rms_inplace(const float* x, const std::vector<float>& w, float eps, float* out, int d) {
  float ms = 0.0f;
  for (int j = 0; j < d; ++j) ms += x[j] * x[j];
  ms /= static_cast<float>(d);
  const float inv = 1.0f / std::sqrt(ms + eps);
  for (int j = 0; j < d; ++j) out[j] = x[j] * inv * w[j];
}

// y = x * W, W row-major [in x out]
void matvec(const float* x, const std::vector<float>& w, int in, int out, float* y) {
  std::fill(y, y + out, 0.0f);
  for (int i = 0; i < in; ++i) {
    const float xv = x[i];
    const float* wrow = w.data() + static_cast<std::size_t>(i) * out;
    for (int j = 0; j < out; ++j) y[j] += xv * wrow[j];
  }
}

}  // namespace

// Single-position execution of the decoder, reading and extending a cache.
struct DecodeEngine {
  const ThinkingTransformer& model;
  DecodeCache& cache;

  int d() const { return model.config.d_model; }

  // Runs position `pos` (embedding of ids[pos]) through blocks 1..k, storing
  // per-layer K/V and the block-k output.
  void advance_low(const std::vector<int>& ctx) {
    const auto& cfg = model.config;
    for (int pos = cache.low_filled_; pos < static_cast<int>(ctx.size()); ++pos) {
      if (pos >= cfg.max_seq_len) {
        throw SequenceTooLongError("decode: position " + std::to_string(pos) +
                                   " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
      }
      const int id = ctx[static_cast<std::size_t>(pos)];
      if (id < 0 || id >= cfg.vocab_size) {
        throw TokenIdError("decode: token id " + std::to_string(id) + " outside [0, " +
                           std::to_string(cfg.vocab_size) + ")");
      }
      std::vector<float> x(static_cast<std::size_t>(d()));
      for (int j = 0; j < d(); ++j) {
        x[static_cast<std::size_t>(j)] =
            model.tok_embedding.values()[std::size_t(id) * d() + j] +
            model.pos_embedding.values()[std::size_t(pos) * d() + j];
      }
      for (int layer = 1; layer <= cfg.thinking_layer; ++layer) run_block(layer, pos, x.data());
      std::copy(x.begin(), x.end(), cache.boundary_.begin() + std::size_t(pos) * d());
      cache.low_filled_ = pos + 1;
    }
  }

  // Runs positions through blocks k+1..K, starting from the stored block-k
  // outputs. Requires advance_low to have covered them already.
  // Returns the block-K output of the last position processed.
  std::vector<float> advance_high(int upto) {
    const auto& cfg = model.config;
    std::vector<float> x(static_cast<std::size_t>(d()));
    for (int pos = cache.high_filled_; pos < upto; ++pos) {
      std::copy(cache.boundary_.begin() + std::size_t(pos) * d(),
                cache.boundary_.begin() + std::size_t(pos + 1) * d(), x.begin());
      for (int layer = cfg.thinking_layer + 1; layer <= cfg.n_layers; ++layer) {
        run_block(layer, pos, x.data());
      }
      cache.high_filled_ = pos + 1;
    }
    return x;
  }

  void run_block(int layer, int pos, float* x) {
    const auto& cfg = model.config;
    const auto& b = model.blocks[static_cast<std::size_t>(layer - 1)];
    const int dm = d(), heads = cfg.n_heads, hd = cfg.head_dim();
    cache.block_evals_[static_cast<std::size_t>(layer - 1)]++;

    std::vector<float> h(static_cast<std::size_t>(dm));
    rms_inplace(x, b.attn_norm.values(), cfg.norm_eps, h.data(), dm);
    std::vector<float> q(static_cast<std::size_t>(dm));
    matvec(h.data(), b.wq.values(), dm, dm, q.data());
    float* krow = cache.k_cache_[static_cast<std::size_t>(layer - 1)].data() +
                  static_cast<std::size_t>(pos) * dm;
    float* vrow = cache.v_cache_[static_cast<std::size_t>(layer - 1)].data() +
                  static_cast<std::size_t>(pos) * dm;
    matvec(h.data(), b.wk.values(), dm, dm, krow);
    matvec(h.data(), b.wv.values(), dm, dm, vrow);

    const float* kbase = cache.k_cache_[static_cast<std::size_t>(layer - 1)].data();
    const float* vbase = cache.v_cache_[static_cast<std::size_t>(layer - 1)].data();
    std::vector<float> ctx_vec(static_cast<std::size_t>(dm), 0.0f);
    std::vector<float> scores(static_cast<std::size_t>(pos) + 1);
    const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));
    for (int head = 0; head < heads; ++head) {
      const int off = head * hd;
      float mx = -std::numeric_limits<float>::infinity();
      for (int s = 0; s <= pos; ++s) {
        float dot = 0.0f;
        const float* ks = kbase + static_cast<std::size_t>(s) * dm + off;
        for (int j = 0; j < hd; ++j) dot += q[static_cast<std::size_t>(off + j)] * ks[j];
        scores[static_cast<std::size_t>(s)] = dot * inv_sqrt_hd;
        mx = std::max(mx, scores[static_cast<std::size_t>(s)]);
      }
      float z = 0.0f;
      for (int s = 0; s <= pos; ++s) {
        scores[static_cast<std::size_t>(s)] = std::exp(scores[static_cast<std::size_t>(s)] - mx);
        z += scores[static_cast<std::size_t>(s)];
      }
      const float inv_z = 1.0f / z;
      for (int s = 0; s <= pos; ++s) {
        const float p = scores[static_cast<std::size_t>(s)] * inv_z;
        const float* vs = vbase + static_cast<std::size_t>(s) * dm + off;
        for (int j = 0; j < hd; ++j) ctx_vec[static_cast<std::size_t>(off + j)] += p * vs[j];
      }
    }
    std::vector<float> attn(static_cast<std::size_t>(dm));
    matvec(ctx_vec.data(), b.wo.values(), dm, dm, attn.data());
    for (int j = 0; j < dm; ++j) x[j] += attn[static_cast<std::size_t>(j)];

    rms_inplace(x, b.mlp_norm.values(), cfg.norm_eps, h.data(), dm);
    const int ffn = cfg.ffn_hidden;
    std::vector<float> gate(static_cast<std::size_t>(ffn)), up(static_cast<std::size_t>(ffn));
    matvec(h.data(), b.w_gate.values(), dm, ffn, gate.data());
    matvec(h.data(), b.w_up.values(), dm, ffn, up.data());
    for (int j = 0; j < ffn; ++j) {
      const float g = gate[static_cast<std::size_t>(j)];
      gate[static_cast<std::size_t>(j)] =
          g / (1.0f + std::exp(-g)) * up[static_cast<std::size_t>(j)];
    }
    std::vector<float> down(static_cast<std::size_t>(dm));
    matvec(gate.data(), b.w_down.values(), ffn, dm, down.data());
    for (int j = 0; j < dm; ++j) x[j] += down[static_cast<std::size_t>(j)];
  }

  std::vector<float> think_logits_at_last() {
    const auto& cfg = model.config;
    const float* hidden =
        cache.boundary_.data() + static_cast<std::size_t>(cache.low_filled_ - 1) * d();
    std::vector<float> normed(static_cast<std::size_t>(d()));
    rms_inplace(hidden, model.think_norm.values(), cfg.norm_eps, normed.data(), d());
    std::vector<float> logits(static_cast<std::size_t>(cfg.vocab_size));
    matvec(normed.data(), model.think_head.values(), d(), cfg.vocab_size, logits.data());
    return logits;
  }

  std::vector<float> final_logits(const std::vector<float>& hidden_K) {
    const auto& cfg = model.config;
    std::vector<float> normed(static_cast<std::size_t>(d()));
    rms_inplace(hidden_K.data(), model.final_norm.values(), cfg.norm_eps, normed.data(), d());
    std::vector<float> logits(static_cast<std::size_t>(cfg.vocab_size));
    matvec(normed.data(), model.final_head.values(), d(), cfg.vocab_size, logits.data());
    return logits;
  }
};

namespace {

int select_token(const std::vector<float>& logits, const GenerationParams& params,
                 std::mt19937_64& rng) {
  if (!params.sample) {
    return static_cast<int>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  std::vector<std::pair<float, int>> scored(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    scored[i] = {static_cast<float>(logits[i] / params.sampling.temperature),
                 static_cast<int>(i)};
  }
  std::size_t keep = scored.size();
  if (params.sampling.top_k > 0 &&
      static_cast<std::size_t>(params.sampling.top_k) < scored.size()) {
    keep = static_cast<std::size_t>(params.sampling.top_k);
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end(), [](const auto& a, const auto& b) {
                        return a.first > b.first || (a.first == b.first && a.second < b.second);
                      });
    scored.resize(keep);
  }
  float mx = scored[0].first;
  for (const auto& [v, idx] : scored) mx = std::max(mx, v);
  double z = 0.0;
  std::vector<double> probs(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    probs[i] = std::exp(static_cast<double>(scored[i].first - mx));
    z += probs[i];
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double r = unif(rng) * z;
  for (std::size_t i = 0; i < keep; ++i) {
    r -= probs[i];
    if (r <= 0.0) return scored[i].second;
  }
  return scored[keep - 1].second;
}

std::string detok_safe(const std::vector<int>& ids) {
  return Vocabulary::instance().detokenize(ids);
}

}  // namespace

DecodeResult decode_thought(const ThinkingTransformer& model, std::vector<int>& ctx,
                            const GenerationParams& params, DecodeCache& cache) {
  params.validate();
  if (ctx.empty() || ctx.back() != Vocabulary::kThk) {
    throw ConfigError("decode_thought: context must end with <|thk|>");
  }
  if (static_cast<int>(ctx.size()) + params.max_thought_tokens + 1 > model.config.max_seq_len) {
    throw SequenceTooLongError("decode_thought: prompt plus thought budget exceeds max_seq_len");
  }
  DecodeEngine engine{model, cache};
  engine.advance_low(ctx);

  DecodeResult result;
  result.stop = StopReason::length;
  const auto& vocab = Vocabulary::instance();
  for (int step = 0; step < params.max_thought_tokens; ++step) {
    auto logits = engine.think_logits_at_last();
    const int next = select_token(logits, params, cache.rng());
    result.step_logits.push_back(std::move(logits));
    if (vocab.is_special(next)) {
      result.stop = StopReason::delimiter;
      break;
    }
    ctx.push_back(next);
    result.ids.push_back(next);
    engine.advance_low(ctx);
  }
  // The separator is consumed by pass 2 whether decoded or forced by budget.
  ctx.push_back(Vocabulary::kAns);
  engine.advance_low(ctx);
  return result;
}

DecodeResult decode_answer(const ThinkingTransformer& model, std::vector<int>& ctx,
                           const GenerationParams& params, DecodeCache& cache) {
  params.validate();
  if (ctx.empty() || ctx.back() != Vocabulary::kAns) {
    throw ConfigError("decode_answer: context must end with <|ans|>");
  }
  if (static_cast<int>(ctx.size()) + params.max_answer_tokens > model.config.max_seq_len) {
    throw SequenceTooLongError("decode_answer: prefix plus answer budget exceeds max_seq_len");
  }
  DecodeEngine engine{model, cache};
  engine.advance_low(ctx);
  std::vector<float> hidden_K = engine.advance_high(static_cast<int>(ctx.size()));

  DecodeResult result;
  result.stop = StopReason::length;
  const auto& vocab = Vocabulary::instance();
  for (int step = 0; step < params.max_answer_tokens; ++step) {
    auto logits = engine.final_logits(hidden_K);
    const int next = select_token(logits, params, cache.rng());
    result.step_logits.push_back(std::move(logits));
    if (vocab.is_special(next)) {
      result.stop = StopReason::delimiter;
      break;
    }
    ctx.push_back(next);
    result.ids.push_back(next);
    engine.advance_low(ctx);
    hidden_K = engine.advance_high(static_cast<int>(ctx.size()));
  }
  return result;
}

GenerationOutput generate(const ThinkingTransformer& model, const std::string& system_text,
                          const std::string& query_text, const GenerationParams& params) {
  params.validate();
  const auto& vocab = Vocabulary::instance();
  std::vector<int> ctx{Vocabulary::kSys};
  for (int id : vocab.tokenize(system_text)) ctx.push_back(id);
  ctx.push_back(Vocabulary::kUsr);
  for (int id : vocab.tokenize(query_text)) ctx.push_back(id);
  ctx.push_back(Vocabulary::kThk);

  const long budget = static_cast<long>(ctx.size()) + params.max_thought_tokens + 1 +
                      params.max_answer_tokens;
  if (budget > model.config.max_seq_len) {
    throw SequenceTooLongError("generate: prompt of " + std::to_string(ctx.size()) +
                               " tokens plus budgets needs " + std::to_string(budget) +
                               " positions, max_seq_len is " +
                               std::to_string(model.config.max_seq_len));
  }

  DecodeCache cache(model.config, params.sampling.seed);
  GenerationOutput out;
  DecodeResult thought = decode_thought(model, ctx, params, cache);
  out.thought_ids = thought.ids;
  out.stop_pass1 = thought.stop;
  out.steps_pass1 = static_cast<int>(thought.ids.size());
  out.thought_text = detok_safe(out.thought_ids);

  DecodeResult answer = decode_answer(model, ctx, params, cache);
  out.answer_ids = answer.ids;
  out.stop_pass2 = answer.stop;
  out.steps_pass2 = static_cast<int>(answer.ids.size());
  out.answer_text = detok_safe(out.answer_ids);
  return out;
}

std::string transcript_json(const GenerationOutput& out, const std::string& system_text,
                            const std::string& query_text) {
  nlohmann::json j{
      {"system", system_text},
      {"query", query_text},
      {"thought", out.thought_text},
      {"answer", out.answer_text},
      {"stop_reasons",
       {{"pass1", to_string(out.stop_pass1)}, {"pass2", to_string(out.stop_pass2)}}},
      {"steps_pass1", out.steps_pass1},
      {"steps_pass2", out.steps_pass2},
  };
  return j.dump();
}

}  // namespace methanol

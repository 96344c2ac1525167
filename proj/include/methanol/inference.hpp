#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "methanol/data.hpp"
#include "methanol/model.hpp"

namespace methanol {

struct SampleParams {
  double temperature = 1.0;
  int top_k = 0;  // 0 = no truncation
  std::uint64_t seed = 0;
};

struct GenerationParams {
  int max_thought_tokens = 64;
  int max_answer_tokens = 32;
  bool sample = false;  // greedy by default
  SampleParams sampling;

  void validate() const {
    if (max_thought_tokens < 0 || max_answer_tokens < 0) {
      throw ConfigError("generation: token budgets must be nonnegative");
    }
    if (sample && !(sampling.temperature > 0.0)) {
      throw ConfigError("generation: sampling temperature must be positive");
    }
    if (sampling.top_k < 0) throw ConfigError("generation: top_k must be nonnegative");
  }
};

enum class StopReason { delimiter, length };

inline const char* to_string(StopReason r) {
  return r == StopReason::delimiter ? "delimiter" : "length";
}

struct GenerationOutput {
  std::string thought_text;
  std::string answer_text;
  std::vector<int> thought_ids;
  std::vector<int> answer_ids;
  int steps_pass1 = 0;
  int steps_pass2 = 0;
  StopReason stop_pass1 = StopReason::length;
  StopReason stop_pass2 = StopReason::length;
};

// Attention state shared by the two decode passes. Layers 1..k fill during
// pass 1; layers k+1..K fill lazily when pass 2 first needs them. The
// residual stream leaving block k is kept per position so pass 2 can extend
// the upper blocks without re-running the lower ones.
//
// A cache belongs to exactly one generation session.
class DecodeCache {
 public:
  explicit DecodeCache(const ModelConfig& config, std::uint64_t sample_seed = 0);

  const ModelConfig& config() const { return config_; }

  int low_filled() const { return low_filled_; }
  int high_filled() const { return high_filled_; }

  // per-layer count of block evaluations, index = layer - 1
  const std::vector<long long>& block_evals() const { return block_evals_; }

  // sampling stream for this session
  std::mt19937_64& rng() { return rng_; }

 private:
  friend struct DecodeEngine;
  ModelConfig config_;
  std::vector<std::vector<float>> k_cache_;  // [K][max_seq * d]
  std::vector<std::vector<float>> v_cache_;
  std::vector<float> boundary_;              // block-k output, [max_seq * d]
  int low_filled_ = 0;
  int high_filled_ = 0;
  std::vector<long long> block_evals_;
  std::mt19937_64 rng_;
};

struct DecodeResult {
  std::vector<int> ids;
  StopReason stop = StopReason::length;
  // logits the selector saw, one row per decode step (including the stopping
  // step); used by the equivalence checks and confidence inspection
  std::vector<std::vector<float>> step_logits;
};

// Pass 1: extends `ctx` (which must end with <|thk|>) by decoding from the
// layer-k head, running blocks 1..k only. Stops on <|ans|> or on the budget;
// either way the <|ans|> separator is appended to ctx (and not to the
// returned ids).
DecodeResult decode_thought(const ThinkingTransformer& model, std::vector<int>& ctx,
                            const GenerationParams& params, DecodeCache& cache);

// Pass 2: `ctx` must end with <|ans|>. Materializes blocks k+1..K over the
// prefix (reusing the pass-1 state for blocks 1..k), then decodes from the
// final head until <|eot|> or the budget.
DecodeResult decode_answer(const ThinkingTransformer& model, std::vector<int>& ctx,
                           const GenerationParams& params, DecodeCache& cache);

// Renders <|sys|> system <|usr|> query <|thk|> and runs both passes.
GenerationOutput generate(const ThinkingTransformer& model, const std::string& system_text,
                          const std::string& query_text, const GenerationParams& params);

// Transcript JSON: {system, query, thought, answer, stop_reasons, steps_pass1, steps_pass2}
std::string transcript_json(const GenerationOutput& out, const std::string& system_text,
                            const std::string& query_text);

}  // namespace methanol

#pragma once

#include <cstdint>
#include <vector>

#include "methanol/data.hpp"
#include "methanol/model.hpp"
#include "methanol/ops.hpp"

namespace methanol {

struct AblationFlags {
  bool no_thinking = false;      // drop the layer-k loss; supervise thought+answer at layer K
  bool no_thought_mask = false;  // layer-K loss additionally covers thought tokens
  bool no_answer_mask = false;   // layer-k loss additionally covers answer tokens
  bool random_init_head = false; // think head starts random instead of copied
  bool think_only = false;       // drop the layer-K loss (gradient-routing probe)
};

struct MaskOptions {
  // When set, the layer-k loss also supervises the thought-terminating
  // delimiter and the layer-K loss the end-of-turn delimiter, so both
  // decoders learn to stop. Off gives the strict thought/answer-tokens-only
  // reading.
  bool supervise_stop_delimiters = true;
};

// A flag at position i means "the token at position i+1 is a supervised
// target, predicted from position i".
struct SupervisionMasks {
  std::vector<std::uint8_t> think_targets;
  std::vector<std::uint8_t> answer_targets;

  long think_count() const {
    long n = 0;
    for (auto b : think_targets) n += b != 0;
    return n;
  }
  long answer_count() const {
    long n = 0;
    for (auto b : answer_targets) n += b != 0;
    return n;
  }
};

namespace detail {
struct DelimiterPositions {
  std::size_t thk = 0, ans = 0, eot = 0;
};

inline DelimiterPositions find_delimiters(const RenderedSample& rendered) {
  DelimiterPositions p;
  bool saw_thk = false, saw_ans = false, saw_eot = false;
  for (std::size_t i = 0; i < rendered.token_ids.size(); ++i) {
    switch (rendered.token_ids[i]) {
      case Vocabulary::kThk: p.thk = i; saw_thk = true; break;
      case Vocabulary::kAns: p.ans = i; saw_ans = true; break;
      case Vocabulary::kEot: p.eot = i; saw_eot = true; break;
      default: break;
    }
  }
  if (!saw_thk || !saw_ans || !saw_eot || !(p.thk < p.ans && p.ans < p.eot) ||
      p.eot + 1 != rendered.token_ids.size()) {
    throw ExtractionError("sample '" + rendered.source_id +
                          "' does not have the expected delimiter structure");
  }
  return p;
}
}  // namespace detail

// Builds the two loss-target masks. Default reading: the layer-k loss covers
// the thought tokens (plus stop delimiter), the layer-K loss the answer
// tokens (plus end of turn), and nothing overlaps. Ablations relax one side.
inline SupervisionMasks build_masks(const RenderedSample& rendered, const AblationFlags& flags,
                                    const MaskOptions& options = {}) {
  const auto p = detail::find_delimiters(rendered);
  const std::size_t t_len = rendered.token_ids.size();
  SupervisionMasks masks;
  masks.think_targets.assign(t_len, 0);
  masks.answer_targets.assign(t_len, 0);

  if (flags.no_thinking) {
    // Fine-tune on the concatenation of thought and answer at the final layer.
    for (std::size_t i = p.thk; i < p.eot; ++i) masks.answer_targets[i] = 1;
    return masks;
  }

  const std::size_t thought_len = p.ans - p.thk - 1;
  if (thought_len == 0) {
    throw EmptySupervisionError("sample '" + rendered.source_id +
                                "' has no thought tokens but thinking is enabled");
  }
  const std::size_t think_end = options.supervise_stop_delimiters ? p.ans : p.ans - 1;
  for (std::size_t i = p.thk; i < think_end; ++i) masks.think_targets[i] = 1;
  const std::size_t answer_end = options.supervise_stop_delimiters ? p.eot : p.eot - 1;
  for (std::size_t i = p.ans; i < answer_end; ++i) masks.answer_targets[i] = 1;

  if (flags.no_thought_mask) {
    for (std::size_t i = p.thk; i < p.ans - 1; ++i) masks.answer_targets[i] = 1;
  }
  if (flags.no_answer_mask) {
    for (std::size_t i = p.ans; i < p.eot - 1; ++i) masks.think_targets[i] = 1;
  }
  return masks;
}

// Next-token targets: target[i] = token at i+1 (the last position has no
// target and must never be masked in).
inline std::vector<int> next_token_targets(const RenderedSample& rendered) {
  std::vector<int> targets(rendered.token_ids.size(), 0);
  for (std::size_t i = 0; i + 1 < rendered.token_ids.size(); ++i) {
    targets[i] = rendered.token_ids[i + 1];
  }
  return targets;
}

template <typename T>
TensorT<T> thinking_loss(const TensorT<T>& logits_k, const RenderedSample& rendered,
                         const SupervisionMasks& masks) {
  if (masks.think_count() == 0) {
    throw EmptySupervisionError("thinking_loss: no supervised thought targets in '" +
                                rendered.source_id + "'");
  }
  return masked_cross_entropy(logits_k, next_token_targets(rendered), masks.think_targets);
}

template <typename T>
TensorT<T> speaking_loss(const TensorT<T>& logits_K, const RenderedSample& rendered,
                         const SupervisionMasks& masks) {
  if (masks.answer_count() == 0) {
    throw EmptySupervisionError("speaking_loss: no supervised answer targets in '" +
                                rendered.source_id + "'");
  }
  return masked_cross_entropy(logits_K, next_token_targets(rendered), masks.answer_targets);
}

template <typename T>
TensorT<T> total_loss(const TensorT<T>& loss_think, const TensorT<T>& loss_speak, double f_T) {
  if (f_T < 0) throw ConfigError("total_loss: f_T must be nonnegative");
  return add(scale(loss_think, f_T), loss_speak);
}

// The three numbers of one objective evaluation, accumulated in double so the
// identity loss_total == f_T * loss_think + loss_speak is exact to rounding.
struct LossBreakdown {
  double loss_think = 0.0;
  double loss_speak = 0.0;
  double loss_total = 0.0;
  long n_think_targets = 0;
  long n_answer_targets = 0;
};

template <typename T>
struct DualLossT {
  TensorT<T> total;  // graph root; empty when the sample contributes nothing
  LossBreakdown breakdown;
};

// One-pass objective over a single rendered sample. Terms that the ablation
// drops are excluded from the graph entirely, so their parameters see no
// gradient at all; with f_T == 0 the thinking loss is still measured (its
// weight in the objective is zero either way).
template <typename T>
DualLossT<T> dual_layer_loss(const ForwardResultT<T>& fr, const RenderedSample& rendered,
                             const SupervisionMasks& masks, double f_T,
                             const AblationFlags& flags) {
  if (f_T < 0) throw ConfigError("dual_layer_loss: f_T must be nonnegative");
  DualLossT<T> out;
  out.breakdown.n_think_targets = masks.think_count();
  out.breakdown.n_answer_targets = masks.answer_count();

  if (flags.no_thinking) {
    TensorT<T> speak = speaking_loss(fr.logits_K, rendered, masks);
    out.breakdown.loss_speak = static_cast<double>(speak.item());
    out.breakdown.loss_total = out.breakdown.loss_speak;
    out.total = speak;
    return out;
  }
  if (flags.think_only) {
    TensorT<T> think = thinking_loss(fr.logits_k, rendered, masks);
    out.breakdown.loss_think = static_cast<double>(think.item());
    out.breakdown.loss_total = f_T * out.breakdown.loss_think;
    out.total = scale(think, f_T);
    return out;
  }
  if (f_T == 0.0) {
    // Measured for telemetry, detached from the graph.
    TensorT<T> think_value =
        thinking_loss(fr.logits_k.detached(), rendered, masks);
    TensorT<T> speak = speaking_loss(fr.logits_K, rendered, masks);
    out.breakdown.loss_think = static_cast<double>(think_value.item());
    out.breakdown.loss_speak = static_cast<double>(speak.item());
    out.breakdown.loss_total = out.breakdown.loss_speak;
    out.total = speak;
    return out;
  }
  TensorT<T> think = thinking_loss(fr.logits_k, rendered, masks);
  TensorT<T> speak = speaking_loss(fr.logits_K, rendered, masks);
  out.breakdown.loss_think = static_cast<double>(think.item());
  out.breakdown.loss_speak = static_cast<double>(speak.item());
  out.breakdown.loss_total = f_T * out.breakdown.loss_think + out.breakdown.loss_speak;
  out.total = total_loss(think, speak, f_T);
  return out;
}

}  // namespace methanol

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "methanol/inference.hpp"
#include "methanol/metrics.hpp"
#include "methanol/model.hpp"
#include "methanol/objective.hpp"

namespace methanol {

struct TrainConfig {
  double f_T = 4.0;
  double peak_lr = 3e-4;          // from-scratch toy rate; post-hoc runs want far less
  double weight_decay = 0.01;
  int batch_size = 32;
  long total_steps = 1;
  std::optional<double> grad_clip_norm;
  std::uint64_t seed = 0;
  int warmup_steps = 0;
  long checkpoint_every = 0;      // 0 = only at the end
  AblationFlags ablations;
  MaskOptions mask_options;
  bool strip_thoughts = false;    // train on plain query->answer rows

  void validate() const {
    if (f_T < 0) throw ConfigError("train config: f_T must be nonnegative");
    if (total_steps < 1) throw ConfigError("train config: total_steps must be at least 1");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be at least 1");
    if (warmup_steps < 0) throw ConfigError("train config: warmup_steps must be nonnegative");
    if (ablations.no_thinking && ablations.think_only) {
      throw ConfigError("train config: no_thinking and think_only are mutually exclusive");
    }
    if (grad_clip_norm && *grad_clip_norm <= 0) {
      throw ConfigError("train config: grad_clip_norm must be positive");
    }
  }
};

// Cosine decay from peak_lr to zero over total_steps, with an optional
// linear warmup prefix.
double lr_at(long step, long total_steps, double peak_lr, int warmup_steps = 0);

// Decoupled weight decay. A parameter whose gradient buffer is identically
// zero this step is skipped outright (no moment update, no decay), so
// parameters a loss cannot reach stay bitwise untouched.
class AdamW {
 public:
  explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ThinkingTransformer& model, double lr, double weight_decay,
            std::optional<double> grad_clip_norm);

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path, const ThinkingTransformer& model);

 private:
  double beta1_, beta2_, eps_;
  std::vector<std::vector<float>> m_, v_;
  std::vector<long> steps_;
};

// Renders triplets for training: optional thought stripping, hard failure on
// empty thoughts when thinking is on, overlong samples dropped with their
// source_id logged to stderr.
std::vector<RenderedSample> render_corpus(const std::vector<TripletSample>& triplets,
                                          const ModelConfig& model_cfg,
                                          const TrainConfig& train_cfg);

// One optimization step over a batch: single forward per sample producing
// both logit streams, both losses from that pass, one backward, one AdamW
// update, gradients zeroed explicitly by this function.
MetricsRecord train_step(ThinkingTransformer& model,
                         const std::vector<const RenderedSample*>& batch,
                         const TrainConfig& cfg, AdamW& optimizer, long step);

using MetricsSink = std::function<void(const MetricsRecord&)>;
using CheckpointHook = std::function<void(long step, ThinkingTransformer&, AdamW&)>;

// Deterministic batch order given cfg.seed; emits one MetricsRecord per step.
// Throws DivergenceError on a non-finite loss (checkpoints already written
// stay on disk). `start_step` supports resuming.
void train(ThinkingTransformer& model, const std::vector<RenderedSample>& corpus,
           const TrainConfig& cfg, const MetricsSink& sink,
           const CheckpointHook& checkpoint_hook = {}, AdamW* optimizer = nullptr,
           long start_step = 0);

enum class SweepAxis { f_T, thinking_layer };

struct SweepRow {
  double axis_value = 0.0;
  double stable_loss_total = 0.0;
  double stable_loss_think = 0.0;
  double stable_loss_speak = 0.0;
  double eval_exact_match = 0.0;
  double thought_ppl = 0.0;
  bool diverged = false;
};

struct SweepReport {
  SweepAxis axis = SweepAxis::f_T;
  std::vector<SweepRow> rows;
};

// One independent run per axis value (fresh seed-derived init). Stable losses
// are means over the final 10% of steps. A diverging run is recorded and the
// sweep continues. `jobs` bounds parallel runs.
SweepReport sweep(SweepAxis axis, const std::vector<double>& values,
                  const ModelConfig& base_model, const TrainConfig& base_train,
                  const std::vector<TripletSample>& corpus,
                  const std::vector<TripletSample>& eval_set,
                  const GenerationParams& eval_params, int jobs = 1);

// CSV: axis_value,stable_loss_total,stable_loss_think,stable_loss_speak,
//      eval_exact_match,thought_ppl,diverged
void write_sweep_csv(const SweepReport& report, const std::filesystem::path& path);

}  // namespace methanol

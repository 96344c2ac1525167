#include "methanol/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <thread>

#include "methanol/eval.hpp"

namespace methanol {

double lr_at(long step, long total_steps, double peak_lr, int warmup_steps) {
  if (step < 0 || step > total_steps) {
    throw ConfigError("lr_at: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  }
  if (warmup_steps > 0 && step < warmup_steps) {
    return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

namespace {

std::vector<Tensor*> collect_params(ThinkingTransformer& model) {
  std::vector<Tensor*> params;
  for_each_param(model, [&](const std::string&, int, Tensor& t) { params.push_back(&t); });
  return params;
}

}  // namespace

void AdamW::step(ThinkingTransformer& model, double lr, double weight_decay,
                 std::optional<double> grad_clip_norm) {
  auto params = collect_params(model);
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    steps_.assign(params.size(), 0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->numel(), 0.0f);
      v_[i].assign(params[i]->numel(), 0.0f);
    }
  }
  if (m_.size() != params.size()) {
    throw ConfigError("optimizer state does not match the model");
  }

  float scale = 1.0f;
  if (grad_clip_norm) {
    double sumsq = 0.0;
    for (Tensor* p : params) {
      for (float g : p->grads()) sumsq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sumsq);
    if (norm > *grad_clip_norm) scale = static_cast<float>(*grad_clip_norm / norm);
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& grads = params[i]->grads();
    bool all_zero = true;
    for (float g : grads) {
      if (g != 0.0f) {
        all_zero = false;
        break;
      }
    }
    if (all_zero) continue;  // untouched by every live loss this step

    ++steps_[i];
    const float bc1 = static_cast<float>(1.0 - std::pow(beta1_, steps_[i]));
    const float bc2 = static_cast<float>(1.0 - std::pow(beta2_, steps_[i]));
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const float flr = static_cast<float>(lr), fwd = static_cast<float>(weight_decay);
    const float feps = static_cast<float>(eps_);
    auto& vals = params[i]->values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const float g = grads[j] * scale;
      m[j] = b1 * m[j] + (1.0f - b1) * g;
      v[j] = b2 * v[j] + (1.0f - b2) * g * g;
      const float mhat = m[j] / bc1;
      const float vhat = v[j] / bc2;
      vals[j] -= flr * (mhat / (std::sqrt(vhat) + feps) + fwd * vals[j]);
    }
  }
}

void AdamW::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open optimizer state file " + path.string() + " for writing");
  const std::int64_t n = static_cast<std::int64_t>(m_.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const std::int64_t steps = steps_[i];
    const std::int64_t count = static_cast<std::int64_t>(m_[i].size());
    out.write(reinterpret_cast<const char*>(&steps), sizeof(steps));
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(m_[i].data()),
              static_cast<std::streamsize>(m_[i].size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(v_[i].data()),
              static_cast<std::streamsize>(v_[i].size() * sizeof(float)));
  }
  if (!out) throw Error("failed writing optimizer state " + path.string());
}

void AdamW::load(const std::filesystem::path& path, const ThinkingTransformer& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open optimizer state file " + path.string());
  std::vector<const Tensor*> params;
  for_each_param(model, [&](const std::string&, int, const Tensor& t) { params.push_back(&t); });
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (n != static_cast<std::int64_t>(params.size())) {
    throw Error("optimizer state " + path.string() + " does not match the model");
  }
  m_.resize(params.size());
  v_.resize(params.size());
  steps_.assign(params.size(), 0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::int64_t steps = 0, count = 0;
    in.read(reinterpret_cast<char*>(&steps), sizeof(steps));
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (count != static_cast<std::int64_t>(params[i]->numel())) {
      throw Error("optimizer state tensor " + std::to_string(i) + " has the wrong size");
    }
    steps_[i] = steps;
    m_[i].resize(static_cast<std::size_t>(count));
    v_[i].resize(static_cast<std::size_t>(count));
    in.read(reinterpret_cast<char*>(m_[i].data()),
            static_cast<std::streamsize>(m_[i].size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(v_[i].data()),
            static_cast<std::streamsize>(v_[i].size() * sizeof(float)));
  }
  if (!in) throw Error("optimizer state " + path.string() + " is truncated");
}

std::vector<RenderedSample> render_corpus(const std::vector<TripletSample>& triplets,
                                          const ModelConfig& model_cfg,
                                          const TrainConfig& train_cfg) {
  std::vector<RenderedSample> rendered;
  rendered.reserve(triplets.size());
  for (const auto& t : triplets) {
    TripletSample s = t;
    if (train_cfg.strip_thoughts) s.thought_text.clear();
    try {
      rendered.push_back(
          render_chat(s, model_cfg.max_seq_len, train_cfg.ablations.no_thinking));
    } catch (const SequenceTooLongError&) {
      std::cerr << "excluding overlong sample '" << s.source_id << "'\n";
    }
  }
  if (rendered.empty()) throw ConfigError("render_corpus: no usable samples");
  return rendered;
}

MetricsRecord train_step(ThinkingTransformer& model,
                         const std::vector<const RenderedSample*>& batch,
                         const TrainConfig& cfg, AdamW& optimizer, long step) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  const auto wall_start = std::chrono::steady_clock::now();

  for_each_param(model, [](const std::string&, int, Tensor& t) { t.zero_grad(); });

  const float inv_batch = 1.0f / static_cast<float>(batch.size());
  double sum_think = 0.0, sum_speak = 0.0;
  for (const RenderedSample* sample : batch) {
    SupervisionMasks masks = build_masks(*sample, cfg.ablations, cfg.mask_options);
    ForwardResultT<float> fr = forward(model, sample->token_ids);
    DualLossT<float> loss = dual_layer_loss(fr, *sample, masks, cfg.f_T, cfg.ablations);
    if (!std::isfinite(loss.breakdown.loss_total)) {
      throw DivergenceError("non-finite loss at step " + std::to_string(step) + " (sample '" +
                                sample->source_id + "')",
                            step);
    }
    backward(loss.total, inv_batch);
    sum_think += loss.breakdown.loss_think;
    sum_speak += loss.breakdown.loss_speak;
  }

  const double lr = lr_at(step, cfg.total_steps, cfg.peak_lr, cfg.warmup_steps);
  optimizer.step(model, lr, cfg.weight_decay, cfg.grad_clip_norm);
  for_each_param(model, [](const std::string&, int, Tensor& t) { t.zero_grad(); });

  MetricsRecord rec;
  rec.step = step;
  rec.loss_think = sum_think / static_cast<double>(batch.size());
  rec.loss_speak = sum_speak / static_cast<double>(batch.size());
  const double f_T = cfg.ablations.no_thinking ? 0.0 : cfg.f_T;
  rec.loss_total = f_T * rec.loss_think + rec.loss_speak;
  rec.lr = lr;
  rec.thought_ppl = std::exp(rec.loss_think);
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          wall_start)
                    .count();
  return rec;
}

void train(ThinkingTransformer& model, const std::vector<RenderedSample>& corpus,
           const TrainConfig& cfg, const MetricsSink& sink, const CheckpointHook& checkpoint_hook,
           AdamW* optimizer, long start_step) {
  cfg.validate();
  if (corpus.size() < static_cast<std::size_t>(cfg.batch_size)) {
    throw ConfigError("train: corpus of " + std::to_string(corpus.size()) +
                      " samples cannot fill a batch of " + std::to_string(cfg.batch_size));
  }
  AdamW local_optimizer;
  AdamW& opt = optimizer ? *optimizer : local_optimizer;

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle before the first batch

  for (long step = 0; step < cfg.total_steps; ++step) {
    if (cursor + static_cast<std::size_t>(cfg.batch_size) > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    if (step < start_step) {  // replay the batch stream when resuming
      cursor += static_cast<std::size_t>(cfg.batch_size);
      continue;
    }
    std::vector<const RenderedSample*> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i) {
      batch.push_back(&corpus[order[cursor + static_cast<std::size_t>(i)]]);
    }
    cursor += static_cast<std::size_t>(cfg.batch_size);

    MetricsRecord rec = train_step(model, batch, cfg, opt, step);
    if (sink) sink(rec);
    if (checkpoint_hook && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      checkpoint_hook(step + 1, model, opt);
    }
  }
  if (checkpoint_hook &&
      (cfg.checkpoint_every == 0 || cfg.total_steps % cfg.checkpoint_every != 0)) {
    checkpoint_hook(cfg.total_steps, model, opt);
  }
}

SweepReport sweep(SweepAxis axis, const std::vector<double>& values,
                  const ModelConfig& base_model, const TrainConfig& base_train,
                  const std::vector<TripletSample>& corpus,
                  const std::vector<TripletSample>& eval_set,
                  const GenerationParams& eval_params, int jobs) {
  if (values.size() < 2) throw ConfigError("sweep: need at least 2 axis values");
  if (axis == SweepAxis::thinking_layer) {
    for (double v : values) {
      const int k = static_cast<int>(v);
      if (static_cast<double>(k) != v || k <= 0 || k >= base_model.n_layers) {
        throw ConfigError("sweep: thinking layer value " + std::to_string(v) +
                          " violates 0 < k < K");
      }
    }
  }
  SweepReport report;
  report.axis = axis;
  report.rows.resize(values.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= values.size()) return;
      const double value = values[idx];
      ModelConfig mc = base_model;
      TrainConfig tc = base_train;
      if (axis == SweepAxis::f_T) {
        tc.f_T = value;
      } else {
        mc.thinking_layer = static_cast<int>(value);
      }
      mc.init_seed = base_model.init_seed + idx + 1;
      tc.seed = base_train.seed + idx + 1;

      SweepRow row;
      row.axis_value = value;
      try {
        ThinkingTransformer model = init_model(
            mc, tc.ablations.random_init_head ? HeadInit::random : HeadInit::copy);
        auto rendered = render_corpus(corpus, mc, tc);
        std::vector<MetricsRecord> metrics;
        metrics.reserve(static_cast<std::size_t>(tc.total_steps));
        train(model, rendered, tc, [&](const MetricsRecord& r) { metrics.push_back(r); });

        const std::size_t window =
            std::max<std::size_t>(1, (metrics.size() + 9) / 10);  // final 10% of steps
        double st = 0, sk = 0, ss = 0;
        for (std::size_t i = metrics.size() - window; i < metrics.size(); ++i) {
          st += metrics[i].loss_total;
          sk += metrics[i].loss_think;
          ss += metrics[i].loss_speak;
        }
        row.stable_loss_total = st / static_cast<double>(window);
        row.stable_loss_think = sk / static_cast<double>(window);
        row.stable_loss_speak = ss / static_cast<double>(window);

        EvalReport ev = exact_match(model, eval_set, eval_params, false, false);
        row.eval_exact_match = ev.answer_exact_match;
        std::vector<RenderedSample> eval_rendered;
        for (const auto& s : eval_set) {
          eval_rendered.push_back(render_chat(s, mc.max_seq_len));
        }
        row.thought_ppl = thought_ppl(model, eval_rendered);
      } catch (const DivergenceError&) {
        row.diverged = true;
      }
      report.rows[idx] = row;
    }
  };

  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(values.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return report;
}

void write_sweep_csv(const SweepReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open sweep report " + path.string() + " for writing");
  out << "axis_value,stable_loss_total,stable_loss_think,stable_loss_speak,"
         "eval_exact_match,thought_ppl,diverged\n";
  out.precision(17);
  for (const auto& r : report.rows) {
    out << r.axis_value << "," << r.stable_loss_total << "," << r.stable_loss_think << ","
        << r.stable_loss_speak << "," << r.eval_exact_match << "," << r.thought_ppl << ","
        << (r.diverged ? 1 : 0) << "\n";
  }
  if (!out) throw Error("failed writing sweep report " + path.string());
}

}  // namespace methanol

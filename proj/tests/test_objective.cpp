#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "methanol/generators.hpp"
#include "methanol/objective.hpp"
#include "numeric_refs.hpp"

using namespace methanol;

namespace {

RenderedSample sample_tla(int n_thought, int n_answer) {
  TripletSample s;
  s.query_text = "q";
  s.thought_text = std::string(static_cast<std::size_t>(n_thought), 't');
  s.answer_text = std::string(static_cast<std::size_t>(n_answer), 'a');
  return render_chat(s, 0, /*allow_empty_thought=*/true);
}

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = Vocabulary::instance().size();
  c.d_model = 32;
  c.n_heads = 2;
  c.n_layers = 3;
  c.thinking_layer = 2;
  c.max_seq_len = 64;
  c.ffn_hidden = 32;
  return c;
}

bool same_bits(float a, float b) { return std::memcmp(&a, &b, sizeof(float)) == 0; }

}  // namespace

TEST_CASE("build_masks: default counts cover tokens plus stop delimiters") {
  RenderedSample r = sample_tla(3, 2);
  SupervisionMasks m = build_masks(r, {});
  CHECK(m.think_count() == 4);   // 3 thought tokens + the <|ans|> stop
  CHECK(m.answer_count() == 3);  // 2 answer tokens + <|eot|>
  // disjoint under default flags
  for (std::size_t i = 0; i < m.think_targets.size(); ++i) {
    CHECK((m.think_targets[i] & m.answer_targets[i]) == 0);
  }
  // nothing is supervised at the final position
  CHECK(m.think_targets.back() == 0);
  CHECK(m.answer_targets.back() == 0);

  MaskOptions strict;
  strict.supervise_stop_delimiters = false;
  SupervisionMasks ms = build_masks(r, {}, strict);
  CHECK(ms.think_count() == 3);
  CHECK(ms.answer_count() == 2);
}

TEST_CASE("build_masks: ablations widen exactly one side") {
  RenderedSample r = sample_tla(3, 2);
  AblationFlags no_thought_mask;
  no_thought_mask.no_thought_mask = true;
  SupervisionMasks m1 = build_masks(r, no_thought_mask);
  CHECK(m1.answer_count() == 3 + 3);  // answer side additionally covers thought tokens
  CHECK(m1.think_count() == 4);

  AblationFlags no_answer_mask;
  no_answer_mask.no_answer_mask = true;
  SupervisionMasks m2 = build_masks(r, no_answer_mask);
  CHECK(m2.think_count() == 4 + 2);
  CHECK(m2.answer_count() == 3);

  AblationFlags no_thinking;
  no_thinking.no_thinking = true;
  SupervisionMasks m3 = build_masks(r, no_thinking);
  CHECK(m3.think_count() == 0);
  // thought tokens, <|ans|>, answer tokens, <|eot|> all supervised at layer K
  CHECK(m3.answer_count() == 3 + 1 + 2 + 1);

  RenderedSample empty_thought = sample_tla(0, 2);
  CHECK_THROWS_AS(build_masks(empty_thought, {}), EmptySupervisionError);
  CHECK_NOTHROW(build_masks(empty_thought, no_thinking));
}

TEST_CASE("thinking_loss: untrained model sits near the uniform floor") {
  ModelConfig cfg = small_config();
  ThinkingTransformer m = init_model(cfg, HeadInit::copy);
  auto samples = gen_arith(3, 4);
  NoGradGuard no_grad;
  for (const auto& s : samples) {
    RenderedSample r = render_chat(s, cfg.max_seq_len);
    SupervisionMasks masks = build_masks(r, {});
    ForwardResult fr = forward(m, r.token_ids);
    const double loss = thinking_loss(fr.logits_k, r, masks).item();
    CHECK(std::abs(loss - std::log(static_cast<double>(cfg.vocab_size))) < 1.0);
  }
}

TEST_CASE("thinking_loss: bitwise blind to answer-position logits") {
  std::mt19937_64 rng(3);
  RenderedSample r = sample_tla(4, 3);
  const int t_len = static_cast<int>(r.token_ids.size());
  const int v = Vocabulary::instance().size();
  std::uniform_real_distribution<float> dist(-3.0f, 3.0f);
  std::vector<float> vals(static_cast<std::size_t>(t_len) * v);
  for (auto& x : vals) x = dist(rng);
  Tensor logits = Tensor::from({t_len, v}, vals);
  SupervisionMasks masks = build_masks(r, {});
  const float base = thinking_loss(logits, r, masks).item();

  Tensor perturbed = Tensor::from(logits.shape, logits.values());
  for (int i = 0; i < t_len; ++i) {
    if (r.segments[static_cast<std::size_t>(i)] != SegmentLabel::Answer) continue;
    for (int j = 0; j < v; ++j) perturbed.values()[std::size_t(i) * v + j] += 7.5f;
  }
  const float after = thinking_loss(perturbed, r, masks).item();
  CHECK(same_bits(base, after));
}

TEST_CASE("losses match a double-precision hand computation") {
  // two-token thought, one-token answer, tiny vocabulary-sized logits
  RenderedSample r = sample_tla(2, 1);
  const int t_len = static_cast<int>(r.token_ids.size());
  const int v = Vocabulary::instance().size();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
  std::vector<float> vals(static_cast<std::size_t>(t_len) * v);
  for (auto& x : vals) x = dist(rng);
  Tensor logits = Tensor::from({t_len, v}, vals);
  SupervisionMasks masks = build_masks(r, {});
  auto targets = next_token_targets(r);

  refs::Mat lm(static_cast<std::size_t>(t_len), std::vector<double>(static_cast<std::size_t>(v)));
  for (int i = 0; i < t_len; ++i)
    for (int j = 0; j < v; ++j) lm[i][j] = vals[std::size_t(i) * v + j];

  const double want_think = refs::ref_masked_ce(lm, targets, masks.think_targets);
  const double got_think = thinking_loss(logits, r, masks).item();
  CHECK(std::abs(got_think - want_think) <= 1e-6 * std::max(1.0, std::abs(want_think)));

  const double want_speak = refs::ref_masked_ce(lm, targets, masks.answer_targets);
  const double got_speak = speaking_loss(logits, r, masks).item();
  CHECK(std::abs(got_speak - want_speak) <= 1e-6 * std::max(1.0, std::abs(want_speak)));
}

TEST_CASE("speaking_loss: thought labels are masked but thought inputs condition it") {
  ModelConfig cfg = small_config();
  cfg.init_seed = 5;
  ThinkingTransformer m = init_model(cfg, HeadInit::copy);
  TripletSample s;
  s.query_text = "2 + 3 =";
  s.thought_text = "2 + 3 = 5.";
  s.answer_text = "5";
  RenderedSample r = render_chat(s, cfg.max_seq_len);
  SupervisionMasks masks = build_masks(r, {});
  NoGradGuard no_grad;
  ForwardResult fr = forward(m, r.token_ids);
  const float base = speaking_loss(fr.logits_K, r, masks).item();

  // Changing thought target labels (not inputs) leaves the loss bitwise alone.
  RenderedSample relabeled = r;
  for (std::size_t i = 0; i < relabeled.token_ids.size(); ++i) {
    if (relabeled.segments[i] == SegmentLabel::Thought) {
      relabeled.token_ids[i] = Vocabulary::instance().tokenize("z")[0];
    }
  }
  // same logits, different labels -> targets at masked-out rows change
  const float relabeled_loss = speaking_loss(fr.logits_K, relabeled, masks).item();
  CHECK(same_bits(base, relabeled_loss));

  // Changing thought input tokens changes the conditioning for real.
  TripletSample s2 = s;
  s2.thought_text = "9 - 1 = 8.";
  RenderedSample r2 = render_chat(s2, cfg.max_seq_len);
  ForwardResult fr2 = forward(m, r2.token_ids);
  const float conditioned = speaking_loss(fr2.logits_K, r2, masks).item();
  CHECK(base != conditioned);
}

TEST_CASE("total_loss: arithmetic, degenerate weight, linearity, validation") {
  Tensor think = Tensor::scalar(0.5f);
  Tensor speak = Tensor::scalar(0.25f);
  CHECK(total_loss(think, speak, 4.0).item() == doctest::Approx(2.25));
  CHECK(total_loss(think, speak, 0.0).item() == doctest::Approx(0.25));
  CHECK_THROWS_AS(total_loss(think, speak, -1.0), ConfigError);

  // linearity in f_T: total(a) + total(b) == total(a+b) + speak
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> dist(0.0, 8.0);
  for (int i = 0; i < 50; ++i) {
    const double a = dist(rng), b = dist(rng);
    const double lt = dist(rng), ls = dist(rng);
    Tensor t = Tensor::scalar(static_cast<float>(lt));
    Tensor sp = Tensor::scalar(static_cast<float>(ls));
    const double lhs = static_cast<double>(total_loss(t, sp, a).item()) +
                       static_cast<double>(total_loss(t, sp, b).item());
    const double rhs = static_cast<double>(total_loss(t, sp, a + b).item()) +
                       static_cast<double>(sp.item());
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
  }
}

TEST_CASE("dual_layer_loss: breakdown identity and ablation routing") {
  ModelConfig cfg = small_config();
  cfg.init_seed = 21;
  ThinkingTransformer m = init_model(cfg, HeadInit::copy);
  auto triplets = gen_arith(17, 3);
  for (const auto& s : triplets) {
    RenderedSample r = render_chat(s, cfg.max_seq_len);
    for (double f_T : {0.0, 1.0, 4.0}) {
      for_each_param(m, [](const std::string&, int, Tensor& t) { t.zero_grad(); });
      SupervisionMasks masks = build_masks(r, {});
      ForwardResult fr = forward(m, r.token_ids);
      DualLossT<float> loss = dual_layer_loss(fr, r, masks, f_T, {});
      const double identity =
          f_T * loss.breakdown.loss_think + loss.breakdown.loss_speak;
      CHECK(std::abs(loss.breakdown.loss_total - identity) <= 1e-12);
      backward(loss.total);
      // think head gradient appears exactly when the think term is live
      bool think_grad = false;
      for (float g : m.think_head.grads()) think_grad = think_grad || g != 0.0f;
      CHECK(think_grad == (f_T > 0.0));
    }
  }
}

TEST_CASE("gradient isolation: think loss stops at layer k, speak loss skips the think head") {
  ModelConfig cfg = small_config();
  cfg.init_seed = 33;
  ThinkingTransformer m = init_model(cfg, HeadInit::copy);
  TripletSample s = gen_arith(29, 1)[0];
  RenderedSample r = render_chat(s, cfg.max_seq_len);
  SupervisionMasks masks = build_masks(r, {});

  for_each_param(m, [](const std::string&, int, Tensor& t) { t.zero_grad(); });
  {
    ForwardResult fr = forward(m, r.token_ids);
    AblationFlags think_only;
    think_only.think_only = true;
    DualLossT<float> loss = dual_layer_loss(fr, r, masks, 4.0, think_only);
    backward(loss.total);
  }
  for_each_param(m, [&](const std::string& name, int layer, const Tensor& t) {
    const bool above = layer > cfg.thinking_layer || name == "final_norm" || name == "final_head";
    if (!above || name == "think_norm" || name == "think_head") return;
    for (float g : t.grads()) CHECK(g == 0.0f);
  });

  for_each_param(m, [](const std::string&, int, Tensor& t) { t.zero_grad(); });
  {
    ForwardResult fr = forward(m, r.token_ids);
    DualLossT<float> loss = dual_layer_loss(fr, r, masks, 0.0, {});
    backward(loss.total);
  }
  for (float g : m.think_head.grads()) CHECK(g == 0.0f);
  for (float g : m.think_norm.grads()) CHECK(g == 0.0f);
}

TEST_CASE("answer blindness: perturbing answer input tokens keeps loss_think bitwise") {
  ModelConfig cfg = small_config();
  cfg.init_seed = 55;
  ThinkingTransformer m = init_model(cfg, HeadInit::copy);
  TripletSample s;
  s.query_text = "7 * 2 - 1 =";
  s.thought_text = "7 * 2 = 14. 14 - 1 = 13.";
  s.answer_text = "13";
  RenderedSample r = render_chat(s, cfg.max_seq_len);
  SupervisionMasks masks = build_masks(r, {});
  NoGradGuard no_grad;

  ForwardResult fr = forward(m, r.token_ids);
  const float base = thinking_loss(fr.logits_k, r, masks).item();

  TripletSample s2 = s;
  s2.answer_text = "99";
  RenderedSample r2 = render_chat(s2, cfg.max_seq_len);
  REQUIRE(r2.token_ids.size() == r.token_ids.size());
  ForwardResult fr2 = forward(m, r2.token_ids);
  const float after = thinking_loss(fr2.logits_k, r2, masks).item();
  CHECK(same_bits(base, after));
}

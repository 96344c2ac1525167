#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "methanol/eval.hpp"
#include "methanol/generators.hpp"
#include "methanol/objective.hpp"
#include "methanol/trainer.hpp"

using namespace methanol;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 0) {
  ModelConfig c;
  c.vocab_size = Vocabulary::instance().size();
  c.d_model = 48;
  c.n_heads = 4;
  c.n_layers = 2;
  c.thinking_layer = 1;
  c.max_seq_len = 64;
  c.ffn_hidden = 48;
  c.init_seed = seed;
  return c;
}

}  // namespace

TEST_CASE("thought_ppl is exp of the mean thinking loss") {
  ModelConfig cfg = tiny_config(1);
  ThinkingTransformer m = init_model(cfg, HeadInit::copy);
  auto triplets = gen_arith(81, 6);
  std::vector<RenderedSample> rendered;
  for (const auto& t : triplets) rendered.push_back(render_chat(t, cfg.max_seq_len));

  double mean = 0.0;
  {
    NoGradGuard no_grad;
    for (const auto& r : rendered) {
      SupervisionMasks masks = build_masks(r, {});
      mean += thinking_loss(forward(m, r.token_ids).logits_k, r, masks).item();
    }
    mean /= static_cast<double>(rendered.size());
  }
  const double ppl = thought_ppl(m, rendered);
  CHECK(std::abs(ppl - std::exp(mean)) <= 1e-6 * std::exp(mean));

  // untrained copy-init model sits near the uniform perplexity
  const double v = static_cast<double>(cfg.vocab_size);
  CHECK(ppl > v / 2.0);
  CHECK(ppl < v * 2.0);

  CHECK_THROWS_AS(thought_ppl(m, {}), ConfigError);
}

TEST_CASE("a memorized corpus reaches exact match 1.0 and ppl near 1") {
  ModelConfig cfg = tiny_config(2);
  TrainConfig tc;
  tc.batch_size = 10;
  tc.total_steps = 900;
  tc.peak_lr = 2e-3;
  tc.seed = 7;
  auto triplets = gen_arith(83, 10);
  ThinkingTransformer m = init_model(cfg, HeadInit::copy);
  auto rendered = render_corpus(triplets, cfg, tc);
  train(m, rendered, tc, {});

  GenerationParams gp;
  gp.max_thought_tokens = 30;
  gp.max_answer_tokens = 6;
  EvalReport report = exact_match(m, triplets, gp, /*with_transcripts=*/true);
  CHECK(report.answer_exact_match == 1.0);
  CHECK(report.thought_exact_match == 1.0);
  CHECK(report.thought_ppl < 1.1);
  CHECK(report.generation_errors == 0);
  CHECK(report.transcripts.size() == 10);

  // determinism under greedy decoding
  EvalReport again = exact_match(m, triplets, gp);
  CHECK(again.answer_exact_match == report.answer_exact_match);
  CHECK(again.thought_exact_match == report.thought_exact_match);

  const std::string j = eval_report_json(report);
  CHECK(j.find("\"answer_exact_match\": 1.0") != std::string::npos);
}

TEST_CASE("an untrained model scores near zero on held-out data") {
  ModelConfig cfg = tiny_config(3);
  ThinkingTransformer m = init_model(cfg, HeadInit::copy);
  GenerationParams gp;
  gp.max_thought_tokens = 30;
  gp.max_answer_tokens = 6;
  EvalReport report = exact_match(m, gen_arith(85, 40), gp, false, false);
  CHECK(report.answer_exact_match < 0.2);
}

TEST_CASE("exact_match preconditions") {
  ModelConfig cfg = tiny_config(4);
  ThinkingTransformer m = init_model(cfg, HeadInit::copy);
  GenerationParams gp;
  CHECK_THROWS_AS(exact_match(m, {}, gp), ConfigError);
  gp.sample = true;
  gp.sampling.temperature = 1.0;
  CHECK_THROWS_AS(exact_match(m, gen_arith(87, 2), gp), ConfigError);
}

TEST_CASE("export_series: header, rows, round trip") {
  std::vector<MetricsRecord> records;
  for (int i = 0; i < 3; ++i) {
    MetricsRecord r;
    r.step = i;
    r.loss_total = 4.5 - i * 0.25;
    r.loss_think = 1.0 - i * 0.05;
    r.loss_speak = r.loss_total - 4.0 * r.loss_think;
    r.lr = 3e-4;
    r.thought_ppl = std::exp(r.loss_think);
    records.push_back(r);
  }
  const fs::path path = fs::temp_directory_path() / "methanol_series_test.csv";
  export_series(records, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,loss_total,loss_think,loss_speak,lr,thought_ppl");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) rows += !line.empty();
  CHECK(rows == 3);

  auto back = read_series_csv(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].step == records[i].step);
    CHECK(back[i].loss_total == records[i].loss_total);
    CHECK(back[i].loss_think == records[i].loss_think);
    CHECK(back[i].lr == records[i].lr);
  }
  fs::remove(path);
  CHECK_THROWS_AS(export_series({}, path), ConfigError);
}

TEST_CASE("metrics jsonl round trip") {
  std::vector<MetricsRecord> records(2);
  records[0].step = 0;
  records[0].loss_total = 5.0;
  records[1].step = 1;
  records[1].loss_total = 4.0;
  records[1].wall_ms = 12.5;
  const fs::path path = fs::temp_directory_path() / "methanol_metrics_test.jsonl";
  write_metrics_jsonl(path, records);
  auto back = read_metrics_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].loss_total == 5.0);
  CHECK(back[1].wall_ms == 12.5);
  fs::remove(path);
}

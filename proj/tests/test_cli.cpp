#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "methanol/checkpoint.hpp"
#include "methanol/cli.hpp"
#include "methanol/model.hpp"

using namespace methanol;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"methanol"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_run(static_cast<int>(argv.size()), argv.data());
}

// capture std::cout during a CLI call
struct CoutCapture {
  std::ostringstream buffer;
  std::streambuf* old;
  CoutCapture() : old(std::cout.rdbuf(buffer.rdbuf())) {}
  ~CoutCapture() { std::cout.rdbuf(old); }
  std::string text() const { return buffer.str(); }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const fs::path kWork = fs::temp_directory_path() / "methanol_cli_test";

std::string tiny_config_toml() {
  return R"([model]
vocab_size = 102
d_model = 32
n_heads = 2
n_layers = 4
thinking_layer = 3
max_seq_len = 64
ffn_hidden = 32
init_seed = 3

[train]
f_T = 4.0
peak_lr = 0.002
batch_size = 4
total_steps = 12
seed = 9

[generate]
max_thought_tokens = 28
max_answer_tokens = 6

[data]
)";
}

}  // namespace

TEST_CASE("cli: usage errors exit with code 2") {
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"unknown-command"}) == 2);
  CHECK(run_cli({"dataprep"}) == 2);                    // missing kind and --out
  CHECK(run_cli({"train", "--out", "x"}) == 2);         // missing --config
  CHECK(run_cli({"sweep", "--axis", "f_T"}) == 2);      // missing the rest
  CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("cli: dataprep determinism and template corpus") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);

  const auto a = (kWork / "a.jsonl").string();
  const auto b = (kWork / "b.jsonl").string();
  CHECK(run_cli({"dataprep", "arith", "--out", a, "--seed", "7", "--n", "200"}) == 0);
  CHECK(run_cli({"dataprep", "arith", "--out", b, "--seed", "7", "--n", "200"}) == 0);
  CHECK(read_file(a) == read_file(b));

  const fs::path golden = fs::path(__FILE__).parent_path() / "golden";
  const auto tom_out = (kWork / "tom.jsonl").string();
  CHECK(run_cli({"dataprep", "tom", "--input", (golden / "tom_records.jsonl").string(), "--out",
                 tom_out}) == 0);
  CHECK(read_file(tom_out) == read_file(golden / "tom_expected.jsonl"));

  CHECK(run_cli({"dataprep", "cot", "--out", (kWork / "cot.jsonl").string()}) == 2);
}

TEST_CASE("cli: bootstrap without a provider token exits 3") {
  fs::create_directories(kWork);
  const auto dialogues = kWork / "dialogues.jsonl";
  std::ofstream(dialogues) << R"({"id":"d1","turns":[{"speaker":"A","text":"hi"}]})" << "\n";
  unsetenv("METHANOL_PROVIDER_TOKEN");
  CHECK(run_cli({"dataprep", "bootstrap", "--input", dialogues.string(), "--endpoint",
                 "http://127.0.0.1:1/complete", "--out", (kWork / "boot.jsonl").string()}) == 3);
}

TEST_CASE("cli: train, generate, eval, inspect round trip") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const auto config_path = kWork / "run.toml";
  std::ofstream(config_path) << tiny_config_toml();

  const auto corpus = (kWork / "corpus.jsonl").string();
  REQUIRE(run_cli({"dataprep", "arith", "--out", corpus, "--seed", "5", "--n", "32"}) == 0);

  const auto run_dir = kWork / "run";
  REQUIRE(run_cli({"train", "--config", config_path.string(), "--out", run_dir.string(),
                   "--corpus", corpus}) == 0);
  CHECK(fs::exists(run_dir / "metrics.jsonl"));
  CHECK(fs::exists(run_dir / "final" / "manifest.json"));
  CHECK(fs::exists(run_dir / "config.toml"));
  CHECK(read_file(run_dir / "config.toml") == tiny_config_toml());
  const auto manifest = nlohmann::json::parse(read_file(run_dir / "run_manifest.json"));
  CHECK(manifest.at("seed").get<std::uint64_t>() == 9);
  CHECK(manifest.at("version").get<std::string>() == "0.1.0");

  {
    CoutCapture capture;
    CHECK(run_cli({"generate", "--checkpoint", (run_dir / "final").string(), "--query",
                   "3 + 4 * 2 =", "--max-thought-tokens", "28", "--max-answer-tokens",
                   "6"}) == 0);
    auto j = nlohmann::json::parse(capture.text());
    CHECK(j.contains("thought"));
    CHECK(j.contains("answer"));
    CHECK(j.at("query") == "3 + 4 * 2 =");
  }
  {
    CoutCapture capture;
    CHECK(run_cli({"generate", "--checkpoint", (run_dir / "final").string(), "--query", "q",
                   "--max-thought-tokens", "0", "--human", "--show-thought"}) == 0);
    CHECK(capture.text().find("Thought: \n") != std::string::npos);
  }

  const auto eval_corpus = (kWork / "eval.jsonl").string();
  REQUIRE(run_cli({"dataprep", "arith", "--out", eval_corpus, "--seed", "6", "--n", "4"}) == 0);
  {
    CoutCapture capture;
    CHECK(run_cli({"eval", "--checkpoint", (run_dir / "final").string(), "--corpus",
                   eval_corpus, "--max-thought-tokens", "28", "--max-answer-tokens",
                   "6"}) == 0);
    auto j = nlohmann::json::parse(capture.text());
    CHECK(j.at("n_samples") == 4);
    CHECK(j.contains("answer_exact_match"));
  }

  {
    CoutCapture capture;
    CHECK(run_cli({"inspect", (run_dir / "final").string(), (run_dir / "final").string()}) == 0);
    std::istringstream lines(capture.text());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "layer_index,name,l2_delta,max_abs_delta");
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      ++rows;
      CHECK(line.find(",0,0") != std::string::npos);  // all-zero deltas vs itself
    }
    CHECK(rows > 0);
  }

  // invalid thinking layer in the config exits 2 and names the constraint
  CHECK(run_cli({"train", "--config", config_path.string(), "--out",
                 (kWork / "bad").string(), "--corpus", corpus, "--k", "4"}) == 2);

  // corrupt checkpoint exits 5
  {
    fs::path broken = kWork / "broken";
    fs::create_directories(broken);
    std::ofstream(broken / "manifest.json") << "{not json";
    std::ofstream(broken / "params.bin") << "x";
    CHECK(run_cli({"generate", "--checkpoint", broken.string(), "--query", "q"}) == 5);
  }
}

TEST_CASE("cli: resume continues an interrupted run") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const auto config_path = kWork / "run.toml";
  std::ofstream(config_path) << tiny_config_toml();
  const auto corpus = (kWork / "corpus.jsonl").string();
  REQUIRE(run_cli({"dataprep", "arith", "--out", corpus, "--seed", "5", "--n", "32"}) == 0);

  // one uninterrupted run, checkpointing halfway through
  const auto full_dir = kWork / "full";
  REQUIRE(run_cli({"train", "--config", config_path.string(), "--out", full_dir.string(),
                   "--corpus", corpus, "--checkpoint-every", "6"}) == 0);

  // a second run directory that looks interrupted at step 6
  const auto part_dir = kWork / "part";
  fs::create_directories(part_dir / "checkpoints");
  fs::copy(full_dir / "checkpoints" / "step_6", part_dir / "checkpoints" / "step_6",
           fs::copy_options::recursive);
  {
    nlohmann::json state{{"completed_steps", 6},
                         {"last_checkpoint", "checkpoints/step_6"}};
    std::ofstream(part_dir / "run_state.json") << state.dump(2) << "\n";
  }
  REQUIRE(run_cli({"train", "--config", config_path.string(), "--out", part_dir.string(),
                   "--corpus", corpus, "--resume"}) == 0);

  ThinkingTransformer full = load_checkpoint(full_dir / "final");
  ThinkingTransformer resumed = load_checkpoint(part_dir / "final");
  std::vector<const Tensor*> pa, pb;
  for_each_param(full, [&](const std::string&, int, const Tensor& t) { pa.push_back(&t); });
  for_each_param(resumed, [&](const std::string&, int, const Tensor& t) { pb.push_back(&t); });
  bool all_equal = true;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && pa[i]->values() == pb[i]->values();
  }
  CHECK(all_equal);
}

TEST_CASE("cli: sweep emits an ordered csv") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const auto config_path = kWork / "run.toml";
  std::ofstream(config_path) << tiny_config_toml();
  const auto corpus = (kWork / "corpus.jsonl").string();
  const auto eval_corpus = (kWork / "eval.jsonl").string();
  REQUIRE(run_cli({"dataprep", "arith", "--out", corpus, "--seed", "5", "--n", "24"}) == 0);
  REQUIRE(run_cli({"dataprep", "arith", "--out", eval_corpus, "--seed", "6", "--n", "4"}) == 0);

  const auto sweep_dir = kWork / "sweep";
  CoutCapture capture;
  REQUIRE(run_cli({"sweep", "--axis", "k", "--values", "1,2,3", "--config", config_path.string(),
                   "--out", sweep_dir.string(), "--corpus", corpus, "--eval-corpus",
                   eval_corpus}) == 0);
  std::istringstream lines(read_file(sweep_dir / "report.csv"));
  std::string header;
  std::getline(lines, header);
  std::vector<double> axis;
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) axis.push_back(std::stod(line.substr(0, line.find(','))));
  }
  CHECK(axis == std::vector<double>{1.0, 2.0, 3.0});

  CHECK(run_cli({"sweep", "--axis", "k", "--values", "5", "--config", config_path.string(),
                 "--out", (kWork / "bad").string(), "--corpus", corpus, "--eval-corpus",
                 eval_corpus}) == 2);
}

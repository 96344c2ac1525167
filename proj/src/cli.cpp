#include "methanol/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "methanol/checkpoint.hpp"
#include "methanol/eval.hpp"
#include "methanol/generators.hpp"
#include "methanol/provider.hpp"
#include "methanol/run_config.hpp"
#include "methanol/version.hpp"

namespace methanol {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitProvider = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitCheckpoint = 5;

json model_config_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size},     {"d_model", c.d_model},
              {"n_heads", c.n_heads},           {"n_layers", c.n_layers},
              {"thinking_layer", c.thinking_layer}, {"max_seq_len", c.max_seq_len},
              {"ffn_hidden", c.ffn_hidden},     {"norm_eps", c.norm_eps},
              {"init_seed", c.init_seed}};
}

json train_config_json(const TrainConfig& c) {
  json ablations = json::array();
  if (c.ablations.no_thinking) ablations.push_back("no_thinking");
  if (c.ablations.no_thought_mask) ablations.push_back("no_thought_mask");
  if (c.ablations.no_answer_mask) ablations.push_back("no_answer_mask");
  if (c.ablations.random_init_head) ablations.push_back("random_init_head");
  if (c.ablations.think_only) ablations.push_back("think_only");
  json j{{"f_T", c.f_T},
         {"peak_lr", c.peak_lr},
         {"weight_decay", c.weight_decay},
         {"batch_size", c.batch_size},
         {"total_steps", c.total_steps},
         {"seed", c.seed},
         {"warmup_steps", c.warmup_steps},
         {"checkpoint_every", c.checkpoint_every},
         {"strip_thoughts", c.strip_thoughts},
         {"supervise_stop_delimiters", c.mask_options.supervise_stop_delimiters},
         {"ablations", ablations}};
  if (c.grad_clip_norm) j["grad_clip_norm"] = *c.grad_clip_norm;
  return j;
}

json generate_config_json(const GenerationParams& p) {
  return json{{"max_thought_tokens", p.max_thought_tokens},
              {"max_answer_tokens", p.max_answer_tokens},
              {"mode", p.sample ? "sample" : "greedy"},
              {"temperature", p.sampling.temperature},
              {"top_k", p.sampling.top_k},
              {"seed", p.sampling.seed}};
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string join_args(int argc, const char* const* argv) {
  std::string joined;
  for (int i = 0; i < argc; ++i) {
    if (i) joined += " ";
    joined += argv[i];
  }
  return joined;
}

void write_run_manifest(const fs::path& dir, const std::string& command,
                        const RunConfig& cfg) {
  json manifest{{"version", kVersion},
                {"command", command},
                {"seed", cfg.train.seed},
                {"model", model_config_json(cfg.model)},
                {"train", train_config_json(cfg.train)},
                {"generate", generate_config_json(cfg.generate)},
                {"corpus", cfg.corpus_path},
                {"eval_corpus", cfg.eval_corpus_path},
                {"head_reinit", cfg.head_reinit}};
  write_text_file(dir / "run_manifest.json", manifest.dump(2) + "\n");
}

AblationFlags ablations_from_names(const std::vector<std::string>& names) {
  AblationFlags flags;
  for (const auto& name : names) {
    if (name == "no_thinking") flags.no_thinking = true;
    else if (name == "no_thought_mask") flags.no_thought_mask = true;
    else if (name == "no_answer_mask") flags.no_answer_mask = true;
    else if (name == "random_init_head") flags.random_init_head = true;
    else if (name == "think_only") flags.think_only = true;
    else throw ConfigError("unknown ablation '" + name + "'");
  }
  return flags;
}

// ---------------------------------------------------------------- dataprep

struct DataprepArgs {
  std::string kind;
  std::string out;
  std::string input;
  std::string endpoint;
  std::uint64_t seed = 0;
  int n = 1000;
  long timeout_ms = 30000;
};

void write_corpus_manifest(const DataprepArgs& args, std::size_t count) {
  json manifest{{"kind", args.kind},
                {"seed", args.seed},
                {"requested", args.n},
                {"count", count},
                {"generator_version", kVersion}};
  if (!args.input.empty()) manifest["input"] = args.input;
  write_text_file(fs::path(args.out).string() + ".manifest.json", manifest.dump(2) + "\n");
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ConfigError("input " + path.string() + " line " + std::to_string(lineno) +
                        " is not valid JSON: " + e.what());
    }
  }
  return rows;
}

std::string field(const json& row, const char* key, std::size_t lineno) {
  if (!row.contains(key) || !row.at(key).is_string()) {
    throw ConfigError("input record " + std::to_string(lineno) + " is missing string field '" +
                      key + "'");
  }
  return row.at(key).get<std::string>();
}

int cmd_dataprep(const DataprepArgs& args) {
  std::vector<TripletSample> samples;
  if (args.kind == "arith") {
    samples = gen_arith(args.seed, args.n);
  } else if (args.kind == "egoview") {
    samples = gen_egoview(args.seed, args.n);
  } else if (args.kind == "cot" || args.kind == "tom" || args.kind == "esconv") {
    if (args.input.empty()) {
      throw ConfigError("dataprep " + args.kind + " requires --input records.jsonl");
    }
    const auto rows = read_jsonl(args.input);
    std::size_t lineno = 0;
    for (const auto& row : rows) {
      ++lineno;
      TripletSample s;
      if (args.kind == "cot") {
        s = extract_cot(field(row, "query", lineno), field(row, "rationale", lineno),
                        field(row, "answer", lineno));
      } else if (args.kind == "tom") {
        s = extract_tom(field(row, "story", lineno), field(row, "character", lineno),
                        field(row, "question", lineno), field(row, "answer", lineno),
                        field(row, "perspective", lineno));
      } else {
        s = extract_esconv(field(row, "query", lineno), field(row, "emotion", lineno),
                           field(row, "strategy", lineno), field(row, "answer", lineno));
      }
      s.source_id = row.value("source_id", args.kind + "-" + std::to_string(lineno));
      samples.push_back(std::move(s));
    }
  } else if (args.kind == "bootstrap") {
    if (args.input.empty()) throw ConfigError("dataprep bootstrap requires --input");
    if (args.endpoint.empty()) throw ConfigError("dataprep bootstrap requires --endpoint");
    const char* token = std::getenv("METHANOL_PROVIDER_TOKEN");
    if (!token || !*token) {
      throw ProviderError(
          "no provider token: export METHANOL_PROVIDER_TOKEN before running dataprep bootstrap",
          /*retryable=*/false);
    }
    HttpProvider provider(args.endpoint, token);
    const auto rows = read_jsonl(args.input);
    std::size_t lineno = 0;
    for (const auto& row : rows) {
      ++lineno;
      Dialogue d;
      d.id = row.value("id", "dialogue-" + std::to_string(lineno));
      if (!row.contains("turns") || !row.at("turns").is_array()) {
        throw ConfigError("input record " + std::to_string(lineno) + " has no 'turns' array");
      }
      for (const auto& turn : row.at("turns")) {
        d.turns.push_back({turn.value("speaker", "?"), turn.value("text", "")});
      }
      auto annotated =
          bootstrap_thoughts(d, provider, std::chrono::milliseconds(args.timeout_ms));
      samples.insert(samples.end(), annotated.begin(), annotated.end());
    }
  } else {
    throw ConfigError("unknown dataprep kind '" + args.kind + "'");
  }

  write_corpus(args.out, samples);
  write_corpus_manifest(args, samples.size());
  std::cout << "wrote " << samples.size() << " samples to " << args.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string config_path;
  std::string out;
  std::string corpus;
  std::string init_from;
  bool resume = false;
  std::optional<long> steps;
  std::optional<int> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> peak_lr;
  std::optional<double> f_T;
  std::optional<int> thinking_layer;
  std::optional<long> checkpoint_every;
  std::vector<std::string> ablations;
  bool strip_thoughts = false;
  std::string head_reinit;
};

void save_train_state(const fs::path& out_dir, long completed, const std::string& last_ckpt) {
  json state{{"completed_steps", completed}, {"last_checkpoint", last_ckpt}};
  write_text_file(out_dir / "run_state.json", state.dump(2) + "\n");
}

int cmd_train(const TrainArgs& args, const std::string& command) {
  RunConfig cfg = load_run_config(args.config_path);
  if (!args.corpus.empty()) cfg.corpus_path = args.corpus;
  if (args.steps) cfg.train.total_steps = *args.steps;
  if (args.batch_size) cfg.train.batch_size = *args.batch_size;
  if (args.seed) cfg.train.seed = *args.seed;
  if (args.peak_lr) cfg.train.peak_lr = *args.peak_lr;
  if (args.f_T) cfg.train.f_T = *args.f_T;
  if (args.thinking_layer) cfg.model.thinking_layer = *args.thinking_layer;
  if (args.checkpoint_every) cfg.train.checkpoint_every = *args.checkpoint_every;
  if (!args.ablations.empty()) cfg.train.ablations = ablations_from_names(args.ablations);
  if (args.strip_thoughts) cfg.train.strip_thoughts = true;
  if (!args.head_reinit.empty()) cfg.head_reinit = args.head_reinit;
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.corpus_path.empty()) {
    throw ConfigError("no corpus: set [data] corpus in the config or pass --corpus");
  }

  const fs::path out_dir(args.out);
  fs::create_directories(out_dir / "checkpoints");
  write_text_file(out_dir / "config.toml", read_text_file(args.config_path));
  write_run_manifest(out_dir, command, cfg);

  ThinkingTransformer model;
  AdamW optimizer;
  long start_step = 0;
  if (args.resume) {
    const fs::path state_path = out_dir / "run_state.json";
    if (!fs::exists(state_path)) {
      throw ConfigError("cannot resume: " + state_path.string() + " not found");
    }
    const json state = json::parse(read_text_file(state_path));
    start_step = state.at("completed_steps").get<long>();
    const fs::path ckpt = out_dir / state.at("last_checkpoint").get<std::string>();
    model = load_checkpoint(ckpt);
    optimizer.load(ckpt / "optim.bin", model);
    if (start_step >= cfg.train.total_steps) {
      std::cout << "run already complete at step " << start_step << "\n";
      return kExitOk;
    }
  } else {
    const HeadInit init_mode =
        cfg.train.ablations.random_init_head ? HeadInit::random : HeadInit::copy;
    if (!args.init_from.empty()) {
      model = load_checkpoint(args.init_from);
      std::string reinit = cfg.head_reinit;
      if (reinit == "none" && cfg.train.ablations.random_init_head) reinit = "random";
      if (reinit == "copy") reset_think_head(model, HeadInit::copy);
      if (reinit == "random") reset_think_head(model, HeadInit::random, cfg.train.seed);
    } else {
      model = init_model(cfg.model, init_mode);
      if (cfg.head_reinit == "random") reset_think_head(model, HeadInit::random, cfg.train.seed);
    }
  }

  const auto triplets = read_corpus(cfg.corpus_path);
  const auto rendered = render_corpus(triplets, model.config, cfg.train);
  std::cout << "training on " << rendered.size() << " samples for " << cfg.train.total_steps
            << " steps\n";

  std::ofstream metrics_out(out_dir / "metrics.jsonl",
                            args.resume ? std::ios::app : std::ios::trunc);
  if (!metrics_out) throw Error("cannot open metrics.jsonl for writing");
  const auto sink = [&](const MetricsRecord& r) {
    json j{{"step", r.step},          {"loss_total", r.loss_total},
           {"loss_think", r.loss_think}, {"loss_speak", r.loss_speak},
           {"lr", r.lr},              {"thought_ppl", r.thought_ppl},
           {"wall_ms", r.wall_ms}};
    metrics_out << j.dump() << "\n";
    metrics_out.flush();
  };
  const auto hook = [&](long step, ThinkingTransformer& m, AdamW& opt) {
    const std::string rel = "checkpoints/step_" + std::to_string(step);
    save_checkpoint(m, out_dir / rel);
    opt.save(out_dir / rel / "optim.bin");
    save_train_state(out_dir, step, rel);
  };

  train(model, rendered, cfg.train, sink, hook, &optimizer, start_step);

  save_checkpoint(model, out_dir / "final");
  optimizer.save(out_dir / "final" / "optim.bin");
  save_train_state(out_dir, cfg.train.total_steps, "final");
  std::cout << "final checkpoint at " << (out_dir / "final").string() << "\n";
  return kExitOk;
}

// -------------------------------------------------------- generate / eval

int cmd_generate(const std::string& checkpoint, const std::string& system_text,
                 const std::string& query, const GenerationParams& params, bool human,
                 bool show_thought) {
  ThinkingTransformer model = load_checkpoint(checkpoint);
  GenerationOutput out = generate(model, system_text, query, params);
  if (human) {
    std::cout << "Query: " << query << "\n";
    if (show_thought) std::cout << "Thought: " << out.thought_text << "\n";
    std::cout << "Answer: " << out.answer_text << "\n";
  } else {
    std::cout << transcript_json(out, system_text, query) << "\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus,
             const GenerationParams& params, bool with_transcripts, const std::string& out_path) {
  ThinkingTransformer model = load_checkpoint(checkpoint);
  const auto set = read_corpus(corpus);
  EvalReport report = exact_match(model, set, params, with_transcripts);
  const std::string text = eval_report_json(report);
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    write_text_file(out_path, text + "\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------- sweep / inspect

struct SweepArgs {
  std::string axis;
  std::vector<double> values;
  std::string config_path;
  std::string out;
  std::string corpus;
  std::string eval_corpus;
  int jobs = 1;
};

int cmd_sweep(const SweepArgs& args, const std::string& command) {
  RunConfig cfg = load_run_config(args.config_path);
  if (!args.corpus.empty()) cfg.corpus_path = args.corpus;
  if (!args.eval_corpus.empty()) cfg.eval_corpus_path = args.eval_corpus;
  if (cfg.corpus_path.empty() || cfg.eval_corpus_path.empty()) {
    throw ConfigError("sweep needs both a training corpus and an eval corpus");
  }
  SweepAxis axis;
  if (args.axis == "f_T") axis = SweepAxis::f_T;
  else if (args.axis == "k") axis = SweepAxis::thinking_layer;
  else throw ConfigError("sweep axis must be 'f_T' or 'k'");

  const fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "config.toml", read_text_file(args.config_path));
  write_run_manifest(out_dir, command, cfg);

  const auto corpus = read_corpus(cfg.corpus_path);
  const auto eval_set = read_corpus(cfg.eval_corpus_path);
  SweepReport report =
      sweep(axis, args.values, cfg.model, cfg.train, corpus, eval_set, cfg.generate, args.jobs);
  write_sweep_csv(report, out_dir / "report.csv");
  std::cout << "sweep report at " << (out_dir / "report.csv").string() << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& ckpt_a, const std::string& ckpt_b,
                const std::string& out_path) {
  ThinkingTransformer a = load_checkpoint(ckpt_a);
  ThinkingTransformer b = load_checkpoint(ckpt_b);
  const auto report = param_delta_report(a, b);
  std::ostringstream csv;
  csv << "layer_index,name,l2_delta,max_abs_delta\n";
  csv.precision(17);
  for (const auto& r : report) {
    csv << r.layer_index << "," << r.name << "," << r.l2 << "," << r.max_abs << "\n";
  }
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    write_text_file(out_path, csv.str());
  }
  return kExitOk;
}

}  // namespace

int cli_run(int argc, const char* const* argv) {
  CLI::App app{"methanol: a dual-head thinking transformer at desk scale"};
  app.require_subcommand(1);

  DataprepArgs dp;
  auto* dataprep = app.add_subcommand("dataprep", "generate or extract a training corpus");
  dataprep->add_option("kind", dp.kind, "arith|egoview|cot|tom|esconv|bootstrap")->required();
  dataprep->add_option("--out", dp.out, "output corpus JSONL")->required();
  dataprep->add_option("--seed", dp.seed, "generator seed");
  dataprep->add_option("--n", dp.n, "number of samples to generate");
  dataprep->add_option("--input", dp.input, "input records JSONL (cot/tom/esconv/bootstrap)");
  dataprep->add_option("--endpoint", dp.endpoint, "completion provider endpoint (bootstrap)");
  dataprep->add_option("--timeout-ms", dp.timeout_ms, "provider timeout in milliseconds");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model from a TOML run config");
  train_cmd->add_option("--config", tr.config_path, "run config TOML")->required();
  train_cmd->add_option("--out", tr.out, "output run directory")->required();
  train_cmd->add_option("--corpus", tr.corpus, "training corpus JSONL (overrides [data])");
  train_cmd->add_option("--init-from", tr.init_from, "checkpoint to start from");
  train_cmd->add_flag("--resume", tr.resume, "resume from the latest checkpoint in --out");
  std::optional<long> steps_opt;
  std::optional<int> batch_opt, k_opt;
  std::optional<double> lr_opt, ft_opt;
  std::optional<std::uint64_t> seed_opt;
  std::optional<long> ckpt_every_opt;
  train_cmd->add_option("--steps", steps_opt, "override total_steps");
  train_cmd->add_option("--batch-size", batch_opt, "override batch size");
  train_cmd->add_option("--seed", seed_opt, "override training seed");
  train_cmd->add_option("--peak-lr", lr_opt, "override peak learning rate");
  train_cmd->add_option("--f-t", ft_opt, "override thinking loss weight");
  train_cmd->add_option("--k", k_opt, "override thinking layer index");
  train_cmd->add_option("--checkpoint-every", ckpt_every_opt, "checkpoint cadence in steps");
  train_cmd->add_option("--ablation", tr.ablations,
                        "ablation switches (no_thinking, no_thought_mask, no_answer_mask, "
                        "random_init_head, think_only)");
  train_cmd->add_flag("--strip-thoughts", tr.strip_thoughts,
                      "drop thought text (plain query->answer training)");
  train_cmd->add_option("--head-reinit", tr.head_reinit,
                        "re-initialize the think head before training: copy|random")
      ->check(CLI::IsMember({"copy", "random", "none"}));

  std::string gen_checkpoint, gen_system, gen_query;
  GenerationParams gen_params;
  bool gen_human = false, gen_show_thought = false;
  auto* gen_cmd = app.add_subcommand("generate", "two-pass generation from a checkpoint");
  gen_cmd->add_option("--checkpoint", gen_checkpoint, "checkpoint directory")->required();
  gen_cmd->add_option("--query", gen_query, "user query")->required();
  gen_cmd->add_option("--system", gen_system, "system text");
  gen_cmd->add_option("--max-thought-tokens", gen_params.max_thought_tokens);
  gen_cmd->add_option("--max-answer-tokens", gen_params.max_answer_tokens);
  gen_cmd->add_flag("--sample", gen_params.sample, "sample instead of greedy");
  gen_cmd->add_option("--temperature", gen_params.sampling.temperature);
  gen_cmd->add_option("--top-k", gen_params.sampling.top_k);
  gen_cmd->add_option("--seed", gen_params.sampling.seed, "sampling seed");
  gen_cmd->add_flag("--human", gen_human, "human-readable output instead of JSON");
  gen_cmd->add_flag("--show-thought", gen_show_thought,
                    "include the thought in human-readable output");

  std::string eval_checkpoint, eval_corpus, eval_out;
  GenerationParams eval_params;
  bool eval_transcripts = false;
  auto* eval_cmd = app.add_subcommand("eval", "exact-match evaluation over a corpus");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--corpus", eval_corpus, "evaluation corpus JSONL")->required();
  eval_cmd->add_option("--max-thought-tokens", eval_params.max_thought_tokens);
  eval_cmd->add_option("--max-answer-tokens", eval_params.max_answer_tokens);
  eval_cmd->add_flag("--transcripts", eval_transcripts, "include per-sample transcripts");
  eval_cmd->add_option("--out", eval_out, "write the report to a file instead of stdout");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "sensitivity sweep over f_T or k");
  sweep_cmd->add_option("--axis", sw.axis, "f_T or k")->required();
  sweep_cmd->add_option("--values", sw.values, "axis values")->required()->delimiter(',');
  sweep_cmd->add_option("--config", sw.config_path, "base run config TOML")->required();
  sweep_cmd->add_option("--out", sw.out, "output directory")->required();
  sweep_cmd->add_option("--corpus", sw.corpus, "training corpus (overrides [data])");
  sweep_cmd->add_option("--eval-corpus", sw.eval_corpus, "eval corpus (overrides [data])");
  sweep_cmd->add_option("--jobs", sw.jobs, "parallel runs");

  std::string inspect_a, inspect_b, inspect_out;
  auto* inspect_cmd =
      app.add_subcommand("inspect", "per-layer parameter deltas between two checkpoints");
  inspect_cmd->add_option("ckpt_a", inspect_a, "first checkpoint")->required();
  inspect_cmd->add_option("ckpt_b", inspect_b, "second checkpoint")->required();
  inspect_cmd->add_option("--out", inspect_out, "write CSV to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*dataprep) return cmd_dataprep(dp);
    if (*train_cmd) {
      tr.steps = steps_opt;
      tr.batch_size = batch_opt;
      tr.seed = seed_opt;
      tr.peak_lr = lr_opt;
      tr.f_T = ft_opt;
      tr.thinking_layer = k_opt;
      tr.checkpoint_every = ckpt_every_opt;
      return cmd_train(tr, join_args(argc, argv));
    }
    if (*gen_cmd) {
      return cmd_generate(gen_checkpoint, gen_system, gen_query, gen_params, gen_human,
                          gen_show_thought);
    }
    if (*eval_cmd)
      return cmd_eval(eval_checkpoint, eval_corpus, eval_params, eval_transcripts, eval_out);
    if (*sweep_cmd) return cmd_sweep(sw, join_args(argc, argv));
    if (*inspect_cmd) return cmd_inspect(inspect_a, inspect_b, inspect_out);
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ProviderError& e) {
    std::cerr << "provider error" << (e.retryable ? " (retryable)" : "") << ": " << e.what()
              << "\n";
    return kExitProvider;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ExtractionError& e) {
    std::cerr << "extraction error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const VocabularyError& e) {
    std::cerr << "vocabulary error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace methanol

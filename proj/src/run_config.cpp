#include "methanol/run_config.hpp"

#include <set>

namespace methanol {

namespace {

void reject_unknown_keys(const TomlSection& section, const std::string& name,
                         const std::set<std::string>& known) {
  for (const auto& [key, value] : section) {
    if (!known.count(key)) {
      throw ConfigError("config: unknown key '" + key + "' in [" + name + "]");
    }
  }
}

AblationFlags parse_ablations(const TomlValue& value) {
  AblationFlags flags;
  for (const auto& item : value.as_array("train.ablations")) {
    const std::string& name = item.as_string("train.ablations entry");
    if (name == "no_thinking") flags.no_thinking = true;
    else if (name == "no_thought_mask") flags.no_thought_mask = true;
    else if (name == "no_answer_mask") flags.no_answer_mask = true;
    else if (name == "random_init_head") flags.random_init_head = true;
    else if (name == "think_only") flags.think_only = true;
    else throw ConfigError("config: unknown ablation '" + name + "'");
  }
  return flags;
}

}  // namespace

RunConfig run_config_from_table(const TomlTable& table) {
  RunConfig cfg;
  for (const auto& [section, entries] : table) {
    if (section != "" && section != "model" && section != "train" && section != "generate" &&
        section != "data") {
      throw ConfigError("config: unknown section [" + section + "]");
    }
    if (section == "" && !entries.empty()) {
      throw ConfigError("config: top-level keys are not allowed; use a section");
    }
  }

  if (auto it = table.find("model"); it != table.end()) {
    const auto& s = it->second;
    reject_unknown_keys(s, "model",
                        {"vocab_size", "d_model", "n_heads", "n_layers", "thinking_layer",
                         "max_seq_len", "ffn_hidden", "norm_eps", "init_seed"});
    auto get_int = [&](const char* key, int fallback) {
      auto f = s.find(key);
      return f == s.end() ? fallback
                          : static_cast<int>(f->second.as_int(std::string("model.") + key));
    };
    cfg.model.vocab_size = get_int("vocab_size", cfg.model.vocab_size);
    cfg.model.d_model = get_int("d_model", cfg.model.d_model);
    cfg.model.n_heads = get_int("n_heads", cfg.model.n_heads);
    cfg.model.n_layers = get_int("n_layers", cfg.model.n_layers);
    cfg.model.thinking_layer = get_int("thinking_layer", cfg.model.thinking_layer);
    cfg.model.max_seq_len = get_int("max_seq_len", cfg.model.max_seq_len);
    cfg.model.ffn_hidden = get_int("ffn_hidden", cfg.model.ffn_hidden);
    if (auto f = s.find("norm_eps"); f != s.end()) {
      cfg.model.norm_eps = static_cast<float>(f->second.as_double("model.norm_eps"));
    }
    if (auto f = s.find("init_seed"); f != s.end()) {
      cfg.model.init_seed = static_cast<std::uint64_t>(f->second.as_int("model.init_seed"));
    }
  }

  if (auto it = table.find("train"); it != table.end()) {
    const auto& s = it->second;
    reject_unknown_keys(
        s, "train",
        {"f_T", "peak_lr", "weight_decay", "batch_size", "total_steps", "grad_clip_norm",
         "seed", "warmup_steps", "checkpoint_every", "ablations", "strip_thoughts",
         "supervise_stop_delimiters", "head_reinit"});
    if (auto f = s.find("f_T"); f != s.end()) cfg.train.f_T = f->second.as_double("train.f_T");
    if (auto f = s.find("peak_lr"); f != s.end())
      cfg.train.peak_lr = f->second.as_double("train.peak_lr");
    if (auto f = s.find("weight_decay"); f != s.end())
      cfg.train.weight_decay = f->second.as_double("train.weight_decay");
    if (auto f = s.find("batch_size"); f != s.end())
      cfg.train.batch_size = static_cast<int>(f->second.as_int("train.batch_size"));
    if (auto f = s.find("total_steps"); f != s.end())
      cfg.train.total_steps = f->second.as_int("train.total_steps");
    if (auto f = s.find("grad_clip_norm"); f != s.end())
      cfg.train.grad_clip_norm = f->second.as_double("train.grad_clip_norm");
    if (auto f = s.find("seed"); f != s.end())
      cfg.train.seed = static_cast<std::uint64_t>(f->second.as_int("train.seed"));
    if (auto f = s.find("warmup_steps"); f != s.end())
      cfg.train.warmup_steps = static_cast<int>(f->second.as_int("train.warmup_steps"));
    if (auto f = s.find("checkpoint_every"); f != s.end())
      cfg.train.checkpoint_every = f->second.as_int("train.checkpoint_every");
    if (auto f = s.find("ablations"); f != s.end())
      cfg.train.ablations = parse_ablations(f->second);
    if (auto f = s.find("strip_thoughts"); f != s.end())
      cfg.train.strip_thoughts = f->second.as_bool("train.strip_thoughts");
    if (auto f = s.find("supervise_stop_delimiters"); f != s.end()) {
      cfg.train.mask_options.supervise_stop_delimiters =
          f->second.as_bool("train.supervise_stop_delimiters");
    }
    if (auto f = s.find("head_reinit"); f != s.end()) {
      cfg.head_reinit = f->second.as_string("train.head_reinit");
    }
  }

  if (auto it = table.find("generate"); it != table.end()) {
    const auto& s = it->second;
    reject_unknown_keys(s, "generate",
                        {"max_thought_tokens", "max_answer_tokens", "mode", "temperature",
                         "top_k", "seed"});
    if (auto f = s.find("max_thought_tokens"); f != s.end()) {
      cfg.generate.max_thought_tokens =
          static_cast<int>(f->second.as_int("generate.max_thought_tokens"));
    }
    if (auto f = s.find("max_answer_tokens"); f != s.end()) {
      cfg.generate.max_answer_tokens =
          static_cast<int>(f->second.as_int("generate.max_answer_tokens"));
    }
    if (auto f = s.find("mode"); f != s.end()) {
      const std::string& mode = f->second.as_string("generate.mode");
      if (mode == "greedy") cfg.generate.sample = false;
      else if (mode == "sample") cfg.generate.sample = true;
      else throw ConfigError("config: generate.mode must be 'greedy' or 'sample'");
    }
    if (auto f = s.find("temperature"); f != s.end())
      cfg.generate.sampling.temperature = f->second.as_double("generate.temperature");
    if (auto f = s.find("top_k"); f != s.end())
      cfg.generate.sampling.top_k = static_cast<int>(f->second.as_int("generate.top_k"));
    if (auto f = s.find("seed"); f != s.end())
      cfg.generate.sampling.seed = static_cast<std::uint64_t>(f->second.as_int("generate.seed"));
  }

  if (auto it = table.find("data"); it != table.end()) {
    const auto& s = it->second;
    reject_unknown_keys(s, "data", {"corpus", "eval_corpus"});
    if (auto f = s.find("corpus"); f != s.end())
      cfg.corpus_path = f->second.as_string("data.corpus");
    if (auto f = s.find("eval_corpus"); f != s.end())
      cfg.eval_corpus_path = f->second.as_string("data.eval_corpus");
  }

  if (cfg.head_reinit != "none" && cfg.head_reinit != "copy" && cfg.head_reinit != "random") {
    throw ConfigError("config: train.head_reinit must be none, copy or random");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_table(parse_toml_file(path));
}

}  // namespace methanol

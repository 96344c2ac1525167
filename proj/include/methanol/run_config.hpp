#pragma once

#include <filesystem>
#include <string>

#include "methanol/inference.hpp"
#include "methanol/model.hpp"
#include "methanol/toml.hpp"
#include "methanol/trainer.hpp"

namespace methanol {

// Parsed run configuration: TOML sections [model], [train], [generate],
// [data]. Command-line flags override file values, which override defaults.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  GenerationParams generate;
  std::string corpus_path;
  std::string eval_corpus_path;
  std::string head_reinit = "none";  // none | copy | random, applied before training
};

RunConfig run_config_from_table(const TomlTable& table);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace methanol

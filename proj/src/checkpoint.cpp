#include "methanol/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <vector>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace methanol {

using nlohmann::json;

namespace {

constexpr const char* kFormatVersion = "methanol-checkpoint-v1";

json config_to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},
              {"thinking_layer", c.thinking_layer},
              {"max_seq_len", c.max_seq_len},
              {"ffn_hidden", c.ffn_hidden},
              {"norm_eps", c.norm_eps},
              {"init_seed", c.init_seed}};
}

template <typename T>
T get_field(const json& j, const char* field) {
  if (!j.contains(field)) {
    throw CheckpointError(std::string("checkpoint manifest missing field '") + field + "'",
                          field);
  }
  try {
    return j.at(field).get<T>();
  } catch (const json::exception&) {
    throw CheckpointError(std::string("checkpoint manifest field '") + field +
                              "' has the wrong type",
                          field);
  }
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = get_field<int>(j, "vocab_size");
  c.d_model = get_field<int>(j, "d_model");
  c.n_heads = get_field<int>(j, "n_heads");
  c.n_layers = get_field<int>(j, "n_layers");
  c.thinking_layer = get_field<int>(j, "thinking_layer");
  c.max_seq_len = get_field<int>(j, "max_seq_len");
  c.ffn_hidden = get_field<int>(j, "ffn_hidden");
  c.norm_eps = get_field<float>(j, "norm_eps");
  c.init_seed = get_field<std::uint64_t>(j, "init_seed");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what(), "config");
  }
  return c;
}

}  // namespace

void save_checkpoint(const ThinkingTransformer& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["config"] = config_to_json(model.config);

  std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!bin) {
    throw CheckpointError("cannot open " + (dir / "params.bin").string() + " for writing",
                          "params.bin");
  }
  json params = json::array();
  std::size_t offset = 0;
  for_each_param(model, [&](const std::string& name, int layer, const Tensor& t) {
    const std::size_t nbytes = t.numel() * sizeof(float);
    params.push_back(json{{"name", name},
                          {"layer", layer},
                          {"shape", t.shape},
                          {"offset", offset},
                          {"nbytes", nbytes}});
    bin.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(nbytes));
    offset += nbytes;
  });
  bin.close();
  if (!bin) throw CheckpointError("failed writing params.bin", "params.bin");
  manifest["params"] = std::move(params);

  std::ofstream mf(dir / "manifest.json", std::ios::trunc);
  if (!mf) {
    throw CheckpointError("cannot open " + (dir / "manifest.json").string() + " for writing",
                          "manifest.json");
  }
  mf << manifest.dump(2) << "\n";
  if (!mf) throw CheckpointError("failed writing manifest.json", "manifest.json");
}

ThinkingTransformer load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) {
    throw CheckpointError("cannot open " + (dir / "manifest.json").string(), "manifest.json");
  }
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("manifest.json is not valid JSON: ") + e.what(),
                          "manifest.json");
  }
  const auto version = get_field<std::string>(manifest, "format_version");
  if (version != kFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version '" + version + "'",
                          "format_version");
  }
  if (!manifest.contains("config")) {
    throw CheckpointError("checkpoint manifest missing field 'config'", "config");
  }
  ModelConfig config = config_from_json(manifest.at("config"));
  ThinkingTransformer model = init_model(config, HeadInit::copy);

  if (!manifest.contains("params") || !manifest.at("params").is_array()) {
    throw CheckpointError("checkpoint manifest missing array 'params'", "params");
  }
  const json& params = manifest.at("params");

  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) {
    throw CheckpointError("cannot open " + (dir / "params.bin").string(), "params.bin");
  }
  bin.seekg(0, std::ios::end);
  const std::size_t file_size = static_cast<std::size_t>(bin.tellg());
  bin.seekg(0);

  std::size_t idx = 0;
  std::size_t expect_offset = 0;
  for_each_param(model, [&](const std::string& name, int layer, Tensor& t) {
    const std::string field = "params[" + std::to_string(idx) + "]";
    if (idx >= params.size()) {
      throw CheckpointError("checkpoint manifest is missing entry " + field + " ('" + name + "')",
                            field);
    }
    const json& entry = params.at(idx);
    if (get_field<std::string>(entry, "name") != name) {
      throw CheckpointError("checkpoint entry " + field + " is '" +
                                entry.at("name").get<std::string>() + "', expected '" + name + "'",
                            field + ".name");
    }
    if (get_field<int>(entry, "layer") != layer) {
      throw CheckpointError("checkpoint entry '" + name + "' has the wrong layer index",
                            field + ".layer");
    }
    const auto shape = get_field<Shape>(entry, "shape");
    if (shape != t.shape) {
      throw CheckpointError("checkpoint entry '" + name + "' has shape " + shape_str(shape) +
                                ", expected " + shape_str(t.shape),
                            field + ".shape");
    }
    const auto offset = get_field<std::size_t>(entry, "offset");
    const auto nbytes = get_field<std::size_t>(entry, "nbytes");
    if (offset != expect_offset || nbytes != t.numel() * sizeof(float)) {
      throw CheckpointError("checkpoint entry '" + name + "' has inconsistent offset or size",
                            field + ".offset");
    }
    if (offset + nbytes > file_size) {
      throw CheckpointError("params.bin is truncated at entry '" + name + "'", "params.bin");
    }
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(reinterpret_cast<char*>(t.values().data()), static_cast<std::streamsize>(nbytes));
    if (!bin) throw CheckpointError("failed reading entry '" + name + "'", "params.bin");
    expect_offset = offset + nbytes;
    ++idx;
  });
  if (idx != params.size()) {
    throw CheckpointError("checkpoint manifest has extra parameter entries", "params");
  }
  if (expect_offset != file_size) {
    throw CheckpointError("params.bin size does not match the manifest", "params.bin");
  }
  return model;
}

}  // namespace methanol

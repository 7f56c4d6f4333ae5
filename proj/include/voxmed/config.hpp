#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voxmed/classifier.hpp"
#include "voxmed/embedding.hpp"
#include "voxmed/pipeline.hpp"
#include "voxmed/training.hpp"

namespace voxmed {

// Raw key -> value strings from one configuration source.
using ConfigLayer = std::map<std::string, std::string>;

struct CliConfig {
  FrontEndConfig front_end;
  // Conv stack, pool size and dropout. input_dim and num_classes are filled
  // in from the backend and the scheme when a model is built.
  ArchSpec arch = ArchSpec::defaults(kDefaultEmbeddingDim, 3);
  TrainConfig train;
  BackendConfig backend;
  bool embedding_dim_explicit = false;
  std::string scheme = "healthy-copd-others";
  std::filesystem::path schemes_dir;
  std::optional<std::filesystem::path> audio_dir;
  std::optional<std::filesystem::path> diagnoses;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> input;
  std::vector<std::string> ablate_backends = {"deterministic_test"};
  std::vector<std::string> ablate_schemes;
  std::uint64_t seed = 0;
  std::string host = "0.0.0.0";
  int port = 8080;
  std::optional<std::string> info_url;
  std::string run_name = "run";
  std::filesystem::path out_dir = ".";
  std::size_t threads = 0;  // 0 = hardware concurrency
};

// Every accepted key with a one-line description, in documentation order.
const std::vector<std::pair<std::string, std::string>>& config_keys();

// JSON object; nested objects are flattened with '.' ("mel": {"n_mels": 64}
// is mel.n_mels). Throws InvalidConfig, IoError.
ConfigLayer parse_config_json(const std::string& text);
ConfigLayer load_config_file(const std::filesystem::path& path);

// VOXMED_<KEY> with '.' replaced by '_' and upper-cased, plus the aliases
// VOXMED_MODEL_PATH, VOXMED_BACKEND, VOXMED_PORT and VOXMED_INFO_URL.
// Variables that name no key are ignored.
ConfigLayer env_layer(const std::map<std::string, std::string>& environment);
std::map<std::string, std::string> process_environment();

// Parses "key=value". Throws InvalidConfig.
std::pair<std::string, std::string> parse_assignment(const std::string& text);

// Applies layers from lowest to highest precedence onto the defaults. Every
// unknown key, unparsable value and invalid combination is collected and
// reported in one InvalidConfig error.
CliConfig resolve_config(const std::vector<ConfigLayer>& layers_low_to_high);

}  // namespace voxmed

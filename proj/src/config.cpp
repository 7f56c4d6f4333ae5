#include "voxmed/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "voxmed/dataset_icbhi.hpp"
#include "voxmed/error.hpp"
#include "voxmed/hash.hpp"

extern char** environ;

namespace voxmed {

namespace {

struct BadValue {
  std::string why;
};

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) throw BadValue{"expected a number, got '" + s + "'"};
  return v;
}

bool parse_bool(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw BadValue{"expected a boolean, got '" + s + "'"};
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "256:3,128:3:pool,64:3:pool"
std::vector<ConvLayerSpec> parse_layers(const std::string& s) {
  std::vector<ConvLayerSpec> layers;
  for (const auto& item : split_list(s)) {
    const auto parts = split_list(item, ':');
    if (parts.size() < 2 || parts.size() > 3 || (parts.size() == 3 && parts[2] != "pool")) {
      throw BadValue{"layer '" + item + "' is not filters:kernel[:pool]"};
    }
    layers.push_back({parse_number<std::size_t>(parts[0]), parse_number<std::size_t>(parts[1]), parts.size() == 3});
  }
  if (layers.empty()) throw BadValue{"no layers"};
  return layers;
}

template <typename E, typename F>
E parse_enum(const std::string& s, F parser) {
  try {
    return parser(s);
  } catch (const Error& e) {
    throw BadValue{e.what()};
  }
}

using Setter = std::function<void(CliConfig&, const std::string&)>;

struct Key {
  std::string name;
  std::string doc;
  Setter set;
};

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      {"mel.sample_rate", "canonical sample rate in Hz",
       [](CliConfig& c, const std::string& v) { c.front_end.mel.sample_rate = parse_number<int>(v); }},
      {"mel.n_mels", "mel bands", [](CliConfig& c, const std::string& v) { c.front_end.mel.n_mels = parse_number<int>(v); }},
      {"mel.window_ms", "analysis window in ms",
       [](CliConfig& c, const std::string& v) { c.front_end.mel.window_ms = parse_number<double>(v); }},
      {"mel.hop_ms", "frame hop in ms",
       [](CliConfig& c, const std::string& v) { c.front_end.mel.hop_ms = parse_number<double>(v); }},
      {"mel.fmin", "lowest filterbank frequency in Hz",
       [](CliConfig& c, const std::string& v) { c.front_end.mel.fmin = parse_number<double>(v); }},
      {"mel.fmax", "highest filterbank frequency in Hz",
       [](CliConfig& c, const std::string& v) { c.front_end.mel.fmax = parse_number<double>(v); }},
      {"mel.log_floor", "lower bound of log mel energy",
       [](CliConfig& c, const std::string& v) { c.front_end.mel.log_floor = parse_number<double>(v); }},
      {"frontend.target_frames", "frames per backend chunk",
       [](CliConfig& c, const std::string& v) { c.front_end.target_frames = parse_number<std::size_t>(v); }},
      {"frontend.feature_mean", "feature standardization mean",
       [](CliConfig& c, const std::string& v) { c.front_end.feature_mean = parse_number<double>(v); }},
      {"frontend.feature_std", "feature standardization std",
       [](CliConfig& c, const std::string& v) { c.front_end.feature_std = parse_number<double>(v); }},
      {"frontend.max_duration_s", "longest accepted recording in s",
       [](CliConfig& c, const std::string& v) { c.front_end.max_duration_s = parse_number<double>(v); }},
      {"arch.layers", "conv stack as filters:kernel[:pool],...",
       [](CliConfig& c, const std::string& v) { c.arch.conv_layers = parse_layers(v); }},
      {"arch.pool_size", "max-pool width",
       [](CliConfig& c, const std::string& v) { c.arch.pool_size = parse_number<std::size_t>(v); }},
      {"arch.dropout", "dropout rate before the dense head",
       [](CliConfig& c, const std::string& v) { c.arch.dropout_rate = parse_number<double>(v); }},
      {"train.learning_rate", "Adam step size",
       [](CliConfig& c, const std::string& v) { c.train.learning_rate = parse_number<double>(v); }},
      {"train.beta1", "Adam first-moment decay",
       [](CliConfig& c, const std::string& v) { c.train.beta1 = parse_number<double>(v); }},
      {"train.beta2", "Adam second-moment decay",
       [](CliConfig& c, const std::string& v) { c.train.beta2 = parse_number<double>(v); }},
      {"train.epsilon", "Adam epsilon", [](CliConfig& c, const std::string& v) { c.train.epsilon = parse_number<double>(v); }},
      {"train.batch_size", "mini-batch size",
       [](CliConfig& c, const std::string& v) { c.train.batch_size = parse_number<std::size_t>(v); }},
      {"train.max_epochs", "epoch limit",
       [](CliConfig& c, const std::string& v) { c.train.max_epochs = parse_number<std::size_t>(v); }},
      {"train.patience", "early-stopping patience in epochs",
       [](CliConfig& c, const std::string& v) { c.train.early_stop_patience = parse_number<std::size_t>(v); }},
      {"train.split_ratio", "training fraction of the dataset",
       [](CliConfig& c, const std::string& v) { c.train.split_ratio = parse_number<double>(v); }},
      {"train.stratified", "stratify the split by class",
       [](CliConfig& c, const std::string& v) { c.train.stratified = parse_bool(v); }},
      {"train.group_by_patient", "keep each patient on one side of the split",
       [](CliConfig& c, const std::string& v) { c.train.group_by_patient = parse_bool(v); }},
      {"backend.kind", "external_model | cache | deterministic_test",
       [](CliConfig& c, const std::string& v) { c.backend.kind = parse_enum<BackendKind>(v, parse_backend_kind); }},
      {"backend.model_path", "encoder file (external_model) or embedding archive (cache)",
       [](CliConfig& c, const std::string& v) { c.backend.model_path = v; }},
      {"backend.cache_dir", "per-recording embedding directory",
       [](CliConfig& c, const std::string& v) { c.backend.cache_dir = v; }},
      {"backend.embedding_dim", "embedding length; defaults to the model's input size when a model is given",
       [](CliConfig& c, const std::string& v) {
         c.backend.embedding_dim = parse_number<std::size_t>(v);
         c.embedding_dim_explicit = true;
       }},
      {"backend.aggregation", "mean_pool | first_token",
       [](CliConfig& c, const std::string& v) { c.backend.aggregation = parse_enum<Aggregation>(v, parse_aggregation); }},
      {"scheme", "label scheme id or JSON path", [](CliConfig& c, const std::string& v) { c.scheme = v; }},
      {"schemes_dir", "directory searched for scheme ids", [](CliConfig& c, const std::string& v) { c.schemes_dir = v; }},
      {"data.audio_dir", "directory of recordings and annotations",
       [](CliConfig& c, const std::string& v) { c.audio_dir = v; }},
      {"data.diagnoses", "patient diagnosis file", [](CliConfig& c, const std::string& v) { c.diagnoses = v; }},
      {"model", "classifier model file", [](CliConfig& c, const std::string& v) { c.model = v; }},
      {"input", "recording to classify", [](CliConfig& c, const std::string& v) { c.input = v; }},
      {"ablate.backends", "backends for the ablation grid as kind[:path],...",
       [](CliConfig& c, const std::string& v) { c.ablate_backends = split_list(v); }},
      {"ablate.schemes", "schemes for the ablation grid; default all shipped schemes",
       [](CliConfig& c, const std::string& v) { c.ablate_schemes = split_list(v); }},
      {"seed", "root seed for every random choice",
       [](CliConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); }},
      {"service.host", "listen address", [](CliConfig& c, const std::string& v) { c.host = v; }},
      {"service.port", "listen port", [](CliConfig& c, const std::string& v) { c.port = parse_number<int>(v); }},
      {"service.info_url", "external disease-information endpoint",
       [](CliConfig& c, const std::string& v) {
         if (v.empty()) {
           c.info_url.reset();
         } else {
           c.info_url = v;
         }
       }},
      {"run_name", "prefix of output files", [](CliConfig& c, const std::string& v) { c.run_name = v; }},
      {"out_dir", "directory for output files", [](CliConfig& c, const std::string& v) { c.out_dir = v; }},
      {"threads", "embedding workers; 0 uses every core",
       [](CliConfig& c, const std::string& v) { c.threads = parse_number<std::size_t>(v); }},
  };
  return keys;
}

void flatten(const nlohmann::json& node, const std::string& prefix, ConfigLayer& out) {
  if (node.is_object()) {
    for (const auto& [k, v] : node.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (node.is_string()) {
    out[prefix] = node.get<std::string>();
  } else if (node.is_array()) {
    std::string joined;
    for (const auto& item : node) {
      if (!joined.empty()) joined += ",";
      joined += item.is_string() ? item.get<std::string>() : item.dump();
    }
    out[prefix] = joined;
  } else if (node.is_null()) {
    out[prefix] = "";
  } else {
    out[prefix] = node.dump();
  }
}

std::string env_name(const std::string& key) {
  std::string n = "VOXMED_";
  for (const char ch : key) n += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return n;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const auto docs = [] {
    std::vector<std::pair<std::string, std::string>> d;
    for (const auto& k : key_table()) d.emplace_back(k.name, k.doc);
    return d;
  }();
  return docs;
}

ConfigLayer parse_config_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, std::string("config file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorCode::InvalidConfig, "config file must hold a JSON object");
  ConfigLayer layer;
  flatten(doc, "", layer);
  return layer;
}

ConfigLayer load_config_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_config_json(std::string(bytes.begin(), bytes.end()));
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

ConfigLayer env_layer(const std::map<std::string, std::string>& environment) {
  ConfigLayer layer;
  for (const auto& k : key_table()) {
    if (const auto it = environment.find(env_name(k.name)); it != environment.end()) layer[k.name] = it->second;
  }
  static const std::vector<std::pair<std::string, std::string>> aliases = {
      {"VOXMED_MODEL_PATH", "model"},
      {"VOXMED_BACKEND", "backend.kind"},
      {"VOXMED_PORT", "service.port"},
      {"VOXMED_INFO_URL", "service.info_url"},
  };
  for (const auto& [var, key] : aliases) {
    if (const auto it = environment.find(var); it != environment.end()) layer[key] = it->second;
  }
  return layer;
}

std::map<std::string, std::string> process_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    if (const auto eq = entry.find('='); eq != std::string::npos) env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return env;
}

std::pair<std::string, std::string> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorCode::InvalidConfig, "expected key=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

CliConfig resolve_config(const std::vector<ConfigLayer>& layers_low_to_high) {
  ConfigLayer merged;
  for (const auto& layer : layers_low_to_high) {
    for (const auto& [k, v] : layer) merged[k] = v;
  }

  CliConfig cfg;
  cfg.schemes_dir = default_schemes_dir();
  std::vector<std::string> problems;
  for (const auto& [k, v] : merged) {
    const auto& table = key_table();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Key& key) { return key.name == k; });
    if (it == table.end()) {
      problems.push_back("unknown key '" + k + "'");
      continue;
    }
    try {
      it->set(cfg, v);
    } catch (const BadValue& e) {
      problems.push_back(k + ": " + e.why);
    }
  }

  const auto check = [&](const char* what, const auto& validate) {
    try {
      validate();
    } catch (const Error& e) {
      problems.push_back(std::string(what) + ": " + e.what());
    }
  };
  check("front end", [&] { cfg.front_end.validate(); });
  check("train", [&] { cfg.train.validate(); });
  check("backend", [&] { cfg.backend.validate(); });
  check("arch", [&] {
    ArchSpec probe = cfg.arch;
    probe.input_dim = cfg.backend.embedding_dim;
    probe.validate();
  });
  if (cfg.port < 0 || cfg.port > 65535) problems.push_back("service.port: out of range");
  if (cfg.run_name.empty()) problems.push_back("run_name: must not be empty");

  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(ErrorCode::InvalidConfig, msg);
  }
  return cfg;
}

}  // namespace voxmed

#include "voxmed/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "voxmed/binary_io.hpp"
#include "voxmed/config.hpp"
#include "voxmed/dataset_icbhi.hpp"
#include "voxmed/evaluation.hpp"
#include "voxmed/hash.hpp"
#include "voxmed/pipeline.hpp"
#include "voxmed/service_api.hpp"
#include "voxmed/training.hpp"

namespace voxmed {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidArch:
    case ErrorCode::UnknownDisease:
      return kExitUsage;
    case ErrorCode::MalformedHeader:
    case ErrorCode::UnsupportedEncoding:
    case ErrorCode::TruncatedData:
    case ErrorCode::InvalidSample:
    case ErrorCode::InvalidRate:
    case ErrorCode::DurationExceeded:
    case ErrorCode::ModelFileMissing:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::CacheMiss:
    case ErrorCode::DimMismatch:
    case ErrorCode::FormatError:
    case ErrorCode::VersionMismatch:
    case ErrorCode::DegenerateDataset:
    case ErrorCode::BadFilename:
    case ErrorCode::BadPatientId:
    case ErrorCode::ParseError:
    case ErrorCode::DuplicatePatient:
    case ErrorCode::EmptyDataset:
    case ErrorCode::MissingDiagnosis:
    case ErrorCode::IoError:
      return kExitData;
    default:
      return kExitRuntime;
  }
}

namespace {

// Named flags of one subcommand, each bound to a configuration key.
struct FlagSet {
  std::string config_file;
  std::vector<std::string> assignments;
  std::vector<std::pair<CLI::Option*, std::string>> bound;
  std::map<std::string, std::string> values;

  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    bound.emplace_back(app->add_option(flag, values[key], help), key);
  }

  ConfigLayer layer() const {
    ConfigLayer l;
    for (const auto& a : assignments) l.insert_or_assign(parse_assignment(a).first, parse_assignment(a).second);
    for (const auto& [opt, key] : bound) {
      if (opt->count() > 0) l[key] = values.at(key);
    }
    return l;
  }
};

void add_common(CLI::App* app, FlagSet& f) {
  app->add_option("--config", f.config_file, "JSON configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", f.assignments, "override any configuration key (key=value), repeatable");
  f.bind(app, "--seed", "seed", "root random seed");
  f.bind(app, "--scheme", "scheme", "label scheme id or JSON file");
  f.bind(app, "--schemes-dir", "schemes_dir", "directory of label scheme files");
  f.bind(app, "--backend", "backend.kind", "embedding backend: external_model, cache or deterministic_test");
  f.bind(app, "--backend-path", "backend.model_path", "encoder file or embedding archive for the backend");
  f.bind(app, "--cache-dir", "backend.cache_dir", "per-recording embedding cache directory");
  f.bind(app, "--embedding-dim", "backend.embedding_dim", "embedding length");
  f.bind(app, "--threads", "threads", "embedding workers (0 = all cores)");
}

void add_data(CLI::App* app, FlagSet& f) {
  f.bind(app, "--audio-dir", "data.audio_dir", "directory with recordings and cycle annotations");
  f.bind(app, "--diagnoses", "data.diagnoses", "patient diagnosis file");
}

void add_output(CLI::App* app, FlagSet& f) {
  f.bind(app, "--run-name", "run_name", "prefix for output files");
  f.bind(app, "--out-dir", "out_dir", "directory for output files");
}

CliConfig resolve(const FlagSet& f, const std::map<std::string, std::string>& env) {
  std::vector<ConfigLayer> layers;
  if (!f.config_file.empty()) layers.push_back(load_config_file(f.config_file));
  layers.push_back(env_layer(env));
  layers.push_back(f.layer());
  return resolve_config(layers);
}

template <typename T>
const T& require(const std::optional<T>& v, const char* flag) {
  if (!v) fail(ErrorCode::InvalidConfig, std::string("missing required ") + flag);
  return *v;
}

fs::path output_path(const CliConfig& cfg, const std::string& suffix) {
  fs::create_directories(cfg.out_dir);
  return cfg.out_dir / (cfg.run_name + suffix);
}

std::shared_ptr<const Backend> make_backend(const CliConfig& cfg, BackendConfig bc, std::optional<std::size_t> model_dim) {
  if (!cfg.embedding_dim_explicit && model_dim) bc.embedding_dim = *model_dim;
  bind_front_end(bc, cfg.front_end);
  return load_backend(bc);
}

ArchSpec arch_for(const CliConfig& cfg, std::size_t input_dim, std::size_t num_classes) {
  ArchSpec arch = cfg.arch;
  arch.input_dim = input_dim;
  arch.num_classes = num_classes;
  arch.validate();
  return arch;
}

// Embedding length stored in a file when the user did not set one.
std::optional<std::size_t> dim_from_file(BackendKind kind, const fs::path& path) {
  if (kind == BackendKind::ExternalModel) return read_linear_encoder(path).dim;
  if (kind == BackendKind::Cache) {
    const auto bytes = read_file(path);
    ByteReader r(bytes, ErrorCode::FormatError);
    if (r.tag() != "VXEM") fail(ErrorCode::FormatError, path.string() + ": not an embedding archive");
    r.u16();
    return r.u32();
  }
  return std::nullopt;
}

std::vector<Example> embed_examples(const CliConfig& cfg, const LabeledDataset& ds, const RecordingEmbedder& embedder,
                                    std::ostream& err) {
  err << "embedding " << ds.items.size() << " recordings with " << embedder.backend().id() << "\n";
  const auto embs = embed_dataset(ds, embedder, cfg.threads);
  return make_examples(ds, embs);
}

int cmd_train(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto scheme = resolve_label_scheme(cfg.scheme, cfg.schemes_dir);
  const auto ds = build_dataset(require(cfg.audio_dir, "--audio-dir"), require(cfg.diagnoses, "--diagnoses"), scheme);
  const RecordingEmbedder embedder(cfg.front_end, make_backend(cfg, cfg.backend, std::nullopt));
  const auto examples = embed_examples(cfg, ds, embedder, err);

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const auto arch = arch_for(cfg, embedder.backend().dim(), scheme.classes.size());
  const auto result = train(examples, arch, tc);

  const auto model_path = output_path(cfg, ".vxmd");
  const auto history_path = output_path(cfg, ".history.csv");
  save_params(result.params, model_path);
  result.history.write_csv(history_path);
  const auto& best = result.history.epochs.at(result.history.best_epoch - 1);
  out << "model:    " << model_path.string() << "\n"
      << "history:  " << history_path.string() << "\n"
      << "epochs:   " << result.history.epochs.size() << " (best " << result.history.best_epoch << ")\n"
      << "held-out: " << result.split.test.size() << " recordings, loss " << best.val_loss << ", accuracy "
      << best.val_acc << "\n";
  return kExitOk;
}

int cmd_eval(const CliConfig& cfg, bool all_items, std::ostream& out, std::ostream& err) {
  const auto params = load_params(require(cfg.model, "--model"));
  const auto scheme = resolve_label_scheme(cfg.scheme, cfg.schemes_dir);
  const auto ds = build_dataset(require(cfg.audio_dir, "--audio-dir"), require(cfg.diagnoses, "--diagnoses"), scheme);
  const RecordingEmbedder embedder(cfg.front_end, make_backend(cfg, cfg.backend, params.arch.input_dim));
  const auto examples = embed_examples(cfg, ds, embedder, err);

  std::vector<Example> slice;
  if (all_items) {
    slice = examples;
  } else {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    for (const auto i : split_examples(examples, tc).test) slice.push_back(examples[i]);
  }
  const auto report = evaluate(params, slice, scheme, embedder.backend().id());
  const auto csv_path = output_path(cfg, ".report.csv");
  std::ofstream csv(csv_path);
  report.write_csv(csv);
  if (!csv) fail(ErrorCode::IoError, "cannot write " + csv_path.string());
  out << report.to_text() << "report:      " << csv_path.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<LabelScheme> schemes;
  for (const auto& id : cfg.ablate_schemes.empty() ? standard_scheme_ids() : cfg.ablate_schemes) {
    schemes.push_back(resolve_label_scheme(id, cfg.schemes_dir));
  }
  std::vector<AblationBackend> backends;
  for (const auto& spec : cfg.ablate_backends) {
    const auto colon = spec.find(':');
    BackendConfig bc = cfg.backend;
    bc.kind = parse_backend_kind(spec.substr(0, colon));
    std::string name = spec.substr(0, colon);
    std::optional<std::size_t> dim;
    if (colon != std::string::npos) {
      const fs::path path = spec.substr(colon + 1);
      bc.model_path = path;
      name = path.stem().string();
      dim = dim_from_file(bc.kind, path);
    }
    backends.push_back({name, make_backend(cfg, bc, dim)});
  }

  AblationConfig ac;
  ac.front_end = cfg.front_end;
  ac.arch = cfg.arch;
  ac.train = cfg.train;
  ac.seed = cfg.seed;
  err << "ablation: " << backends.size() << " backends x " << schemes.size() << " schemes\n";
  const auto grid = run_ablation(backends, schemes, require(cfg.audio_dir, "--audio-dir"),
                                 require(cfg.diagnoses, "--diagnoses"), ac);
  const auto rows = ablation_rows(grid);
  const auto csv_path = output_path(cfg, ".ablation.csv");
  std::ofstream csv(csv_path);
  write_ablation_csv(rows, csv);
  if (!csv) fail(ErrorCode::IoError, "cannot write " + csv_path.string());
  out << grid.to_table() << "grid: " << csv_path.string() << "\n";
  for (const auto& cell : grid.cells) {
    if (!cell.report) return kExitRuntime;
  }
  return kExitOk;
}

ServiceConfig service_config(const CliConfig& cfg) {
  ServiceConfig sc;
  sc.model_path = require(cfg.model, "--model");
  sc.backend = cfg.backend;
  sc.embedding_dim_explicit = cfg.embedding_dim_explicit;
  sc.front_end = cfg.front_end;
  sc.scheme = resolve_label_scheme(cfg.scheme, cfg.schemes_dir);
  sc.info_url = cfg.info_url;
  sc.host = cfg.host;
  sc.port = cfg.port;
  return sc;
}

// Boot failures keep the code recorded by the service.
struct BootFailed {
  ErrorCode code;
  std::string message;
};

void require_ready(const Service& service) {
  if (service.state() != Service::State::Ready) throw BootFailed{service.boot_error_code(), service.boot_error()};
}

int cmd_predict(const CliConfig& cfg, std::ostream& out) {
  const auto input = require(cfg.input, "--input");
  Service service(service_config(cfg));
  service.boot();
  require_ready(service);
  out << service.predict(read_file(input)).to_json() << "\n";
  return kExitOk;
}

int cmd_serve(const CliConfig& cfg, std::ostream& err) {
  Service service(service_config(cfg));
  service.boot();
  require_ready(service);
  err << "serving " << service.model_version() << " on http://" << cfg.host << ":" << cfg.port << "\n";
  service.listen();
  return kExitOk;
}

int cmd_embed_cache(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto& dir = require(cfg.audio_dir, "--audio-dir");
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
  }
  if (ec) fail(ErrorCode::IoError, "cannot list " + dir.string() + ": " + ec.message());
  if (files.empty()) fail(ErrorCode::EmptyDataset, "no .wav files in " + dir.string());
  std::sort(files.begin(), files.end());

  const RecordingEmbedder embedder(cfg.front_end, make_backend(cfg, cfg.backend, std::nullopt));
  err << "embedding " << files.size() << " recordings with " << embedder.backend().id() << "\n";
  std::vector<Embedding> records;
  for (const auto& f : files) records.push_back(embedder.embed_file(f));
  const auto path = output_path(cfg, ".vxem");
  write_embedding_file(path, records);
  out << "archive: " << path.string() << " (" << records.size() << " x " << embedder.backend().dim() << ")\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::map<std::string, std::string>& env) {
  CLI::App app{"Respiratory sound classification: train, evaluate, ablate, predict and serve."};
  app.name("voxmed");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  FlagSet train_f, eval_f, ablate_f, predict_f, serve_f, cache_f;
  bool eval_all = false;

  auto* train_cmd = app.add_subcommand("train", "Embed a labelled corpus, train the classifier, write model and history");
  add_common(train_cmd, train_f);
  add_data(train_cmd, train_f);
  add_output(train_cmd, train_f);
  train_f.bind(train_cmd, "--epochs", "train.max_epochs", "epoch limit");

  auto* eval_cmd = app.add_subcommand("eval", "Score a model on the held-out split (or every item) and write a report");
  add_common(eval_cmd, eval_f);
  add_data(eval_cmd, eval_f);
  add_output(eval_cmd, eval_f);
  eval_f.bind(eval_cmd, "--model", "model", "classifier model file");
  eval_cmd->add_flag("--all", eval_all, "evaluate every item instead of the held-out split");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score one model per backend and label scheme");
  add_common(ablate_cmd, ablate_f);
  add_data(ablate_cmd, ablate_f);
  add_output(ablate_cmd, ablate_f);
  ablate_f.bind(ablate_cmd, "--backends", "ablate.backends", "comma list of kind[:path]");
  ablate_f.bind(ablate_cmd, "--schemes", "ablate.schemes", "comma list of scheme ids");
  ablate_f.bind(ablate_cmd, "--epochs", "train.max_epochs", "epoch limit");

  auto* predict_cmd = app.add_subcommand("predict", "Classify one recording and print the result as JSON");
  add_common(predict_cmd, predict_f);
  predict_f.bind(predict_cmd, "--model", "model", "classifier model file");
  predict_f.bind(predict_cmd, "--input", "input", "WAV file to classify");
  predict_f.bind(predict_cmd, "--info-url", "service.info_url", "external disease-information endpoint");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP prediction service");
  add_common(serve_cmd, serve_f);
  serve_f.bind(serve_cmd, "--model", "model", "classifier model file");
  serve_f.bind(serve_cmd, "--host", "service.host", "listen address");
  serve_f.bind(serve_cmd, "--port", "service.port", "listen port");
  serve_f.bind(serve_cmd, "--info-url", "service.info_url", "external disease-information endpoint");

  auto* cache_cmd = app.add_subcommand("embed-cache", "Write an embedding archive for every recording in a directory");
  add_common(cache_cmd, cache_f);
  cache_f.bind(cache_cmd, "--audio-dir", "data.audio_dir", "directory with recordings");
  add_output(cache_cmd, cache_f);

  if (!args.empty() && !args.front().empty() && args.front()[0] != '-' &&
      app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "unknown subcommand '" << args.front() << "'\n\n" << app.help();
    return kExitUsage;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(resolve(train_f, env), out, err);
    if (*eval_cmd) return cmd_eval(resolve(eval_f, env), eval_all, out, err);
    if (*ablate_cmd) return cmd_ablate(resolve(ablate_f, env), out, err);
    if (*predict_cmd) return cmd_predict(resolve(predict_f, env), out);
    if (*serve_cmd) return cmd_serve(resolve(serve_f, env), err);
    if (*cache_cmd) return cmd_embed_cache(resolve(cache_f, env), out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const BootFailed& e) {
    err << "error: " << e.message << "\n";
    return exit_code_for(e.code);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr, process_environment());
}

}  // namespace voxmed

// One PASS/FAIL line per acceptance criterion. Tolerances and time budgets
// are fixed here; the process exits nonzero when any criterion fails.

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "fixtures.hpp"
#include "local_server.hpp"
#include "oracles.hpp"
#include "voxmed/cli.hpp"
#include "voxmed/error.hpp"
#include "voxmed/evaluation.hpp"
#include "voxmed/service_api.hpp"

using namespace voxmed;
using namespace voxmed::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> check;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::vector<LabelScheme> standard_schemes() {
  std::vector<LabelScheme> out;
  for (const auto& id : standard_scheme_ids()) out.push_back(resolve_label_scheme(id, default_schemes_dir()));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Accuracy and macro F1 against the pairwise recount, K <= 6, n <= 200.
Outcome metric_oracle() {
  constexpr double kTol = 1e-12;
  Rng rng(1000);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(6);
    const std::size_t n = 1 + rng.below(200);
    std::vector<std::size_t> truth(n), pred(n);
    const double agreement = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = rng.below(k);
      pred[i] = rng.uniform() < agreement ? truth[i] : rng.below(k);
    }
    const auto cm = confusion_matrix(truth, pred, k);
    const auto ref = oracle::metrics_from_pairs(truth, pred, k);
    worst = std::max({worst, std::abs(accuracy(cm) - ref.accuracy), std::abs(macro_f1(cm) - ref.macro_f1)});
  }
  return {worst <= kTol, "1000 instances, max |diff| " + fmt(worst) + " (tol 1e-12)"};
}

// Toy default stack at D=16, dropout active, every tensor, 20 seeds.
Outcome gradient_check() {
  constexpr double kTol = 1e-4;
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto params = init_params(toy_default_arch(16, 3), seed);
    Rng rng(derive_seed(seed, "gradient-batch"));
    std::vector<Example> batch(4);
    std::vector<std::uint64_t> dropout_seeds;
    for (auto& ex : batch) {
      ex.label = rng.below(3);
      for (int i = 0; i < 16; ++i) ex.embedding.push_back(static_cast<float>(rng.normal()));
      dropout_seeds.push_back(rng.next());
    }
    const auto analytic = backward(params, batch, true, dropout_seeds).gradients;
    const auto numeric = oracle::numeric_gradient(params, batch, true, dropout_seeds);
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
      for (std::size_t j = 0; j < params.tensors[t].data.size(); ++j) {
        const double e = oracle::relative_error(analytic.tensors[t].data[j], numeric.tensors[t].data[j]);
        if (e > worst) {
          worst = e;
          where = "seed " + std::to_string(seed) + " tensor " + std::to_string(t);
        }
      }
    }
  }
  return {worst < kTol, "20 seeds, max relative error " + fmt(worst) + " at " + where + " (tol 1e-4)"};
}

Outcome adam_closed_form() {
  TrainConfig cfg;
  auto params = init_params(toy_default_arch(16, 3), 3);
  const auto before = params;
  auto grads = params.zeros_like();
  Rng rng(77);
  for (auto& t : grads.tensors) {
    for (auto& g : t.data) g = rng.normal() * std::pow(10.0, rng.uniform(-4.0, 1.0));
  }
  auto state = AdamState::zeros_like(params);
  adam_step(params, grads, state, cfg);
  double first_worst = 0.0;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    for (std::size_t j = 0; j < params.tensors[t].data.size(); ++j) {
      const double g = grads.tensors[t].data[j];
      const double expected = -cfg.learning_rate * g / (std::abs(g) + cfg.epsilon);
      first_worst = std::max(first_worst, std::abs(params.tensors[t].data[j] - before.tensors[t].data[j] - expected));
    }
  }

  // Two steps against the hand-unrolled recurrence.
  auto p2 = init_params(toy_default_arch(16, 3), 4);
  std::vector<double> flat;
  for (const auto& t : p2.tensors) flat.insert(flat.end(), t.data.begin(), t.data.end());
  std::vector<std::vector<double>> flat_grads(2);
  std::vector<ModelParams> g2(2, p2.zeros_like());
  for (int s = 0; s < 2; ++s) {
    for (auto& t : g2[s].tensors) {
      for (auto& g : t.data) {
        g = rng.normal() * 0.1;
        flat_grads[s].push_back(g);
      }
    }
  }
  const auto trace = oracle::adam_reference(flat, flat_grads, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  auto s2 = AdamState::zeros_like(p2);
  double trace_worst = 0.0;
  for (int s = 0; s < 2; ++s) {
    adam_step(p2, g2[s], s2, cfg);
    std::size_t i = 0;
    for (const auto& t : p2.tensors) {
      for (const double v : t.data) trace_worst = std::max(trace_worst, std::abs(v - trace.params_after_step[s][i++]));
    }
  }
  const bool pass = first_worst <= 1e-6 * cfg.learning_rate && trace_worst <= 1e-12;
  return {pass, "first step max |diff| " + fmt(first_worst) + " (tol 1e-9), two-step trace max |diff| " +
                    fmt(trace_worst) + " (tol 1e-12)"};
}

Outcome deterministic_training() {
  TempDir dir;
  const auto data = separable_dataset(50, 32, 0.3, 21);
  TrainConfig cfg;
  cfg.max_epochs = 40;
  cfg.seed = 99;
  save_params(train(data.examples, small_arch(32, 3), cfg).params, dir / "a.vxmd");
  save_params(train(data.examples, small_arch(32, 3), cfg).params, dir / "b.vxmd");
  const bool library_same = slurp(dir / "a.vxmd") == slurp(dir / "b.vxmd");

  // Same through the command line on the mini corpus.
  std::ostringstream out, err;
  const std::vector<std::string> common{"--seed", "7", "--audio-dir", mini_corpus_audio().string(), "--diagnoses",
                                        mini_corpus_diagnoses().string(), "--out-dir", dir.path().string(),
                                        "--embedding-dim", "32", "--set", "arch.layers=16:3,8:3:pool", "--set",
                                        "frontend.target_frames=100", "--epochs", "20"};
  auto args = [&](const std::string& run) {
    std::vector<std::string> a{"train", "--run-name", run};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  const int rc1 = run_cli(args("c1"), out, err, {});
  const int rc2 = run_cli(args("c2"), out, err, {});
  const bool cli_same = rc1 == 0 && rc2 == 0 && slurp(dir / "c1.vxmd") == slurp(dir / "c2.vxmd");
  return {library_same && cli_same, std::string("synthetic set: ") + (library_same ? "identical" : "DIFFERENT") +
                                        ", cli on mini corpus: " + (cli_same ? "identical" : "DIFFERENT")};
}

Outcome synthetic_learnability() {
  const auto data = separable_dataset(100, 32, 0.3, 5);
  TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.seed = 5;
  const auto result = train(data.examples, small_arch(32, 3), cfg);
  std::size_t correct = 0;
  for (const auto i : result.split.test) {
    correct += forward(result.params, data.examples[i].embedding).label_index == data.examples[i].label;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(result.split.test.size());
  return {acc >= 0.95, std::to_string(data.examples.size()) + " points, held-out accuracy " + fmt(acc) + " on " +
                           std::to_string(result.split.test.size()) + " after " +
                           std::to_string(result.history.epochs.size()) + " epochs (need >= 0.95 within 200)"};
}

Outcome dsp() {
  const MelConfig cfg;
  const auto tone = log_mel_spectrogram(sine_clip(440.0, 1.0, 16000), cfg);
  const auto silence = log_mel_spectrogram(constant_clip(0.0f, 16000, 16000), cfg);
  bool floor = true;
  for (const double v : silence.values) floor = floor && v == cfg.log_floor;
  const auto resampled = resample(sine_clip(440.0, 1.0, 44100), 16000);
  const double peak = oracle::dft_peak_hz(resampled.channels[0], resampled.sample_rate);
  const bool pass = tone.frames == 98 && floor && std::abs(peak - 440.0) <= 1.0;
  return {pass, std::to_string(tone.frames) + " frames (need 98), silence " + (floor ? "all floor" : "NOT floor") +
                    ", resampled peak " + fmt(peak, 6) + " Hz (need 440 +- 1)"};
}

Outcome parser_fuzz() {
  const Bytes seed = fuzz_seed_wav();
  Rng rng(424242);
  std::size_t typed = 0, accepted = 0, untyped = 0;
  for (int i = 0; i < 10000; ++i) {
    try {
      parse_wav(mutate_wav(seed, rng));
      ++accepted;
    } catch (const Error&) {
      ++typed;
    } catch (...) {
      ++untyped;
    }
  }
  return {untyped == 0, "10000 mutated files: " + std::to_string(typed) + " typed errors, " +
                            std::to_string(accepted) + " accepted, " + std::to_string(untyped) + " untyped"};
}

Outcome service_contract() {
  TempDir dir;
  const auto data = separable_dataset(20, 32, 0.3, 9);
  TrainConfig tc;
  tc.max_epochs = 60;
  save_params(train(data.examples, small_arch(32, 3), tc).params, dir / "model.vxmd");
  ServiceConfig cfg;
  cfg.model_path = dir / "model.vxmd";
  cfg.front_end = small_front_end();
  cfg.scheme = resolve_label_scheme("healthy-copd-others", default_schemes_dir());
  Service service(cfg);
  service.boot();
  if (service.state() != Service::State::Ready) return {false, "boot failed: " + service.boot_error()};
  LocalServer http;
  service.register_routes(http.server);
  http.start();

  // Fuzz: structurally damaged WAVs plus non-WAV payloads. Every reply is
  // either 4xx, or 200 for a file the decoder itself accepts.
  const RecordingEmbedder local(cfg.front_end, load_backend([&] {
    BackendConfig bc;
    bc.embedding_dim = 32;
    bind_front_end(bc, cfg.front_end);
    return bc;
  }()));
  Rng rng(8080);
  const Bytes seed = fuzz_seed_wav();
  std::size_t client_errors = 0, ok_valid = 0, violations = 0;
  std::string first_violation;
  auto client = http.client();
  for (int i = 0; i < 400; ++i) {
    Bytes body;
    if (i % 10 == 9) {
      body.resize(rng.below(2000));
      for (auto& b : body) b = static_cast<std::uint8_t>(rng.below(256));
    } else {
      body = mutate_wav(seed, rng);
    }
    const std::string payload(body.begin(), body.end());
    auto res = client.Post("/api/v1/predict", httplib::MultipartFormDataItems{{"audio", payload, "x.wav", "audio/wav"}});
    bool locally_valid = true;
    try {
      local.embed_bytes(body);
    } catch (const Error&) {
      locally_valid = false;
    }
    const int status = res ? res->status : 0;
    if (status / 100 == 4 && !locally_valid) {
      ++client_errors;
    } else if (status == 200 && locally_valid) {
      ++ok_valid;
    } else {
      ++violations;
      if (first_violation.empty()) first_violation = "case " + std::to_string(i) + " status " + std::to_string(status);
    }
  }
  const std::string wav_text = [] {
    const Bytes b = encode_wav(sine_clip(1000, 1, 16000));
    return std::string(b.begin(), b.end());
  }();
  auto wrong_field = client.Post("/api/v1/predict", httplib::MultipartFormDataItems{{"file", wav_text, "x.wav", "audio/wav"}});
  auto oversized = client.Post("/api/v1/predict", httplib::MultipartFormDataItems{
                                                      {"audio", std::string(kMaxUploadBytes + 1, 'x'), "x.wav", "audio/wav"}});
  const bool edge_ok = wrong_field && wrong_field->status == 400 && oversized && oversized->status == 413;

  // 32 concurrent identical uploads.
  std::vector<std::future<std::optional<std::vector<double>>>> replies;
  for (int i = 0; i < 32; ++i) {
    replies.push_back(std::async(std::launch::async, [&]() -> std::optional<std::vector<double>> {
      auto c = http.client();
      auto res = c.Post("/api/v1/predict", httplib::MultipartFormDataItems{{"audio", wav_text, "x.wav", "audio/wav"}});
      if (!res || res->status != 200) return std::nullopt;
      const auto doc = nlohmann::json::parse(res->body);
      std::vector<double> probs;
      for (const auto& [k, p] : doc["probabilities"].items()) probs.push_back(p.get<double>());
      return probs;
    }));
  }
  std::optional<std::vector<double>> reference;
  bool identical = true;
  double worst_sum = 0.0;
  for (auto& f : replies) {
    const auto probs = f.get();
    if (!probs) {
      identical = false;
      continue;
    }
    if (!reference) reference = probs;
    identical = identical && *probs == *reference;
    double sum = 0.0;
    for (const double p : *probs) sum += p;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  const bool pass = violations == 0 && edge_ok && identical && worst_sum <= 1e-6;
  return {pass, "fuzz 400 uploads: " + std::to_string(client_errors) + " 4xx, " + std::to_string(ok_valid) +
                    " 200 on decodable files, " + std::to_string(violations) + " violations" +
                    (first_violation.empty() ? "" : " (" + first_violation + ")") +
                    "; missing field/oversize " + (edge_ok ? "400/413" : "WRONG") + "; 32 concurrent " +
                    (identical ? "bit-identical" : "NOT identical") + ", max |sum-1| " + fmt(worst_sum)};
}

// Numeric targets need the licensed corpus and an embedding archive from a
// pretrained spectrogram transformer. Without them only the grid shape is checked.
Outcome ablation_grid() {
  const auto audio = env("VOXMED_ICBHI_AUDIO_DIR");
  const auto diagnoses = env("VOXMED_ICBHI_DIAGNOSES");
  const auto archive = env("VOXMED_AST_ARCHIVE");
  const auto schemes = standard_schemes();

  if (audio && diagnoses && archive) {
    const auto bytes = read_file(*archive);
    ByteReader r(bytes, ErrorCode::FormatError);
    if (r.tag() != "VXEM") return {false, *archive + " is not an embedding archive"};
    r.u16();
    BackendConfig bc;
    bc.kind = BackendKind::Cache;
    bc.model_path = *archive;
    bc.embedding_dim = r.u32();
    AblationConfig ac;
    bind_front_end(bc, ac.front_end);
    ac.arch = ArchSpec::defaults(bc.embedding_dim, 3);
    const auto grid = run_ablation({{"AST", load_backend(bc)}}, schemes, *audio, *diagnoses, ac);
    struct Target {
      double acc, acc_tol;
      std::optional<double> f1;
      double f1_tol;
    };
    const Target targets[] = {{0.90, 0.05, 0.70, 0.10}, {0.85, 0.05, std::nullopt, 0.0}, {0.90, 0.05, 0.67, 0.10}};
    bool pass = grid.cells.size() == 3;
    std::string detail;
    for (std::size_t i = 0; i < grid.cells.size() && i < 3; ++i) {
      const auto& c = grid.cells[i];
      if (!c.report) {
        pass = false;
        detail += c.scheme + ": failed (" + c.error + "); ";
        continue;
      }
      const bool acc_ok = std::abs(c.report->accuracy - targets[i].acc) <= targets[i].acc_tol;
      const bool f1_ok = !targets[i].f1 || std::abs(c.report->macro_f1 - *targets[i].f1) <= targets[i].f1_tol;
      pass = pass && acc_ok && f1_ok;
      detail += c.scheme + ": acc " + fmt(c.report->accuracy) + " F1 " + fmt(c.report->macro_f1) + "; ";
    }
    return {pass, detail};
  }

  // Shape only: 3 schemes x 2 backends on the mini corpus.
  TempDir dir;
  const auto fe = small_front_end();
  write_linear_encoder(dir / "encoder.vxtm", random_linear_encoder(static_cast<std::uint32_t>(fe.target_frames),
                                                                   static_cast<std::uint32_t>(fe.mel.n_mels), 10, 32, 3));
  BackendConfig det;
  det.embedding_dim = 32;
  bind_front_end(det, fe);
  BackendConfig ext = det;
  ext.kind = BackendKind::ExternalModel;
  ext.model_path = dir / "encoder.vxtm";
  AblationConfig ac;
  ac.front_end = fe;
  ac.arch = small_arch(32, 3);
  ac.train.max_epochs = 20;
  const auto grid = run_ablation({{"deterministic_test", load_backend(det)}, {"external_model", load_backend(ext)}},
                                 schemes, mini_corpus_audio(), mini_corpus_diagnoses(), ac);
  const auto table = grid.to_table();
  bool shape = grid.cells.size() == 6 && table.find("Accuracy") != std::string::npos &&
               table.find("F1") != std::string::npos;
  for (const auto& c : grid.cells) shape = shape && c.report.has_value();
  for (const auto& s : schemes) shape = shape && table.find(s.name) != std::string::npos;
  return {shape, std::string("grid shape 3 schemes x 2 backends with Accuracy and F1 columns ") +
                     (shape ? "ok" : "BROKEN") +
                     "; numeric targets not evaluated (set VOXMED_ICBHI_AUDIO_DIR, VOXMED_ICBHI_DIAGNOSES, "
                     "VOXMED_AST_ARCHIVE)"};
}

Outcome dataset_ingestion() {
  const std::vector<std::vector<std::size_t>> expected{{2, 4, 6}, {2, 4, 1, 5}, {2, 4, 1, 1, 2}};
  const auto schemes = standard_schemes();
  bool pass = load_diagnoses(mini_corpus_diagnoses()).size() == 10;
  std::string detail = "mini corpus:";
  for (std::size_t s = 0; s < 3; ++s) {
    const auto ds = build_dataset(mini_corpus_audio(), mini_corpus_diagnoses(), schemes[s]);
    pass = pass && ds.class_counts == expected[s];
    detail += " " + std::to_string(ds.items.size());
  }
  detail += " items per scheme (need 12 12 10), 10 patients";
  const auto audio = env("VOXMED_ICBHI_AUDIO_DIR");
  const auto diagnoses = env("VOXMED_ICBHI_DIAGNOSES");
  if (audio && diagnoses) {
    const auto items = build_dataset(*audio, *diagnoses, schemes[0]).items.size();
    const auto patients = load_diagnoses(*diagnoses).size();
    pass = pass && items == 920 && patients == 126;
    detail += "; full corpus " + std::to_string(items) + " recordings, " + std::to_string(patients) +
              " patients (need 920, 126)";
  } else {
    detail += "; full corpus not supplied";
  }
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"metric_oracle", 10.0, metric_oracle},
      {"gradient_check", 60.0, gradient_check},
      {"adam_closed_form", 1.0, adam_closed_form},
      {"deterministic_training", 120.0, deterministic_training},
      {"synthetic_learnability", 300.0, synthetic_learnability},
      {"dsp", 60.0, dsp},
      {"parser_fuzz", 120.0, parser_fuzz},
      {"service_contract", 300.0, service_contract},
      {"ablation_grid", 900.0, ablation_grid},
      {"dataset_ingestion", 60.0, dataset_ingestion},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(24) << c.name << std::right << std::fixed
              << std::setprecision(2) << std::setw(8) << secs << "s  " << o.detail
              << (in_budget ? "" : " [over " + fmt(c.budget_s) + " s budget]") << std::endl;
    std::cout.unsetf(std::ios::fixed);
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}

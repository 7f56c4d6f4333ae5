#include "voxmed/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <iomanip>
#include <map>
#include <sstream>

#include "voxmed/error.hpp"
#include "voxmed/random.hpp"

namespace voxmed {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto c : counts) n += c;
  return n;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < k; ++i) n += at(i, i);
  return n;
}

std::uint64_t ConfusionMatrix::true_count(std::size_t c) const {
  std::uint64_t n = 0;
  for (std::size_t j = 0; j < k; ++j) n += at(c, j);
  return n;
}

std::uint64_t ConfusionMatrix::predicted_count(std::size_t c) const {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < k; ++i) n += at(i, c);
  return n;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 std::size_t k) {
  if (truth.size() != predicted.size()) {
    fail(ErrorCode::ShapeMismatch, std::to_string(truth.size()) + " true labels vs " +
                                       std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm{k, std::vector<std::uint64_t>(k * k, 0)};
  for (std::size_t n = 0; n < truth.size(); ++n) {
    if (truth[n] >= k || predicted[n] >= k) {
      fail(ErrorCode::LabelOutOfRange, "label pair (" + std::to_string(truth[n]) + ", " +
                                           std::to_string(predicted[n]) + ") outside K=" + std::to_string(k));
    }
    cm.counts[truth[n] * k + predicted[n]] += 1;
  }
  return cm;
}

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.total() == 0) fail(ErrorCode::EmptyMatrix, "no evaluated items");
}

struct Prf {
  double precision, recall, f1;
};

Prf class_prf(const ConfusionMatrix& cm, std::size_t c) {
  const auto tp = static_cast<double>(cm.at(c, c));
  const auto n_pred = cm.predicted_count(c);
  const auto n_true = cm.true_count(c);
  const double p = n_pred > 0 ? tp / static_cast<double>(n_pred) : 0.0;
  const double r = n_true > 0 ? tp / static_cast<double>(n_true) : 0.0;
  const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  return {p, r, f};
}

}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

double macro_f1(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < cm.k; ++c) {
    if (cm.true_count(c) == 0 && cm.predicted_count(c) == 0) continue;
    sum += class_prf(cm, c).f1;
    ++present;
  }
  return sum / static_cast<double>(present);
}

double weighted_f1(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0.0;
  for (std::size_t c = 0; c < cm.k; ++c) sum += static_cast<double>(cm.true_count(c)) * class_prf(cm, c).f1;
  return sum / static_cast<double>(cm.total());
}

EvaluationReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                             std::string scheme, std::string backend_id) {
  if (class_names.size() != cm.k) fail(ErrorCode::ShapeMismatch, "class names do not match matrix size");
  EvaluationReport r;
  r.confusion = cm;
  r.accuracy = accuracy(cm);
  r.macro_f1 = macro_f1(cm);
  r.weighted_f1 = weighted_f1(cm);
  r.scheme = std::move(scheme);
  r.backend_id = std::move(backend_id);
  r.item_count = cm.total();
  for (std::size_t c = 0; c < cm.k; ++c) {
    const auto m = class_prf(cm, c);
    r.per_class.push_back({class_names[c], m.precision, m.recall, m.f1, cm.true_count(c)});
  }
  return r;
}

std::string EvaluationReport::to_text() const {
  std::ostringstream out;
  out << "scheme:      " << scheme << "\n"
      << "backend:     " << backend_id << "\n"
      << "items:       " << item_count << "\n"
      << std::fixed << std::setprecision(4) << "accuracy:    " << accuracy << "\n"
      << "macro F1:    " << macro_f1 << "\n"
      << "weighted F1: " << weighted_f1 << "\n\n";
  std::size_t width = 5;
  for (const auto& c : per_class) width = std::max(width, c.name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "class" << "  precision  recall     f1  support\n";
  for (const auto& c : per_class) {
    out << std::left << std::setw(static_cast<int>(width)) << c.name << std::right << "  " << std::setw(9) << c.precision
        << "  " << std::setw(6) << c.recall << "  " << std::setw(5) << c.f1 << "  " << std::setw(7) << c.support << "\n";
  }
  out << "\nconfusion (rows = true, cols = predicted):\n";
  for (std::size_t i = 0; i < confusion.k; ++i) {
    for (std::size_t j = 0; j < confusion.k; ++j) out << std::setw(6) << confusion.at(i, j);
    out << "   " << per_class[i].name << "\n";
  }
  return out.str();
}

void EvaluationReport::write_csv(std::ostream& out) const {
  char buf[512];
  out << "backend,scheme,row,accuracy,macro_f1,weighted_f1,precision,recall,f1,support\n";
  std::snprintf(buf, sizeof buf, "%s,%s,overall,%.6f,%.6f,%.6f,,,,%zu\n", backend_id.c_str(), scheme.c_str(), accuracy,
                macro_f1, weighted_f1, item_count);
  out << buf;
  for (const auto& c : per_class) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,,,,%.6f,%.6f,%.6f,%llu\n", backend_id.c_str(), scheme.c_str(),
                  c.name.c_str(), c.precision, c.recall, c.f1, static_cast<unsigned long long>(c.support));
    out << buf;
  }
}

EvaluationReport evaluate(const ModelParams& params, std::span<const Example> slice, const LabelScheme& scheme,
                          const std::string& backend_id) {
  if (slice.empty()) fail(ErrorCode::EmptyInput, "nothing to evaluate");
  if (params.arch.num_classes != scheme.classes.size()) {
    fail(ErrorCode::ShapeMismatch, "model has " + std::to_string(params.arch.num_classes) + " outputs, scheme '" +
                                       scheme.id + "' has " + std::to_string(scheme.classes.size()) + " classes");
  }
  std::vector<std::size_t> truth, predicted;
  for (const auto& ex : slice) {
    Embedding e;
    e.values = ex.embedding;
    const std::vector<Embedding> one{std::move(e)};
    truth.push_back(ex.label);
    predicted.push_back(predict_recording(params, one).label_index);
  }
  return make_report(confusion_matrix(truth, predicted, scheme.classes.size()), scheme.classes, scheme.name,
                     backend_id);
}

EvaluationReport evaluate(const ModelParams& params, const LabeledDataset& ds, std::span<const std::size_t> indices,
                          const RecordingEmbedder& embedder) {
  std::vector<Example> slice;
  for (const auto i : indices) {
    const auto& item = ds.items.at(i);
    slice.push_back(Example{embedder.embed_file(item.meta.file_path).values, item.label, item.meta.patient_id});
  }
  return evaluate(params, slice, ds.scheme, embedder.backend().id());
}

namespace {

AblationCell run_cell(const std::string& backend_name, const std::string& backend_id, std::size_t dim,
                      const LabeledDataset& ds, const std::vector<Example>& examples, const AblationConfig& cfg) {
  AblationCell cell{backend_name, ds.scheme.name, std::nullopt, {}};
  try {
    std::vector<std::size_t> labels;
    std::vector<std::int64_t> groups;
    for (const auto& ex : examples) {
      labels.push_back(ex.label);
      groups.push_back(ex.group);
    }
    const Split split = split_dataset(labels, cfg.train.split_ratio, derive_seed(cfg.seed, "split|" + ds.scheme.id),
                                      cfg.train.stratified,
                                      cfg.train.group_by_patient ? std::span<const std::int64_t>(groups)
                                                                 : std::span<const std::int64_t>());
    std::vector<Example> train_part, test_part;
    for (const auto i : split.train) train_part.push_back(examples[i]);
    for (const auto i : split.test) test_part.push_back(examples[i]);

    ArchSpec arch = cfg.arch;
    arch.input_dim = dim;
    arch.num_classes = ds.scheme.classes.size();
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "train|" + backend_name + "|" + ds.scheme.id);
    const auto trained = train(train_part, test_part, arch, tc);
    cell.report = evaluate(trained.params, test_part, ds.scheme, backend_id);
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

}  // namespace

AblationGrid run_ablation(const std::vector<AblationBackend>& backends, const std::vector<LabelScheme>& schemes,
                          const std::filesystem::path& audio_dir, const std::filesystem::path& diagnoses,
                          const AblationConfig& cfg) {
  struct SchemeData {
    std::optional<LabeledDataset> ds;
    std::string error;
  };
  std::vector<SchemeData> datasets;
  for (const auto& scheme : schemes) {
    SchemeData d;
    try {
      d.ds = build_dataset(audio_dir, diagnoses, scheme);
    } catch (const std::exception& e) {
      d.error = e.what();
    }
    datasets.push_back(std::move(d));
  }

  // Embeddings per backend, shared by all schemes.
  std::vector<std::map<std::string, Embedding>> by_path(backends.size());
  std::vector<std::string> backend_error(backends.size());
  for (std::size_t b = 0; b < backends.size(); ++b) {
    try {
      const RecordingEmbedder embedder(cfg.front_end, backends[b].backend);
      for (const auto& d : datasets) {
        if (!d.ds) continue;
        LabeledDataset missing;
        missing.scheme = d.ds->scheme;
        for (const auto& item : d.ds->items) {
          if (!by_path[b].count(item.meta.file_path.string())) missing.items.push_back(item);
        }
        const auto embs = embed_dataset(missing, embedder);
        for (std::size_t i = 0; i < embs.size(); ++i) by_path[b][missing.items[i].meta.file_path.string()] = embs[i];
      }
    } catch (const std::exception& e) {
      backend_error[b] = e.what();
    }
  }

  AblationGrid grid;
  std::vector<std::future<AblationCell>> pending;
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    for (std::size_t b = 0; b < backends.size(); ++b) {
      const std::string& name = backends[b].name;
      if (!datasets[s].ds || !backend_error[b].empty()) {
        grid.cells.push_back({name, schemes[s].name, std::nullopt,
                              !datasets[s].ds ? datasets[s].error : backend_error[b]});
        continue;
      }
      const LabeledDataset& ds = *datasets[s].ds;
      std::vector<Example> examples;
      for (const auto& item : ds.items) {
        examples.push_back({by_path[b].at(item.meta.file_path.string()).values, item.label, item.meta.patient_id});
      }
      auto job = [&, name, examples = std::move(examples), b] {
        return run_cell(name, backends[b].backend->id(), backends[b].backend->dim(), ds, examples, cfg);
      };
      if (cfg.parallel_cells) {
        grid.cells.push_back({});
        pending.push_back(std::async(std::launch::async, std::move(job)));
      } else {
        grid.cells.push_back(job());
      }
    }
  }
  if (cfg.parallel_cells) {
    std::size_t next = 0;
    for (auto& cell : grid.cells) {
      if (cell.backend.empty() && next < pending.size()) cell = pending[next++].get();
    }
  }
  return grid;
}

std::string AblationGrid::to_table() const {
  std::size_t width = 6;
  for (const auto& c : cells) width = std::max(width, c.backend.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "Models" << "  Accuracy  F1\n";
  std::string current;
  for (const auto& c : cells) {
    if (c.scheme != current) {
      current = c.scheme;
      out << current << "\n";
    }
    out << std::left << std::setw(static_cast<int>(width)) << c.backend << "  ";
    if (c.report) {
      out << std::fixed << std::setprecision(2) << std::setw(8) << c.report->accuracy << "  " << c.report->macro_f1
          << "\n";
    } else {
      out << "failed: " << c.error << "\n";
    }
  }
  return out.str();
}

std::vector<AblationRow> ablation_rows(const AblationGrid& grid) {
  std::vector<AblationRow> rows;
  for (const auto& c : grid.cells) {
    AblationRow r{c.backend, c.scheme, 0.0, 0.0, 0.0, 0, c.error};
    if (c.report) {
      r.accuracy = c.report->accuracy;
      r.macro_f1 = c.report->macro_f1;
      r.weighted_f1 = c.report->weighted_f1;
      r.items = c.report->item_count;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {
std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}
}  // namespace

void write_ablation_csv(std::span<const AblationRow> rows, std::ostream& out) {
  out << "backend,scheme,accuracy,macro_f1,weighted_f1,items,error\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%zu,", r.accuracy, r.macro_f1, r.weighted_f1, r.items);
    out << csv_safe(r.backend) << ',' << csv_safe(r.scheme) << ',' << buf << csv_safe(r.error) << '\n';
  }
}

std::vector<AblationRow> read_ablation_csv(std::istream& in) {
  std::vector<AblationRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 7) fail(ErrorCode::ParseError, "ablation CSV line " + std::to_string(line_no) + " has " +
                                                       std::to_string(f.size()) + " fields");
    try {
      rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                      static_cast<std::size_t>(std::stoull(f[5])), f[6]});
    } catch (const std::logic_error&) {
      fail(ErrorCode::ParseError, "ablation CSV line " + std::to_string(line_no) + " has a bad number");
    }
  }
  return rows;
}

}  // namespace voxmed

#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "voxmed/classifier.hpp"
#include "voxmed/dataset_icbhi.hpp"
#include "voxmed/pipeline.hpp"
#include "voxmed/training.hpp"

namespace voxmed {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * k + predicted]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t true_count(std::size_t c) const;
  std::uint64_t predicted_count(std::size_t c) const;
};

// Throws ShapeMismatch, LabelOutOfRange.
ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 std::size_t k);

// All three throw EmptyMatrix on an empty matrix.
double accuracy(const ConfusionMatrix& cm);
// Unweighted mean of per-class F1 over classes that occur in truth or in
// predictions. Precision (recall) is 0 for a class never predicted (never
// true); F1 is 0 when both are 0.
double macro_f1(const ConfusionMatrix& cm);
// Support-weighted mean of per-class F1.
double weighted_f1(const ConfusionMatrix& cm);

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct EvaluationReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::string scheme;
  std::string backend_id;
  std::size_t item_count = 0;

  std::string to_text() const;
  // backend,scheme,row,accuracy,macro_f1,weighted_f1,precision,recall,f1,support
  void write_csv(std::ostream& out) const;
};

EvaluationReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                             std::string scheme, std::string backend_id);

// Predicts every example (one embedding per recording) and scores it.
EvaluationReport evaluate(const ModelParams& params, std::span<const Example> slice, const LabelScheme& scheme,
                          const std::string& backend_id);

// Embeds the selected dataset items through the pipeline, then scores them.
EvaluationReport evaluate(const ModelParams& params, const LabeledDataset& ds, std::span<const std::size_t> indices,
                          const RecordingEmbedder& embedder);

struct AblationBackend {
  std::string name;  // row label
  std::shared_ptr<const Backend> backend;
};

struct AblationConfig {
  FrontEndConfig front_end;
  ArchSpec arch;  // input_dim and num_classes are set per cell
  TrainConfig train;
  std::uint64_t seed = 0;
  bool parallel_cells = false;
};

struct AblationCell {
  std::string backend;
  std::string scheme;
  std::optional<EvaluationReport> report;
  std::string error;  // set when the cell failed
};

struct AblationGrid {
  std::vector<AblationCell> cells;  // scheme-major, backends in the order given

  // Grouped by scheme, one row per backend with Accuracy and F1.
  std::string to_table() const;
};

// One model per (backend, scheme) cell, trained on the 80% split and scored on
// the rest. The split depends only on (seed, scheme), so every backend sees
// the same recordings; training randomness is derived from (seed, backend,
// scheme). A failing cell records its error and the grid is still returned.
AblationGrid run_ablation(const std::vector<AblationBackend>& backends, const std::vector<LabelScheme>& schemes,
                          const std::filesystem::path& audio_dir, const std::filesystem::path& diagnoses,
                          const AblationConfig& cfg);

struct AblationRow {
  std::string backend;
  std::string scheme;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::size_t items = 0;
  std::string error;

  bool operator==(const AblationRow&) const = default;
};

std::vector<AblationRow> ablation_rows(const AblationGrid& grid);
// backend,scheme,accuracy,macro_f1,weighted_f1,items,error with 6 decimals.
void write_ablation_csv(std::span<const AblationRow> rows, std::ostream& out);
std::vector<AblationRow> read_ablation_csv(std::istream& in);  // throws ParseError

}  // namespace voxmed

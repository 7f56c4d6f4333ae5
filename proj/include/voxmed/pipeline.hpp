#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "voxmed/audio_io.hpp"
#include "voxmed/dataset_icbhi.hpp"
#include "voxmed/dsp_features.hpp"
#include "voxmed/embedding.hpp"
#include "voxmed/training.hpp"

namespace voxmed {

// Everything between uploaded bytes and embedding-backend input.
struct FrontEndConfig {
  MelConfig mel;
  std::size_t target_frames = 1024;
  // Feature standardization, applied before chunking. Defaults are the
  // AudioSet filterbank statistics used by AST-style encoders.
  double feature_mean = -4.2677393;
  double feature_std = 4.5689974;
  double max_duration_s = 120.0;

  void validate() const;  // InvalidConfig
};

// Copies the chunk shape a backend must accept into cfg.
void bind_front_end(BackendConfig& cfg, const FrontEndConfig& front_end);

// parse -> mono -> duration cap -> resample to the front-end rate.
AudioClip decode_canonical(std::span<const std::uint8_t> wav_bytes, const FrontEndConfig& cfg);

// log-mel -> standardize -> fixed-length chunks.
std::vector<FeatureMatrix> prepare_features(const AudioClip& canonical, const FrontEndConfig& cfg);

class RecordingEmbedder {
 public:
  RecordingEmbedder(FrontEndConfig cfg, std::shared_ptr<const Backend> backend);

  // Decoding is skipped for backends that look embeddings up by hash.
  Embedding embed_bytes(std::span<const std::uint8_t> wav_bytes) const;
  Embedding embed_file(const std::filesystem::path& path) const;

  const Backend& backend() const { return *backend_; }
  const FrontEndConfig& front_end() const { return cfg_; }

 private:
  FrontEndConfig cfg_;
  std::shared_ptr<const Backend> backend_;
};

// One embedding per dataset item, in item order. Work is spread over
// `threads` workers; results do not depend on the thread count.
std::vector<Embedding> embed_dataset(const LabeledDataset& ds, const RecordingEmbedder& embedder,
                                     std::size_t threads = 0);

std::vector<Example> make_examples(const LabeledDataset& ds, std::span<const Embedding> embeddings);

}  // namespace voxmed

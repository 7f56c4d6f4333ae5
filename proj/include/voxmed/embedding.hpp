#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxmed/dsp_features.hpp"
#include "voxmed/hash.hpp"

namespace voxmed {

inline constexpr std::size_t kDefaultEmbeddingDim = 768;

// Fixed-length summary of one recording.
struct Embedding {
  std::vector<float> values;
  std::string backend_id;
  ContentHash source_hash{};
};

enum class BackendKind { ExternalModel, Cache, DeterministicTest };
enum class Aggregation { MeanPool, FirstToken };

std::string_view to_string(BackendKind kind);
std::string_view to_string(Aggregation agg);
BackendKind parse_backend_kind(std::string_view s);  // throws InvalidConfig
Aggregation parse_aggregation(std::string_view s);   // throws InvalidConfig

struct BackendConfig {
  BackendKind kind = BackendKind::DeterministicTest;
  // external_model: encoder file. cache: optional embedding archive.
  std::optional<std::filesystem::path> model_path;
  // cache: directory of per-recording files. Other kinds: results are
  // memoized under <cache_dir>/<backend id>/.
  std::optional<std::filesystem::path> cache_dir;
  std::size_t embedding_dim = kDefaultEmbeddingDim;
  Aggregation aggregation = Aggregation::MeanPool;
  // Expected chunk shape.
  std::size_t input_frames = 1024;
  std::size_t n_mels = 128;

  void validate() const;
};

// Backends are immutable after construction and safe to share across threads.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string id() const = 0;
  virtual BackendKind kind() const = 0;
  virtual std::size_t dim() const = 0;
  // False when embeddings come from storage keyed by source hash only.
  virtual bool needs_features() const { return true; }

  // One embedding for a recording: each chunk is reduced over its tokens by
  // the configured aggregation, then chunks are averaged element-wise.
  virtual Embedding embed(std::span<const FeatureMatrix> chunks, const ContentHash& source_hash) const = 0;
};

// Shared implementation for backends that compute from features.
class FeatureBackend : public Backend {
 public:
  std::size_t dim() const override { return dim_; }
  Embedding embed(std::span<const FeatureMatrix> chunks, const ContentHash& source_hash) const final;

 protected:
  FeatureBackend(std::size_t frames, std::size_t n_mels, std::size_t dim, Aggregation agg)
      : frames_(frames), n_mels_(n_mels), dim_(dim), aggregation_(agg) {}

  // Token-aggregated vector of length dim() for one chunk.
  virtual std::vector<double> encode_chunk(const FeatureMatrix& chunk, const ContentHash& source_hash) const = 0;

  Aggregation aggregation() const { return aggregation_; }

 private:
  std::size_t frames_;
  std::size_t n_mels_;
  std::size_t dim_;
  Aggregation aggregation_;
};

// Validates eagerly. Throws ModelFileMissing, ShapeMismatch, InvalidConfig.
std::shared_ptr<const Backend> load_backend(const BackendConfig& cfg);

// Memoizes another backend's results on disk, one file per source hash.
std::shared_ptr<const Backend> with_disk_cache(std::shared_ptr<const Backend> inner, std::filesystem::path dir);

inline Embedding embed(const Backend& backend, std::span<const FeatureMatrix> chunks, const ContentHash& source_hash) {
  return backend.embed(chunks, source_hash);
}

// Embedding archive: "VXEM", u16 version, u32 D, u64 count, then count records
// of (32-byte hash, D x float32), all little-endian.
inline constexpr std::uint16_t kEmbeddingArchiveVersion = 1;

Bytes encode_embedding_archive(std::span<const Embedding> records);
// Throws FormatError, DimMismatch.
std::map<ContentHash, Embedding> decode_embedding_archive(std::span<const std::uint8_t> bytes, std::size_t expected_dim,
                                                          const std::string& backend_id);

void write_embedding_file(const std::filesystem::path& path, std::span<const Embedding> records);
std::map<ContentHash, Embedding> import_embedding_file(const std::filesystem::path& path, std::size_t expected_dim);

// External encoder file ("VXTM"): splits the frames x mels grid into `tokens`
// equal time patches, maps each flattened patch through tanh(W p + b) and
// aggregates the token sequence. Layout: "VXTM", u16 version, u32 frames,
// u32 mels, u32 tokens, u32 dim, W as dim x (frames/tokens * mels) float32
// row-major, b as dim float32.
struct LinearEncoderSpec {
  std::uint32_t frames = 0;
  std::uint32_t mels = 0;
  std::uint32_t tokens = 0;
  std::uint32_t dim = 0;
  std::vector<float> weights;
  std::vector<float> bias;
};

inline constexpr std::uint16_t kLinearEncoderVersion = 1;

void write_linear_encoder(const std::filesystem::path& path, const LinearEncoderSpec& spec);
LinearEncoderSpec read_linear_encoder(const std::filesystem::path& path);
// Random encoder, mostly for tests and smoke runs.
LinearEncoderSpec random_linear_encoder(std::uint32_t frames, std::uint32_t mels, std::uint32_t tokens,
                                        std::uint32_t dim, std::uint64_t seed);

}  // namespace voxmed

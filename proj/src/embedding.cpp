#include "voxmed/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <utility>

#include "voxmed/error.hpp"
#include "voxmed/random.hpp"

namespace voxmed {

namespace fs = std::filesystem;

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::ExternalModel: return "external_model";
    case BackendKind::Cache: return "cache";
    case BackendKind::DeterministicTest: return "deterministic_test";
  }
  return "unknown";
}

std::string_view to_string(Aggregation agg) {
  return agg == Aggregation::MeanPool ? "mean_pool" : "first_token";
}

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "external_model") return BackendKind::ExternalModel;
  if (s == "cache") return BackendKind::Cache;
  if (s == "deterministic_test") return BackendKind::DeterministicTest;
  fail(ErrorCode::InvalidConfig, "unknown backend kind '" + std::string(s) + "'");
}

Aggregation parse_aggregation(std::string_view s) {
  if (s == "mean_pool") return Aggregation::MeanPool;
  if (s == "first_token") return Aggregation::FirstToken;
  fail(ErrorCode::InvalidConfig, "unknown aggregation '" + std::string(s) + "'");
}

void BackendConfig::validate() const {
  if (embedding_dim < 1) fail(ErrorCode::InvalidConfig, "embedding_dim must be >= 1");
  if (input_frames < 1 || n_mels < 1) fail(ErrorCode::InvalidConfig, "chunk shape must be non-empty");
  if (kind == BackendKind::ExternalModel && !model_path) {
    fail(ErrorCode::InvalidConfig, "external_model backend requires model_path");
  }
  if (kind == BackendKind::Cache && !model_path && !cache_dir) {
    fail(ErrorCode::InvalidConfig, "cache backend requires cache_dir or an archive in model_path");
  }
}

Embedding FeatureBackend::embed(std::span<const FeatureMatrix> chunks, const ContentHash& source_hash) const {
  if (chunks.empty()) fail(ErrorCode::EmptyInput, "no feature chunks to embed");
  std::vector<std::vector<double>> per_chunk;
  per_chunk.reserve(chunks.size());
  for (const auto& c : chunks) {
    if (c.frames != frames_ || c.n_mels != n_mels_) {
      fail(ErrorCode::ShapeMismatch, "chunk is " + std::to_string(c.frames) + "x" + std::to_string(c.n_mels) +
                                         ", backend expects " + std::to_string(frames_) + "x" + std::to_string(n_mels_));
    }
    auto v = encode_chunk(c, source_hash);
    if (v.size() != dim_) fail(ErrorCode::BackendFailure, id() + " produced a vector of the wrong length");
    per_chunk.push_back(std::move(v));
  }
  Embedding e;
  e.backend_id = id();
  e.source_hash = source_hash;
  e.values.resize(dim_);
  // Sorting each column before summing makes the mean independent of chunk order.
  std::vector<double> column(per_chunk.size());
  for (std::size_t d = 0; d < dim_; ++d) {
    for (std::size_t c = 0; c < per_chunk.size(); ++c) column[c] = per_chunk[c][d];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (const double x : column) sum += x;
    const double mean = sum / static_cast<double>(column.size());
    if (!std::isfinite(mean)) fail(ErrorCode::BackendFailure, id() + " produced a non-finite value");
    e.values[d] = static_cast<float>(mean);
  }
  return e;
}

namespace {

std::uint64_t hash_seed(const ContentHash& h) {
  std::uint64_t seed = 0;
  for (std::size_t i = 0; i < 8; ++i) seed |= static_cast<std::uint64_t>(h[i]) << (8 * i);
  for (std::size_t i = 8; i < h.size(); i += 8) {
    std::uint64_t w = 0;
    for (std::size_t j = 0; j < 8; ++j) w |= static_cast<std::uint64_t>(h[i + j]) << (8 * j);
    seed = splitmix64(seed ^ w);
  }
  return seed;
}

// Projects the token-aggregated mel vector through a Gaussian matrix seeded by
// the recording hash.
class DeterministicTestBackend final : public FeatureBackend {
 public:
  DeterministicTestBackend(std::size_t frames, std::size_t n_mels, std::size_t dim, Aggregation agg)
      : FeatureBackend(frames, n_mels, dim, agg), n_mels_(n_mels) {}

  std::string id() const override {
    return "deterministic_test:d" + std::to_string(dim()) + ":" + std::string(to_string(aggregation()));
  }
  BackendKind kind() const override { return BackendKind::DeterministicTest; }

 protected:
  std::vector<double> encode_chunk(const FeatureMatrix& chunk, const ContentHash& h) const override {
    std::vector<double> x(n_mels_, 0.0);
    if (aggregation() == Aggregation::FirstToken) {
      std::copy(chunk.row(0).begin(), chunk.row(0).end(), x.begin());
    } else {
      for (std::size_t t = 0; t < chunk.frames; ++t) {
        const auto row = chunk.row(t);
        for (std::size_t m = 0; m < n_mels_; ++m) x[m] += row[m];
      }
      for (auto& v : x) v /= static_cast<double>(chunk.frames);
    }
    Rng rng(derive_seed(hash_seed(h), "deterministic_test:" + std::to_string(dim())));
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_mels_));
    std::vector<double> out(dim(), 0.0);
    for (std::size_t d = 0; d < dim(); ++d) {
      double acc = 0.0;
      for (std::size_t m = 0; m < n_mels_; ++m) acc += rng.normal() * x[m];
      out[d] = acc * scale;
    }
    return out;
  }

 private:
  std::size_t n_mels_;
};

class LinearEncoderBackend final : public FeatureBackend {
 public:
  LinearEncoderBackend(LinearEncoderSpec spec, std::string id, Aggregation agg)
      : FeatureBackend(spec.frames, spec.mels, spec.dim, agg), spec_(std::move(spec)), id_(std::move(id)) {}

  std::string id() const override { return id_; }
  BackendKind kind() const override { return BackendKind::ExternalModel; }

 protected:
  std::vector<double> encode_chunk(const FeatureMatrix& chunk, const ContentHash&) const override {
    const std::size_t patch = static_cast<std::size_t>(spec_.frames / spec_.tokens) * spec_.mels;
    const std::size_t tokens = aggregation() == Aggregation::FirstToken ? 1 : spec_.tokens;
    std::vector<double> out(spec_.dim, 0.0);
    for (std::size_t t = 0; t < tokens; ++t) {
      const double* p = chunk.values.data() + t * patch;
      for (std::size_t d = 0; d < spec_.dim; ++d) {
        const float* w = spec_.weights.data() + d * patch;
        double acc = spec_.bias[d];
        for (std::size_t i = 0; i < patch; ++i) acc += w[i] * p[i];
        out[d] += std::tanh(acc);
      }
    }
    for (auto& v : out) v /= static_cast<double>(tokens);
    return out;
  }

 private:
  LinearEncoderSpec spec_;
  std::string id_;
};

fs::path cache_file(const fs::path& dir, const ContentHash& h) { return dir / (to_hex(h) + ".vxem"); }

std::optional<Embedding> read_cache_file(const fs::path& path, const ContentHash& h, std::size_t dim,
                                         const std::string& backend_id) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return std::nullopt;
  auto records = decode_embedding_archive(read_file(path), dim, backend_id);
  auto it = records.find(h);
  if (it == records.end()) fail(ErrorCode::FormatError, path.string() + " does not hold the expected hash");
  return std::move(it->second);
}

class CacheBackend final : public Backend {
 public:
  CacheBackend(std::map<ContentHash, Embedding> archive, std::optional<fs::path> dir, std::size_t dim, std::string id)
      : archive_(std::move(archive)), dir_(std::move(dir)), dim_(dim), id_(std::move(id)) {}

  std::string id() const override { return id_; }
  BackendKind kind() const override { return BackendKind::Cache; }
  std::size_t dim() const override { return dim_; }
  bool needs_features() const override { return false; }

  Embedding embed(std::span<const FeatureMatrix>, const ContentHash& h) const override {
    if (auto it = archive_.find(h); it != archive_.end()) return it->second;
    if (dir_) {
      if (auto e = read_cache_file(cache_file(*dir_, h), h, dim_, id_)) return std::move(*e);
    }
    fail(ErrorCode::CacheMiss, "no stored embedding for " + to_hex(h));
  }

 private:
  std::map<ContentHash, Embedding> archive_;
  std::optional<fs::path> dir_;
  std::size_t dim_;
  std::string id_;
};

std::string sanitize(std::string_view id) {
  std::string s(id);
  for (auto& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

class DiskCachedBackend final : public Backend {
 public:
  DiskCachedBackend(std::shared_ptr<const Backend> inner, fs::path dir)
      : inner_(std::move(inner)), dir_(std::move(dir) / sanitize(inner_->id())) {}

  std::string id() const override { return inner_->id(); }
  BackendKind kind() const override { return inner_->kind(); }
  std::size_t dim() const override { return inner_->dim(); }
  bool needs_features() const override { return inner_->needs_features(); }

  Embedding embed(std::span<const FeatureMatrix> chunks, const ContentHash& h) const override {
    const auto path = cache_file(dir_, h);
    try {
      if (auto e = read_cache_file(path, h, dim(), id())) return std::move(*e);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::FormatError && err.code() != ErrorCode::DimMismatch) throw;
      // Corrupt entry: recompute and overwrite.
    }
    Embedding e = inner_->embed(chunks, h);
    std::error_code ec;
    fs::create_directories(dir_, ec);
    const std::vector<Embedding> one{e};
    write_file_atomic(path, encode_embedding_archive(one));
    return e;
  }

 private:
  std::shared_ptr<const Backend> inner_;
  fs::path dir_;
};

std::string short_file_tag(const fs::path& path) {
  const auto h = sha256(read_file(path));
  return path.stem().string() + ":" + to_hex(h).substr(0, 12);
}

}  // namespace

std::shared_ptr<const Backend> with_disk_cache(std::shared_ptr<const Backend> inner, fs::path dir) {
  return std::make_shared<DiskCachedBackend>(std::move(inner), std::move(dir));
}

std::shared_ptr<const Backend> load_backend(const BackendConfig& cfg) {
  cfg.validate();
  std::shared_ptr<const Backend> backend;
  switch (cfg.kind) {
    case BackendKind::DeterministicTest:
      backend = std::make_shared<DeterministicTestBackend>(cfg.input_frames, cfg.n_mels, cfg.embedding_dim,
                                                           cfg.aggregation);
      break;
    case BackendKind::ExternalModel: {
      std::error_code ec;
      if (!fs::is_regular_file(*cfg.model_path, ec)) {
        fail(ErrorCode::ModelFileMissing, "encoder file not found: " + cfg.model_path->string());
      }
      auto spec = read_linear_encoder(*cfg.model_path);
      if (spec.frames != cfg.input_frames || spec.mels != cfg.n_mels) {
        fail(ErrorCode::ShapeMismatch, "encoder input is " + std::to_string(spec.frames) + "x" +
                                           std::to_string(spec.mels) + ", front end produces " +
                                           std::to_string(cfg.input_frames) + "x" + std::to_string(cfg.n_mels));
      }
      if (spec.dim != cfg.embedding_dim) {
        fail(ErrorCode::ShapeMismatch, "encoder output dim " + std::to_string(spec.dim) + " != configured " +
                                           std::to_string(cfg.embedding_dim));
      }
      auto id = "external_model:" + short_file_tag(*cfg.model_path) + ":" + std::string(to_string(cfg.aggregation));
      backend = std::make_shared<LinearEncoderBackend>(std::move(spec), std::move(id), cfg.aggregation);
      break;
    }
    case BackendKind::Cache: {
      std::error_code ec;
      std::map<ContentHash, Embedding> archive;
      std::string id = "cache";
      if (cfg.model_path) {
        if (!fs::is_regular_file(*cfg.model_path, ec)) {
          fail(ErrorCode::ModelFileMissing, "embedding archive not found: " + cfg.model_path->string());
        }
        id += ":" + cfg.model_path->stem().string();
        archive = import_embedding_file(*cfg.model_path, cfg.embedding_dim);
        for (auto& [h, e] : archive) e.backend_id = id;
      }
      if (cfg.cache_dir && !fs::is_directory(*cfg.cache_dir, ec)) {
        fail(ErrorCode::ModelFileMissing, "cache directory not found: " + cfg.cache_dir->string());
      }
      return std::make_shared<CacheBackend>(std::move(archive), cfg.cache_dir, cfg.embedding_dim, id);
    }
  }
  if (cfg.cache_dir) backend = with_disk_cache(std::move(backend), *cfg.cache_dir);
  return backend;
}

Bytes encode_embedding_archive(std::span<const Embedding> records) {
  const std::size_t dim = records.empty() ? 0 : records.front().values.size();
  ByteWriter w;
  w.tag("VXEM");
  w.u16(kEmbeddingArchiveVersion);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u64(records.size());
  for (const auto& r : records) {
    if (r.values.size() != dim) fail(ErrorCode::DimMismatch, "archive records must share one dimension");
    w.bytes(r.source_hash);
    for (const float v : r.values) w.f32(v);
  }
  return std::move(w).take();
}

std::map<ContentHash, Embedding> decode_embedding_archive(std::span<const std::uint8_t> bytes, std::size_t expected_dim,
                                                          const std::string& backend_id) {
  ByteReader r(bytes, ErrorCode::FormatError);
  if (r.tag() != "VXEM") fail(ErrorCode::FormatError, "not an embedding archive (bad magic)");
  const auto version = r.u16();
  if (version != kEmbeddingArchiveVersion) {
    fail(ErrorCode::FormatError, "unsupported archive version " + std::to_string(version));
  }
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  if (count > 0 && dim != expected_dim) {
    fail(ErrorCode::DimMismatch, "archive stores D=" + std::to_string(dim) + ", configured D=" +
                                     std::to_string(expected_dim));
  }
  const std::uint64_t record_size = 32 + 4ULL * dim;
  if (count > r.remaining() / record_size || count * record_size != r.remaining()) {
    fail(ErrorCode::FormatError, "archive declares " + std::to_string(count) + " records but holds " +
                                     std::to_string(r.remaining()) + " payload bytes");
  }
  std::map<ContentHash, Embedding> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    Embedding e;
    e.backend_id = backend_id;
    auto h = r.take(32);
    std::copy(h.begin(), h.end(), e.source_hash.begin());
    e.values.resize(dim);
    for (auto& v : e.values) {
      v = r.f32();
      if (!std::isfinite(v)) fail(ErrorCode::FormatError, "non-finite value in record " + std::to_string(i));
    }
    out.insert_or_assign(e.source_hash, std::move(e));
  }
  return out;
}

void write_embedding_file(const fs::path& path, std::span<const Embedding> records) {
  write_file_atomic(path, encode_embedding_archive(records));
}

std::map<ContentHash, Embedding> import_embedding_file(const fs::path& path, std::size_t expected_dim) {
  return decode_embedding_archive(read_file(path), expected_dim, "archive:" + path.stem().string());
}

void write_linear_encoder(const fs::path& path, const LinearEncoderSpec& spec) {
  ByteWriter w;
  w.tag("VXTM");
  w.u16(kLinearEncoderVersion);
  w.u32(spec.frames);
  w.u32(spec.mels);
  w.u32(spec.tokens);
  w.u32(spec.dim);
  for (const float v : spec.weights) w.f32(v);
  for (const float v : spec.bias) w.f32(v);
  write_file_atomic(path, std::move(w).take());
}

LinearEncoderSpec read_linear_encoder(const fs::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes, ErrorCode::FormatError);
  if (r.tag() != "VXTM") fail(ErrorCode::FormatError, path.string() + " is not an encoder file (bad magic)");
  if (const auto v = r.u16(); v != kLinearEncoderVersion) {
    fail(ErrorCode::VersionMismatch, "encoder file version " + std::to_string(v));
  }
  LinearEncoderSpec s;
  s.frames = r.u32();
  s.mels = r.u32();
  s.tokens = r.u32();
  s.dim = r.u32();
  if (s.tokens == 0 || s.dim == 0 || s.frames % s.tokens != 0) {
    fail(ErrorCode::ShapeMismatch, "encoder declares " + std::to_string(s.tokens) + " tokens over " +
                                       std::to_string(s.frames) + " frames");
  }
  const std::uint64_t patch = static_cast<std::uint64_t>(s.frames / s.tokens) * s.mels;
  const std::uint64_t n_weights = patch * s.dim;
  if ((n_weights + s.dim) * 4 != r.remaining()) {
    fail(ErrorCode::FormatError, "encoder payload size does not match declared shape");
  }
  s.weights.resize(n_weights);
  for (auto& v : s.weights) v = r.f32();
  s.bias.resize(s.dim);
  for (auto& v : s.bias) v = r.f32();
  return s;
}

LinearEncoderSpec random_linear_encoder(std::uint32_t frames, std::uint32_t mels, std::uint32_t tokens,
                                        std::uint32_t dim, std::uint64_t seed) {
  LinearEncoderSpec s{frames, mels, tokens, dim, {}, {}};
  const std::size_t patch = static_cast<std::size_t>(frames / tokens) * mels;
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(patch));
  s.weights.resize(patch * dim);
  for (auto& v : s.weights) v = static_cast<float>(rng.normal() * scale);
  s.bias.assign(dim, 0.0f);
  return s;
}

}  // namespace voxmed

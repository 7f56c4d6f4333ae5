#include "voxmed/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "voxmed/error.hpp"
#include "voxmed/hash.hpp"

namespace voxmed {

void FrontEndConfig::validate() const {
  mel.validate();
  if (target_frames < 1) fail(ErrorCode::InvalidConfig, "target_frames must be >= 1");
  if (!(feature_std > 0.0)) fail(ErrorCode::InvalidConfig, "feature_std must be positive");
  if (!(max_duration_s > 0.0)) fail(ErrorCode::InvalidConfig, "max_duration_s must be positive");
}

void bind_front_end(BackendConfig& cfg, const FrontEndConfig& front_end) {
  cfg.input_frames = front_end.target_frames;
  cfg.n_mels = static_cast<std::size_t>(front_end.mel.n_mels);
}

AudioClip decode_canonical(std::span<const std::uint8_t> wav_bytes, const FrontEndConfig& cfg) {
  AudioClip clip = to_mono(parse_wav(wav_bytes));
  if (clip.frames() == 0) fail(ErrorCode::EmptyInput, "recording contains no samples");
  if (clip.duration_s() > cfg.max_duration_s) {
    fail(ErrorCode::DurationExceeded, "recording is " + std::to_string(clip.duration_s()) + " s, limit is " +
                                          std::to_string(cfg.max_duration_s) + " s");
  }
  return resample(clip, cfg.mel.sample_rate);
}

std::vector<FeatureMatrix> prepare_features(const AudioClip& canonical, const FrontEndConfig& cfg) {
  const auto mel = log_mel_spectrogram(canonical, cfg.mel);
  return fit_length(normalize_features(mel, cfg.feature_mean, cfg.feature_std), cfg.target_frames);
}

RecordingEmbedder::RecordingEmbedder(FrontEndConfig cfg, std::shared_ptr<const Backend> backend)
    : cfg_(std::move(cfg)), backend_(std::move(backend)) {
  cfg_.validate();
  if (!backend_) fail(ErrorCode::InvalidConfig, "no embedding backend");
}

Embedding RecordingEmbedder::embed_bytes(std::span<const std::uint8_t> wav_bytes) const {
  const ContentHash h = sha256(wav_bytes);
  if (!backend_->needs_features()) return backend_->embed({}, h);
  const auto chunks = prepare_features(decode_canonical(wav_bytes, cfg_), cfg_);
  return backend_->embed(chunks, h);
}

Embedding RecordingEmbedder::embed_file(const std::filesystem::path& path) const {
  return embed_bytes(read_file(path));
}

std::vector<Embedding> embed_dataset(const LabeledDataset& ds, const RecordingEmbedder& embedder, std::size_t threads) {
  std::vector<Embedding> out(ds.items.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, ds.items.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < ds.items.size(); i = next++) {
      try {
        out[i] = embedder.embed_file(ds.items[i].meta.file_path);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::vector<Example> make_examples(const LabeledDataset& ds, std::span<const Embedding> embeddings) {
  if (embeddings.size() != ds.items.size()) fail(ErrorCode::ShapeMismatch, "one embedding per item required");
  std::vector<Example> out;
  out.reserve(ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    out.push_back(Example{embeddings[i].values, ds.items[i].label, ds.items[i].meta.patient_id});
  }
  return out;
}

}  // namespace voxmed

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxmed/audio_io.hpp"
#include "voxmed/classifier.hpp"
#include "voxmed/pipeline.hpp"
#include "voxmed/random.hpp"
#include "voxmed/training.hpp"

namespace voxmed::testing {

// Removed with its contents on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path mini_corpus_dir();
std::filesystem::path mini_corpus_audio();
std::filesystem::path mini_corpus_diagnoses();

AudioClip sine_clip(double hz, double seconds, int rate, double amplitude = 0.5);
AudioClip constant_clip(float value, std::size_t frames, int rate);

// Canonical 44-byte-header WAV written field by field, independent of
// encode_wav. Samples are interleaved.
Bytes pcm16_wav(const std::vector<std::int16_t>& interleaved, int channels, int rate);

// A well-formed PCM16 file with a few non-audio chunks, used as fuzz seed.
Bytes fuzz_seed_wav();
// Random structural damage: byte flips, size-field rewrites, truncation,
// duplicated or inserted chunks.
Bytes mutate_wav(const Bytes& seed, Rng& rng);

// Front end with short chunks so tests stay fast.
FrontEndConfig small_front_end();

// Three well separated classes: each class prototype is the deterministic
// test backend's embedding of a class-specific tone, and points add
// Gaussian noise of relative_noise times the prototype RMS.
struct SeparableData {
  std::vector<Example> examples;
  std::vector<std::vector<float>> prototypes;
};
SeparableData separable_dataset(std::size_t per_class, std::size_t dim, double relative_noise, std::uint64_t seed);

// Small conv stack for fast training on low-dimensional embeddings.
ArchSpec small_arch(std::size_t input_dim, std::size_t num_classes);

// The default layer structure at toy width: conv(8,k3), conv(6,k3)+pool,
// conv(4,k3)+pool, dropout, dense.
ArchSpec toy_default_arch(std::size_t input_dim, std::size_t num_classes);

}  // namespace voxmed::testing

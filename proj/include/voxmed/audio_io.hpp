#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "voxmed/binary_io.hpp"

namespace voxmed {

inline constexpr int kCanonicalSampleRate = 16000;

// Decoded PCM. Samples are normalized to [-1, 1]; every channel holds the
// same number of frames.
struct AudioClip {
  std::vector<std::vector<float>> channels;
  int sample_rate = 0;

  std::size_t channel_count() const { return channels.size(); }
  std::size_t frames() const { return channels.empty() ? 0 : channels.front().size(); }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(frames()) / sample_rate : 0.0;
  }
  std::span<const float> mono() const { return channels.front(); }
};

// Accepted encodings: integer PCM with 16, 24 or 32 bits per sample and IEEE
// float with 32 bits, in either the canonical fmt chunk or WAVE_FORMAT_EXTENSIBLE.
// Integer samples are divided by 2^(bits-1); float samples are clamped to
// [-1, 1]. Chunks other than "fmt " and "data" are skipped.
AudioClip parse_wav(std::span<const std::uint8_t> bytes);

// Frame-wise arithmetic mean of all channels.
AudioClip to_mono(const AudioClip& clip);

// Kaiser-windowed sinc interpolation (beta 8.6, 32 zero crossings per side).
// Output length is round(frames * target / source). Equal rates return the
// input unchanged.
AudioClip resample(const AudioClip& clip, int target_rate);

enum class WavEncoding { Pcm16, Pcm24, Pcm32, Float32 };

// Serializes a clip as a canonical 44-byte-header RIFF/WAVE file.
Bytes encode_wav(const AudioClip& clip, WavEncoding encoding = WavEncoding::Pcm16);

}  // namespace voxmed

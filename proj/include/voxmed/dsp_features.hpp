#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "voxmed/audio_io.hpp"

namespace voxmed {

// Log-mel front-end parameters. Defaults follow common audio-transformer
// front ends: 128 HTK-scale mel bands over 0-8000 Hz, 25 ms Hann window,
// 10 ms hop.
struct MelConfig {
  int sample_rate = kCanonicalSampleRate;
  int n_mels = 128;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = std::log(1e-10);

  // Throws InvalidConfig.
  void validate() const;
  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  std::size_t fft_size() const;  // next power of two >= window
  double frame_rate() const { return 1000.0 / hop_ms; }
};

// frames x n_mels grid of natural-log mel energies, row-major.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t n_mels = 0;
  std::vector<double> values;
  double frame_rate = 0.0;
  double log_floor = 0.0;  // value used for silence and for padding rows

  double at(std::size_t frame, std::size_t mel) const { return values[frame * n_mels + mel]; }
  std::span<const double> row(std::size_t frame) const {
    return std::span<const double>(values).subspan(frame * n_mels, n_mels);
  }
};

// Triangular HTK-mel filterbank as an n_mels x (fft_size/2 + 1) weight grid.
std::vector<std::vector<double>> mel_filterbank(const MelConfig& cfg);

FeatureMatrix log_mel_spectrogram(const AudioClip& clip, const MelConfig& cfg);

// (v - mean) / std applied to every cell and to log_floor. Throws InvalidStd.
FeatureMatrix normalize_features(const FeatureMatrix& f, double mean, double std);

// Splits into consecutive target_frames-long chunks, padding the tail with
// log_floor rows. A matrix that already fits is padded to length.
std::vector<FeatureMatrix> fit_length(const FeatureMatrix& f, std::size_t target_frames);

}  // namespace voxmed

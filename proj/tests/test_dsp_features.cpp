#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "voxmed/dsp_features.hpp"
#include "voxmed/error.hpp"

using namespace voxmed;
using namespace voxmed::testing;

namespace {

FeatureMatrix grid(std::size_t frames, std::size_t mels, double start = 0.0) {
  FeatureMatrix f;
  f.frames = frames;
  f.n_mels = mels;
  f.log_floor = -23.0;
  f.frame_rate = 100.0;
  for (std::size_t i = 0; i < frames * mels; ++i) f.values.push_back(start + static_cast<double>(i));
  return f;
}

// HTK mel scale, written out here rather than taken from the library.
double htk_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double htk_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

TEST(LogMel, OneSecondGives98Frames) {
  const auto f = log_mel_spectrogram(sine_clip(440.0, 1.0, 16000), MelConfig{});
  EXPECT_EQ(f.frames, (16000u - 400u) / 160u + 1u);
  EXPECT_EQ(f.frames, 98u);
  EXPECT_EQ(f.n_mels, 128u);
  EXPECT_DOUBLE_EQ(f.frame_rate, 100.0);
}

TEST(LogMel, SilenceIsFloor) {
  const MelConfig cfg;
  const auto f = log_mel_spectrogram(constant_clip(0.0f, 16000, 16000), cfg);
  for (const double v : f.values) ASSERT_EQ(v, cfg.log_floor);
}

TEST(LogMel, ShortClipIsOnePaddedFrame) {
  const auto f = log_mel_spectrogram(constant_clip(0.1f, 100, 16000), MelConfig{});
  EXPECT_EQ(f.frames, 1u);
  const auto empty = log_mel_spectrogram(constant_clip(0.0f, 0, 16000), MelConfig{});
  EXPECT_EQ(empty.frames, 1u);
}

TEST(LogMel, ToneLandsInNearestCenterBand) {
  const MelConfig cfg;
  const double lo = htk_mel(cfg.fmin), hi = htk_mel(cfg.fmax);
  std::size_t expected = 0;
  double best = 1e9;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double center = htk_hz(lo + (hi - lo) * (m + 1) / (cfg.n_mels + 1));
    if (std::abs(center - 1000.0) < best) {
      best = std::abs(center - 1000.0);
      expected = static_cast<std::size_t>(m);
    }
  }
  const auto f = log_mel_spectrogram(sine_clip(1000.0, 1.0, 16000), cfg);
  for (std::size_t t = 0; t < f.frames; ++t) {
    const auto row = f.row(t);
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()), expected) << t;
  }
}

TEST(LogMel, RateMismatch) {
  try {
    log_mel_spectrogram(sine_clip(440.0, 0.1, 44100), MelConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RateMismatch);
  }
}

TEST(LogMel, ValuesFiniteAndAboveFloor) {
  Rng rng(11);
  AudioClip clip = constant_clip(0.0f, 8000, 16000);
  for (auto& v : clip.channels[0]) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const MelConfig cfg;
  for (const double v : log_mel_spectrogram(clip, cfg).values) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GE(v, cfg.log_floor);
  }
}

TEST(LogMel, AmplitudeMonotone) {
  Rng rng(5);
  AudioClip clip = constant_clip(0.0f, 4000, 16000);
  for (auto& v : clip.channels[0]) v = static_cast<float>(rng.uniform(-0.3, 0.3));
  AudioClip louder = clip;
  for (auto& v : louder.channels[0]) v *= 2.5f;
  const auto a = log_mel_spectrogram(clip, MelConfig{});
  const auto b = log_mel_spectrogram(louder, MelConfig{});
  for (std::size_t i = 0; i < a.values.size(); ++i) ASSERT_GE(b.values[i], a.values[i]) << i;
}

TEST(MelConfig, RejectsBadValues) {
  MelConfig c;
  c.fmax = 9000.0;
  EXPECT_THROW(c.validate(), Error);
  c = MelConfig{};
  c.hop_ms = 30.0;
  EXPECT_THROW(c.validate(), Error);
  c = MelConfig{};
  c.n_mels = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(MelConfig{}.validate());
}

TEST(MelFilterbank, TrianglesAreNonNegativeAndPeakAtMostOne) {
  const MelConfig cfg;
  const auto bank = mel_filterbank(cfg);
  ASSERT_EQ(bank.size(), 128u);
  for (const auto& row : bank) {
    ASSERT_EQ(row.size(), cfg.fft_size() / 2 + 1);
    for (const double w : row) ASSERT_TRUE(w >= 0.0 && w <= 1.0);
  }
}

TEST(Normalize, Examples) {
  const auto f = grid(1, 2, 2.0);  // {2, 3}
  FeatureMatrix two = f;
  two.values = {2.0, 4.0};
  EXPECT_EQ(normalize_features(two, 3.0, 1.0).values, (std::vector<double>{-1.0, 1.0}));
  EXPECT_EQ(normalize_features(f, 0.0, 1.0).values, f.values);
  FeatureMatrix c = f;
  c.values = {7.0, 7.0};
  EXPECT_EQ(normalize_features(c, 7.0, 1.0).values, (std::vector<double>{0.0, 0.0}));
}

TEST(Normalize, TransformsFloorToo) {
  const auto n = normalize_features(grid(2, 2), 1.0, 2.0);
  EXPECT_DOUBLE_EQ(n.log_floor, (-23.0 - 1.0) / 2.0);
}

TEST(Normalize, RejectsNonPositiveStd) {
  for (const double s : {0.0, -1.0}) {
    try {
      normalize_features(grid(1, 1), 0.0, s);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidStd);
    }
  }
}

TEST(FitLength, ExactLengthUnchanged) {
  const auto f = grid(100, 3);
  const auto chunks = fit_length(f, 100);
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].values, f.values);
}

TEST(FitLength, PadsShortInput) {
  const auto f = grid(50, 3);
  const auto chunks = fit_length(f, 100);
  ASSERT_EQ(chunks.size(), 1u);
  ASSERT_EQ(chunks[0].frames, 100u);
  for (std::size_t t = 50; t < 100; ++t) {
    for (const double v : chunks[0].row(t)) ASSERT_EQ(v, f.log_floor);
  }
}

TEST(FitLength, SplitsLongInput) {
  const auto f = grid(250, 2);
  const auto chunks = fit_length(f, 100);
  ASSERT_EQ(chunks.size(), 3u);
  for (const auto& c : chunks) EXPECT_EQ(c.frames, 100u);
  for (std::size_t t = 50; t < 100; ++t) EXPECT_EQ(chunks[2].at(t, 0), f.log_floor);
}

TEST(FitLength, ContentPreservedInOrder) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t frames = 1 + rng.below(400), target = 1 + rng.below(150);
    const auto f = grid(frames, 3, rng.uniform(-5.0, 5.0));
    const auto chunks = fit_length(f, target);
    EXPECT_GE(chunks.size() * target, frames);
    std::size_t t = 0;
    for (const auto& c : chunks) {
      ASSERT_EQ(c.frames, target);
      for (std::size_t r = 0; r < target && t < frames; ++r, ++t) {
        for (std::size_t m = 0; m < 3; ++m) ASSERT_EQ(c.at(r, m), f.at(t, m));
      }
    }
  }
}

#include "voxmed/dsp_features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "voxmed/error.hpp"

namespace voxmed {

void MelConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidConfig, "MelConfig: " + what); };
  if (sample_rate <= 0) bad("sample_rate must be positive");
  if (n_mels < 1) bad("n_mels must be >= 1");
  if (!(hop_ms > 0.0)) bad("hop_ms must be positive");
  if (!(window_ms >= hop_ms)) bad("window_ms must be >= hop_ms");
  if (!(fmin >= 0.0) || !(fmin < fmax)) bad("need 0 <= fmin < fmax");
  if (fmax > sample_rate / 2.0) bad("fmax exceeds Nyquist");
  if (!std::isfinite(log_floor)) bad("log_floor must be finite");
  if (window_samples() < 1 || hop_samples() < 1) bad("window/hop shorter than one sample");
}

std::size_t MelConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(window_ms * sample_rate / 1000.0));
}

std::size_t MelConfig::hop_samples() const {
  return static_cast<std::size_t>(std::llround(hop_ms * sample_rate / 1000.0));
}

std::size_t MelConfig::fft_size() const {
  std::size_t n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// FFTW planning is not thread-safe; plans are created once per size under a
// lock and then executed with the new-array interface, which is.
fftw_plan plan_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mu);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  plans.emplace(n, p);
  return p;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

std::vector<std::vector<double>> mel_filterbank(const MelConfig& cfg) {
  const std::size_t n_fft = cfg.fft_size();
  const std::size_t n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (cfg.n_mels + 1));
  }
  std::vector<std::vector<double>> bank(static_cast<std::size_t>(cfg.n_mels), std::vector<double>(n_bins, 0.0));
  for (std::size_t m = 0; m < bank.size(); ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(n_fft);
      const double up = (f - lo) / (center - lo);
      const double down = (hi - f) / (hi - center);
      bank[m][k] = std::max(0.0, std::min(up, down));
    }
  }
  return bank;
}

FeatureMatrix log_mel_spectrogram(const AudioClip& clip, const MelConfig& cfg) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate) {
    fail(ErrorCode::RateMismatch, "clip is " + std::to_string(clip.sample_rate) + " Hz, front end expects " +
                                      std::to_string(cfg.sample_rate) + " Hz");
  }
  if (clip.channel_count() != 1) {
    fail(ErrorCode::ChannelMismatch, "log-mel expects mono input");
  }
  const auto samples = clip.mono();
  const std::size_t window = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  const std::size_t n_fft = cfg.fft_size();
  const std::size_t n_bins = n_fft / 2 + 1;
  const std::size_t frames = samples.size() >= window ? (samples.size() - window) / hop + 1 : 1;

  // Periodic Hann window.
  std::vector<double> hann(window);
  for (std::size_t i = 0; i < window; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(window));
  }
  const auto bank = mel_filterbank(cfg);
  // Sparse support of each filter.
  std::vector<std::pair<std::size_t, std::size_t>> support(bank.size(), {0, 0});
  for (std::size_t m = 0; m < bank.size(); ++m) {
    auto first = std::find_if(bank[m].begin(), bank[m].end(), [](double w) { return w > 0.0; });
    auto last = std::find_if(bank[m].rbegin(), bank[m].rend(), [](double w) { return w > 0.0; });
    if (first != bank[m].end()) {
      support[m] = {static_cast<std::size_t>(first - bank[m].begin()),
                    static_cast<std::size_t>(bank[m].rend() - last)};
    }
  }

  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(n_fft));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(n_bins));
  const fftw_plan plan = plan_for(n_fft);
  std::vector<double> power(n_bins);

  FeatureMatrix fm;
  fm.frames = frames;
  fm.n_mels = static_cast<std::size_t>(cfg.n_mels);
  fm.values.resize(frames * fm.n_mels);
  fm.frame_rate = cfg.frame_rate();
  fm.log_floor = cfg.log_floor;

  for (std::size_t t = 0; t < frames; ++t) {
    double* buf = in.get();
    std::fill(buf, buf + n_fft, 0.0);
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < window && start + i < samples.size(); ++i) {
      buf[i] = samples[start + i] * hann[i];
    }
    fftw_execute_dft_r2c(plan, buf, out.get());
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      power[k] = re * re + im * im;
    }
    for (std::size_t m = 0; m < fm.n_mels; ++m) {
      double energy = 0.0;
      for (std::size_t k = support[m].first; k < support[m].second; ++k) energy += bank[m][k] * power[k];
      const double v = energy > 0.0 ? std::log(energy) : cfg.log_floor;
      fm.values[t * fm.n_mels + m] = std::max(v, cfg.log_floor);
    }
  }
  return fm;
}

FeatureMatrix normalize_features(const FeatureMatrix& f, double mean, double std) {
  if (!(std > 0.0) || !std::isfinite(std)) fail(ErrorCode::InvalidStd, "std must be positive, got " + std::to_string(std));
  FeatureMatrix out = f;
  for (auto& v : out.values) v = (v - mean) / std;
  out.log_floor = (f.log_floor - mean) / std;
  return out;
}

std::vector<FeatureMatrix> fit_length(const FeatureMatrix& f, std::size_t target_frames) {
  if (target_frames < 1) fail(ErrorCode::InvalidConfig, "target_frames must be >= 1");
  const std::size_t n_chunks = std::max<std::size_t>(1, (f.frames + target_frames - 1) / target_frames);
  std::vector<FeatureMatrix> chunks;
  chunks.reserve(n_chunks);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    FeatureMatrix chunk;
    chunk.frames = target_frames;
    chunk.n_mels = f.n_mels;
    chunk.frame_rate = f.frame_rate;
    chunk.log_floor = f.log_floor;
    chunk.values.assign(target_frames * f.n_mels, f.log_floor);
    const std::size_t begin = c * target_frames;
    const std::size_t end = std::min(f.frames, begin + target_frames);
    if (end > begin) {
      std::copy(f.values.begin() + static_cast<std::ptrdiff_t>(begin * f.n_mels),
                f.values.begin() + static_cast<std::ptrdiff_t>(end * f.n_mels), chunk.values.begin());
    }
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

}  // namespace voxmed

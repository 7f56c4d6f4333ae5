#include "fixtures.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numbers>
#include <system_error>

#include "voxmed/embedding.hpp"
#include "voxmed/hash.hpp"

namespace voxmed::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<std::uint64_t> counter{0};
  Rng rng(derive_seed(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()),
                      counter.fetch_add(1)));
  path_ = fs::temp_directory_path() / ("voxmed-test-" + std::to_string(rng.next()));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path mini_corpus_dir() { return VOXMED_MINI_CORPUS; }
fs::path mini_corpus_audio() { return mini_corpus_dir() / "audio"; }
fs::path mini_corpus_diagnoses() { return mini_corpus_dir() / "patient_diagnosis.csv"; }

AudioClip sine_clip(double hz, double seconds, int rate, double amplitude) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  AudioClip clip;
  clip.sample_rate = rate;
  clip.channels.assign(1, std::vector<float>(n));
  for (std::size_t i = 0; i < n; ++i) {
    clip.channels[0][i] =
        static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  }
  return clip;
}

AudioClip constant_clip(float value, std::size_t frames, int rate) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.channels.assign(1, std::vector<float>(frames, value));
  return clip;
}

namespace {

void put_tag(Bytes& b, const char* tag) { b.insert(b.end(), tag, tag + 4); }
void put_u16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void set_u32(Bytes& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4 && at + i < b.size(); ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}
void set_u16(Bytes& b, std::size_t at, std::uint16_t v) {
  for (int i = 0; i < 2 && at + i < b.size(); ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

Bytes pcm16_wav(const std::vector<std::int16_t>& interleaved, int channels, int rate) {
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  Bytes b;
  put_tag(b, "RIFF");
  put_u32(b, 36 + data_bytes);
  put_tag(b, "WAVE");
  put_tag(b, "fmt ");
  put_u32(b, 16);
  put_u16(b, 1);
  put_u16(b, static_cast<std::uint16_t>(channels));
  put_u32(b, static_cast<std::uint32_t>(rate));
  put_u32(b, static_cast<std::uint32_t>(rate * channels * 2));
  put_u16(b, static_cast<std::uint16_t>(channels * 2));
  put_u16(b, 16);
  put_tag(b, "data");
  put_u32(b, data_bytes);
  for (const auto s : interleaved) put_u16(b, static_cast<std::uint16_t>(s));
  return b;
}

Bytes fuzz_seed_wav() {
  Bytes b;
  put_tag(b, "RIFF");
  put_u32(b, 0);
  put_tag(b, "WAVE");
  put_tag(b, "fmt ");
  put_u32(b, 16);
  put_u16(b, 1);
  put_u16(b, 2);
  put_u32(b, 8000);
  put_u32(b, 8000 * 4);
  put_u16(b, 4);
  put_u16(b, 16);
  put_tag(b, "LIST");
  put_u32(b, 9);
  for (int i = 0; i < 10; ++i) b.push_back(static_cast<std::uint8_t>('a' + i));  // 9 bytes + pad
  put_tag(b, "data");
  put_u32(b, 800);
  for (int i = 0; i < 200; ++i) {
    const auto s = static_cast<std::int16_t>(8000.0 * std::sin(i * 0.3));
    put_u16(b, static_cast<std::uint16_t>(s));
    put_u16(b, static_cast<std::uint16_t>(-s));
  }
  set_u32(b, 4, static_cast<std::uint32_t>(b.size() - 8));
  return b;
}

Bytes mutate_wav(const Bytes& seed, Rng& rng) {
  Bytes b = seed;
  static const std::uint32_t extremes[] = {0u, 1u, 2u, 3u, 7u, 0x7FFFFFFFu, 0x80000000u, 0xFFFFFFFFu, 0xFFFFu};
  const auto pick_u32 = [&]() -> std::uint32_t {
    return rng.below(2) == 0 ? extremes[rng.below(std::size(extremes))] : static_cast<std::uint32_t>(rng.next());
  };
  const std::size_t rounds = 1 + rng.below(3);
  for (std::size_t r = 0; r < rounds && !b.empty(); ++r) {
    switch (rng.below(8)) {
      case 0:  // flip bytes, mostly in the header
        for (std::size_t k = 0, n = 1 + rng.below(4); k < n; ++k) {
          const std::size_t at = rng.below(2) == 0 ? rng.below(std::min<std::size_t>(64, b.size())) : rng.below(b.size());
          b[at] = static_cast<std::uint8_t>(rng.next());
        }
        break;
      case 1:  // chunk size fields: RIFF, fmt, LIST, data
        set_u32(b, std::array<std::size_t, 4>{4, 16, 40, 62}[rng.below(4)], pick_u32());
        break;
      case 2:  // format tag, channels, block align, bits
        set_u16(b, std::array<std::size_t, 4>{20, 22, 32, 34}[rng.below(4)], static_cast<std::uint16_t>(pick_u32()));
        break;
      case 3:  // sample rate, byte rate
        set_u32(b, rng.below(2) == 0 ? 24 : 28, pick_u32());
        break;
      case 4:  // truncate
        b.resize(rng.below(b.size() + 1));
        break;
      case 5: {  // insert a junk chunk at a random offset
        Bytes junk;
        put_tag(junk, rng.below(2) == 0 ? "junk" : "fmt ");
        put_u32(junk, pick_u32() % 64);
        for (std::size_t k = 0, n = rng.below(24); k < n; ++k) junk.push_back(static_cast<std::uint8_t>(rng.next()));
        const std::size_t at = 12 + rng.below(b.size() > 12 ? b.size() - 11 : 1);
        b.insert(b.begin() + static_cast<std::ptrdiff_t>(std::min(at, b.size())), junk.begin(), junk.end());
        break;
      }
      case 6:  // swap magic bytes
        if (b.size() >= 12) std::memcpy(b.data() + (rng.below(2) == 0 ? 0 : 8), rng.below(2) == 0 ? "RIFX" : "WAVf", 4);
        break;
      default:  // random tail
        for (std::size_t k = 0, n = rng.below(32); k < n; ++k) b.push_back(static_cast<std::uint8_t>(rng.next()));
        break;
    }
  }
  return b;
}

FrontEndConfig small_front_end() {
  FrontEndConfig fe;
  fe.target_frames = 100;
  return fe;
}

SeparableData separable_dataset(std::size_t per_class, std::size_t dim, double relative_noise, std::uint64_t seed) {
  const FrontEndConfig fe = small_front_end();
  BackendConfig bc;
  bc.kind = BackendKind::DeterministicTest;
  bc.embedding_dim = dim;
  bind_front_end(bc, fe);
  const RecordingEmbedder embedder(fe, load_backend(bc));

  SeparableData out;
  const double tones[] = {300.0, 1000.0, 2500.0};
  for (const double hz : tones) {
    const Bytes wav = encode_wav(sine_clip(hz, 1.0, 16000));
    out.prototypes.push_back(embedder.embed_bytes(wav).values);
  }
  Rng rng(derive_seed(seed, "separable"));
  for (std::size_t c = 0; c < out.prototypes.size(); ++c) {
    const auto& proto = out.prototypes[c];
    double ss = 0.0;
    for (const float v : proto) ss += static_cast<double>(v) * v;
    const double sigma = relative_noise * std::sqrt(ss / static_cast<double>(proto.size()));
    for (std::size_t i = 0; i < per_class; ++i) {
      Example ex;
      ex.label = c;
      ex.group = static_cast<std::int64_t>(c * per_class + i);
      for (const float v : proto) ex.embedding.push_back(static_cast<float>(v + sigma * rng.normal()));
      out.examples.push_back(std::move(ex));
    }
  }
  return out;
}

ArchSpec small_arch(std::size_t input_dim, std::size_t num_classes) {
  ArchSpec a;
  a.input_dim = input_dim;
  a.num_classes = num_classes;
  a.conv_layers = {{32, 3, false}, {16, 3, true}, {8, 3, true}};
  a.pool_size = 2;
  a.dropout_rate = 0.3;
  return a;
}

ArchSpec toy_default_arch(std::size_t input_dim, std::size_t num_classes) {
  ArchSpec a;
  a.input_dim = input_dim;
  a.num_classes = num_classes;
  a.conv_layers = {{8, 3, false}, {6, 3, true}, {4, 3, true}};
  a.pool_size = 2;
  a.dropout_rate = 0.3;
  return a;
}

}  // namespace voxmed::testing

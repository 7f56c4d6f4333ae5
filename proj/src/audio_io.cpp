#include "voxmed/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <numbers>
#include <numeric>
#include <string>

#include "voxmed/error.hpp"

namespace voxmed {

namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

// Chunk ids come from untrusted bytes; non-printable ones are shown as \xNN.
std::string printable(const std::string& id) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (const unsigned char c : id) {
    if (c >= 0x20 && c < 0x7f) {
      out += static_cast<char>(c);
    } else {
      out += "\\x";
      out += kHex[c >> 4];
      out += kHex[c & 0xf];
    }
  }
  return out;
}

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

FormatChunk parse_format(std::span<const std::uint8_t> payload) {
  if (payload.size() < 16) {
    fail(ErrorCode::MalformedHeader, "fmt chunk is " + std::to_string(payload.size()) + " bytes");
  }
  ByteReader r(payload, ErrorCode::MalformedHeader);
  FormatChunk f;
  f.format = r.u16();
  f.channels = r.u16();
  f.sample_rate = r.u32();
  r.u32();  // byte rate, derivable
  f.block_align = r.u16();
  f.bits = r.u16();
  if (f.format == kFormatExtensible) {
    if (payload.size() < 40) fail(ErrorCode::MalformedHeader, "extensible fmt chunk too short");
    r.skip(2 + 2 + 4);  // cbSize, valid bits, channel mask
    f.format = r.u16();  // first two bytes of the subformat GUID
  }
  if (f.format != kFormatPcm && f.format != kFormatFloat) {
    fail(ErrorCode::UnsupportedEncoding, "format tag " + std::to_string(f.format));
  }
  const bool ok_bits = f.format == kFormatPcm ? (f.bits == 16 || f.bits == 24 || f.bits == 32)
                                              : f.bits == 32;
  if (!ok_bits) {
    fail(ErrorCode::UnsupportedEncoding, std::to_string(f.bits) + "-bit samples");
  }
  if (f.channels == 0) fail(ErrorCode::MalformedHeader, "zero channels");
  if (f.sample_rate == 0 || f.sample_rate > 0x7fffffffU) {
    fail(ErrorCode::MalformedHeader, "sample rate " + std::to_string(f.sample_rate));
  }
  if (f.block_align != f.channels * (f.bits / 8)) {
    fail(ErrorCode::MalformedHeader, "block align " + std::to_string(f.block_align) +
                                         " does not match channels x bytes per sample");
  }
  return f;
}

float decode_sample(const std::uint8_t* p, const FormatChunk& f) {
  switch (f.bits) {
    case 16: {
      const auto v = static_cast<std::int16_t>(p[0] | p[1] << 8);
      return static_cast<float>(v / 32768.0);
    }
    case 24: {
      std::int32_t v = p[0] | p[1] << 8 | p[2] << 16;
      if (v & 0x800000) v -= 0x1000000;
      return static_cast<float>(v / 8388608.0);
    }
    default: {
      const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                              static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
      if (f.format == kFormatFloat) {
        const float x = std::bit_cast<float>(u);
        if (!std::isfinite(x)) fail(ErrorCode::InvalidSample, "non-finite float sample");
        return std::clamp(x, -1.0f, 1.0f);
      }
      return static_cast<float>(static_cast<std::int32_t>(u) / 2147483648.0);
    }
  }
}

}  // namespace

AudioClip parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) fail(ErrorCode::MalformedHeader, "file shorter than RIFF header");
  ByteReader r(bytes, ErrorCode::TruncatedData);
  if (r.tag() != "RIFF") fail(ErrorCode::MalformedHeader, "missing RIFF magic");
  r.u32();  // RIFF size; frequently wrong in the wild, chunk sizes are checked instead
  if (r.tag() != "WAVE") fail(ErrorCode::MalformedHeader, "missing WAVE magic");

  std::optional<FormatChunk> format;
  std::optional<std::span<const std::uint8_t>> data;
  while (r.remaining() >= 8 && !data) {
    const std::string id = r.tag();
    const std::uint32_t size = r.u32();
    if (size > r.remaining()) {
      fail(ErrorCode::TruncatedData, "chunk '" + printable(id) + "' declares " + std::to_string(size) +
                                         " bytes at offset " + std::to_string(r.offset()) +
                                         ", only " + std::to_string(r.remaining()) + " remain");
    }
    auto payload = r.take(size);
    if (size % 2 == 1 && r.remaining() > 0) r.skip(1);
    if (id == "fmt ") {
      format = parse_format(payload);
    } else if (id == "data") {
      if (!format) fail(ErrorCode::MalformedHeader, "data chunk precedes fmt chunk");
      data = payload;
    }
  }
  if (!format) fail(ErrorCode::MalformedHeader, "no fmt chunk");
  if (!data) fail(ErrorCode::MalformedHeader, "no data chunk");

  const std::size_t frames = data->size() / format->block_align;
  const std::size_t width = format->bits / 8;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(format->sample_rate);
  clip.channels.assign(format->channels, std::vector<float>(frames));
  const std::uint8_t* p = data->data();
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < format->channels; ++c, p += width) {
      clip.channels[c][i] = decode_sample(p, *format);
    }
  }
  return clip;
}

AudioClip to_mono(const AudioClip& clip) {
  if (clip.channel_count() <= 1) return clip;
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.channels.assign(1, std::vector<float>(clip.frames()));
  const double n = static_cast<double>(clip.channel_count());
  for (std::size_t i = 0; i < clip.frames(); ++i) {
    double sum = 0.0;
    for (const auto& ch : clip.channels) sum += ch[i];
    out.channels[0][i] = static_cast<float>(sum / n);
  }
  return out;
}

namespace {

constexpr double kKaiserBeta = 8.6;
constexpr int kZeroCrossings = 32;
constexpr std::size_t kMaxPhaseTable = 1024;
constexpr std::size_t kWindowTableSize = 8192;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double kaiser(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - u * u)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

// Low-pass interpolation kernel evaluated at an offset measured in input
// samples. cutoff is relative to the input Nyquist frequency.
class SincKernel {
 public:
  explicit SincKernel(double cutoff)
      : cutoff_(cutoff), half_width_(kZeroCrossings / cutoff), window_(kWindowTableSize + 2) {
    for (std::size_t i = 0; i < window_.size(); ++i) {
      window_[i] = kaiser(static_cast<double>(i) / kWindowTableSize);
    }
  }

  double half_width() const { return half_width_; }

  double exact(double x) const { return cutoff_ * sinc(cutoff_ * x) * kaiser(x / half_width_); }

  double fast(double x) const {
    const double u = std::abs(x) / half_width_ * kWindowTableSize;
    if (u >= kWindowTableSize) return 0.0;
    const auto i = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(i);
    const double w = window_[i] + frac * (window_[i + 1] - window_[i]);
    return cutoff_ * sinc(cutoff_ * x) * w;
  }

 private:
  double cutoff_;
  double half_width_;
  std::vector<double> window_;
};

}  // namespace

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) fail(ErrorCode::InvalidRate, "target rate " + std::to_string(target_rate));
  if (clip.sample_rate <= 0) fail(ErrorCode::InvalidRate, "source rate " + std::to_string(clip.sample_rate));
  if (clip.channel_count() != 1) {
    fail(ErrorCode::ChannelMismatch, "resample expects mono input, got " +
                                         std::to_string(clip.channel_count()) + " channels");
  }
  if (clip.sample_rate == target_rate) return clip;

  const auto src = static_cast<std::uint64_t>(clip.sample_rate);
  const auto dst = static_cast<std::uint64_t>(target_rate);
  const std::uint64_t g = std::gcd(src, dst);
  const std::uint64_t step = src / g;  // input advance per output, in units of 1/phases
  const std::uint64_t phases = dst / g;

  const auto in = clip.mono();
  const auto n_in = static_cast<std::int64_t>(in.size());
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(in.size()) * dst / src));

  const SincKernel kernel(std::min(1.0, static_cast<double>(dst) / static_cast<double>(src)));
  // Taps farther out than the whole input never contribute.
  const auto reach = std::min(static_cast<std::int64_t>(std::ceil(kernel.half_width())), std::max<std::int64_t>(n_in, 1));
  const std::size_t taps = static_cast<std::size_t>(2 * reach + 1);

  // Taps for output phase p sit at input offsets -reach..reach around
  // floor(t), where t = n * src / dst and frac(t) = p / phases.
  std::vector<double> table;
  const bool use_table = phases <= kMaxPhaseTable;
  if (use_table) {
    table.resize(phases * taps);
    for (std::uint64_t p = 0; p < phases; ++p) {
      const double frac = static_cast<double>(p) / static_cast<double>(phases);
      for (std::int64_t k = -reach; k <= reach; ++k) {
        table[p * taps + static_cast<std::size_t>(k + reach)] = kernel.exact(static_cast<double>(k) - frac);
      }
    }
  }

  AudioClip out;
  out.sample_rate = target_rate;
  out.channels.assign(1, std::vector<float>(n_out));
  for (std::size_t n = 0; n < n_out; ++n) {
    const std::uint64_t pos = n * step;
    const auto base = static_cast<std::int64_t>(pos / phases);
    const std::uint64_t phase = pos % phases;
    const double frac = static_cast<double>(phase) / static_cast<double>(phases);
    const std::int64_t lo = std::max<std::int64_t>(-reach, -base);
    const std::int64_t hi = std::min<std::int64_t>(reach, n_in - 1 - base);
    double acc = 0.0;
    for (std::int64_t k = lo; k <= hi; ++k) {
      const double w = use_table ? table[phase * taps + static_cast<std::size_t>(k + reach)]
                                 : kernel.fast(static_cast<double>(k) - frac);
      acc += w * in[static_cast<std::size_t>(base + k)];
    }
    out.channels[0][n] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
  }
  return out;
}

Bytes encode_wav(const AudioClip& clip, WavEncoding encoding) {
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : encoding == WavEncoding::Pcm24 ? 24 : 32;
  const std::uint16_t format = encoding == WavEncoding::Float32 ? kFormatFloat : kFormatPcm;
  const auto channels = static_cast<std::uint16_t>(clip.channel_count());
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
  const auto data_size = static_cast<std::uint32_t>(clip.frames() * block_align);

  ByteWriter w;
  w.tag("RIFF");
  w.u32(36 + data_size);
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(16);
  w.u16(format);
  w.u16(channels);
  w.u32(static_cast<std::uint32_t>(clip.sample_rate));
  w.u32(static_cast<std::uint32_t>(clip.sample_rate) * block_align);
  w.u16(block_align);
  w.u16(bits);
  w.tag("data");
  w.u32(data_size);
  for (std::size_t i = 0; i < clip.frames(); ++i) {
    for (const auto& ch : clip.channels) {
      const double x = std::clamp(static_cast<double>(ch[i]), -1.0, 1.0);
      switch (encoding) {
        case WavEncoding::Pcm16:
          w.i16(static_cast<std::int16_t>(std::clamp(std::lround(x * 32768.0), -32768L, 32767L)));
          break;
        case WavEncoding::Pcm24: {
          const auto v = static_cast<std::uint32_t>(std::clamp(std::lround(x * 8388608.0), -8388608L, 8388607L));
          w.u8(static_cast<std::uint8_t>(v));
          w.u8(static_cast<std::uint8_t>(v >> 8));
          w.u8(static_cast<std::uint8_t>(v >> 16));
          break;
        }
        case WavEncoding::Pcm32:
          w.u32(static_cast<std::uint32_t>(static_cast<std::int32_t>(
              std::clamp(std::llround(x * 2147483648.0), -2147483648LL, 2147483647LL))));
          break;
        case WavEncoding::Float32:
          w.f32(static_cast<float>(x));
          break;
      }
    }
  }
  return std::move(w).take();
}

}  // namespace voxmed

#include "voxmed/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "voxmed/cnn_kernels.hpp"
#include "voxmed/error.hpp"
#include "voxmed/random.hpp"

namespace voxmed {

ArchSpec ArchSpec::defaults(std::size_t input_dim, std::size_t num_classes) {
  ArchSpec a;
  a.input_dim = input_dim;
  a.num_classes = num_classes;
  a.conv_layers = {{256, 3, false}, {128, 3, true}, {64, 3, true}};
  a.pool_size = 2;
  a.dropout_rate = 0.3;
  return a;
}

std::vector<std::size_t> ArchSpec::sequence_lengths() const {
  std::vector<std::size_t> lengths{input_dim};
  std::size_t len = input_dim;
  for (const auto& layer : conv_layers) {
    len = layer.kernel <= len ? len - layer.kernel + 1 : 0;
    if (layer.pool && pool_size > 0) len /= pool_size;
    lengths.push_back(len);
  }
  return lengths;
}

void ArchSpec::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidArch, what); };
  if (input_dim < 1) bad("input_dim must be >= 1");
  if (num_classes < 2) bad("num_classes must be >= 2");
  if (conv_layers.empty()) bad("at least one conv layer is required");
  if (pool_size < 1) bad("pool_size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad("dropout_rate must be in [0, 1)");
  std::size_t len = input_dim;
  for (std::size_t i = 0; i < conv_layers.size(); ++i) {
    const auto& layer = conv_layers[i];
    if (layer.filters < 1 || layer.kernel < 1) bad("layer " + std::to_string(i) + " has zero filters or kernel");
    if (layer.kernel > len) {
      bad("layer " + std::to_string(i) + " kernel " + std::to_string(layer.kernel) + " exceeds sequence length " +
          std::to_string(len));
    }
    len = len - layer.kernel + 1;
    if (layer.pool) {
      len /= pool_size;
      if (len == 0) bad("sequence vanishes after pooling at layer " + std::to_string(i));
    }
  }
}

std::size_t ArchSpec::flat_size() const {
  return sequence_lengths().back() * conv_layers.back().filters;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.data.size();
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& t : z.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
  return z;
}

void ModelParams::snap_to_float32() {
  for (auto& t : tensors) {
    for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
  }
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

Tensor make_tensor(std::vector<std::size_t> dims) {
  std::size_t n = 1;
  for (const auto d : dims) n *= d;
  return Tensor{std::move(dims), std::vector<double>(n, 0.0)};
}

std::vector<Tensor> shaped_tensors(const ArchSpec& arch) {
  std::vector<Tensor> tensors;
  std::size_t in_ch = 1;
  for (const auto& layer : arch.conv_layers) {
    tensors.push_back(make_tensor({layer.filters, in_ch, layer.kernel}));
    tensors.push_back(make_tensor({layer.filters}));
    in_ch = layer.filters;
  }
  tensors.push_back(make_tensor({arch.num_classes, arch.flat_size()}));
  tensors.push_back(make_tensor({arch.num_classes}));
  return tensors;
}

void fill_he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<double>(static_cast<float>(rng.uniform(-limit, limit)));
}

}  // namespace

ModelParams init_params(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams p;
  p.arch = arch;
  p.tensors = shaped_tensors(arch);
  Rng rng(seed);
  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < arch.conv_layers.size(); ++i) {
    fill_he_uniform(p.conv_weight(i), in_ch * arch.conv_layers[i].kernel, rng);
    in_ch = arch.conv_layers[i].filters;
  }
  fill_he_uniform(p.dense_weight(), arch.flat_size(), rng);
  return p;
}

ForwardTrace forward_trace(const ModelParams& params, std::span<const double> input, const ForwardOptions& opts) {
  const ArchSpec& arch = params.arch;
  if (input.size() != arch.input_dim) {
    fail(ErrorCode::DimMismatch, "embedding length " + std::to_string(input.size()) + " != model input_dim " +
                                     std::to_string(arch.input_dim));
  }
  if (opts.train_mode && arch.dropout_rate > 0.0 && !opts.dropout_seed) {
    fail(ErrorCode::InvalidConfig, "train-mode forward needs a dropout seed");
  }
  const std::size_t n_layers = arch.conv_layers.size();
  ForwardTrace tr;
  tr.inputs.resize(n_layers);
  tr.pre.resize(n_layers);
  tr.act.resize(n_layers);
  tr.pool_index.resize(n_layers);

  std::vector<double> x(input.begin(), input.end());
  std::size_t channels = 1;
  std::size_t length = arch.input_dim;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& layer = arch.conv_layers[i];
    const cnn::ConvShape shape{channels, length, layer.filters, layer.kernel};
    tr.inputs[i] = std::move(x);
    tr.pre[i].resize(layer.filters * shape.out_length());
    cnn::conv1d_forward(shape, tr.inputs[i], params.conv_weight(i).data, params.conv_bias(i).data, tr.pre[i]);
    tr.act[i].resize(tr.pre[i].size());
    cnn::relu_forward(tr.pre[i], tr.act[i]);
    channels = layer.filters;
    length = shape.out_length();
    if (layer.pool) {
      const std::size_t pooled = length / arch.pool_size;
      x.assign(channels * pooled, 0.0);
      tr.pool_index[i].resize(x.size());
      cnn::maxpool_forward(tr.act[i], channels, length, arch.pool_size, x, tr.pool_index[i]);
      length = pooled;
    } else {
      x = tr.act[i];
    }
  }
  tr.flat = std::move(x);
  tr.dropout.assign(tr.flat.size(), 1.0);
  if (opts.train_mode && arch.dropout_rate > 0.0) {
    Rng rng(*opts.dropout_seed);
    const double keep_scale = 1.0 / (1.0 - arch.dropout_rate);
    for (auto& m : tr.dropout) m = rng.uniform() < arch.dropout_rate ? 0.0 : keep_scale;
  }
  tr.dense_in.resize(tr.flat.size());
  for (std::size_t i = 0; i < tr.flat.size(); ++i) tr.dense_in[i] = tr.flat[i] * tr.dropout[i];
  tr.logits.resize(arch.num_classes);
  cnn::dense_forward(tr.dense_in, params.dense_weight().data, params.dense_bias().data, tr.logits);
  tr.probs = cnn::softmax(tr.logits);
  return tr;
}

ClassProbabilities forward(const ModelParams& params, std::span<const float> embedding, const ForwardOptions& opts) {
  if (embedding.size() != params.arch.input_dim) {
    fail(ErrorCode::DimMismatch, "embedding length " + std::to_string(embedding.size()) + " != model input_dim " +
                                     std::to_string(params.arch.input_dim));
  }
  const std::vector<double> input(embedding.begin(), embedding.end());
  auto tr = forward_trace(params, input, opts);
  ClassProbabilities out;
  out.label_index = argmax(tr.probs);
  out.probs = std::move(tr.probs);
  return out;
}

ClassProbabilities predict_recording(const ModelParams& params, std::span<const Embedding> chunk_embeddings) {
  if (chunk_embeddings.empty()) fail(ErrorCode::EmptyInput, "no embeddings for recording");
  std::vector<double> mean(params.arch.num_classes, 0.0);
  for (const auto& e : chunk_embeddings) {
    const auto p = forward(params, e);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p.probs[k];
  }
  double total = 0.0;
  for (const double v : mean) total += v;
  for (auto& v : mean) v /= total;
  ClassProbabilities out;
  out.label_index = argmax(mean);
  out.probs = std::move(mean);
  return out;
}

Bytes encode_params(const ModelParams& params) {
  ByteWriter w;
  w.tag("VXMD");
  w.u16(params.version);
  const ArchSpec& a = params.arch;
  w.u32(static_cast<std::uint32_t>(a.input_dim));
  w.u32(static_cast<std::uint32_t>(a.num_classes));
  w.u32(static_cast<std::uint32_t>(a.pool_size));
  w.f64(a.dropout_rate);
  w.u32(static_cast<std::uint32_t>(a.conv_layers.size()));
  for (const auto& l : a.conv_layers) {
    w.u32(static_cast<std::uint32_t>(l.filters));
    w.u32(static_cast<std::uint32_t>(l.kernel));
    w.u8(l.pool ? 1 : 0);
  }
  w.u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (const auto d : t.dims) w.u32(static_cast<std::uint32_t>(d));
    for (const double v : t.data) w.f32(static_cast<float>(v));
  }
  return std::move(w).take();
}

ModelParams decode_params(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorCode::FormatError);
  if (r.tag() != "VXMD") fail(ErrorCode::FormatError, "not a model file (bad magic)");
  ModelParams p;
  p.version = r.u16();
  if (p.version != kModelFormatVersion) {
    fail(ErrorCode::VersionMismatch, "model file version " + std::to_string(p.version) + ", expected " +
                                         std::to_string(kModelFormatVersion));
  }
  ArchSpec& a = p.arch;
  a.input_dim = r.u32();
  a.num_classes = r.u32();
  a.pool_size = r.u32();
  a.dropout_rate = r.f64();
  const std::uint32_t n_layers = r.u32();
  if (n_layers > r.remaining() / 9) fail(ErrorCode::FormatError, "implausible layer count " + std::to_string(n_layers));
  a.conv_layers.resize(n_layers);
  for (auto& l : a.conv_layers) {
    l.filters = r.u32();
    l.kernel = r.u32();
    l.pool = r.u8() != 0;
  }
  try {
    a.validate();
  } catch (const Error& e) {
    fail(ErrorCode::FormatError, std::string("stored architecture is invalid: ") + e.what());
  }
  const auto expected = shaped_tensors(a);
  const std::uint32_t n_tensors = r.u32();
  if (n_tensors != expected.size()) {
    fail(ErrorCode::FormatError, "expected " + std::to_string(expected.size()) + " tensors, file has " +
                                     std::to_string(n_tensors));
  }
  for (const auto& want : expected) {
    Tensor t;
    const std::uint32_t rank = r.u32();
    if (rank != want.dims.size()) fail(ErrorCode::FormatError, "tensor rank mismatch at offset " + std::to_string(r.offset()));
    for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(r.u32());
    if (t.dims != want.dims) fail(ErrorCode::FormatError, "tensor shape mismatch at offset " + std::to_string(r.offset()));
    if (want.data.size() > r.remaining() / 4) fail(ErrorCode::FormatError, "truncated tensor payload");
    t.data.resize(want.data.size());
    for (auto& v : t.data) {
      const float f = r.f32();
      if (!std::isfinite(f)) fail(ErrorCode::FormatError, "non-finite weight at offset " + std::to_string(r.offset() - 4));
      v = f;
    }
    p.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) fail(ErrorCode::FormatError, std::to_string(r.remaining()) + " trailing bytes");
  return p;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, encode_params(params));
}

ModelParams load_params(const std::filesystem::path& path) { return decode_params(read_file(path)); }

}  // namespace voxmed

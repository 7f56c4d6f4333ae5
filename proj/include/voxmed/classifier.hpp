#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "voxmed/binary_io.hpp"
#include "voxmed/embedding.hpp"

namespace voxmed {

struct ConvLayerSpec {
  std::size_t filters = 0;
  std::size_t kernel = 3;
  bool pool = false;  // max-pool after this layer's ReLU

  bool operator==(const ConvLayerSpec&) const = default;
};

// The embedding is read as a one-channel sequence of length input_dim.
// Each conv layer is a valid cross-correlation followed by ReLU and an
// optional max-pool; dropout precedes the dense softmax head.
struct ArchSpec {
  std::size_t input_dim = kDefaultEmbeddingDim;
  std::vector<ConvLayerSpec> conv_layers;
  std::size_t pool_size = 2;
  double dropout_rate = 0.3;
  std::size_t num_classes = 3;

  // conv(256,k3) -> conv(128,k3) -> pool -> conv(64,k3) -> pool -> dropout(0.3) -> dense.
  static ArchSpec defaults(std::size_t input_dim, std::size_t num_classes);

  // Throws InvalidArch, including when a kernel outgrows the sequence.
  void validate() const;
  // Sequence length entering each conv layer, plus the final length.
  std::vector<std::size_t> sequence_lengths() const;
  std::size_t flat_size() const;

  bool operator==(const ArchSpec&) const = default;
};

struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> data;

  bool operator==(const Tensor&) const = default;
};

inline constexpr std::uint16_t kModelFormatVersion = 1;

// Tensor order: conv0.weight, conv0.bias, conv1.weight, ..., dense.weight, dense.bias.
struct ModelParams {
  ArchSpec arch;
  std::vector<Tensor> tensors;
  std::uint16_t version = kModelFormatVersion;

  std::size_t layer_count() const { return arch.conv_layers.size(); }
  const Tensor& conv_weight(std::size_t i) const { return tensors[2 * i]; }
  const Tensor& conv_bias(std::size_t i) const { return tensors[2 * i + 1]; }
  const Tensor& dense_weight() const { return tensors[2 * layer_count()]; }
  const Tensor& dense_bias() const { return tensors[2 * layer_count() + 1]; }
  Tensor& conv_weight(std::size_t i) { return tensors[2 * i]; }
  Tensor& conv_bias(std::size_t i) { return tensors[2 * i + 1]; }
  Tensor& dense_weight() { return tensors[2 * layer_count()]; }
  Tensor& dense_bias() { return tensors[2 * layer_count() + 1]; }

  std::size_t parameter_count() const;
  // Same shapes, all zeros. Gradients and Adam moments use this layout.
  ModelParams zeros_like() const;
  // Rounds every value to float32 precision so the in-memory model is exactly
  // what the model file stores.
  void snap_to_float32();

  bool operator==(const ModelParams&) const = default;
};

struct ClassProbabilities {
  std::vector<double> probs;
  std::size_t label_index = 0;
};

// Index of the maximum; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

// He-uniform weights, zero biases. Throws InvalidArch.
ModelParams init_params(const ArchSpec& arch, std::uint64_t seed);

struct ForwardOptions {
  bool train_mode = false;
  std::optional<std::uint64_t> dropout_seed;  // required in train mode
};

// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;  // input to conv layer i
  std::vector<std::vector<double>> pre;     // conv output before ReLU
  std::vector<std::vector<double>> act;     // after ReLU
  std::vector<std::vector<std::size_t>> pool_index;  // empty when layer i does not pool
  std::vector<double> flat;     // flattened last feature map
  std::vector<double> dropout;  // per-element multiplier (0 or 1/(1-rate))
  std::vector<double> dense_in;
  std::vector<double> logits;
  std::vector<double> probs;
};

ForwardTrace forward_trace(const ModelParams& params, std::span<const double> input, const ForwardOptions& opts = {});

// Throws DimMismatch.
ClassProbabilities forward(const ModelParams& params, std::span<const float> embedding, const ForwardOptions& opts = {});
inline ClassProbabilities forward(const ModelParams& params, const Embedding& e, const ForwardOptions& opts = {}) {
  return forward(params, e.values, opts);
}

// Mean of the per-embedding probability vectors, renormalized. Throws EmptyInput.
ClassProbabilities predict_recording(const ModelParams& params, std::span<const Embedding> chunk_embeddings);

// Model file: "VXMD", u16 version, ArchSpec (u32 input_dim, u32 num_classes,
// u32 pool_size, f64 dropout_rate, u32 layer count, then per layer u32
// filters, u32 kernel, u8 pool), u32 tensor count, then per tensor u32 rank,
// rank x u32 dims and a float32 payload. Little-endian.
Bytes encode_params(const ModelParams& params);
ModelParams decode_params(std::span<const std::uint8_t> bytes);  // FormatError, VersionMismatch
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace voxmed

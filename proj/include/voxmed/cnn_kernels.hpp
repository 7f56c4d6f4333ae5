#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Building blocks of the 1-D CNN. Activations are channel-major
// (channels x length, row-major); convolution weights are out x in x kernel.
// Backward functions accumulate into their gradient outputs.
namespace voxmed::cnn {

struct ConvShape {
  std::size_t in_channels;
  std::size_t length;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t out_length() const { return length - kernel + 1; }
};

// Valid cross-correlation plus bias, no activation.
void conv1d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);

// dx may be empty when the input gradient is not needed.
void conv1d_backward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw, std::span<double> db);

void relu_forward(std::span<const double> x, std::span<double> y);
// dx = dy where x > 0, else 0.
void relu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);

// Non-overlapping max pooling with window == stride == pool; trailing
// samples that do not fill a window are dropped. Ties resolve to the first
// position. index receives the flat source position of every output.
void maxpool_forward(std::span<const double> x, std::size_t channels, std::size_t length, std::size_t pool,
                     std::span<double> y, std::span<std::size_t> index);
void maxpool_backward(std::span<const double> dy, std::span<const std::size_t> index, std::span<double> dx);

// y = W x + b with W as out x in.
void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y);
void dense_backward(std::span<const double> x, std::span<const double> w, std::span<const double> dy,
                    std::span<double> dx, std::span<double> dw, std::span<double> db);

// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace voxmed::cnn

#include "voxmed/cnn_kernels.hpp"

#include <algorithm>
#include <cmath>

namespace voxmed::cnn {

void conv1d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
  const std::size_t out_len = s.out_length();
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    double* yo = y.data() + o * out_len;
    std::fill(yo, yo + out_len, b[o]);
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      const double* xc = x.data() + c * s.length;
      const double* wk = w.data() + (o * s.in_channels + c) * s.kernel;
      for (std::size_t k = 0; k < s.kernel; ++k) {
        const double wv = wk[k];
        const double* xs = xc + k;
        for (std::size_t i = 0; i < out_len; ++i) yo[i] += wv * xs[i];
      }
    }
  }
}

void conv1d_backward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw, std::span<double> db) {
  const std::size_t out_len = s.out_length();
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    const double* dyo = dy.data() + o * out_len;
    double bsum = 0.0;
    for (std::size_t i = 0; i < out_len; ++i) bsum += dyo[i];
    db[o] += bsum;
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      const double* xc = x.data() + c * s.length;
      const std::size_t wbase = (o * s.in_channels + c) * s.kernel;
      for (std::size_t k = 0; k < s.kernel; ++k) {
        const double* xs = xc + k;
        double acc = 0.0;
        for (std::size_t i = 0; i < out_len; ++i) acc += dyo[i] * xs[i];
        dw[wbase + k] += acc;
        if (!dx.empty()) {
          double* dxs = dx.data() + c * s.length + k;
          const double wv = w[wbase + k];
          for (std::size_t i = 0; i < out_len; ++i) dxs[i] += wv * dyo[i];
        }
      }
    }
  }
}

void relu_forward(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void maxpool_forward(std::span<const double> x, std::size_t channels, std::size_t length, std::size_t pool,
                     std::span<double> y, std::span<std::size_t> index) {
  const std::size_t out_len = length / pool;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < out_len; ++i) {
      std::size_t best = c * length + i * pool;
      for (std::size_t j = 1; j < pool; ++j) {
        const std::size_t p = c * length + i * pool + j;
        if (x[p] > x[best]) best = p;
      }
      y[c * out_len + i] = x[best];
      index[c * out_len + i] = best;
    }
  }
}

void maxpool_backward(std::span<const double> dy, std::span<const std::size_t> index, std::span<double> dx) {
  for (std::size_t i = 0; i < dy.size(); ++i) dx[index[i]] += dy[i];
}

void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y) {
  const std::size_t n = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    const double* wo = w.data() + o * n;
    double acc = b[o];
    for (std::size_t i = 0; i < n; ++i) acc += wo[i] * x[i];
    y[o] = acc;
  }
}

void dense_backward(std::span<const double> x, std::span<const double> w, std::span<const double> dy,
                    std::span<double> dx, std::span<double> dw, std::span<double> db) {
  const std::size_t n = x.size();
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const double g = dy[o];
    db[o] += g;
    double* dwo = dw.data() + o * n;
    for (std::size_t i = 0; i < n; ++i) dwo[i] += g * x[i];
    if (!dx.empty()) {
      const double* wo = w.data() + o * n;
      for (std::size_t i = 0; i < n; ++i) dx[i] += g * wo[i];
    }
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - peak);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace voxmed::cnn

#pragma once

// Minimal numeric layer for fully convolutional networks: dense arrays,
// stride-1 same-padded 2-D convolution with optional causality masks,
// exact backpropagation and plain SGD.
//
// Feature maps are H × W × C arrays, row-major with channels innermost.
// Kernels are kh × kw × c_in × c_out, row-major. The kernel row index runs
// over H (space) and the column index over W (time).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "atse/anisotropy.hpp"

namespace atse {

template <typename T>
class NumArray {
 public:
  NumArray() = default;
  explicit NumArray(std::vector<std::size_t> shape, T fill = T{0});
  NumArray(std::vector<std::size_t> shape, std::vector<T> data);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }

  /// Rank-3 access (h, w, c).
  T& at(std::size_t h, std::size_t w, std::size_t c) { return data_[(h * shape_[1] + w) * shape_[2] + c]; }
  const T& at(std::size_t h, std::size_t w, std::size_t c) const {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }

  void fill(T value);
  bool all_finite() const noexcept;

  bool operator==(const NumArray&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

enum class Activation : std::uint8_t { None = 0, ReLU = 1, Sigmoid = 2 };

std::string_view to_string(Activation a);

struct LayerDims {
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t c_in = 1;
  std::size_t c_out = 1;

  bool operator==(const LayerDims&) const = default;
};

template <typename T>
struct ConvLayer {
  LayerDims dims;
  NumArray<T> weights;  // kh × kw × c_in × c_out
  NumArray<T> bias;     // c_out
  std::optional<CausalityMask> mask;
  Activation activation = Activation::None;

  /// Zero-initialized layer. Throws ShapeError for even kernels, zero channel
  /// counts, or a mask of a different size.
  ConvLayer(LayerDims dims, std::optional<CausalityMask> mask, Activation activation);

  bool active(std::size_t i, std::size_t j) const { return !mask || mask->at(i, j); }
  std::size_t active_offsets() const;
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

  /// True when every weight at a masked-out kernel position is exactly zero.
  bool mask_respected() const noexcept;

  bool operator==(const ConvLayer&) const = default;
};

/// Two masked convolutions over the same input, outputs concatenated along
/// channels (free-flow branch first).
template <typename T>
struct DualBranchLayer {
  ConvLayer<T> free;
  ConvLayer<T> cong;

  DualBranchLayer(ConvLayer<T> free_branch, ConvLayer<T> cong_branch);

  std::size_t c_in() const noexcept { return free.dims.c_in; }
  std::size_t c_out() const noexcept { return free.dims.c_out + cong.dims.c_out; }
  std::size_t parameter_count() const noexcept { return free.parameter_count() + cong.parameter_count(); }

  bool operator==(const DualBranchLayer&) const = default;
};

template <typename T>
struct ConvGrads {
  NumArray<T> input;    // empty when not requested
  NumArray<T> weights;  // zero at masked positions
  NumArray<T> bias;
};

template <typename T>
struct DualGrads {
  NumArray<T> input;
  ConvGrads<T> free;
  ConvGrads<T> cong;
};

struct SgdConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double init_scale = 1.0;

  void validate() const;
};

/// Same-padded convolution followed by the layer's activation.
/// Throws ShapeError on a rank or channel mismatch.
template <typename T>
NumArray<T> conv_forward(const NumArray<T>& input, const ConvLayer<T>& layer);

/// Gradients of the layer output (after activation) with respect to input,
/// weights and bias. `output` must be conv_forward(input, layer). The input
/// gradient is skipped when `need_input_grad` is false.
template <typename T>
ConvGrads<T> conv_backward(const NumArray<T>& grad_out, const NumArray<T>& input, const NumArray<T>& output,
                           const ConvLayer<T>& layer, bool need_input_grad = true);

/// Convenience overload that recomputes the forward pass.
template <typename T>
ConvGrads<T> conv_backward(const NumArray<T>& grad_out, const NumArray<T>& input, const ConvLayer<T>& layer);

template <typename T>
NumArray<T> dual_forward(const NumArray<T>& input, const DualBranchLayer<T>& layer);

template <typename T>
DualGrads<T> dual_backward(const NumArray<T>& grad_out, const NumArray<T>& input, const NumArray<T>& output,
                           const DualBranchLayer<T>& layer, bool need_input_grad = true);

/// p ← p − lr·g for weights and bias.
template <typename T>
void sgd_step(ConvLayer<T>& layer, const ConvGrads<T>& grads, double learning_rate);

/// Uniform(−s, s) weights with s = init_scale·√(6 / (fan_in + fan_out)),
/// fan_in = active·c_in, fan_out = active·c_out. Masked weights and biases
/// are zero. Deterministic per seed.
template <typename T>
ConvLayer<T> init_layer(LayerDims dims, std::optional<CausalityMask> mask, Activation activation,
                        std::uint64_t seed, double init_scale);

/// Init bound s used by init_layer.
double init_bound(const LayerDims& dims, std::size_t active_offsets, double init_scale);

/// Element type conversion.
template <typename To, typename From>
NumArray<To> array_cast(const NumArray<From>& a) {
  std::vector<To> data(a.data().begin(), a.data().end());
  return NumArray<To>(a.shape(), std::move(data));
}

template <typename To, typename From>
ConvLayer<To> layer_cast(const ConvLayer<From>& layer) {
  ConvLayer<To> out(layer.dims, layer.mask, layer.activation);
  out.weights = array_cast<To>(layer.weights);
  out.bias = array_cast<To>(layer.bias);
  return out;
}

}  // namespace atse

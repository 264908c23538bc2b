#include "atse/nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <random>
#include <string>

#include "atse/errors.hpp"

namespace atse {

namespace {

// Row-major C = alpha·op(A)·op(B) + beta·C.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, float alpha, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              beta, c, static_cast<int>(ldc));
}

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              beta, c, static_cast<int>(ldc));
}

struct Offset {
  long di;
  long dj;
  std::size_t kernel_index;  // i·kw + j
};

template <typename T>
std::vector<Offset> active_offset_list(const ConvLayer<T>& layer) {
  const auto& d = layer.dims;
  const auto rh = static_cast<long>(d.kh / 2);
  const auto rw = static_cast<long>(d.kw / 2);
  std::vector<Offset> out;
  for (std::size_t i = 0; i < d.kh; ++i) {
    for (std::size_t j = 0; j < d.kw; ++j) {
      if (layer.active(i, j)) out.push_back({static_cast<long>(i) - rh, static_cast<long>(j) - rw, i * d.kw + j});
    }
  }
  return out;
}

template <typename T>
void check_input(const NumArray<T>& input, const ConvLayer<T>& layer) {
  if (input.rank() != 3) throw ShapeError("convolution input must be rank 3 (H, W, C)");
  if (input.dim(2) != layer.dims.c_in) {
    throw ShapeError("input has " + std::to_string(input.dim(2)) + " channels, layer expects " +
                     std::to_string(layer.dims.c_in));
  }
}

// Patch matrix for output cells [r0, r1): one row per cell, one c_in block
// per active offset, zeros where the offset falls outside the map.
template <typename T>
void im2col(const NumArray<T>& input, const std::vector<Offset>& offsets, std::size_t r0, std::size_t r1,
            std::vector<T>& col) {
  const std::size_t h_dim = input.dim(0);
  const std::size_t w_dim = input.dim(1);
  const std::size_t c = input.dim(2);
  const std::size_t row_len = offsets.size() * c;
  col.resize((r1 - r0) * row_len);
  const T* src = input.data().data();
  for (std::size_t r = r0; r < r1; ++r) {
    const std::size_t h = r / w_dim;
    const std::size_t w = r % w_dim;
    T* row = col.data() + (r - r0) * row_len;
    for (std::size_t o = 0; o < offsets.size(); ++o) {
      const long sh = static_cast<long>(h) + offsets[o].di;
      const long sw = static_cast<long>(w) + offsets[o].dj;
      T* dst = row + o * c;
      if (sh < 0 || sw < 0 || sh >= static_cast<long>(h_dim) || sw >= static_cast<long>(w_dim)) {
        std::fill(dst, dst + c, T{0});
      } else {
        std::memcpy(dst, src + (static_cast<std::size_t>(sh) * w_dim + static_cast<std::size_t>(sw)) * c,
                    c * sizeof(T));
      }
    }
  }
}

// Inverse of im2col: adds patch-gradient rows for cells [r0, r1) back onto
// the input gradient.
template <typename T>
void col2im(const std::vector<T>& col, const std::vector<Offset>& offsets, std::size_t r0, std::size_t r1,
            NumArray<T>& grad_input) {
  const std::size_t h_dim = grad_input.dim(0);
  const std::size_t w_dim = grad_input.dim(1);
  const std::size_t c_in = grad_input.dim(2);
  const std::size_t k = offsets.size() * c_in;
  T* gi = grad_input.data().data();
  for (std::size_t r = r0; r < r1; ++r) {
    const std::size_t h = r / w_dim;
    const std::size_t w = r % w_dim;
    const T* row = col.data() + (r - r0) * k;
    for (std::size_t o = 0; o < offsets.size(); ++o) {
      const long sh = static_cast<long>(h) + offsets[o].di;
      const long sw = static_cast<long>(w) + offsets[o].dj;
      if (sh < 0 || sw < 0 || sh >= static_cast<long>(h_dim) || sw >= static_cast<long>(w_dim)) continue;
      T* dst = gi + (static_cast<std::size_t>(sh) * w_dim + static_cast<std::size_t>(sw)) * c_in;
      const T* srcg = row + o * c_in;
      for (std::size_t c = 0; c < c_in; ++c) dst[c] += srcg[c];
    }
  }
}

// Cells per tile so a tile's patch rows stay cache resident.
template <typename T>
std::size_t tile_rows(std::size_t k) {
  constexpr std::size_t kTileBytes = 512 * 1024;
  return std::max<std::size_t>(64, kTileBytes / (k * sizeof(T)));
}

// Weight rows for the active offsets, K × c_out with K = |offsets|·c_in.
template <typename T>
const T* gather_weights(const ConvLayer<T>& layer, const std::vector<Offset>& offsets, std::vector<T>& buf) {
  const std::size_t block = layer.dims.c_in * layer.dims.c_out;
  if (offsets.size() == layer.dims.kh * layer.dims.kw) return layer.weights.data().data();
  buf.resize(offsets.size() * block);
  for (std::size_t o = 0; o < offsets.size(); ++o) {
    std::memcpy(buf.data() + o * block, layer.weights.data().data() + offsets[o].kernel_index * block,
                block * sizeof(T));
  }
  return buf.data();
}

template <typename T>
std::vector<T>& scratch(int slot) {
  thread_local std::vector<T> buffers[3];
  return buffers[slot];
}

template <typename T>
T activate(Activation a, T x) {
  switch (a) {
    case Activation::ReLU: return x > T{0} ? x : T{0};
    case Activation::Sigmoid: return T{1} / (T{1} + std::exp(-x));
    case Activation::None: break;
  }
  return x;
}

// Derivative expressed through the activation output y.
template <typename T>
T activation_slope(Activation a, T y) {
  switch (a) {
    case Activation::ReLU: return y > T{0} ? T{1} : T{0};
    case Activation::Sigmoid: return y * (T{1} - y);
    case Activation::None: break;
  }
  return T{1};
}

}  // namespace

template <typename T>
NumArray<T>::NumArray(std::vector<std::size_t> shape, T fill)
    : shape_(std::move(shape)),
      data_(std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>()), fill) {}

template <typename T>
NumArray<T>::NumArray(std::vector<std::size_t> shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (n != data_.size()) throw ShapeError("array data length does not match its shape");
}

template <typename T>
void NumArray<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool NumArray<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "unknown";
}

template <typename T>
ConvLayer<T>::ConvLayer(LayerDims d, std::optional<CausalityMask> m, Activation act)
    : dims(d), mask(std::move(m)), activation(act) {
  if (dims.kh % 2 == 0 || dims.kw % 2 == 0) throw ShapeError("kernel dimensions must be odd");
  if (dims.c_in == 0 || dims.c_out == 0) throw ShapeError("channel counts must be positive");
  if (mask && (mask->kh() != dims.kh || mask->kw() != dims.kw)) {
    throw ShapeError("mask size does not match kernel size");
  }
  weights = NumArray<T>({dims.kh, dims.kw, dims.c_in, dims.c_out});
  bias = NumArray<T>({dims.c_out});
}

template <typename T>
std::size_t ConvLayer<T>::active_offsets() const {
  return mask ? count_active(*mask) : dims.kh * dims.kw;
}

template <typename T>
bool ConvLayer<T>::mask_respected() const noexcept {
  if (!mask) return true;
  const std::size_t block = dims.c_in * dims.c_out;
  for (std::size_t i = 0; i < dims.kh; ++i) {
    for (std::size_t j = 0; j < dims.kw; ++j) {
      if (mask->at(i, j)) continue;
      const T* w = weights.data().data() + (i * dims.kw + j) * block;
      if (std::any_of(w, w + block, [](T v) { return v != T{0}; })) return false;
    }
  }
  return true;
}

template <typename T>
DualBranchLayer<T>::DualBranchLayer(ConvLayer<T> free_branch, ConvLayer<T> cong_branch)
    : free(std::move(free_branch)), cong(std::move(cong_branch)) {
  if (free.dims.c_in != cong.dims.c_in) throw ShapeError("dual branches must share their input channels");
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(init_scale > 0.0)) throw ConfigError("init scale must be positive");
}

template <typename T>
NumArray<T> conv_forward(const NumArray<T>& input, const ConvLayer<T>& layer) {
  check_input(input, layer);
  const std::size_t cells = input.dim(0) * input.dim(1);
  const std::size_t c_out = layer.dims.c_out;
  const auto offsets = active_offset_list(layer);
  const std::size_t k = offsets.size() * layer.dims.c_in;

  auto& col = scratch<T>(0);
  auto& wbuf = scratch<T>(1);
  const T* wmat = gather_weights(layer, offsets, wbuf);

  NumArray<T> out({input.dim(0), input.dim(1), c_out});
  T* o = out.data().data();
  for (std::size_t r = 0; r < cells; ++r) std::memcpy(o + r * c_out, layer.bias.data().data(), c_out * sizeof(T));
  const std::size_t tile = tile_rows<T>(k);
  for (std::size_t r0 = 0; r0 < cells; r0 += tile) {
    const std::size_t r1 = std::min(cells, r0 + tile);
    im2col(input, offsets, r0, r1, col);
    gemm(false, false, r1 - r0, c_out, k, T{1}, col.data(), k, wmat, c_out, T{1}, o + r0 * c_out, c_out);
  }
  if (layer.activation != Activation::None) {
    for (auto& v : out.data()) v = activate(layer.activation, v);
  }
  return out;
}

template <typename T>
ConvGrads<T> conv_backward(const NumArray<T>& grad_out, const NumArray<T>& input, const NumArray<T>& output,
                           const ConvLayer<T>& layer, bool need_input_grad) {
  check_input(input, layer);
  const std::size_t h_dim = input.dim(0);
  const std::size_t w_dim = input.dim(1);
  const std::size_t cells = h_dim * w_dim;
  const std::size_t c_in = layer.dims.c_in;
  const std::size_t c_out = layer.dims.c_out;
  const std::vector<std::size_t> out_shape{h_dim, w_dim, c_out};
  if (grad_out.shape() != out_shape || output.shape() != out_shape) {
    throw ShapeError("output gradient shape does not match the layer output");
  }

  // Gradient with respect to the pre-activation.
  auto& pre = scratch<T>(2);
  pre.resize(cells * c_out);
  for (std::size_t k = 0; k < pre.size(); ++k) pre[k] = grad_out[k] * activation_slope(layer.activation, output[k]);

  ConvGrads<T> grads;
  grads.bias = NumArray<T>({c_out});
  for (std::size_t r = 0; r < cells; ++r) {
    for (std::size_t c = 0; c < c_out; ++c) grads.bias[c] += pre[r * c_out + c];
  }

  const auto offsets = active_offset_list(layer);
  const std::size_t k = offsets.size() * c_in;
  auto& col = scratch<T>(0);
  auto& wbuf = scratch<T>(1);
  const T* wmat = need_input_grad ? gather_weights(layer, offsets, wbuf) : nullptr;
  if (need_input_grad) grads.input = NumArray<T>(input.shape());

  std::vector<T> gw(k * c_out, T{0});
  const std::size_t tile = tile_rows<T>(k);
  for (std::size_t r0 = 0; r0 < cells; r0 += tile) {
    const std::size_t r1 = std::min(cells, r0 + tile);
    im2col(input, offsets, r0, r1, col);
    gemm(true, false, k, c_out, r1 - r0, T{1}, col.data(), k, pre.data() + r0 * c_out, c_out, T{1}, gw.data(),
         c_out);
    if (need_input_grad) {
      // col is reused as the patch-gradient buffer.
      gemm(false, true, r1 - r0, k, c_out, T{1}, pre.data() + r0 * c_out, c_out, wmat, c_out, T{0}, col.data(), k);
      col2im(col, offsets, r0, r1, grads.input);
    }
  }
  grads.weights = NumArray<T>({layer.dims.kh, layer.dims.kw, c_in, c_out});
  const std::size_t block = c_in * c_out;
  for (std::size_t o = 0; o < offsets.size(); ++o) {
    std::memcpy(grads.weights.data().data() + offsets[o].kernel_index * block, gw.data() + o * block,
                block * sizeof(T));
  }
  return grads;
}

template <typename T>
ConvGrads<T> conv_backward(const NumArray<T>& grad_out, const NumArray<T>& input, const ConvLayer<T>& layer) {
  const auto output = conv_forward(input, layer);
  return conv_backward(grad_out, input, output, layer, true);
}

template <typename T>
NumArray<T> dual_forward(const NumArray<T>& input, const DualBranchLayer<T>& layer) {
  const auto a = conv_forward(input, layer.free);
  const auto b = conv_forward(input, layer.cong);
  const std::size_t cells = input.dim(0) * input.dim(1);
  const std::size_t ca = layer.free.dims.c_out;
  const std::size_t cb = layer.cong.dims.c_out;
  NumArray<T> out({input.dim(0), input.dim(1), ca + cb});
  for (std::size_t r = 0; r < cells; ++r) {
    std::memcpy(&out[r * (ca + cb)], &a[r * ca], ca * sizeof(T));
    std::memcpy(&out[r * (ca + cb) + ca], &b[r * cb], cb * sizeof(T));
  }
  return out;
}

template <typename T>
DualGrads<T> dual_backward(const NumArray<T>& grad_out, const NumArray<T>& input, const NumArray<T>& output,
                           const DualBranchLayer<T>& layer, bool need_input_grad) {
  const std::size_t h_dim = input.dim(0);
  const std::size_t w_dim = input.dim(1);
  const std::size_t cells = h_dim * w_dim;
  const std::size_t ca = layer.free.dims.c_out;
  const std::size_t cb = layer.cong.dims.c_out;
  const std::vector<std::size_t> out_shape{h_dim, w_dim, ca + cb};
  if (grad_out.shape() != out_shape || output.shape() != out_shape) {
    throw ShapeError("output gradient shape does not match the dual layer output");
  }
  NumArray<T> ga({h_dim, w_dim, ca}), gb({h_dim, w_dim, cb}), ya({h_dim, w_dim, ca}), yb({h_dim, w_dim, cb});
  for (std::size_t r = 0; r < cells; ++r) {
    std::memcpy(&ga[r * ca], &grad_out[r * (ca + cb)], ca * sizeof(T));
    std::memcpy(&gb[r * cb], &grad_out[r * (ca + cb) + ca], cb * sizeof(T));
    std::memcpy(&ya[r * ca], &output[r * (ca + cb)], ca * sizeof(T));
    std::memcpy(&yb[r * cb], &output[r * (ca + cb) + ca], cb * sizeof(T));
  }
  DualGrads<T> grads;
  grads.free = conv_backward(ga, input, ya, layer.free, need_input_grad);
  grads.cong = conv_backward(gb, input, yb, layer.cong, need_input_grad);
  if (need_input_grad) {
    grads.input = std::move(grads.free.input);
    for (std::size_t k = 0; k < grads.input.size(); ++k) grads.input[k] += grads.cong.input[k];
    grads.free.input = {};
    grads.cong.input = {};
  }
  return grads;
}

template <typename T>
void sgd_step(ConvLayer<T>& layer, const ConvGrads<T>& grads, double learning_rate) {
  if (grads.weights.shape() != layer.weights.shape() || grads.bias.shape() != layer.bias.shape()) {
    throw ShapeError("gradient shapes do not match the layer");
  }
  const T lr = static_cast<T>(learning_rate);
  for (std::size_t k = 0; k < layer.weights.size(); ++k) layer.weights[k] -= lr * grads.weights[k];
  for (std::size_t k = 0; k < layer.bias.size(); ++k) layer.bias[k] -= lr * grads.bias[k];
}

double init_bound(const LayerDims& dims, std::size_t active_offsets, double init_scale) {
  const double fan_in = static_cast<double>(active_offsets * dims.c_in);
  const double fan_out = static_cast<double>(active_offsets * dims.c_out);
  return init_scale * std::sqrt(6.0 / (fan_in + fan_out));
}

template <typename T>
ConvLayer<T> init_layer(LayerDims dims, std::optional<CausalityMask> mask, Activation activation,
                        std::uint64_t seed, double init_scale) {
  ConvLayer<T> layer(dims, std::move(mask), activation);
  const double s = init_bound(dims, layer.active_offsets(), init_scale);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> draw(-s, s);
  const std::size_t block = dims.c_in * dims.c_out;
  for (std::size_t i = 0; i < dims.kh; ++i) {
    for (std::size_t j = 0; j < dims.kw; ++j) {
      if (!layer.active(i, j)) continue;
      T* w = layer.weights.data().data() + (i * dims.kw + j) * block;
      for (std::size_t q = 0; q < block; ++q) w[q] = static_cast<T>(draw(rng));
    }
  }
  return layer;
}

#define ATSE_INSTANTIATE_NN(T)                                                                                   \
  template class NumArray<T>;                                                                                    \
  template struct ConvLayer<T>;                                                                                  \
  template struct DualBranchLayer<T>;                                                                            \
  template NumArray<T> conv_forward(const NumArray<T>&, const ConvLayer<T>&);                                    \
  template ConvGrads<T> conv_backward(const NumArray<T>&, const NumArray<T>&, const NumArray<T>&,                \
                                      const ConvLayer<T>&, bool);                                                \
  template ConvGrads<T> conv_backward(const NumArray<T>&, const NumArray<T>&, const ConvLayer<T>&);              \
  template NumArray<T> dual_forward(const NumArray<T>&, const DualBranchLayer<T>&);                              \
  template DualGrads<T> dual_backward(const NumArray<T>&, const NumArray<T>&, const NumArray<T>&,                \
                                      const DualBranchLayer<T>&, bool);                                          \
  template void sgd_step(ConvLayer<T>&, const ConvGrads<T>&, double);                                            \
  template ConvLayer<T> init_layer(LayerDims, std::optional<CausalityMask>, Activation, std::uint64_t, double);

ATSE_INSTANTIATE_NN(float)
ATSE_INSTANTIATE_NN(double)

#undef ATSE_INSTANTIATE_NN

}  // namespace atse

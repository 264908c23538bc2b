#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "atse/dataset.hpp"
#include "atse/grid.hpp"
#include "atse/nn.hpp"

namespace atse {

enum class BranchMode : std::uint8_t { Isotropic = 0, DualAniso = 1 };

struct LayerSpec {
  std::size_t kh = 3;
  std::size_t kw = 3;
  std::size_t c_out = 1;
  BranchMode mode = BranchMode::Isotropic;
  Activation activation = Activation::ReLU;

  bool operator==(const LayerSpec&) const = default;
};

/// Layer stack plus the grid constants the causality masks are built from.
/// Input is always the 3-channel RGB partial field.
struct ModelConfig {
  std::vector<LayerSpec> layers;
  double dx = 10.0;
  double dt = 1.0;
  double v_max = 30.0;
  double v_cong = -5.0;

  /// Encoder 5×5×40, 7×7×48, 7×7×32 (dual anisotropic, ReLU); decoder
  /// 5×5×48, 5×5×40, 9×9×56 (isotropic, ReLU); output 7×7×1 (sigmoid).
  static ModelConfig standard(const GridSpec& grid);

  /// Hidden layers' channel counts multiplied by `factor` (rounded, at least
  /// 2 for dual layers). The output layer keeps one channel.
  ModelConfig with_channel_scale(double factor) const;

  /// Throws ConfigError for an empty stack, even kernels, a last layer that is
  /// not 1-channel sigmoid, or a dual layer with fewer than 2 channels.
  void validate() const;

  std::size_t c_in(std::size_t layer) const { return layer == 0 ? 3 : layers[layer - 1].c_out; }

  /// Index of the layer whose output is the hidden representation: the last
  /// of the leading dual-anisotropic layers, or the middle layer if none.
  std::size_t hidden_layer() const;

  /// Σ kh·kw·c_in·c_out + c_out over layers.
  std::size_t parameter_count() const;

  /// Checks that a field's grid constants match the mask constants.
  bool matches(const GridSpec& grid) const noexcept;

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
using ModelLayer = std::variant<ConvLayer<T>, DualBranchLayer<T>>;

/// Fully convolutional encoder-decoder mapping a partial RGB field to a
/// normalized speed field.
template <typename T>
struct BasicEncoderDecoder {
  ModelConfig config;
  std::vector<ModelLayer<T>> layers;

  std::size_t parameter_count() const;
  bool masks_respected() const;

  bool operator==(const BasicEncoderDecoder&) const = default;
};

using EncoderDecoder = BasicEncoderDecoder<float>;

/// Fresh model with init_layer weights. Each branch draws from its own seed
/// derived from `seed`. Throws ConfigError on an invalid config.
template <typename T = float>
BasicEncoderDecoder<T> build_model(const ModelConfig& config, std::uint64_t seed, double init_scale = 1.0);

template <typename To, typename From>
BasicEncoderDecoder<To> model_cast(const BasicEncoderDecoder<From>& model);

/// H × W × 3 network input from a partial field.
template <typename T>
NumArray<T> to_input(const PartialField& field);

/// Activations of every layer; element 0 is the input, element k+1 the
/// output of layer k.
template <typename T>
std::vector<NumArray<T>> forward_trace(const BasicEncoderDecoder<T>& model, const NumArray<T>& input);

/// Normalized output (H × W × 1, values in (0,1)).
template <typename T>
NumArray<T> forward(const BasicEncoderDecoder<T>& model, const NumArray<T>& input);

/// Speed field in m/s: sigmoid output scaled by v_max.
SpeedField forward(const EncoderDecoder& model, const PartialField& input);

/// Per-channel spatial mean of a rank-3 activation.
template <typename T>
std::vector<double> global_average_pool(const NumArray<T>& activation);

/// Hidden representation: hidden_layer() output, average-pooled per channel.
std::vector<double> encode_hidden(const EncoderDecoder& model, const PartialField& input);

/// Parameter gradients, one entry per branch (1 or 2) per layer.
template <typename T>
struct ModelGrads {
  std::vector<std::vector<ConvGrads<T>>> layers;

  static ModelGrads zeros_like(const BasicEncoderDecoder<T>& model);
  void scale(T factor);
};

/// Mean over cells of (output − target)² with target already normalized to
/// [0,1]. When `grads` is non-null the parameter gradients of that loss are
/// added to it.
template <typename T>
double loss_and_gradients(const BasicEncoderDecoder<T>& model, const NumArray<T>& input,
                          std::span<const T> target, ModelGrads<T>* grads);

template <typename T>
void apply_sgd(BasicEncoderDecoder<T>& model, const ModelGrads<T>& grads, double learning_rate);

struct TrainReport {
  std::vector<double> train_loss;  // mean per-sample loss seen during each epoch
  std::vector<double> val_loss;    // after each epoch; NaN without a validation set
  double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, double val_loss)>;

/// Mini-batch SGD on the normalized MSE. Batches are drawn from a per-epoch
/// shuffle seeded by cfg.seed; the gradient is the batch mean. Throws
/// ConfigError for an empty training set or pairs of differing size, and
/// Error if the loss becomes non-finite.
TrainReport train(EncoderDecoder& model, std::span<const SamplePair> train_set, std::span<const SamplePair> val_set,
                  const SgdConfig& cfg, const EpochCallback& on_epoch = {});

/// Mean normalized loss of the model over a set of pairs.
double evaluate_loss(const EncoderDecoder& model, std::span<const SamplePair> pairs);

// Model file: magic "ATSE", u8 version (1), u16 layer count, f64 dx, dt,
// v_max, v_cong; then per layer u8 branch mode, u8 activation, u16 kh, kw,
// c_in, c_out, followed by f32 weights and biases for each branch (free-flow
// branch first). Little-endian. Masks are rebuilt from the constants.

inline constexpr std::uint8_t kModelFormatVersion = 1;

void write_model(std::ostream& out, const EncoderDecoder& model);
/// Throws FormatError (with byte offset) on bad magic, version, truncation,
/// an invalid config, or non-zero weights at masked positions.
EncoderDecoder read_model(std::istream& in);

void save_model(const EncoderDecoder& model, const std::filesystem::path& path);
EncoderDecoder load_model(const std::filesystem::path& path);

/// Byte size of a model file for a config.
std::size_t model_file_size(const ModelConfig& config);

}  // namespace atse

#include "atse/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "atse/atomic_file.hpp"
#include "atse/errors.hpp"
#include "binary_io.hpp"

namespace atse {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t free_channels(std::size_t c_out) { return (c_out + 1) / 2; }

template <typename T>
ConvLayer<T> make_branch(const ModelConfig& cfg, std::size_t index, std::optional<MaskKind> kind,
                         std::size_t c_out, std::uint64_t seed, double init_scale) {
  const auto& spec = cfg.layers[index];
  std::optional<CausalityMask> mask;
  if (kind) mask = build_mask(*kind, spec.kh, spec.kw, cfg.dx, cfg.dt, cfg.v_max, cfg.v_cong);
  return init_layer<T>({spec.kh, spec.kw, cfg.c_in(index), c_out}, std::move(mask), spec.activation, seed,
                       init_scale);
}

template <typename T>
std::size_t layer_c_out(const ModelLayer<T>& layer) {
  return std::visit(
      [](const auto& l) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, ConvLayer<T>>) {
          return l.dims.c_out;
        } else {
          return l.c_out();
        }
      },
      layer);
}

template <typename T>
NumArray<T> layer_forward(const ModelLayer<T>& layer, const NumArray<T>& input) {
  if (const auto* conv = std::get_if<ConvLayer<T>>(&layer)) return conv_forward(input, *conv);
  return dual_forward(input, std::get<DualBranchLayer<T>>(layer));
}

void add_into(auto& dst, const auto& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

}  // namespace

ModelConfig ModelConfig::standard(const GridSpec& grid) {
  ModelConfig cfg;
  cfg.dx = grid.dx;
  cfg.dt = grid.dt;
  cfg.v_max = grid.v_max;
  cfg.v_cong = grid.v_cong;
  using enum BranchMode;
  cfg.layers = {
      {5, 5, 40, DualAniso, Activation::ReLU}, {7, 7, 48, DualAniso, Activation::ReLU},
      {7, 7, 32, DualAniso, Activation::ReLU}, {5, 5, 48, Isotropic, Activation::ReLU},
      {5, 5, 40, Isotropic, Activation::ReLU}, {9, 9, 56, Isotropic, Activation::ReLU},
      {7, 7, 1, Isotropic, Activation::Sigmoid},
  };
  return cfg;
}

ModelConfig ModelConfig::with_channel_scale(double factor) const {
  if (!(factor > 0.0)) throw ConfigError("channel scale must be positive");
  ModelConfig out = *this;
  for (std::size_t k = 0; k + 1 < out.layers.size(); ++k) {
    auto& l = out.layers[k];
    const std::size_t floor_c = l.mode == BranchMode::DualAniso ? 2 : 1;
    l.c_out = std::max<std::size_t>(floor_c, static_cast<std::size_t>(std::lround(l.c_out * factor)));
  }
  return out;
}

void ModelConfig::validate() const {
  if (layers.empty()) throw ConfigError("model needs at least one layer");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    const std::string where = "layer " + std::to_string(k + 1) + ": ";
    if (l.kh % 2 == 0 || l.kw % 2 == 0) throw ConfigError(where + "kernel dimensions must be odd");
    if (l.c_out == 0) throw ConfigError(where + "needs at least one output channel");
    if (l.mode == BranchMode::DualAniso && l.c_out < 2) {
      throw ConfigError(where + "dual anisotropic layer needs at least two channels");
    }
    if (l.kh > 0xffff || l.kw > 0xffff || l.c_out > 0xffff) throw ConfigError(where + "dimension too large");
  }
  const auto& last = layers.back();
  if (last.c_out != 1 || last.activation != Activation::Sigmoid || last.mode != BranchMode::Isotropic) {
    throw ConfigError("last layer must be a 1-channel isotropic sigmoid layer");
  }
  if (!(dx > 0.0) || !(dt > 0.0) || !(v_max > 0.0) || !(v_cong < 0.0)) {
    throw ConfigError("grid constants need dx, dt, v_max > 0 and v_cong < 0");
  }
}

std::size_t ModelConfig::hidden_layer() const {
  std::size_t lead = 0;
  while (lead < layers.size() && layers[lead].mode == BranchMode::DualAniso) ++lead;
  if (lead > 0 && lead < layers.size()) return lead - 1;
  return layers.size() > 1 ? (layers.size() - 1) / 2 : 0;
}

std::size_t ModelConfig::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    n += layers[k].kh * layers[k].kw * c_in(k) * layers[k].c_out + layers[k].c_out;
  }
  return n;
}

bool ModelConfig::matches(const GridSpec& grid) const noexcept {
  return grid.dx == dx && grid.dt == dt && grid.v_max == v_max && grid.v_cong == v_cong;
}

template <typename T>
std::size_t BasicEncoderDecoder<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) std::visit([&](const auto& x) { n += x.parameter_count(); }, l);
  return n;
}

template <typename T>
bool BasicEncoderDecoder<T>::masks_respected() const {
  for (const auto& l : layers) {
    if (const auto* dual = std::get_if<DualBranchLayer<T>>(&l)) {
      if (!dual->free.mask_respected() || !dual->cong.mask_respected()) return false;
    } else if (!std::get<ConvLayer<T>>(l).mask_respected()) {
      return false;
    }
  }
  return true;
}

template <typename T>
BasicEncoderDecoder<T> build_model(const ModelConfig& config, std::uint64_t seed, double init_scale) {
  config.validate();
  BasicEncoderDecoder<T> model;
  model.config = config;
  for (std::size_t k = 0; k < config.layers.size(); ++k) {
    const auto& spec = config.layers[k];
    const std::uint64_t s0 = splitmix64(seed ^ splitmix64(2 * k));
    if (spec.mode == BranchMode::DualAniso) {
      const std::size_t cf = free_channels(spec.c_out);
      const std::uint64_t s1 = splitmix64(seed ^ splitmix64(2 * k + 1));
      model.layers.emplace_back(DualBranchLayer<T>(make_branch<T>(config, k, MaskKind::FreeFlow, cf, s0, init_scale),
                                                   make_branch<T>(config, k, MaskKind::Congested,
                                                                  spec.c_out - cf, s1, init_scale)));
    } else {
      model.layers.emplace_back(make_branch<T>(config, k, std::nullopt, spec.c_out, s0, init_scale));
    }
  }
  return model;
}

template <typename To, typename From>
BasicEncoderDecoder<To> model_cast(const BasicEncoderDecoder<From>& model) {
  BasicEncoderDecoder<To> out;
  out.config = model.config;
  for (const auto& l : model.layers) {
    if (const auto* dual = std::get_if<DualBranchLayer<From>>(&l)) {
      out.layers.emplace_back(DualBranchLayer<To>(layer_cast<To>(dual->free), layer_cast<To>(dual->cong)));
    } else {
      out.layers.emplace_back(layer_cast<To>(std::get<ConvLayer<From>>(l)));
    }
  }
  return out;
}

template <typename T>
NumArray<T> to_input(const PartialField& field) {
  const auto rgb = field.rgb();
  return NumArray<T>({field.spec().nx, field.spec().nt, 3}, std::vector<T>(rgb.begin(), rgb.end()));
}

template <typename T>
std::vector<NumArray<T>> forward_trace(const BasicEncoderDecoder<T>& model, const NumArray<T>& input) {
  std::vector<NumArray<T>> acts;
  acts.reserve(model.layers.size() + 1);
  acts.push_back(input);
  for (const auto& layer : model.layers) acts.push_back(layer_forward(layer, acts.back()));
  return acts;
}

template <typename T>
NumArray<T> forward(const BasicEncoderDecoder<T>& model, const NumArray<T>& input) {
  NumArray<T> x = input;
  for (const auto& layer : model.layers) x = layer_forward(layer, x);
  return x;
}

SpeedField forward(const EncoderDecoder& model, const PartialField& input) {
  const auto out = forward(model, to_input<float>(input));
  const double v_max = input.spec().v_max;
  std::vector<double> speeds(out.size());
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    speeds[k] = std::clamp(static_cast<double>(out[k]) * v_max, 0.0, v_max);
  }
  return SpeedField(input.spec(), std::move(speeds));
}

template <typename T>
std::vector<double> global_average_pool(const NumArray<T>& activation) {
  if (activation.rank() != 3) throw ShapeError("pooling expects a rank-3 activation");
  const std::size_t cells = activation.dim(0) * activation.dim(1);
  const std::size_t c = activation.dim(2);
  std::vector<double> out(c, 0.0);
  for (std::size_t r = 0; r < cells; ++r) {
    for (std::size_t k = 0; k < c; ++k) out[k] += static_cast<double>(activation[r * c + k]);
  }
  for (auto& v : out) v /= static_cast<double>(cells);
  return out;
}

std::vector<double> encode_hidden(const EncoderDecoder& model, const PartialField& input) {
  NumArray<float> x = to_input<float>(input);
  const std::size_t hidden = model.config.hidden_layer();
  for (std::size_t k = 0; k <= hidden; ++k) x = layer_forward(model.layers[k], x);
  return global_average_pool(x);
}

template <typename T>
ModelGrads<T> ModelGrads<T>::zeros_like(const BasicEncoderDecoder<T>& model) {
  auto zero = [](const ConvLayer<T>& l) {
    return ConvGrads<T>{{}, NumArray<T>(l.weights.shape()), NumArray<T>(l.bias.shape())};
  };
  ModelGrads<T> g;
  for (const auto& l : model.layers) {
    if (const auto* dual = std::get_if<DualBranchLayer<T>>(&l)) {
      g.layers.push_back({zero(dual->free), zero(dual->cong)});
    } else {
      g.layers.push_back({zero(std::get<ConvLayer<T>>(l))});
    }
  }
  return g;
}

template <typename T>
void ModelGrads<T>::scale(T factor) {
  for (auto& layer : layers) {
    for (auto& b : layer) {
      for (auto& v : b.weights.data()) v *= factor;
      for (auto& v : b.bias.data()) v *= factor;
    }
  }
}

template <typename T>
double loss_and_gradients(const BasicEncoderDecoder<T>& model, const NumArray<T>& input,
                          std::span<const T> target, ModelGrads<T>* grads) {
  const auto acts = forward_trace(model, input);
  const auto& out = acts.back();
  if (out.size() != target.size()) throw ShapeError("target size does not match the model output");

  const double n = static_cast<double>(out.size());
  double loss = 0.0;
  NumArray<T> g(out.shape());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double diff = static_cast<double>(out[k]) - static_cast<double>(target[k]);
    loss += diff * diff;
    g[k] = static_cast<T>(2.0 * diff / n);
  }
  loss /= n;
  if (!grads) return loss;

  for (std::size_t k = model.layers.size(); k-- > 0;) {
    const bool need_input = k > 0;
    auto& dst = grads->layers[k];
    if (const auto* dual = std::get_if<DualBranchLayer<T>>(&model.layers[k])) {
      auto lg = dual_backward(g, acts[k], acts[k + 1], *dual, need_input);
      add_into(dst[0].weights, lg.free.weights);
      add_into(dst[0].bias, lg.free.bias);
      add_into(dst[1].weights, lg.cong.weights);
      add_into(dst[1].bias, lg.cong.bias);
      g = std::move(lg.input);
    } else {
      auto lg = conv_backward(g, acts[k], acts[k + 1], std::get<ConvLayer<T>>(model.layers[k]), need_input);
      add_into(dst[0].weights, lg.weights);
      add_into(dst[0].bias, lg.bias);
      g = std::move(lg.input);
    }
  }
  return loss;
}

template <typename T>
void apply_sgd(BasicEncoderDecoder<T>& model, const ModelGrads<T>& grads, double learning_rate) {
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    if (auto* dual = std::get_if<DualBranchLayer<T>>(&model.layers[k])) {
      sgd_step(dual->free, grads.layers[k][0], learning_rate);
      sgd_step(dual->cong, grads.layers[k][1], learning_rate);
    } else {
      sgd_step(std::get<ConvLayer<T>>(model.layers[k]), grads.layers[k][0], learning_rate);
    }
  }
}

namespace {

std::vector<float> normalized_target(const SpeedField& target) {
  std::vector<float> y(target.values().size());
  const double v_max = target.spec().v_max;
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = static_cast<float>(target.values()[k] / v_max);
  return y;
}

void check_pair(const SamplePair& p, const SamplePair& first) {
  if (p.input.spec().nx != p.target.spec().nx || p.input.spec().nt != p.target.spec().nt) {
    throw ConfigError("sample pair input and target differ in dimensions");
  }
  if (p.input.spec().nx != first.input.spec().nx || p.input.spec().nt != first.input.spec().nt) {
    throw ConfigError("training pairs must share dimensions");
  }
}

}  // namespace

double evaluate_loss(const EncoderDecoder& model, std::span<const SamplePair> pairs) {
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& p : pairs) {
    const auto y = normalized_target(p.target);
    total += loss_and_gradients<float>(model, to_input<float>(p.input), y, nullptr);
  }
  return total / static_cast<double>(pairs.size());
}

TrainReport train(EncoderDecoder& model, std::span<const SamplePair> train_set, std::span<const SamplePair> val_set,
                  const SgdConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  for (const auto& p : train_set) check_pair(p, train_set.front());

  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      auto grads = ModelGrads<float>::zeros_like(model);
      for (std::size_t b = b0; b < b1; ++b) {
        const auto& pair = train_set[order[b]];
        const auto y = normalized_target(pair.target);
        epoch_loss += loss_and_gradients<float>(model, to_input<float>(pair.input), y, &grads);
      }
      grads.scale(1.0f / static_cast<float>(b1 - b0));
      apply_sgd(model, grads, cfg.learning_rate);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) {
      throw Error("training diverged at epoch " + std::to_string(epoch + 1) + " (non-finite loss)");
    }
    report.train_loss.push_back(epoch_loss);
    report.val_loss.push_back(evaluate_loss(model, val_set));
    if (on_epoch) on_epoch(epoch, report.train_loss.back(), report.val_loss.back());
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// Serialization.

namespace {

using detail::put;

void write_branch(std::ostream& out, const ConvLayer<float>& layer) {
  for (float w : layer.weights.data()) put<float>(out, w);
  for (float b : layer.bias.data()) put<float>(out, b);
}

void read_branch(detail::BinaryReader& in, ConvLayer<float>& layer) {
  for (auto& w : layer.weights.data()) w = in.get<float>("weight");
  for (auto& b : layer.bias.data()) b = in.get<float>("bias");
}

}  // namespace

void write_model(std::ostream& out, const EncoderDecoder& model) {
  const auto& cfg = model.config;
  out.write("ATSE", 4);
  put<std::uint8_t>(out, kModelFormatVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(model.layers.size()));
  put<double>(out, cfg.dx);
  put<double>(out, cfg.dt);
  put<double>(out, cfg.v_max);
  put<double>(out, cfg.v_cong);
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto& spec = cfg.layers[k];
    put<std::uint8_t>(out, static_cast<std::uint8_t>(spec.mode));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(spec.activation));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(spec.kh));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(spec.kw));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(cfg.c_in(k)));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(spec.c_out));
    if (const auto* dual = std::get_if<DualBranchLayer<float>>(&model.layers[k])) {
      write_branch(out, dual->free);
      write_branch(out, dual->cong);
    } else {
      write_branch(out, std::get<ConvLayer<float>>(model.layers[k]));
    }
  }
}

EncoderDecoder read_model(std::istream& stream) {
  detail::BinaryReader in(stream);
  in.expect_magic("ATSE");
  const auto version_at = in.offset();
  const auto version = in.get<std::uint8_t>("version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version), version_at);
  }
  const auto n_layers = in.get<std::uint16_t>("layer count");
  ModelConfig cfg;
  cfg.dx = in.get<double>("dx");
  cfg.dt = in.get<double>("dt");
  cfg.v_max = in.get<double>("v_max");
  cfg.v_cong = in.get<double>("v_cong");

  // Descriptors are interleaved with weights, so the config is validated
  // layer by layer and the model assembled as it is read.
  EncoderDecoder model;
  for (std::size_t k = 0; k < n_layers; ++k) {
    const auto at = in.offset();
    LayerSpec spec;
    const auto mode = in.get<std::uint8_t>("branch mode");
    const auto act = in.get<std::uint8_t>("activation");
    if (mode > 1) throw FormatError("unknown branch mode " + std::to_string(mode), at);
    if (act > 2) throw FormatError("unknown activation " + std::to_string(act), at + 1);
    spec.mode = static_cast<BranchMode>(mode);
    spec.activation = static_cast<Activation>(act);
    spec.kh = in.get<std::uint16_t>("kh");
    spec.kw = in.get<std::uint16_t>("kw");
    const std::size_t c_in = in.get<std::uint16_t>("c_in");
    spec.c_out = in.get<std::uint16_t>("c_out");
    cfg.layers.push_back(spec);
    if (c_in != cfg.c_in(k)) throw FormatError("layer " + std::to_string(k + 1) + " breaks channel chaining", at);
    if (spec.kh % 2 == 0 || spec.kw % 2 == 0 || spec.c_out == 0 ||
        (spec.mode == BranchMode::DualAniso && spec.c_out < 2)) {
      throw FormatError("invalid descriptor for layer " + std::to_string(k + 1), at);
    }
    try {
      if (spec.mode == BranchMode::DualAniso) {
        const std::size_t cf = free_channels(spec.c_out);
        auto free = make_branch<float>(cfg, k, MaskKind::FreeFlow, cf, 0, 1.0);
        auto cong = make_branch<float>(cfg, k, MaskKind::Congested, spec.c_out - cf, 0, 1.0);
        read_branch(in, free);
        read_branch(in, cong);
        model.layers.emplace_back(DualBranchLayer<float>(std::move(free), std::move(cong)));
      } else {
        auto conv = make_branch<float>(cfg, k, std::nullopt, spec.c_out, 0, 1.0);
        read_branch(in, conv);
        model.layers.emplace_back(std::move(conv));
      }
    } catch (const DomainError& e) {
      throw FormatError(std::string("invalid grid constants: ") + e.what(), at);
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid model config: ") + e.what(), in.offset());
  }
  in.expect_end();
  model.config = std::move(cfg);
  if (!model.masks_respected()) throw FormatError("non-zero weight at a masked kernel position", in.offset());
  return model;
}

void save_model(const EncoderDecoder& model, const std::filesystem::path& path) {
  write_file_atomically(path, true, [&](std::ostream& out) { write_model(out, model); });
}

EncoderDecoder load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_model(in);
}

std::size_t model_file_size(const ModelConfig& config) {
  constexpr std::size_t header = 4 + 1 + 2 + 4 * 8;
  constexpr std::size_t descriptor = 1 + 1 + 4 * 2;
  return header + descriptor * config.layers.size() + 4 * config.parameter_count();
}

#define ATSE_INSTANTIATE_MODEL(T)                                                                              \
  template struct BasicEncoderDecoder<T>;                                                                      \
  template struct ModelGrads<T>;                                                                               \
  template BasicEncoderDecoder<T> build_model<T>(const ModelConfig&, std::uint64_t, double);                   \
  template NumArray<T> to_input<T>(const PartialField&);                                                       \
  template std::vector<NumArray<T>> forward_trace(const BasicEncoderDecoder<T>&, const NumArray<T>&);          \
  template NumArray<T> forward(const BasicEncoderDecoder<T>&, const NumArray<T>&);                             \
  template std::vector<double> global_average_pool(const NumArray<T>&);                                        \
  template double loss_and_gradients(const BasicEncoderDecoder<T>&, const NumArray<T>&, std::span<const T>,    \
                                     ModelGrads<T>*);                                                          \
  template void apply_sgd(BasicEncoderDecoder<T>&, const ModelGrads<T>&, double);

ATSE_INSTANTIATE_MODEL(float)
ATSE_INSTANTIATE_MODEL(double)

#undef ATSE_INSTANTIATE_MODEL

template BasicEncoderDecoder<double> model_cast<double, float>(const BasicEncoderDecoder<float>&);
template BasicEncoderDecoder<float> model_cast<float, double>(const BasicEncoderDecoder<double>&);
template BasicEncoderDecoder<float> model_cast<float, float>(const BasicEncoderDecoder<float>&);
template BasicEncoderDecoder<double> model_cast<double, double>(const BasicEncoderDecoder<double>&);

}  // namespace atse

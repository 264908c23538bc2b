#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "atse/dataset.hpp"
#include "atse/errors.hpp"
#include "atse/model.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace atse;

namespace {

GridSpec grid(std::size_t nx, std::size_t nt) {
  GridSpec g;
  g.nx = nx;
  g.nt = nt;
  return g;
}

template <typename T, typename F>
void each_branch(BasicEncoderDecoder<T>& m, F&& f) {
  for (auto& layer : m.layers) {
    if (auto* c = std::get_if<ConvLayer<T>>(&layer)) {
      f(*c);
    } else {
      auto& d = std::get<DualBranchLayer<T>>(layer);
      f(d.free);
      f(d.cong);
    }
  }
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = {{3, 3, 4, BranchMode::DualAniso, Activation::ReLU}, {3, 3, 1, BranchMode::Isotropic, Activation::Sigmoid}};
  return c;
}

ModelConfig small_config() {
  ModelConfig c;
  c.layers = {{5, 5, 8, BranchMode::DualAniso, Activation::ReLU},
              {3, 3, 8, BranchMode::Isotropic, Activation::ReLU},
              {3, 3, 1, BranchMode::Isotropic, Activation::Sigmoid}};
  return c;
}

PartialField random_partial(const GridSpec& g, std::mt19937_64& rng, double fill = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::optional<double>> s(g.cells());
  for (auto& v : s)
    if (u(rng) < fill) v = u(rng) * g.v_max;
  return encode_partial(s, g);
}

// Small synthetic pairs: a slow band moving upstream plus probes along lines.
std::vector<SamplePair> synthetic_pairs(std::size_t n, std::uint64_t seed, const GridSpec& g) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SamplePair> out;
  for (std::size_t s = 0; s < n; ++s) {
    const double slope = -0.5 - u(rng), x0 = u(rng) * g.nx, base = 15 + 15 * u(rng);
    std::vector<double> truth(g.cells());
    std::vector<std::optional<double>> obs(g.cells());
    for (std::size_t ix = 0; ix < g.nx; ++ix)
      for (std::size_t it = 0; it < g.nt; ++it) {
        const double d = std::abs(static_cast<double>(ix) - (x0 + slope * it));
        truth[ix * g.nt + it] = d < 2.0 ? 3.0 : std::min(30.0, base);
        if (u(rng) < 0.15) obs[ix * g.nt + it] = truth[ix * g.nt + it];
      }
    out.push_back({encode_partial(obs, g), SpeedField(g, truth)});
  }
  return out;
}

}  // namespace

TEST_CASE("standard config") {
  const auto cfg = ModelConfig::standard(grid(50, 60));
  REQUIRE(cfg.layers.size() == 7);
  const std::vector<std::size_t> channels{40, 48, 32, 48, 40, 56, 1};
  const std::vector<std::size_t> kernels{5, 7, 7, 5, 5, 9, 7};
  for (std::size_t k = 0; k < 7; ++k) {
    CHECK(cfg.layers[k].c_out == channels[k]);
    CHECK(cfg.layers[k].kh == kernels[k]);
    CHECK(cfg.layers[k].kw == kernels[k]);
    CHECK(cfg.layers[k].mode == (k < 3 ? BranchMode::DualAniso : BranchMode::Isotropic));
    CHECK(cfg.layers[k].activation == (k < 6 ? Activation::ReLU : Activation::Sigmoid));
  }
  CHECK(cfg.c_in(0) == 3);
  CHECK(cfg.hidden_layer() == 2);

  const auto m = build_model(cfg, 1);
  const auto& first = std::get<DualBranchLayer<float>>(m.layers[0]);
  CHECK(first.free.dims == LayerDims{5, 5, 3, 20});
  CHECK(first.cong.dims == LayerDims{5, 5, 3, 20});
  CHECK(first.free.mask->is_point_symmetric());

  std::size_t closed = 0, c_in = 3;
  for (std::size_t k = 0; k < 7; ++k) {
    closed += kernels[k] * kernels[k] * c_in * channels[k] + channels[k];
    c_in = channels[k];
  }
  CHECK(cfg.parameter_count() == closed);
  CHECK(m.parameter_count() == closed);
  CHECK(m.masks_respected());
}

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  c.layers.back().activation = Activation::ReLU;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.layers[0].kh = 4;
  CHECK_THROWS_AS(build_model(c, 1), ConfigError);
  c = tiny_config();
  c.layers.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ModelConfig::standard(grid(1, 1)).with_channel_scale(0.5).layers[1].c_out == 24);
}

TEST_CASE("odd dual split gives the free branch the extra channel") {
  ModelConfig c = tiny_config();
  c.layers[0].c_out = 5;
  const auto m = build_model(c, 2);
  const auto& d = std::get<DualBranchLayer<float>>(m.layers[0]);
  CHECK(d.free.dims.c_out == 3);
  CHECK(d.cong.dims.c_out == 2);
}

TEST_CASE("zero-weight model outputs half of v_max") {
  auto m = build_model(small_config(), 3);
  each_branch(m, [](ConvLayer<float>& L) {
    L.weights.fill(0.0f);
    L.bias.fill(0.0f);
  });
  std::mt19937_64 rng(1);
  const auto out = forward(m, random_partial(grid(9, 11), rng));
  for (double v : out.values()) CHECK(v == doctest::Approx(15.0));
  const auto hidden = encode_hidden(m, random_partial(grid(9, 11), rng));
  for (double h : hidden) CHECK(h == 0.0);
}

TEST_CASE("forward keeps input dimensions and range") {
  const auto m = build_model(ModelConfig::standard(grid(1, 1)).with_channel_scale(0.25), 4);
  std::mt19937_64 rng(2);
  for (auto [nx, nt] : {std::pair<std::size_t, std::size_t>{50, 60}, {80, 120}, {3, 2}}) {
    const auto out = forward(m, random_partial(grid(nx, nt), rng));
    CHECK(out.spec().nx == nx);
    CHECK(out.spec().nt == nt);
    for (double v : out.values()) CHECK((v >= 0.0 && v <= 30.0));
  }
}

TEST_CASE("point reflection equivariance with symmetrized weights") {
  auto m = build_model<double>(small_config(), 5);
  each_branch(m, [](ConvLayer<double>& L) {
    const auto& d = L.dims;
    const std::size_t block = d.c_in * d.c_out;
    auto w = L.weights;
    for (std::size_t i = 0; i < d.kh; ++i)
      for (std::size_t j = 0; j < d.kw; ++j)
        for (std::size_t b = 0; b < block; ++b)
          L.weights[(i * d.kw + j) * block + b] =
              0.5 * (w[(i * d.kw + j) * block + b] + w[((d.kh - 1 - i) * d.kw + (d.kw - 1 - j)) * block + b]);
  });
  CHECK(m.masks_respected());
  std::mt19937_64 rng(3);
  const auto g = grid(10, 13);
  const auto in = to_input<double>(random_partial(g, rng, 0.5));
  NumArray<double> flipped(in.shape());
  for (std::size_t h = 0; h < 10; ++h)
    for (std::size_t w = 0; w < 13; ++w)
      for (std::size_t c = 0; c < 3; ++c) flipped.at(9 - h, 12 - w, c) = in.at(h, w, c);
  const auto a = forward(m, in), b = forward(m, flipped);
  for (std::size_t h = 0; h < 10; ++h)
    for (std::size_t w = 0; w < 13; ++w) CHECK(std::abs(a.at(h, w, 0) - b.at(9 - h, 12 - w, 0)) < 1e-12);
}

TEST_CASE("hidden representation is the pooled encoder output") {
  const auto m = build_model(ModelConfig::standard(grid(1, 1)).with_channel_scale(0.25), 6);
  std::mt19937_64 rng(4);
  const auto p = random_partial(grid(12, 14), rng);
  const auto h = encode_hidden(m, p);
  const auto trace = forward_trace(m, to_input<float>(p));
  const auto& act = trace[m.config.hidden_layer() + 1];
  REQUIRE(h.size() == act.dim(2));
  CHECK(h.size() == m.config.layers[2].c_out);
  for (std::size_t c = 0; c < h.size(); ++c) {
    double s = 0.0;
    for (std::size_t y = 0; y < act.dim(0); ++y)
      for (std::size_t x = 0; x < act.dim(1); ++x) s += act.at(y, x, c);
    CHECK(h[c] == doctest::Approx(s / (act.dim(0) * act.dim(1))).epsilon(1e-6));
  }

  NumArray<double> known({2, 2, 32});
  for (std::size_t k = 0; k < known.size(); ++k) known[k] = static_cast<double>(k);
  const auto pooled = global_average_pool(known);
  for (std::size_t c = 0; c < 32; ++c) CHECK(pooled[c] == doctest::Approx((c + (32 + c) + (64 + c) + (96 + c)) / 4.0));
}

TEST_CASE("end-to-end gradient check on a tiny model") {
  auto m = build_model<double>(tiny_config(), 7);
  std::mt19937_64 rng(5);
  each_branch(m, [&](ConvLayer<double>& L) { oracle::randomize(L, rng, 0.6); });
  const auto in = to_input<double>(random_partial(grid(8, 8), rng, 0.5));
  std::vector<double> target(64);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& t : target) t = u(rng);

  auto grads = ModelGrads<double>::zeros_like(m);
  loss_and_gradients(m, in, std::span<const double>(target), &grads);
  const std::function<double()> f = [&] { return loss_and_gradients<double>(m, in, std::span<const double>(target), nullptr); };
  double worst = 0.0;
  std::size_t layer = 0;
  for (auto& l : m.layers) {
    std::vector<ConvLayer<double>*> branches;
    if (auto* c = std::get_if<ConvLayer<double>>(&l)) branches = {c};
    else branches = {&std::get<DualBranchLayer<double>>(l).free, &std::get<DualBranchLayer<double>>(l).cong};
    for (std::size_t b = 0; b < branches.size(); ++b) {
      auto& L = *branches[b];
      const auto& G = grads.layers[layer][b];
      for (std::size_t k = 0; k < L.weights.size(); ++k) {
        const double num = oracle::central_diff(f, &L.weights[k]);
        const double err = std::abs(num - G.weights[k]) / std::max({1e-7, std::abs(num), std::abs(G.weights[k])});
        worst = std::max(worst, err);
      }
      for (std::size_t k = 0; k < L.bias.size(); ++k) {
        const double num = oracle::central_diff(f, &L.bias[k]);
        worst = std::max(worst, std::abs(num - G.bias[k]) / std::max({1e-7, std::abs(num), std::abs(G.bias[k])}));
      }
    }
    ++layer;
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("train edge cases") {
  const auto g = grid(6, 8);
  auto m = build_model(small_config(), 8);
  const auto before = m;
  const auto pairs = synthetic_pairs(4, 1, g);
  SgdConfig cfg;
  cfg.epochs = 0;
  const auto r = train(m, pairs, {}, cfg);
  CHECK(r.train_loss.empty());
  CHECK(m == before);
  CHECK_THROWS_AS(train(m, std::span<const SamplePair>{}, {}, cfg), ConfigError);
}

TEST_CASE("overfit a single pair") {
  const auto g = grid(10, 12);
  const auto pairs = synthetic_pairs(1, 2, g);
  double lr = 2.0, final_loss = 1.0;
  for (int attempt = 0; attempt < 8; ++attempt, lr *= 0.5) {
    auto m = build_model(small_config(), 9, std::sqrt(2.0));
    SgdConfig cfg;
    cfg.learning_rate = lr;
    cfg.batch_size = 1;
    cfg.epochs = 2000;
    try {
      train(m, pairs, {}, cfg);
    } catch (const Error&) {
      continue;  // diverged
    }
    final_loss = evaluate_loss(m, pairs);
    if (std::isfinite(final_loss) && final_loss < 1e-3) break;
  }
  CHECK(final_loss < 1e-3);
}

TEST_CASE("ten epochs lower the loss for most seeds") {
  const auto g = grid(10, 12);
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pairs = synthetic_pairs(200, 100 + seed, g);
    auto m = build_model(small_config(), seed, std::sqrt(2.0));
    const double l0 = evaluate_loss(m, pairs);
    SgdConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.epochs = 10;
    cfg.seed = seed;
    train(m, pairs, {}, cfg);
    if (evaluate_loss(m, pairs) < l0) ++improved;
    CHECK(m.masks_respected());
  }
  CHECK(improved >= 9);
}

TEST_CASE("training is deterministic and reports every epoch") {
  const auto g = grid(6, 8);
  const auto pairs = synthetic_pairs(20, 3, g);
  const auto val = synthetic_pairs(5, 4, g);
  SgdConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.3;
  auto a = build_model(small_config(), 10);
  auto b = a;
  const auto ra = train(a, pairs, val, cfg);
  train(b, pairs, val, cfg);
  CHECK(a == b);
  CHECK(ra.train_loss.size() == 3);
  CHECK(ra.val_loss.size() == 3);
  CHECK(std::isfinite(ra.val_loss.back()));
}

TEST_CASE("model file roundtrip, size and corruption") {
  const auto cfg = ModelConfig::standard(grid(1, 1)).with_channel_scale(0.25);
  const auto m = build_model(cfg, 11);
  std::stringstream io;
  write_model(io, m);
  const std::string bytes = io.str();
  // magic 4, version 1, count 2, four f64; per layer 2×u8 + 4×u16, then f32 params
  CHECK(bytes.size() == 4 + 1 + 2 + 32 + cfg.layers.size() * 10 + 4 * cfg.parameter_count());
  CHECK(bytes.size() == model_file_size(cfg));
  CHECK(read_model(io) == m);

  std::string bad = bytes;
  bad[1] = 'X';
  std::istringstream a(bad);
  CHECK_THROWS_AS(read_model(a), FormatError);

  std::istringstream b(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_model(b), FormatError);

  // Non-zero weight at a masked position of the first free-flow branch:
  // kernel offset (0, 4) has slope -10 m/s, outside the 5×5 free-flow cone.
  bad = bytes;
  const std::size_t first_weight = 39 + 10 + 4 * ((0 * 5 + 4) * 3 * 20);
  float one = 1.0f;
  std::memcpy(&bad[first_weight], &one, 4);
  std::istringstream c(bad);
  CHECK_THROWS_AS(read_model(c), FormatError);
}

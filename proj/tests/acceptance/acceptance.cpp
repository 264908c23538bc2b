// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--out DIR] [--model FILE] [N ...]
//
// With numbers, only those criteria run. --model skips training for 6-9 and
// uses the given model instead.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "atse/anisotropy.hpp"
#include "atse/atomic_file.hpp"
#include "atse/dataset.hpp"
#include "atse/errors.hpp"
#include "atse/field_io.hpp"
#include "atse/microsim.hpp"
#include "atse/model.hpp"
#include "atse/nn.hpp"
#include "atse/pipeline.hpp"
#include "oracles.hpp"

using namespace atse;
namespace fs = std::filesystem;

namespace {

// AC6 run settings. Channels halved to stay inside the time budget.
constexpr double kChannelScale = 0.5;
constexpr double kLearningRate = 0.3;
constexpr std::size_t kBatch = 4;
constexpr std::size_t kEpochs = 30;
const double kInitScale = std::sqrt(2.0);
constexpr double kCoverage = 0.05;
constexpr double kRoad = 1000.0;
constexpr double kWarmup = 120.0;
constexpr std::uint64_t kSeed = 2024;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void save_text(const fs::path& path, const std::string& text) {
  write_file_atomically(path, false, [&](std::ostream& o) { o << text; });
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

GridSpec grid(std::size_t nx, std::size_t nt) {
  GridSpec g;
  g.nx = nx;
  g.nt = nt;
  return g;
}

// One simulated run on the 1000 m road after warm-up.
struct Run {
  Demand demand;
  SpeedField full;
  PartialField probes;
};

Run simulate_window(Demand d, std::uint64_t seed, std::size_t nt) {
  const auto run = simulate_run(make_scenario(d, kRoad, kWarmup + static_cast<double>(nt), seed), IdmParams{});
  const auto g = grid(static_cast<std::size_t>(kRoad / 10.0), nt);
  const GridOrigin origin{0.0, kWarmup};
  return {d, rasterize(run.trajectories, g, origin),
          rasterize_partial(select_probes(run.trajectories, kCoverage, seed * 7919 + 1), g, origin)};
}

struct Corpus {
  std::vector<SamplePair> pairs;
  std::vector<Demand> labels;
};

void add_windows(Corpus& c, const Run& r, const WindowSpec& w = {}) {
  for (auto& p : build_samples(r.full, r.probes, w)) {
    c.pairs.push_back(std::move(p));
    c.labels.push_back(r.demand);
  }
}

constexpr Demand kDemands[] = {Demand::FreeFlow, Demand::SlowMoving, Demand::Congested};

// Stratified draw: `per_label[k]` samples of kDemands[k], seeded.
std::vector<std::size_t> stratified(const Corpus& c, std::vector<std::size_t> per_label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < c.labels.size(); ++i)
      if (c.labels[i] == kDemands[k]) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), per_label[k]));
    std::sort(idx.begin(), idx.end());
    out.insert(out.end(), idx.begin(), idx.end());
  }
  return out;
}

template <typename T>
std::vector<ConvLayer<T>*> branches(ModelLayer<T>& layer) {
  if (auto* c = std::get_if<ConvLayer<T>>(&layer)) return {c};
  auto& d = std::get<DualBranchLayer<T>>(layer);
  return {&d.free, &d.cong};
}

// ---------------------------------------------------------------------------

Verdict ac1_gradients() {
  const auto t0 = Clock::now();
  ModelConfig cfg;
  cfg.layers = {{5, 5, 4, BranchMode::DualAniso, Activation::ReLU},
                {3, 3, 3, BranchMode::Isotropic, Activation::ReLU},
                {3, 3, 1, BranchMode::Isotropic, Activation::Sigmoid}};
  auto model = build_model<double>(cfg, kSeed);
  std::mt19937_64 rng(kSeed);
  for (auto& l : model.layers)
    for (auto* b : branches(l)) oracle::randomize(*b, rng, 0.6);
  const auto input = oracle::random_array<double>({8, 8, 3}, rng, 0.0, 1.0);
  std::vector<double> target(64);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& t : target) t = u(rng);

  auto grads = ModelGrads<double>::zeros_like(model);
  loss_and_gradients<double>(model, input, target, &grads);
  const std::function<double()> f = [&] { return loss_and_gradients<double>(model, input, target, nullptr); };

  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto bs = branches(model.layers[k]);
    for (std::size_t b = 0; b < bs.size(); ++b) {
      auto& L = *bs[b];
      const auto& G = grads.layers[k][b];
      const auto check = [&](double* p, double analytic) {
        const double numeric = oracle::central_diff(f, p, 1e-6);
        worst = std::max(worst, std::abs(numeric - analytic) / std::max({1e-7, std::abs(numeric), std::abs(analytic)}));
        ++checked;
      };
      const std::size_t block = L.dims.c_in * L.dims.c_out;
      for (std::size_t i = 0; i < L.dims.kh; ++i)
        for (std::size_t j = 0; j < L.dims.kw; ++j)
          if (L.active(i, j))
            for (std::size_t q = 0; q < block; ++q) {
              const std::size_t w = (i * L.dims.kw + j) * block + q;
              check(&L.weights[w], G.weights[w]);
            }
      for (std::size_t q = 0; q < L.bias.size(); ++q) check(&L.bias[q], G.bias[q]);
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          std::to_string(checked) + " parameters, max relative error " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Verdict ac2_conv() {
  std::mt19937_64 rng(kSeed + 2);
  std::uniform_int_distribution<std::size_t> hw(1, 10), ch(1, 4), k(0, 2), act(0, 2), kind(0, 2);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const LayerDims d{2 * k(rng) + 1, 2 * k(rng) + 1, ch(rng), ch(rng)};
    std::optional<CausalityMask> mask;
    if (const auto m = kind(rng); m > 0)
      mask = build_mask(m == 1 ? MaskKind::FreeFlow : MaskKind::Congested, d.kh, d.kw, 10, 1, 30, -5);
    ConvLayer<double> L(d, mask, static_cast<Activation>(act(rng)));
    oracle::randomize(L, rng, 1.0);
    const auto x = oracle::random_array<double>({hw(rng), hw(rng), d.c_in}, rng);
    const auto got = conv_forward(x, L), want = oracle::conv(x, L);
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  return {worst <= 1e-12, "50 cases, max abs difference " + fmt("%.3g", worst)};
}

Verdict ac3_masks() {
  const auto standard = ModelConfig::standard(grid(1, 1));
  const auto model = build_model(standard, kSeed);
  std::size_t layers = 0;
  bool ok = true;
  std::string where;
  for (std::size_t k = 0; k < standard.layers.size(); ++k) {
    const auto& spec = standard.layers[k];
    if (spec.mode != BranchMode::DualAniso) continue;
    ++layers;
    const auto& dual = std::get<DualBranchLayer<float>>(model.layers[k]);
    const auto& ff = *dual.free.mask;
    const auto& cg = *dual.cong.mask;
    const std::size_t ci = spec.kh / 2, cj = spec.kw / 2;
    for (std::size_t i = 0; i < spec.kh; ++i)
      for (std::size_t j = 0; j < spec.kw; ++j) {
        const bool want_ff = oracle::cone(1, i, j, spec.kh, spec.kw, 10, 1, 30, -5);
        const bool want_cg = oracle::cone(2, i, j, spec.kh, spec.kw, 10, 1, 30, -5);
        const bool zero_slope = i == ci;  // Δx = 0: the vehicle stays put
        if (ff.at(i, j) != want_ff || cg.at(i, j) != want_cg ||
            (ff.at(i, j) && cg.at(i, j)) != (zero_slope || (i == ci && j == cj))) {
          ok = false;
          where = " (layer " + std::to_string(k) + " offset " + std::to_string(i) + "," + std::to_string(j) + ")";
        }
      }
    ok = ok && ff.is_point_symmetric() && cg.is_point_symmetric();
  }
  return {ok && layers == 3, std::to_string(layers) + " dual layers (5x5, 7x7, 7x7) checked against the cone predicate" + where};
}

Verdict ac4_mask_preservation() {
  ModelConfig cfg;
  cfg.layers = {{5, 5, 6, BranchMode::DualAniso, Activation::ReLU},
                {7, 7, 4, BranchMode::DualAniso, Activation::ReLU},
                {3, 3, 1, BranchMode::Isotropic, Activation::Sigmoid}};
  auto model = build_model(cfg, kSeed, kInitScale);
  std::mt19937_64 rng(kSeed + 4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<SamplePair> pairs;
  for (int s = 0; s < 10; ++s) {
    const auto g = grid(12, 16);
    std::vector<std::optional<double>> obs(g.cells());
    std::vector<double> truth(g.cells());
    for (std::size_t c = 0; c < g.cells(); ++c) {
      truth[c] = 30.0 * u(rng);
      if (u(rng) < 0.2) obs[c] = truth[c];
    }
    pairs.push_back({encode_partial(obs, g), SpeedField(g, truth)});
  }
  SgdConfig sgd;
  sgd.learning_rate = 0.5;
  sgd.batch_size = 1;
  sgd.epochs = 10;  // 10 pairs × 10 epochs = 100 steps
  const auto before = model;
  train(model, pairs, {}, sgd);

  std::size_t masked = 0, nonzero = 0;
  for (auto& l : model.layers)
    for (auto* b : branches(l)) {
      if (!b->mask) continue;
      const std::size_t block = b->dims.c_in * b->dims.c_out;
      for (std::size_t i = 0; i < b->dims.kh; ++i)
        for (std::size_t j = 0; j < b->dims.kw; ++j)
          if (!b->mask->at(i, j))
            for (std::size_t q = 0; q < block; ++q) {
              ++masked;
              const float w = b->weights[(i * b->dims.kw + j) * block + q];
              if (w != 0.0f || std::signbit(w)) ++nonzero;
            }
    }
  const bool moved = !(model == before);
  return {nonzero == 0 && masked > 0 && moved,
          std::to_string(masked) + " masked weights after 100 SGD steps, " + std::to_string(nonzero) + " non-zero"};
}

Verdict ac5_idm() {
  const IdmParams p;
  RoadSimulator sim(1e6, 0.1, p);
  sim.set_exit_enabled(false);
  sim.add_vehicle(1000.0, 15.0, 15.0);
  for (int k = 1; k <= 10; ++k) sim.add_vehicle(1000.0 - 30.0 * k, 10.0);
  while (sim.time() < 600.0 - 1e-9) sim.step();
  const double target = equilibrium_gap(15.0, p);
  double worst = 0.0;
  const auto& veh = sim.vehicles();
  for (std::size_t k = 1; k < veh.size(); ++k)
    worst = std::max(worst, std::abs(veh[k - 1].x - veh[k].x - p.len - target) / target);

  double min_gap = 1e300;
  std::size_t runs = 0;
  for (Demand d : kDemands)
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      min_gap = std::min(min_gap, simulate_run(make_scenario(d, kRoad, 600, seed), p).stats.min_gap);
      ++runs;
    }
  return {worst <= 0.01 && min_gap >= 0.0,
          "platoon gap error " + fmt("%.3g", 100 * worst) + "% of s_eq=" + fmt("%.3f", target) + " m; min gap over " +
              std::to_string(runs) + " runs " + fmt("%.3f", min_gap) + " m"};
}

// ---------------------------------------------------------------------------
// 6-9 share data and the trained model.

struct Benchmark {
  Corpus train;
  Corpus held_out;
  std::vector<Run> held_runs;
  EncoderDecoder model;
  double train_seconds = 0.0;
  bool trained = false;
};

void build_corpora(Benchmark& b) {
  const auto t0 = Clock::now();
  for (Demand d : kDemands) {
    const auto di = static_cast<std::uint64_t>(d);
    for (std::uint64_t k = 0; k < 4; ++k) add_windows(b.train, simulate_window(d, kSeed + 100 * di + k, 300));
    for (std::uint64_t k = 0; k < 2; ++k) {
      b.held_runs.push_back(simulate_window(d, kSeed + 10000 + 100 * di + k, 180));
      add_windows(b.held_out, b.held_runs.back());
    }
  }
  std::cerr << "data: " << b.train.pairs.size() << " training and " << b.held_out.pairs.size()
            << " held-out pairs in " << fmt("%.1f", seconds_since(t0)) << " s\n";
}

void train_model(Benchmark& b, const fs::path& out_dir) {
  const auto cfg = ModelConfig::standard(grid(1, 1)).with_channel_scale(kChannelScale);
  b.model = build_model(cfg, kSeed, kInitScale);
  SgdConfig sgd;
  sgd.learning_rate = kLearningRate;
  sgd.batch_size = kBatch;
  sgd.epochs = kEpochs;
  sgd.seed = kSeed;
  sgd.init_scale = kInitScale;
  const auto t0 = Clock::now();
  train(b.model, b.train.pairs, {}, sgd, [&](std::size_t e, double loss, double) {
    std::cerr << "epoch " << e + 1 << "/" << kEpochs << " loss " << fmt("%.5f", loss) << " ("
              << fmt("%.0f", seconds_since(t0)) << " s)\n";
  });
  b.train_seconds = seconds_since(t0);
  b.trained = true;
  save_model(b.model, out_dir / "ac6_model.atse");
}

struct Scores {
  double model_rmse = 0, base_rmse = 0, slow_rel = 0;
};

Scores score(const EncoderDecoder& model, const Corpus& c, const std::vector<std::size_t>& idx) {
  double se_m = 0, se_b = 0, n = 0, se_s = 0, sum_s = 0, n_s = 0;
  for (std::size_t i : idx) {
    const auto& p = c.pairs[i];
    const auto est = estimate(model, p.input);
    const auto base = nearest_observed_fill(p.input);
    const auto truth = p.target.values();
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const double em = est.values()[k] - truth[k], eb = base.values()[k] - truth[k];
      se_m += em * em;
      se_b += eb * eb;
      ++n;
      if (c.labels[i] == Demand::SlowMoving) {
        se_s += em * em;
        sum_s += truth[k];
        ++n_s;
      }
    }
  }
  return {3.6 * std::sqrt(se_m / n), 3.6 * std::sqrt(se_b / n), std::sqrt(se_s / n_s) / (sum_s / n_s)};
}

Verdict ac6_benchmark(Benchmark& b, const fs::path& out_dir) {
  const auto split = stratified(b.held_out, {67, 67, 66}, kSeed + 6);
  const auto s = score(b.model, b.held_out, split);
  const double gain = 1.0 - s.model_rmse / s.base_rmse;
  std::ostringstream report;
  report << "pairs_total=" << b.train.pairs.size() + b.held_out.pairs.size() << "\ntrain_pairs=" << b.train.pairs.size()
         << "\ntest_pairs=" << split.size() << "\nmodel_rmse_kmph=" << fmt("%.6f", s.model_rmse)
         << "\nbaseline_rmse_kmph=" << fmt("%.6f", s.base_rmse) << "\nrelative_gain=" << fmt("%.6f", gain)
         << "\nslow_moving_relative_rmse=" << fmt("%.6f", s.slow_rel) << "\ntrain_seconds=" << fmt("%.1f", b.train_seconds)
         << "\n";
  save_text(out_dir / "ac6_report.txt", report.str());
  std::string detail = "model " + fmt("%.2f", s.model_rmse) + " kmph vs baseline " + fmt("%.2f", s.base_rmse) +
                       " kmph (gain " + fmt("%.1f", 100 * gain) + "%, need >= 10%); SlowMoving relative RMSE " +
                       fmt("%.1f", 100 * s.slow_rel) + "% (need <= 20%); " +
                       std::to_string(b.train.pairs.size() + b.held_out.pairs.size()) + " pairs";
  detail += b.trained ? "; training " + fmt("%.1f", b.train_seconds / 60.0) + " min (target 45)" : "; model loaded, not trained";
  return {gain >= 0.10 && s.slow_rel <= 0.20, detail};
}

Verdict ac7_resolution(const Benchmark& b) {
  // 50 × 600: 500 m of road over ten minutes.
  const auto run = simulate_run(make_scenario(Demand::SlowMoving, 500.0, kWarmup + 600.0, kSeed + 7), IdmParams{});
  const auto g = grid(50, 600);
  const auto probes = rasterize_partial(select_probes(run.trajectories, kCoverage, kSeed + 7), g, {0.0, kWarmup});
  const auto est = estimate(b.model, probes);
  const auto v = est.values();
  const bool in_range = std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0 && x <= 30.0; });
  return {est.spec().nx == 50 && est.spec().nt == 600 && in_range,
          "50x600 input -> " + std::to_string(est.spec().nx) + "x" + std::to_string(est.spec().nt) + " output" +
              (in_range ? "" : ", values out of range")};
}

Verdict ac8_trajectories(const Benchmark& b) {
  // Uniform field: exact.
  const auto g = grid(100, 80);
  double uni_err = 0.0;
  const auto uni = infer_trajectories(SpeedField::filled(g, 20.0), std::vector<double>{0.0, 3.3, 10.0});
  for (const auto& veh : uni.vehicles)
    for (const auto& s : veh.samples) uni_err = std::max(uni_err, std::abs(s.x - 20.0 * (s.t - veh.samples.front().t)));

  // Linear in x against fine-step RK4 with the same edge clamping.
  std::vector<double> lin(g.cells());
  for (std::size_t ix = 0; ix < g.nx; ++ix)
    for (std::size_t it = 0; it < g.nt; ++it) lin[ix * g.nt + it] = 10.0 + 0.002 * (ix + 0.5) * 10.0;
  const auto v = [](double x, double) { return 10.0 + 0.002 * std::clamp(x, 5.0, 995.0); };
  double lin_err = 0.0;
  const auto lin_run = infer_trajectories(SpeedField(g, lin), std::vector<double>{2.5});
  for (const auto& s : lin_run.vehicles[0].samples)
    if (s.t <= 62.5 + 1e-9) lin_err = std::max(lin_err, std::abs(s.x - oracle::rk4(v, 2.5, 0.0, s.t, 0.001)));

  // FIFO on estimated held-out fields under step refinement.
  bool monotone = true;
  std::size_t pairs = 0, clean = 0, counts[3] = {0, 0, 0};
  for (const auto& run : b.held_runs) {
    const auto est = estimate(b.model, run.probes);
    std::vector<double> entries;
    for (double t = 0.0; t < static_cast<double>(est.spec().nt) - 10.0; t += 2.0) entries.push_back(t);
    std::size_t prev = 0;
    for (int r = 0; r < 3; ++r) {
      const auto fifo = fifo_violations(infer_trajectories(est, entries, 10u << r));
      counts[r] += fifo.violations;
      if (r > 0 && fifo.violations > prev) monotone = false;
      prev = fifo.violations;
      if (r == 0) {
        pairs += fifo.pairs_compared;
        clean += fifo.pairs_compared - fifo.pairs.size();
      }
    }
  }
  const double frac = pairs ? static_cast<double>(clean) / static_cast<double>(pairs) : 0.0;
  return {uni_err < 1e-9 && lin_err < 0.1 && monotone && frac >= 0.95,
          "uniform error " + fmt("%.3g", uni_err) + " m; linear-field error " + fmt("%.3g", lin_err) +
              " m; violations at h, h/2, h/4: " + std::to_string(counts[0]) + ", " + std::to_string(counts[1]) + ", " +
              std::to_string(counts[2]) + "; violation-free pairs at dt/10 " + fmt("%.2f", 100 * frac) + "% of " +
              std::to_string(pairs)};
}

Verdict ac9_embedding(const Benchmark& b) {
  const auto idx = stratified(b.held_out, {100, 100, 100}, kSeed + 9);
  std::vector<PartialField> inputs;
  std::vector<Demand> labels;
  for (std::size_t i : idx) {
    inputs.push_back(b.held_out.pairs[i].input);
    labels.push_back(b.held_out.labels[i]);
  }
  const auto r = embed_and_score(b.model, inputs, labels);
  double congested = 0.0;
  for (const auto& [label, s] : r.per_label)
    if (label == Demand::Congested) congested = s;
  return {inputs.size() >= 300 && r.silhouette > 0.1 && congested > 0.25,
          std::to_string(inputs.size()) + " samples, silhouette " + fmt("%.3f", r.silhouette) + " (need > 0.1), Congested " +
              fmt("%.3f", congested) + " (need > 0.25)"};
}

// Reduced pipeline: simulate, rasterize, window, train, evaluate.
std::pair<std::string, std::string> small_pipeline() {
  Corpus train_c, test_c;
  for (Demand d : kDemands) {
    const auto di = static_cast<std::uint64_t>(d);
    add_windows(train_c, simulate_window(d, kSeed + 500 + di, 120));
    add_windows(test_c, simulate_window(d, kSeed + 600 + di, 60));
  }
  auto model = build_model(ModelConfig::standard(grid(1, 1)).with_channel_scale(0.25), kSeed, kInitScale);
  SgdConfig sgd;
  sgd.learning_rate = kLearningRate;
  sgd.batch_size = kBatch;
  sgd.epochs = 2;
  sgd.seed = kSeed;
  train(model, train_c.pairs, {}, sgd);
  std::ostringstream bytes;
  write_model(bytes, model);
  std::string reports;
  for (const auto& p : test_c.pairs) reports += evaluate(estimate(model, p.input), p.target, &p.input).to_text();
  return {bytes.str(), reports};
}

Verdict ac10_determinism() {
  const auto a = small_pipeline();
  const auto b = small_pipeline();
  return {a.first == b.first && a.second == b.second,
          "reduced pipeline twice: model " + std::to_string(a.first.size()) + " bytes " +
              (a.first == b.first ? "identical" : "DIFFERENT") + ", reports " + (a.second == b.second ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out_dir = "acceptance_out";
  std::string model_path;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) out_dir = argv[++i];
    else if (a == "--model" && i + 1 < argc) model_path = argv[++i];
    else if (!a.empty() && std::all_of(a.begin(), a.end(), ::isdigit)) only.insert(std::stoi(a));
    else {
      std::cerr << "usage: acceptance [--out DIR] [--model FILE] [N ...]\n";
      return 2;
    }
  }
  fs::create_directories(out_dir);
  const auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

  int failures = 0;
  const auto report = [&](int n, const char* name, const std::function<Verdict()>& fn) {
    if (!wanted(n)) return;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << "AC" << n << " " << (v.pass ? "PASS" : "FAIL") << " " << name << ": " << v.detail << std::endl;
  };

  report(1, "gradient oracle", ac1_gradients);
  report(2, "convolution oracle", ac2_conv);
  report(3, "mask geometry", ac3_masks);
  report(4, "mask preservation", ac4_mask_preservation);
  report(5, "IDM physics", ac5_idm);

  if (wanted(6) || wanted(7) || wanted(8) || wanted(9)) {
    Benchmark b;
    bool ready = true;
    try {
      build_corpora(b);
      if (model_path.empty()) train_model(b, out_dir);
      else b.model = load_model(model_path);
    } catch (const std::exception& e) {
      std::cerr << "benchmark setup failed: " << e.what() << "\n";
      ready = false;
    }
    const auto guarded = [&](const std::function<Verdict()>& fn) {
      return [&, fn] { return ready ? fn() : Verdict{false, "benchmark setup failed"}; };
    };
    report(6, "synthetic benchmark", guarded([&] { return ac6_benchmark(b, out_dir); }));
    report(7, "resolution independence", guarded([&] { return ac7_resolution(b); }));
    report(8, "trajectory inference", guarded([&] { return ac8_trajectories(b); }));
    report(9, "hidden-representation separation", guarded([&] { return ac9_embedding(b); }));
  }
  report(10, "determinism", ac10_determinism);
  return failures == 0 ? 0 : 1;
}

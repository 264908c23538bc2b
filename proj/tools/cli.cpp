#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "atse/anisotropy.hpp"
#include "atse/atomic_file.hpp"
#include "atse/errors.hpp"
#include "atse/field_io.hpp"
#include "atse/model.hpp"
#include "atse/pipeline.hpp"
#include "atse/ppm.hpp"
#include "atse/trajectory.hpp"

namespace atse::cli {

namespace {

std::string normalize_key(std::string_view key) {
  std::string k(key);
  while (!k.empty() && k.front() == '-') k.erase(k.begin());
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(std::string_view key, std::string_view text) {
  const std::string s(text);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + std::string(key) + "' expects a number, got '" + s + "'");
}

std::uint64_t to_uint(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

void RunConfig::apply(std::string_view raw_key, std::string_view value) {
  const std::string key = normalize_key(raw_key);
  const std::string v = trim(value);
  if (key == "dx") grid.dx = to_double(key, v);
  else if (key == "dt") grid.dt = to_double(key, v);
  else if (key == "vmax") grid.v_max = to_double(key, v);
  else if (key == "vcong") grid.v_cong = to_double(key, v);
  else if (key == "coverage") coverage = to_double(key, v);
  else if (key == "wx") windows.wx = to_uint(key, v);
  else if (key == "wt") windows.wt = to_uint(key, v);
  else if (key == "stride_x") windows.stride_x = to_uint(key, v);
  else if (key == "stride_t") windows.stride_t = to_uint(key, v);
  else if (key == "lr") sgd.learning_rate = to_double(key, v);
  else if (key == "batch") sgd.batch_size = to_uint(key, v);
  else if (key == "epochs") sgd.epochs = to_uint(key, v);
  else if (key == "init_scale") sgd.init_scale = to_double(key, v);
  else if (key == "seed") seed = sgd.seed = to_uint(key, v);
  else if (key == "demand") {
    try {
      demand = parse_demand(v);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "road") road = to_double(key, v);
  else if (key == "duration") duration = to_double(key, v);
  else if (key == "warmup") warmup = to_double(key, v);
  else if (key == "channel_scale") channel_scale = to_double(key, v);
  else if (key == "substeps") substeps = to_uint(key, v);
  else throw ConfigError("unknown setting '" + std::string(raw_key) + "'");
}

void RunConfig::validate() const {
  GridSpec g = grid;
  g.nx = g.nt = 1;
  g.validate();
  if (!(coverage > 0.0 && coverage <= 1.0)) throw ConfigError("coverage must be in (0, 1]");
  if (windows.wx == 0 || windows.wt == 0 || windows.stride_x == 0 || windows.stride_t == 0) {
    throw ConfigError("window sizes and strides must be positive");
  }
  try {
    sgd.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!(road > 0.0)) throw ConfigError("road must be positive");
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  if (!(warmup >= 0.0 && warmup < duration)) throw ConfigError("warmup must be in [0, duration)");
  if (!(channel_scale > 0.0)) throw ConfigError("channel-scale must be positive");
  if (substeps == 0) throw ConfigError("substeps must be positive");
  if (nx() == 0 || nt() == 0) throw ConfigError("road or time span shorter than one cell");
}

std::size_t RunConfig::nx() const { return static_cast<std::size_t>(std::floor(road / grid.dx + 1e-9)); }
std::size_t RunConfig::nt() const {
  return static_cast<std::size_t>(std::floor((duration - warmup) / grid.dt + 1e-9));
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", no);
    try {
      cfg.apply(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), no);
    }
  }
}

namespace {

// Usage problems detected after CLI11 parsing (bad config values etc.).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  RunConfig cfg;

  // Defaults, then config file, then flags.
  void resolve() {
    try {
      if (!config_path.empty()) apply_config_file(cfg, config_path);
      for (const auto& [k, v] : overrides) cfg.apply(k, v);
      cfg.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }

  GridSpec grid(std::size_t nx, std::size_t nt) const {
    GridSpec g = cfg.grid;
    g.nx = nx;
    g.nt = nt;
    return g;
  }
};

void add_keyed(CLI::App* sub, Context& ctx, std::initializer_list<const char*> flags) {
  for (const char* flag : flags) {
    const std::string name = flag;
    sub->add_option_function<std::string>(
        name, [&ctx, name](const std::string& v) { ctx.overrides.emplace_back(name, v); },
        "overrides '" + normalize_key(name) + "'");
  }
}

void add_common(CLI::App* sub, Context& ctx) {
  sub->add_option("--config", ctx.config_path, "key=value settings file")->check(CLI::ExistingFile);
  add_keyed(sub, ctx, {"--dx", "--dt", "--vmax", "--vcong", "--seed"});
}

enum class FieldKind { Full, Partial };

// Both kinds share a 45-byte header; the payload size tells them apart.
FieldKind detect_field_kind(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  unsigned char head[13];
  in.read(reinterpret_cast<char*>(head), 13);
  if (in.gcount() != 13) throw FormatError("truncated field header", static_cast<std::uint64_t>(in.gcount()));
  auto u32 = [&](int at) {
    return static_cast<std::uint64_t>(head[at]) | static_cast<std::uint64_t>(head[at + 1]) << 8 |
           static_cast<std::uint64_t>(head[at + 2]) << 16 | static_cast<std::uint64_t>(head[at + 3]) << 24;
  };
  const std::uint64_t cells = u32(5) * u32(9);
  const auto size = std::filesystem::file_size(path);
  if (size == 45 + 13 * cells) return FieldKind::Partial;
  return FieldKind::Full;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_atomically(path, false, [&](std::ostream& o) { o << text; });
}

// Finite-difference check of the whole training gradient on a small
// double-precision model.
double model_gradcheck(std::uint64_t seed, const GridSpec& grid_constants, std::size_t* checked) {
  ModelConfig cfg;
  cfg.dx = grid_constants.dx;
  cfg.dt = grid_constants.dt;
  cfg.v_max = grid_constants.v_max;
  cfg.v_cong = grid_constants.v_cong;
  cfg.layers = {{3, 3, 4, BranchMode::DualAniso, Activation::ReLU},
                {3, 3, 1, BranchMode::Isotropic, Activation::Sigmoid}};
  auto model = build_model<double>(cfg, seed, 2.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  NumArray<double> input({8, 8, 3});
  for (auto& v : input.data()) v = u(rng);
  std::vector<double> target(64);
  for (auto& t : target) t = u(rng);

  auto grads = ModelGrads<double>::zeros_like(model);
  loss_and_gradients<double>(model, input, target, &grads);
  const auto loss = [&] { return loss_and_gradients<double>(model, input, target, nullptr); };

  double worst = 0.0;
  *checked = 0;
  const auto probe = [&](double& p, double analytic) {
    const double keep = p, eps = 1e-6;
    p = keep + eps;
    const double up = loss();
    p = keep - eps;
    const double down = loss();
    p = keep;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(numeric - analytic) / std::max({1e-7, std::abs(numeric), std::abs(analytic)}));
    ++*checked;
  };
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    std::vector<ConvLayer<double>*> branches;
    if (auto* c = std::get_if<ConvLayer<double>>(&model.layers[k])) {
      branches = {c};
    } else {
      auto& d = std::get<DualBranchLayer<double>>(model.layers[k]);
      branches = {&d.free, &d.cong};
    }
    for (std::size_t b = 0; b < branches.size(); ++b) {
      auto& L = *branches[b];
      const auto& G = grads.layers[k][b];
      for (std::size_t i = 0; i < L.dims.kh; ++i)
        for (std::size_t j = 0; j < L.dims.kw; ++j) {
          if (!L.active(i, j)) continue;
          const std::size_t base = (i * L.dims.kw + j) * L.dims.c_in * L.dims.c_out;
          for (std::size_t q = 0; q < L.dims.c_in * L.dims.c_out; ++q) probe(L.weights[base + q], G.weights[base + q]);
        }
      for (std::size_t q = 0; q < L.bias.size(); ++q) probe(L.bias[q], G.bias[q]);
    }
  }
  return worst;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Anisotropic traffic speed estimation from sparse probes", "aniso-tse"};
  app.require_subcommand(1);
  app.fallthrough(false);
  Context ctx{out, err, {}, {}, {}};
  std::function<int()> action;

  // simulate
  std::string sim_out;
  double inflow = -1.0;
  auto* sim = app.add_subcommand("simulate", "Run the IDM road simulation and write trajectories (CSV)");
  add_common(sim, ctx);
  add_keyed(sim, ctx, {"--demand", "--road", "--duration"});
  sim->add_option("--inflow", inflow, "override the preset inflow, veh/h");
  sim->add_option("-o", sim_out, "trajectory CSV")->required();
  sim->callback([&] {
    action = [&] {
      ctx.resolve();
      auto spec = make_scenario(ctx.cfg.demand, ctx.cfg.road, ctx.cfg.duration, ctx.cfg.seed);
      if (inflow >= 0.0) spec.inflow = inflow;
      const auto run = simulate_run(spec, IdmParams{});
      write_trajectory_csv(run.trajectories, sim_out);
      out << "vehicles=" << run.trajectories.vehicles.size() << "\nentered=" << run.stats.entered
          << "\nexited=" << run.stats.exited << "\nwaiting=" << run.stats.waiting << "\nmin_gap_m=" << fmt(run.stats.min_gap)
          << "\n";
      return 0;
    };
  });

  // rasterize
  std::string ras_in, ras_out;
  bool ras_partial = false;
  auto* ras = app.add_subcommand("rasterize", "Bin trajectories into a speed field (SFLD) or a probe field (SFLD3)");
  add_common(ras, ctx);
  add_keyed(ras, ctx, {"--road", "--duration", "--warmup", "--coverage"});
  ras->add_option("-i", ras_in, "trajectory CSV")->required()->check(CLI::ExistingFile);
  ras->add_option("-o", ras_out, "output field")->required();
  ras->add_flag("--partial", ras_partial, "sample probe vehicles at --coverage and write a partial field");
  ras->callback([&] {
    action = [&] {
      ctx.resolve();
      const auto set = read_trajectory_csv(ras_in);
      const auto g = ctx.grid(ctx.cfg.nx(), ctx.cfg.nt());
      const GridOrigin origin{0.0, ctx.cfg.warmup};
      if (ras_partial) {
        const auto p = rasterize_partial(select_probes(set, ctx.cfg.coverage, ctx.cfg.seed), g, origin);
        save_partial_field(p, ras_out);
        out << "observed_cells=" << p.observed_count() << "\n";
      } else {
        save_speed_field(rasterize(set, g, origin), ras_out);
      }
      out << "nx=" << g.nx << "\nnt=" << g.nt << "\n";
      return 0;
    };
  });

  // dataset
  std::string ds_in, ds_out;
  auto* ds = app.add_subcommand("dataset", "Cut labelled (probe, truth) windows from a trajectory file into a dataset directory");
  add_common(ds, ctx);
  add_keyed(ds, ctx, {"--demand", "--road", "--duration", "--warmup", "--coverage", "--wx", "--wt", "--stride-x", "--stride-t"});
  ds->add_option("-i", ds_in, "trajectory CSV")->required()->check(CLI::ExistingFile);
  ds->add_option("-o", ds_out, "dataset directory (appended to)")->required();
  ds->callback([&] {
    action = [&] {
      ctx.resolve();
      const auto set = read_trajectory_csv(ds_in);
      const auto g = ctx.grid(ctx.cfg.nx(), ctx.cfg.nt());
      const GridOrigin origin{0.0, ctx.cfg.warmup};
      const auto full = rasterize(set, g, origin);
      const auto probes = rasterize_partial(select_probes(set, ctx.cfg.coverage, ctx.cfg.seed), g, origin);
      std::vector<LabelledSample> samples;
      for (auto& p : build_samples(full, probes, ctx.cfg.windows)) samples.push_back({std::move(p), ctx.cfg.demand});
      const auto first = append_dataset(ds_out, samples);
      out << "samples=" << samples.size() << "\nfirst_id=" << first << "\nlabel=" << to_string(ctx.cfg.demand) << "\n";
      return 0;
    };
  });

  // train
  std::string tr_data, tr_val, tr_out;
  auto* tr = app.add_subcommand("train", "Train the encoder-decoder with mini-batch SGD");
  add_common(tr, ctx);
  add_keyed(tr, ctx, {"--lr", "--batch", "--epochs", "--channel-scale", "--init-scale"});
  tr->add_option("--data", tr_data, "training dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--val", tr_val, "validation dataset directory")->check(CLI::ExistingDirectory);
  tr->add_option("-o", tr_out, "model file")->required();
  tr->callback([&] {
    action = [&] {
      ctx.resolve();
      const auto to_pairs = [](std::vector<LabelledSample> s) {
        std::vector<SamplePair> p;
        for (auto& x : s) p.push_back(std::move(x.pair));
        return p;
      };
      const auto train_set = to_pairs(load_dataset(tr_data));
      const auto val_set = tr_val.empty() ? std::vector<SamplePair>{} : to_pairs(load_dataset(tr_val));
      const auto mcfg = ModelConfig::standard(ctx.cfg.grid).with_channel_scale(ctx.cfg.channel_scale);
      for (const auto* set : {&train_set, &val_set})
        for (const auto& p : *set)
          if (!mcfg.matches(p.input.spec())) throw ConfigError("dataset grid constants differ from --dx/--dt/--vmax/--vcong");
      auto model = build_model(mcfg, ctx.cfg.seed, ctx.cfg.sgd.init_scale);
      const auto report = train(model, train_set, val_set, ctx.cfg.sgd, [&](std::size_t e, double tl, double vl) {
        err << "epoch " << e + 1 << " train_loss=" << fmt(tl) << " val_loss=" << fmt(vl) << std::endl;
      });
      save_model(model, tr_out);
      out << "parameters=" << model.parameter_count() << "\nepochs=" << report.train_loss.size();
      if (!report.train_loss.empty()) out << "\nfinal_train_loss=" << fmt(report.train_loss.back());
      if (!report.val_loss.empty()) out << "\nfinal_val_loss=" << fmt(report.val_loss.back());
      out << "\n";
      return 0;
    };
  });

  // estimate
  std::string es_model, es_in, es_out;
  auto* es = app.add_subcommand("estimate", "Reconstruct a full speed field from a probe field");
  es->add_option("--model", es_model, "model file")->required()->check(CLI::ExistingFile);
  es->add_option("-i", es_in, "probe field (SFLD3)")->required()->check(CLI::ExistingFile);
  es->add_option("-o", es_out, "estimated field (SFLD)")->required();
  es->callback([&] {
    action = [&] {
      const auto model = load_model(es_model);
      save_speed_field(estimate(model, load_partial_field(es_in)), es_out);
      return 0;
    };
  });

  // trajectories
  std::string tj_in, tj_out;
  std::vector<double> entries;
  double headway = 2.0;
  auto* tj = app.add_subcommand("trajectories", "Trace vehicles through a speed field and count FIFO violations");
  add_common(tj, ctx);
  add_keyed(tj, ctx, {"--substeps"});
  tj->add_option("-i", tj_in, "speed field (SFLD)")->required()->check(CLI::ExistingFile);
  tj->add_option("-o", tj_out, "trajectory CSV")->required();
  auto* entries_opt = tj->add_option("--entries", entries, "entry times, s")->delimiter(',');
  tj->add_option("--headway", headway, "entry every HEADWAY s when --entries is absent")
      ->check(CLI::PositiveNumber)
      ->excludes(entries_opt);
  tj->callback([&] {
    action = [&] {
      ctx.resolve();
      const auto field = load_speed_field(tj_in);
      if (entries.empty()) {
        const double span = static_cast<double>(field.spec().nt) * field.spec().dt;
        for (std::size_t k = 0; static_cast<double>(k) * headway < span; ++k) entries.push_back(static_cast<double>(k) * headway);
      }
      const auto set = infer_trajectories(field, entries, ctx.cfg.substeps);
      write_trajectory_csv(set, tj_out);
      const auto fifo = fifo_violations(set);
      out << "vehicles=" << set.vehicles.size() << "\nfifo_violations=" << fifo.violations
          << "\npairs_compared=" << fifo.pairs_compared << "\n";
      return 0;
    };
  });

  // eval
  std::string ev_est, ev_truth, ev_partial, ev_out;
  auto* ev = app.add_subcommand("eval", "Compare an estimated field with the ground truth");
  ev->add_option("--est", ev_est, "estimated field (SFLD)")->required()->check(CLI::ExistingFile);
  ev->add_option("--truth", ev_truth, "true field (SFLD)")->required()->check(CLI::ExistingFile);
  ev->add_option("--partial", ev_partial, "probe field, for the observed-cell RMSE")->check(CLI::ExistingFile);
  ev->add_option("-o", ev_out, "report file");
  ev->callback([&] {
    action = [&] {
      const auto est = load_speed_field(ev_est), truth = load_speed_field(ev_truth);
      std::optional<PartialField> partial;
      if (!ev_partial.empty()) partial = load_partial_field(ev_partial);
      const auto text = evaluate(est, truth, partial ? &*partial : nullptr).to_text();
      if (!ev_out.empty()) write_text(ev_out, text);
      out << text;
      return 0;
    };
  });

  // embed
  std::string em_model, em_data, em_out;
  auto* em = app.add_subcommand("embed", "Project hidden representations to 2-D and score clustering by demand");
  em->add_option("--model", em_model, "model file")->required()->check(CLI::ExistingFile);
  em->add_option("--data", em_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  em->add_option("-o", em_out, "embedding CSV")->required();
  em->callback([&] {
    action = [&] {
      const auto model = load_model(em_model);
      const auto samples = load_dataset(em_data);
      std::vector<PartialField> inputs;
      std::vector<Demand> labels;
      for (const auto& s : samples) {
        inputs.push_back(s.pair.input);
        labels.push_back(s.label);
      }
      const auto report = embed_and_score(model, inputs, labels);
      write_file_atomically(em_out, false, [&](std::ostream& o) { write_embedding_csv(o, report); });
      out << "samples=" << inputs.size() << "\nsilhouette=" << fmt(report.silhouette)
          << "\ndegenerate=" << (report.degenerate ? "true" : "false") << "\n";
      for (const auto& [label, s] : report.per_label) out << "silhouette_" << to_string(label) << "=" << fmt(s) << "\n";
      for (std::size_t k = 0; k < report.explained_variance.size(); ++k)
        out << "explained_variance_pc" << k + 1 << "=" << fmt(report.explained_variance[k]) << "\n";
      return 0;
    };
  });

  // mask
  std::string mk_kind = "free-flow";
  std::size_t mk_size = 7, mk_kh = 0, mk_kw = 0;
  auto* mk = app.add_subcommand("mask", "Print a causality mask as an ASCII grid (rows: space, columns: time)");
  add_common(mk, ctx);
  mk->add_option("--kind", mk_kind, "isotropic | free-flow | congested");
  mk->add_option("--size", mk_size, "square kernel size");
  mk->add_option("--kh", mk_kh, "kernel extent in space");
  mk->add_option("--kw", mk_kw, "kernel extent in time");
  mk->callback([&] {
    action = [&] {
      ctx.resolve();
      MaskKind kind;
      try {
        kind = parse_mask_kind(mk_kind);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      const auto& g = ctx.cfg.grid;
      const auto m = build_mask(kind, mk_kh ? mk_kh : mk_size, mk_kw ? mk_kw : mk_size, g.dx, g.dt, g.v_max, g.v_cong);
      out << m.to_ascii() << "active=" << count_active(m) << "\n";
      return 0;
    };
  });

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Compare backpropagated gradients with finite differences");
  add_common(gc, ctx);
  gc->callback([&] {
    action = [&] {
      ctx.resolve();
      std::size_t checked = 0;
      const double worst = model_gradcheck(ctx.cfg.seed, ctx.cfg.grid, &checked);
      const bool ok = worst < 1e-4;
      out << "parameters_checked=" << checked << "\nmax_relative_error=" << fmt(worst) << "\nresult="
          << (ok ? "ok" : "fail") << "\n";
      return ok ? 0 : 1;
    };
  });

  // export-image
  std::string im_in, im_out, im_kind = "auto";
  auto* im = app.add_subcommand("export-image", "Write a field as a binary PPM (width nt, height nx)");
  im->add_option("-i", im_in, "field file (SFLD or SFLD3)")->required()->check(CLI::ExistingFile);
  im->add_option("-o", im_out, "PPM file")->required();
  im->add_option("--kind", im_kind, "auto | full | partial")->check(CLI::IsMember({"auto", "full", "partial"}));
  im->callback([&] {
    action = [&] {
      FieldKind kind = im_kind == "full" ? FieldKind::Full : FieldKind::Partial;
      if (im_kind == "auto") kind = detect_field_kind(im_in);
      const auto image = kind == FieldKind::Full ? field_image(load_speed_field(im_in))
                                                 : field_image(load_partial_field(im_in));
      save_ppm(image, im_out);
      out << "width=" << image.width << "\nheight=" << image.height << "\n";
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    if (argc > 1) err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    return action ? action() : 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace atse::cli

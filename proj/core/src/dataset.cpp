#include "atse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "atse/atomic_file.hpp"
#include "atse/errors.hpp"
#include "atse/field_io.hpp"

namespace atse {

namespace {

struct CellAccumulator {
  std::vector<double> sum;
  std::vector<std::uint32_t> count;
};

CellAccumulator bin_samples(const TrajectorySet& trajs, const GridSpec& spec, GridOrigin origin) {
  spec.validate();
  CellAccumulator acc{std::vector<double>(spec.cells(), 0.0), std::vector<std::uint32_t>(spec.cells(), 0)};
  for (const auto& veh : trajs.vehicles) {
    for (const auto& s : veh.samples) {
      const double fx = (s.x - origin.x0) / spec.dx;
      const double ft = (s.t - origin.t0) / spec.dt;
      if (!(fx >= 0.0 && ft >= 0.0)) continue;
      const auto ix = static_cast<std::size_t>(fx);
      const auto it = static_cast<std::size_t>(ft);
      if (ix >= spec.nx || it >= spec.nt) continue;
      const std::size_t k = ix * spec.nt + it;
      acc.sum[k] += s.v;
      ++acc.count[k];
    }
  }
  return acc;
}

std::string sample_stem(std::size_t id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", id);
  return buf;
}

}  // namespace

SpeedField rasterize(const TrajectorySet& trajs, const GridSpec& spec, GridOrigin origin) {
  const auto acc = bin_samples(trajs, spec, origin);
  std::vector<double> values(spec.cells(), spec.v_max);
  std::vector<std::size_t> filled;
  for (std::size_t ix = 0; ix < spec.nx; ++ix) {
    const std::size_t row = ix * spec.nt;
    filled.clear();
    for (std::size_t it = 0; it < spec.nt; ++it) {
      if (acc.count[row + it] > 0) {
        values[row + it] = std::clamp(acc.sum[row + it] / acc.count[row + it], 0.0, spec.v_max);
        filled.push_back(it);
      }
    }
    if (filled.empty()) continue;
    // Two-pointer sweep: `next` is the first filled index ≥ it.
    std::size_t next = 0;
    for (std::size_t it = 0; it < spec.nt; ++it) {
      while (next < filled.size() && filled[next] < it) ++next;
      if (next < filled.size() && filled[next] == it) continue;
      std::optional<std::size_t> best;
      if (next > 0) best = filled[next - 1];
      if (next < filled.size() && (!best || filled[next] - it < it - *best)) best = filled[next];
      values[row + it] = values[row + *best];
    }
  }
  return SpeedField(spec, std::move(values));
}

TrajectorySet select_probes(const TrajectorySet& trajs, double coverage, std::uint64_t seed) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw DomainError("coverage must lie in [0,1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(coverage);
  TrajectorySet out;
  for (const auto& veh : trajs.vehicles) {
    if (keep(rng)) out.vehicles.push_back(veh);
  }
  return out;
}

PartialField rasterize_partial(const TrajectorySet& probes, const GridSpec& spec, GridOrigin origin) {
  const auto acc = bin_samples(probes, spec, origin);
  std::vector<std::optional<double>> speeds(spec.cells());
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    if (acc.count[k] > 0) speeds[k] = std::clamp(acc.sum[k] / acc.count[k], 0.0, spec.v_max);
  }
  return encode_partial(speeds, spec);
}

std::size_t sample_count(std::size_t nx, std::size_t nt, const WindowSpec& w) {
  if (w.stride_x == 0 || w.stride_t == 0) throw DomainError("window strides must be at least 1");
  if (w.wx == 0 || w.wt == 0 || w.wx > nx || w.wt > nt) {
    throw RangeError("window " + std::to_string(w.wx) + "x" + std::to_string(w.wt) + " does not fit field " +
                     std::to_string(nx) + "x" + std::to_string(nt));
  }
  return ((nx - w.wx) / w.stride_x + 1) * ((nt - w.wt) / w.stride_t + 1);
}

std::vector<SamplePair> build_samples(const SpeedField& full, const PartialField& probes, const WindowSpec& w) {
  const GridSpec& spec = full.spec();
  if (probes.spec().nx != spec.nx || probes.spec().nt != spec.nt) {
    throw ShapeError("full and partial fields differ in dimensions");
  }
  std::vector<SamplePair> out;
  out.reserve(sample_count(spec.nx, spec.nt, w));
  for (std::size_t x0 = 0; x0 + w.wx <= spec.nx; x0 += w.stride_x) {
    for (std::size_t t0 = 0; t0 + w.wt <= spec.nt; t0 += w.stride_t) {
      out.push_back({window(probes, x0, t0, w.wx, w.wt), window(full, x0, t0, w.wx, w.wt)});
    }
  }
  return out;
}

std::size_t append_dataset(const std::filesystem::path& dir, const std::vector<LabelledSample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "samples");
  const fs::path labels_path = dir / "labels.csv";

  std::string existing = "sample_id,label\n";
  std::size_t next_id = 0;
  if (fs::exists(labels_path)) {
    std::ifstream in(labels_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    existing = buf.str();
    if (!existing.empty() && existing.back() != '\n') existing += '\n';
    next_id = static_cast<std::size_t>(std::count(existing.begin(), existing.end(), '\n')) - 1;
  }

  const std::size_t first = next_id;
  std::string appended;
  for (const auto& s : samples) {
    const std::string stem = sample_stem(next_id);
    save_partial_field(s.pair.input, dir / "samples" / (stem + ".input.sfld3"));
    save_speed_field(s.pair.target, dir / "samples" / (stem + ".target.sfld"));
    appended += stem + "," + std::string(to_string(s.label)) + "\n";
    ++next_id;
  }
  write_file_atomically(labels_path, false, [&](std::ostream& out) { out << existing << appended; });
  return first;
}

std::vector<LabelledSample> load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "labels.csv");
  if (!in) throw Error("cannot open " + (dir / "labels.csv").string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("sample_id,label", 0) != 0) {
    throw ParseError("labels.csv must start with 'sample_id,label'", line_no);
  }
  std::vector<LabelledSample> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("expected 'sample_id,label'", line_no);
    const std::string stem = line.substr(0, comma);
    Demand label;
    try {
      label = parse_demand(line.substr(comma + 1));
    } catch (const DomainError& e) {
      throw ParseError(e.what(), line_no);
    }
    out.push_back({SamplePair{load_partial_field(dir / "samples" / (stem + ".input.sfld3")),
                              load_speed_field(dir / "samples" / (stem + ".target.sfld"))},
                   label});
  }
  return out;
}

}  // namespace atse

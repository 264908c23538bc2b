#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "atse/grid.hpp"
#include "atse/microsim.hpp"
#include "atse/trajectory.hpp"

namespace atse {

/// Where cell (0, 0) of a grid sits in trajectory coordinates.
struct GridOrigin {
  double x0 = 0.0;  // m
  double t0 = 0.0;  // s
};

struct SamplePair {
  PartialField input;
  SpeedField target;
};

/// Ground-truth field: each cell holds the mean speed of every sample falling
/// in it. Empty cells take the nearest non-empty cell of the same space row
/// (earlier time wins ties), or v_max if the row is empty. Samples outside the
/// grid extent are ignored. Cell means are clamped to [0, v_max].
SpeedField rasterize(const TrajectorySet& trajs, const GridSpec& spec, GridOrigin origin = {});

/// Keeps each vehicle independently with probability `coverage`.
/// Throws DomainError when coverage is outside [0,1].
TrajectorySet select_probes(const TrajectorySet& trajs, double coverage, std::uint64_t seed);

/// Probe observations: cells with at least one sample hold the mean probe
/// speed; all other cells are missing. No filling.
PartialField rasterize_partial(const TrajectorySet& probes, const GridSpec& spec, GridOrigin origin = {});

struct WindowSpec {
  std::size_t wx = 50;
  std::size_t wt = 60;
  std::size_t stride_x = 10;
  std::size_t stride_t = 10;
};

/// Number of windows build_samples emits for a field of nx × nt.
std::size_t sample_count(std::size_t nx, std::size_t nt, const WindowSpec& w);

/// Sliding windows over both fields; space offset outer, time offset inner.
/// Throws RangeError if the window exceeds the field, DomainError on zero
/// strides, ShapeError when the fields' dimensions differ.
std::vector<SamplePair> build_samples(const SpeedField& full, const PartialField& probes, const WindowSpec& w);

/// One labelled entry of a dataset directory.
struct LabelledSample {
  SamplePair pair;
  Demand label = Demand::FreeFlow;
};

// Dataset directory: samples/NNNNNN.input.sfld3, samples/NNNNNN.target.sfld
// and labels.csv (`sample_id,label`).

/// Writes samples with ids continuing after any already in `dir`.
/// Returns the first id written.
std::size_t append_dataset(const std::filesystem::path& dir, const std::vector<LabelledSample>& samples);

/// Loads every sample listed in labels.csv, in id order.
std::vector<LabelledSample> load_dataset(const std::filesystem::path& dir);

}  // namespace atse

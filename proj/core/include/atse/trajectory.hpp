#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace atse {

struct TrajectorySample {
  double t = 0.0;  // s
  double x = 0.0;  // m, front bumper
  double v = 0.0;  // m/s

  bool operator==(const TrajectorySample&) const = default;
};

struct Trajectory {
  std::int64_t id = 0;
  std::vector<TrajectorySample> samples;

  bool operator==(const Trajectory&) const = default;
};

/// Per-vehicle samples, vehicles in entry order.
struct TrajectorySet {
  std::vector<Trajectory> vehicles;

  std::size_t sample_count() const noexcept;

  /// Per vehicle: t strictly increasing, x non-decreasing, v ≥ 0, all finite.
  /// Throws DomainError naming the vehicle.
  void validate() const;

  bool operator==(const TrajectorySet&) const = default;
};

/// CSV with header `vehicle_id,t,x,v`; rows grouped by vehicle in first-seen
/// order. Values are written with six decimals.
void write_trajectory_csv(std::ostream& out, const TrajectorySet& set);
void write_trajectory_csv(const TrajectorySet& set, const std::filesystem::path& path);

/// Parses the CSV schema above. Columns may appear in any order. Throws
/// ParseError with the offending line for missing columns, malformed numbers,
/// or samples that break the per-vehicle invariants.
TrajectorySet read_trajectory_csv(std::istream& in);
TrajectorySet read_trajectory_csv(const std::filesystem::path& path);

}  // namespace atse

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "atse/trajectory.hpp"

namespace atse {

/// Intelligent Driver Model parameters.
struct IdmParams {
  double v0 = 30.0;     // desired speed, m/s
  double t_hw = 1.0;    // desired time headway, s
  double s0 = 2.0;      // minimum bumper gap, m
  double a_max = 1.0;   // maximum acceleration, m/s²
  double b_comf = 1.5;  // comfortable deceleration, m/s²
  double delta = 4.0;   // acceleration exponent
  double len = 5.0;     // vehicle length, m

  void validate() const;
};

enum class Demand { FreeFlow, SlowMoving, Congested };

std::string_view to_string(Demand d);
/// Accepts "free-flow", "slow-moving", "congested". Throws DomainError otherwise.
Demand parse_demand(std::string_view text);

/// Speed cap applied to [x_pos, x_pos + kZoneLength) while t ∈ [t_start, t_end).
struct Bottleneck {
  double t_start = 0.0;
  double t_end = 0.0;
  double x_pos = 0.0;
  double speed_cap = 0.0;

  bool operator==(const Bottleneck&) const = default;
};

inline constexpr double kZoneLength = 50.0;

struct ScenarioSpec {
  Demand demand = Demand::FreeFlow;
  double road_len = 1000.0;  // m
  double duration = 600.0;   // s
  double inflow = 600.0;     // veh/h
  double sim_dt = 0.1;       // s
  std::uint64_t seed = 0;
  std::vector<Bottleneck> bottlenecks;

  void validate() const;
};

struct DemandPreset {
  double inflow = 0.0;
  std::vector<Bottleneck> bottlenecks;
};

/// Inflow and slow-zone schedule for a demand level on a road of the given
/// length over the given duration.
DemandPreset demand_presets(Demand demand, double road_len, double duration);

/// Scenario with the preset demand applied.
ScenarioSpec make_scenario(Demand demand, double road_len, double duration, std::uint64_t seed);

/// IDM acceleration for bumper gap `gap`, speed `v` and approach rate `dv`
/// (own speed minus leader speed). Throws CollisionError when gap ≤ 0.
double idm_accel(double gap, double v, double dv, const IdmParams& p);

/// Free-road part only (no leader).
double idm_free_accel(double v, const IdmParams& p);

/// Bumper gap at which a vehicle travelling at v behind an equally fast
/// leader has zero acceleration. Requires 0 ≤ v < v0.
double equilibrium_gap(double v, const IdmParams& p);

struct SimStats {
  std::size_t entered = 0;
  std::size_t exited = 0;
  std::size_t on_road = 0;
  std::size_t waiting = 0;  // arrivals that could not enter yet
  double min_gap = 0.0;     // smallest bumper gap observed, m
};

struct SimulationRun {
  TrajectorySet trajectories;
  SimStats stats;
};

/// Single-lane IDM road. Vehicles are kept downstream-first. Integration is
/// semi-implicit Euler: speeds update first (floored at 0), positions advance
/// with the new speed.
class RoadSimulator {
 public:
  RoadSimulator(double road_len, double sim_dt, IdmParams params);

  /// Adds a vehicle upstream of every vehicle already on the road. A fixed
  /// speed pins the vehicle's velocity (used for controlled leaders).
  std::int64_t add_vehicle(double x, double v, std::optional<double> fixed_speed = std::nullopt);

  void set_bottlenecks(std::vector<Bottleneck> zones) { zones_ = std::move(zones); }

  /// Advances one step. Vehicles reaching road_len leave the road.
  /// Throws CollisionError if two vehicles overlap afterwards.
  void step();

  /// When false, vehicles run past road_len instead of exiting.
  void set_exit_enabled(bool enabled) { exit_enabled_ = enabled; }

  struct Vehicle {
    std::int64_t id = 0;
    double x = 0.0;
    double v = 0.0;
    std::optional<double> fixed_speed;
  };

  const std::vector<Vehicle>& vehicles() const noexcept { return vehicles_; }
  double time() const noexcept { return static_cast<double>(steps_) * dt_; }
  std::uint64_t steps() const noexcept { return steps_; }
  std::size_t exited() const noexcept { return exited_; }
  double min_gap() const noexcept { return min_gap_; }
  const IdmParams& params() const noexcept { return params_; }

  /// Desired speed at position x and time t after applying active zones.
  double desired_speed(double x, double t) const;
  /// Hard speed cap at x and time t (infinity outside active zones).
  double speed_cap(double x, double t) const;

 private:
  double road_len_;
  double dt_;
  IdmParams params_;
  std::vector<Bottleneck> zones_;
  std::vector<Vehicle> vehicles_;
  std::vector<double> accel_;
  std::uint64_t steps_ = 0;
  std::int64_t next_id_ = 0;
  std::size_t exited_ = 0;
  double min_gap_;
  bool exit_enabled_ = true;
};

/// Runs a scenario: Poisson arrivals at x = 0 (entry deferred while the last
/// vehicle is closer than s0 + len), exit at road_len, every vehicle recorded
/// each step. Deterministic in (spec, params).
SimulationRun simulate_run(const ScenarioSpec& spec, const IdmParams& params);

inline TrajectorySet simulate(const ScenarioSpec& spec, const IdmParams& params) {
  return simulate_run(spec, params).trajectories;
}

}  // namespace atse

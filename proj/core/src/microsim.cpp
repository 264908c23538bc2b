#include "atse/microsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

#include "atse/errors.hpp"

namespace atse {

namespace {

constexpr double kSlowZonePeriod = 90.0;  // s between slow-moving zone activations
constexpr double kSlowZoneLength = 20.0;  // s each activation lasts
constexpr double kSlowZoneCap = 5.0;      // m/s
constexpr double kJamCap = 1.0;           // m/s

bool zone_active(const Bottleneck& z, double t) { return t >= z.t_start && t < z.t_end; }

}  // namespace

void IdmParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string("IDM ") + name + " must be positive");
  };
  positive(v0, "v0");
  positive(t_hw, "T_hw");
  positive(s0, "s0");
  positive(a_max, "a_max");
  positive(b_comf, "b_comf");
  positive(len, "len");
  if (!(delta >= 1.0) || !std::isfinite(delta)) throw DomainError("IDM delta must be >= 1");
}

std::string_view to_string(Demand d) {
  switch (d) {
    case Demand::FreeFlow: return "free-flow";
    case Demand::SlowMoving: return "slow-moving";
    case Demand::Congested: return "congested";
  }
  return "unknown";
}

Demand parse_demand(std::string_view text) {
  if (text == "free-flow") return Demand::FreeFlow;
  if (text == "slow-moving") return Demand::SlowMoving;
  if (text == "congested") return Demand::Congested;
  throw DomainError("unknown demand '" + std::string(text) + "' (free-flow, slow-moving, congested)");
}

void ScenarioSpec::validate() const {
  if (!(road_len > 0.0) || !std::isfinite(road_len)) throw DomainError("road_len must be positive");
  if (!(duration > 0.0) || !std::isfinite(duration)) throw DomainError("duration must be positive");
  if (!(inflow >= 0.0) || !std::isfinite(inflow)) throw DomainError("inflow must be non-negative");
  if (!(sim_dt > 0.0) || !std::isfinite(sim_dt)) throw DomainError("sim_dt must be positive");
  for (const auto& z : bottlenecks) {
    if (!(z.t_start >= 0.0 && z.t_start <= z.t_end && z.t_end <= duration)) {
      throw DomainError("bottleneck interval outside [0, duration]");
    }
    if (!(z.x_pos >= 0.0 && z.x_pos <= road_len)) throw DomainError("bottleneck position outside road");
    if (!(z.speed_cap > 0.0)) throw DomainError("bottleneck speed cap must be positive");
  }
}

DemandPreset demand_presets(Demand demand, double road_len, double duration) {
  DemandPreset preset;
  const double x_down = std::max(0.0, road_len - kZoneLength);
  switch (demand) {
    case Demand::FreeFlow:
      preset.inflow = 600.0;
      break;
    case Demand::SlowMoving: {
      preset.inflow = 1800.0;
      const double x_pos = std::min(0.8 * road_len, x_down);
      for (double t = kSlowZonePeriod / 3.0; t < duration; t += kSlowZonePeriod) {
        preset.bottlenecks.push_back({t, std::min(t + kSlowZoneLength, duration), x_pos, kSlowZoneCap});
      }
      break;
    }
    case Demand::Congested:
      preset.inflow = 1800.0;
      preset.bottlenecks.push_back({0.0, duration, x_down, kJamCap});
      break;
  }
  return preset;
}

ScenarioSpec make_scenario(Demand demand, double road_len, double duration, std::uint64_t seed) {
  auto preset = demand_presets(demand, road_len, duration);
  ScenarioSpec spec;
  spec.demand = demand;
  spec.road_len = road_len;
  spec.duration = duration;
  spec.inflow = preset.inflow;
  spec.seed = seed;
  spec.bottlenecks = std::move(preset.bottlenecks);
  return spec;
}

double idm_free_accel(double v, const IdmParams& p) {
  return p.a_max * (1.0 - std::pow(v / p.v0, p.delta));
}

double idm_accel(double gap, double v, double dv, const IdmParams& p) {
  if (!(gap > 0.0)) throw CollisionError("non-positive gap " + std::to_string(gap));
  const double s_star = std::max(p.s0, p.s0 + v * p.t_hw + v * dv / (2.0 * std::sqrt(p.a_max * p.b_comf)));
  const double ratio = s_star / gap;
  return idm_free_accel(v, p) - p.a_max * ratio * ratio;
}

double equilibrium_gap(double v, const IdmParams& p) {
  if (!(v >= 0.0 && v < p.v0)) throw DomainError("equilibrium gap needs 0 <= v < v0");
  return (p.s0 + v * p.t_hw) / std::sqrt(1.0 - std::pow(v / p.v0, p.delta));
}

RoadSimulator::RoadSimulator(double road_len, double sim_dt, IdmParams params)
    : road_len_(road_len), dt_(sim_dt), params_(params), min_gap_(std::numeric_limits<double>::infinity()) {
  params_.validate();
}

std::int64_t RoadSimulator::add_vehicle(double x, double v, std::optional<double> fixed_speed) {
  if (!vehicles_.empty() && x >= vehicles_.back().x) {
    throw DomainError("new vehicle must be upstream of the last vehicle");
  }
  const std::int64_t id = next_id_++;
  vehicles_.push_back({id, x, fixed_speed.value_or(v), fixed_speed});
  return id;
}

double RoadSimulator::desired_speed(double x, double t) const {
  double v0 = params_.v0;
  for (const auto& z : zones_) {
    if (!zone_active(z, t)) continue;
    if (x >= z.x_pos && x < z.x_pos + kZoneLength) {
      v0 = std::min(v0, z.speed_cap);
    } else if (x < z.x_pos) {
      // Braking envelope that reaches the cap at the zone entrance.
      v0 = std::min(v0, std::sqrt(z.speed_cap * z.speed_cap + 2.0 * params_.b_comf * (z.x_pos - x)));
    }
  }
  return v0;
}

double RoadSimulator::speed_cap(double x, double t) const {
  double cap = std::numeric_limits<double>::infinity();
  for (const auto& z : zones_) {
    if (zone_active(z, t) && x >= z.x_pos && x < z.x_pos + kZoneLength) cap = std::min(cap, z.speed_cap);
  }
  return cap;
}

void RoadSimulator::step() {
  const double t = time();
  accel_.assign(vehicles_.size(), 0.0);
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const auto& veh = vehicles_[i];
    if (veh.fixed_speed) continue;
    IdmParams local = params_;
    local.v0 = desired_speed(veh.x, t);
    if (i == 0) {
      accel_[i] = idm_free_accel(veh.v, local);
    } else {
      const auto& leader = vehicles_[i - 1];
      const double gap = leader.x - params_.len - veh.x;
      accel_[i] = idm_accel(gap, veh.v, veh.v - leader.v, local);
    }
  }
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    auto& veh = vehicles_[i];
    if (!veh.fixed_speed) {
      veh.v = std::min(std::max(0.0, veh.v + accel_[i] * dt_), speed_cap(veh.x, t));
      // also respect a zone the step would move into
      veh.v = std::min(veh.v, speed_cap(veh.x + veh.v * dt_, t));
    }
    veh.x += veh.v * dt_;
  }
  ++steps_;

  if (exit_enabled_) {
    const auto first_inside = std::find_if(vehicles_.begin(), vehicles_.end(),
                                           [&](const Vehicle& v) { return v.x < road_len_; });
    exited_ += static_cast<std::size_t>(first_inside - vehicles_.begin());
    vehicles_.erase(vehicles_.begin(), first_inside);
  }

  for (std::size_t i = 1; i < vehicles_.size(); ++i) {
    const double gap = vehicles_[i - 1].x - params_.len - vehicles_[i].x;
    min_gap_ = std::min(min_gap_, gap);
    if (gap < 0.0) {
      throw CollisionError("vehicle " + std::to_string(vehicles_[i].id) + " overlaps vehicle " +
                           std::to_string(vehicles_[i - 1].id) + " at t=" + std::to_string(time()));
    }
  }
}

SimulationRun simulate_run(const ScenarioSpec& spec, const IdmParams& params) {
  spec.validate();
  params.validate();

  RoadSimulator sim(spec.road_len, spec.sim_dt, params);
  sim.set_bottlenecks(spec.bottlenecks);

  std::mt19937_64 rng(spec.seed);
  const double rate = spec.inflow / 3600.0;
  std::exponential_distribution<double> headway(rate > 0.0 ? rate : 1.0);
  double next_arrival = rate > 0.0 ? headway(rng) : std::numeric_limits<double>::infinity();

  SimulationRun run;
  std::unordered_map<std::int64_t, std::size_t> slot;
  const auto n_steps = static_cast<std::uint64_t>(std::llround(spec.duration / spec.sim_dt));

  for (std::uint64_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * spec.sim_dt;
    while (next_arrival <= t) {
      ++run.stats.waiting;
      next_arrival += headway(rng);
    }
    const auto& on_road = sim.vehicles();
    double v_in = std::min(sim.desired_speed(0.0, t), sim.speed_cap(0.0, t));
    bool can_enter = run.stats.waiting > 0;
    if (can_enter && !on_road.empty()) {
      // Enter at the leader's speed once the headway gap for it is free.
      const double gap = on_road.back().x - params.len;
      v_in = std::min(v_in, on_road.back().v);
      can_enter = gap >= params.s0 + params.t_hw * v_in;
    }
    if (can_enter) {
      const auto id = sim.add_vehicle(0.0, v_in);
      slot.emplace(id, run.trajectories.vehicles.size());
      run.trajectories.vehicles.push_back(Trajectory{id, {}});
      --run.stats.waiting;
      ++run.stats.entered;
    }
    for (const auto& veh : sim.vehicles()) {
      run.trajectories.vehicles[slot.at(veh.id)].samples.push_back({t, veh.x, veh.v});
    }
    if (k == n_steps) break;
    sim.step();
  }

  run.stats.exited = sim.exited();
  run.stats.on_road = sim.vehicles().size();
  run.stats.min_gap = sim.min_gap();
  return run;
}

}  // namespace atse

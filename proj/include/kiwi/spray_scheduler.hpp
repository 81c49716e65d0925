#pragma once

// Turns vehicle-frame flower targets and constant-acceleration vehicle
// kinematics into nozzle firing commands.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kiwi/stereo_locator.hpp"

namespace kiwi {

struct VehicleState {
  double v0 = 0.0;  // m/s, forward
  double a = 0.0;   // m/s^2
  double t0 = 0.0;  // s

  void validate() const;
  // Forward distance covered between t0 and t (t >= t0); the vehicle does not reverse.
  double distance_at(double t) const;
  // State re-expressed at time t >= t0.
  VehicleState at(double t) const;
};

// "v=<f>,a=<f>,t0=<f>"; omitted fields default to 0.
VehicleState parse_vehicle_state(std::string_view text);

struct Nozzle {
  int id = 0;
  double y = 0.0;  // lateral offset, m
  double x = 0.0;  // forward offset, m
};

struct NozzleConfig {
  std::vector<Nozzle> nozzles{Nozzle{}};
  double reach_lateral = 0.25;
  double actuation_latency = 0.02;
  double spray_duration = 0.1;

  void validate() const;
};

// [sprayer] reach_lateral, actuation_latency, spray_duration
// [nozzle.<id>] x, y   (one section per nozzle)
NozzleConfig load_nozzle_config(const std::filesystem::path& path);
NozzleConfig parse_nozzle_config(std::string_view text);

enum class MissReason { no_nozzle_coverage, target_unreachable, too_late };
std::string_view to_string(MissReason reason);

struct SprayCommand {
  int nozzle_id = 0;
  double fire_time = 0.0;
  double duration = 0.0;
  std::vector<FlowerTarget> targets;  // more than one after merging

  double end_time() const { return fire_time + duration; }
};

struct SprayMiss {
  FlowerTarget target;
  MissReason reason = MissReason::no_nozzle_coverage;
};

struct SprayPlan {
  std::vector<SprayCommand> commands;
  std::vector<SprayMiss> misses;
};

// Single-linkage clusters (distance <= radius) collapse to their centroid
// with the earliest timestamp; sorted by forward distance.
std::vector<FlowerTarget> dedupe_targets(std::span<const FlowerTarget> targets, double radius);

// Smallest t >= 0 with v0 t + a t^2 / 2 = target.x - nozzle.x, returned as
// t0 + t - latency. Throws Error(target_unreachable) when no such t exists and
// Error(too_late) when t < latency.
double solve_fire_time(const FlowerTarget& target, const VehicleState& state, const Nozzle& nozzle,
                       double actuation_latency);

// Nearest-nozzle assignment within reach, fire-time solve, then per-nozzle
// merging of overlapping spray intervals. Commands are sorted by fire time.
SprayPlan plan_spray(std::span<const FlowerTarget> targets, const VehicleState& state, const NozzleConfig& cfg);

// Stateful single-writer scheduler. Holds pending commands so overlapping
// sprays from successive batches merge; commands are released once the
// issuing clock has passed their end.
class SprayScheduler {
 public:
  explicit SprayScheduler(NozzleConfig cfg);

  // Plans `targets` (vehicle frame at state.t0) and returns commands that
  // can no longer change. Misses are returned through `misses`.
  std::vector<SprayCommand> submit(std::span<const FlowerTarget> targets, const VehicleState& state,
                                   std::vector<SprayMiss>& misses);
  std::vector<SprayCommand> flush();
  std::size_t pending() const;

 private:
  NozzleConfig cfg_;
  std::map<int, std::vector<SprayCommand>> pending_;
};

std::string to_spray_jsonl(const SprayCommand& cmd);
std::string to_spray_jsonl(const SprayMiss& miss);

}  // namespace kiwi

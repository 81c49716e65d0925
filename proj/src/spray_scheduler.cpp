#include "kiwi/spray_scheduler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include "json.hpp"
#include "kiwi/config_file.hpp"

namespace kiwi {

void VehicleState::validate() const {
  if (!(v0 >= 0.0)) throw Error(ErrorCode::config, "vehicle speed v0 must be non-negative");
  if (!std::isfinite(a) || !std::isfinite(t0)) throw Error(ErrorCode::config, "vehicle state must be finite");
}

double VehicleState::distance_at(double t) const {
  const double dt = std::max(0.0, t - t0);
  if (a < 0.0) {
    const double t_stop = v0 / -a;
    if (dt >= t_stop) return v0 * t_stop + 0.5 * a * t_stop * t_stop;
  }
  return v0 * dt + 0.5 * a * dt * dt;
}

VehicleState VehicleState::at(double t) const {
  const double dt = std::max(0.0, t - t0);
  double v = v0 + a * dt;
  double acc = a;
  if (v <= 0.0 && a < 0.0) {
    v = 0.0;
    acc = 0.0;
  }
  return {v, acc, t};
}

VehicleState parse_vehicle_state(std::string_view text) {
  VehicleState s;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::config, "vehicle state item '" + std::string(item) + "' is not key=value");
    }
    const auto key = item.substr(0, eq);
    const auto val = item.substr(eq + 1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc{} || ptr != val.data() + val.size()) {
      throw Error(ErrorCode::config, "vehicle state value '" + std::string(val) + "' is not a number");
    }
    if (key == "v" || key == "v0") {
      s.v0 = v;
    } else if (key == "a") {
      s.a = v;
    } else if (key == "t0") {
      s.t0 = v;
    } else {
      throw Error(ErrorCode::config, "unknown vehicle state key '" + std::string(key) + "'");
    }
  }
  s.validate();
  return s;
}

void NozzleConfig::validate() const {
  if (nozzles.empty()) throw Error(ErrorCode::config, "at least one nozzle is required");
  if (!(reach_lateral > 0.0)) throw Error(ErrorCode::config, "reach_lateral must be positive");
  if (!(actuation_latency >= 0.0)) throw Error(ErrorCode::config, "actuation_latency must be non-negative");
  if (!(spray_duration > 0.0)) throw Error(ErrorCode::config, "spray_duration must be positive");
  std::set<int> ids;
  for (const auto& n : nozzles) {
    if (!ids.insert(n.id).second) throw Error(ErrorCode::config, "duplicate nozzle id " + std::to_string(n.id));
  }
}

namespace {

NozzleConfig from_config(const ConfigFile& f) {
  NozzleConfig cfg;
  cfg.reach_lateral = f.get_double("sprayer", "reach_lateral", cfg.reach_lateral);
  cfg.actuation_latency = f.get_double("sprayer", "actuation_latency", cfg.actuation_latency);
  cfg.spray_duration = f.get_double("sprayer", "spray_duration", cfg.spray_duration);
  std::vector<Nozzle> nozzles;
  for (const auto& section : f.sections()) {
    if (!section.starts_with("nozzle.")) continue;
    const std::string id_text = section.substr(7);
    int id = 0;
    auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
    if (ec != std::errc{} || ptr != id_text.data() + id_text.size()) {
      throw Error(ErrorCode::config, "nozzle section '" + section + "' needs an integer id");
    }
    nozzles.push_back({id, f.get_double(section, "y", 0.0), f.get_double(section, "x", 0.0)});
  }
  if (!nozzles.empty()) cfg.nozzles = std::move(nozzles);
  cfg.validate();
  return cfg;
}

bool target_less(const FlowerTarget& a, const FlowerTarget& b) {
  return std::make_tuple(a.x(), a.y(), a.z(), a.timestamp) < std::make_tuple(b.x(), b.y(), b.z(), b.timestamp);
}

// Smallest non-negative root of v0 t + a t^2 / 2 = dx, or a negative value when none exists.
double earliest_crossing(double dx, double v0, double a) {
  if (dx == 0.0) return 0.0;
  if (a == 0.0) {
    if (v0 <= 0.0) return -1.0;
    const double t = dx / v0;
    return t >= 0.0 ? t : -1.0;
  }
  const double disc = v0 * v0 + 2.0 * a * dx;
  if (disc < 0.0) return -1.0;
  // Cancellation-free quadratic roots of (a/2) t^2 + v0 t - dx = 0.
  const double q = -0.5 * (v0 + std::sqrt(disc));
  // A braking vehicle stops at v0/-a and does not reverse.
  const double t_stop = a < 0.0 ? v0 / -a : std::numeric_limits<double>::infinity();
  double best = -1.0;
  auto consider = [&best, t_stop](double t) {
    if (std::isfinite(t) && t >= 0.0 && t <= t_stop && (best < 0.0 || t < best)) best = t;
  };
  if (q != 0.0) {
    consider(q / (0.5 * a));
    consider(-dx / q);
  } else {
    consider(std::sqrt(2.0 * dx / a));
  }
  return best;
}

void merge_into(std::vector<SprayCommand>& lane, SprayCommand cmd) {
  lane.push_back(std::move(cmd));
  std::sort(lane.begin(), lane.end(), [](const SprayCommand& a, const SprayCommand& b) { return a.fire_time < b.fire_time; });
  std::vector<SprayCommand> merged;
  for (auto& c : lane) {
    if (!merged.empty() && c.fire_time <= merged.back().end_time()) {
      auto& last = merged.back();
      const double end = std::max(last.end_time(), c.end_time());
      last.duration = end - last.fire_time;
      last.targets.insert(last.targets.end(), c.targets.begin(), c.targets.end());
    } else {
      merged.push_back(std::move(c));
    }
  }
  lane = std::move(merged);
}

bool command_less(const SprayCommand& a, const SprayCommand& b) {
  return std::tie(a.fire_time, a.nozzle_id) < std::tie(b.fire_time, b.nozzle_id);
}

}  // namespace

NozzleConfig load_nozzle_config(const std::filesystem::path& path) { return from_config(ConfigFile::load(path)); }
NozzleConfig parse_nozzle_config(std::string_view text) { return from_config(ConfigFile::parse(text)); }

std::string_view to_string(MissReason reason) {
  switch (reason) {
    case MissReason::no_nozzle_coverage: return "NoNozzleCoverage";
    case MissReason::target_unreachable: return "TargetUnreachable";
    case MissReason::too_late: return "TooLate";
  }
  return "Unknown";
}

std::vector<FlowerTarget> dedupe_targets(std::span<const FlowerTarget> targets, double radius) {
  const std::size_t n = targets.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&parent](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((targets[i].position - targets[j].position).norm() <= radius) {
        const auto a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters[find(i)].push_back(i);

  std::vector<FlowerTarget> out;
  out.reserve(clusters.size());
  for (const auto& [root, members] : clusters) {
    if (members.size() == 1) {
      out.push_back(targets[members.front()]);
      continue;
    }
    // Members in canonical order so the centroid sum is permutation-independent.
    std::vector<const FlowerTarget*> sorted;
    for (auto i : members) sorted.push_back(&targets[i]);
    std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return target_less(*a, *b); });
    FlowerTarget merged = *sorted.front();
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (const auto* t : sorted) {
      sum += t->position;
      if (t->timestamp < merged.timestamp) {
        merged.timestamp = t->timestamp;
        merged.source = t->source;
      }
    }
    merged.position = sum / static_cast<double>(sorted.size());
    out.push_back(std::move(merged));
  }
  std::sort(out.begin(), out.end(), target_less);
  return out;
}

double solve_fire_time(const FlowerTarget& target, const VehicleState& state, const Nozzle& nozzle,
                       double actuation_latency) {
  const double dx = target.x() - nozzle.x;
  const double t = earliest_crossing(dx, state.v0, state.a);
  if (t < 0.0) {
    throw Error(ErrorCode::target_unreachable, "no non-negative crossing time for target at dx=" + std::to_string(dx));
  }
  if (t < actuation_latency) {
    throw Error(ErrorCode::too_late, "crossing in " + std::to_string(t) + " s is inside the actuation latency");
  }
  return state.t0 + t - actuation_latency;
}

SprayPlan plan_spray(std::span<const FlowerTarget> targets, const VehicleState& state, const NozzleConfig& cfg) {
  cfg.validate();
  std::vector<FlowerTarget> ordered(targets.begin(), targets.end());
  std::sort(ordered.begin(), ordered.end(), target_less);

  SprayPlan plan;
  std::map<int, std::vector<SprayCommand>> lanes;
  for (auto& target : ordered) {
    const Nozzle* best = nullptr;
    double best_gap = 0.0;
    for (const auto& n : cfg.nozzles) {
      const double gap = std::abs(target.y() - n.y);
      if (best == nullptr || gap < best_gap || (gap == best_gap && n.id < best->id)) {
        best = &n;
        best_gap = gap;
      }
    }
    if (best == nullptr || best_gap > cfg.reach_lateral) {
      plan.misses.push_back({std::move(target), MissReason::no_nozzle_coverage});
      continue;
    }
    try {
      const double fire = solve_fire_time(target, state, *best, cfg.actuation_latency);
      merge_into(lanes[best->id], SprayCommand{best->id, fire, cfg.spray_duration, {target}});
    } catch (const Error& e) {
      const auto reason = e.code() == ErrorCode::too_late ? MissReason::too_late : MissReason::target_unreachable;
      plan.misses.push_back({std::move(target), reason});
    }
  }
  for (auto& [id, lane] : lanes) {
    for (auto& c : lane) plan.commands.push_back(std::move(c));
  }
  std::sort(plan.commands.begin(), plan.commands.end(), command_less);
  return plan;
}

SprayScheduler::SprayScheduler(NozzleConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::vector<SprayCommand> SprayScheduler::submit(std::span<const FlowerTarget> targets, const VehicleState& state,
                                                 std::vector<SprayMiss>& misses) {
  auto plan = plan_spray(targets, state, cfg_);
  for (auto& m : plan.misses) misses.push_back(std::move(m));
  for (auto& c : plan.commands) merge_into(pending_[c.nozzle_id], std::move(c));

  std::vector<SprayCommand> released;
  for (auto& [id, lane] : pending_) {
    auto keep = std::stable_partition(lane.begin(), lane.end(),
                                      [&](const SprayCommand& c) { return c.end_time() >= state.t0; });
    for (auto it = keep; it != lane.end(); ++it) released.push_back(std::move(*it));
    lane.erase(keep, lane.end());
  }
  std::sort(released.begin(), released.end(), command_less);
  return released;
}

std::vector<SprayCommand> SprayScheduler::flush() {
  std::vector<SprayCommand> out;
  for (auto& [id, lane] : pending_) {
    for (auto& c : lane) out.push_back(std::move(c));
  }
  pending_.clear();
  std::sort(out.begin(), out.end(), command_less);
  return out;
}

std::size_t SprayScheduler::pending() const {
  std::size_t n = 0;
  for (const auto& [id, lane] : pending_) n += lane.size();
  return n;
}

std::string to_spray_jsonl(const SprayCommand& cmd) {
  nlohmann::ordered_json j;
  j["nozzle"] = cmd.nozzle_id;
  j["fire_time"] = cmd.fire_time;
  j["duration"] = cmd.duration;
  const auto& first = cmd.targets.front();
  j["target_xyz"] = {first.x(), first.y(), first.z()};
  if (cmd.targets.size() > 1) {
    auto all = nlohmann::ordered_json::array();
    for (const auto& t : cmd.targets) all.push_back({t.x(), t.y(), t.z()});
    j["merged_xyz"] = std::move(all);
  }
  return j.dump();
}

std::string to_spray_jsonl(const SprayMiss& miss) {
  nlohmann::ordered_json j;
  j["miss"] = std::string(to_string(miss.reason));
  j["target_xyz"] = {miss.target.x(), miss.target.y(), miss.target.z()};
  j["timestamp"] = miss.target.timestamp;
  return j.dump();
}

}  // namespace kiwi

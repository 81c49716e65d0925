#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "kiwi/spray_scheduler.hpp"
#include "support.hpp"

using namespace kiwi;

namespace {

FlowerTarget at(double x, double y, double z = 1.5, double t = 0.0) {
  FlowerTarget f;
  f.position = {x, y, z};
  f.timestamp = t;
  return f;
}

NozzleConfig bar(double latency = 0.0) {
  NozzleConfig cfg;
  cfg.nozzles.clear();
  for (int i = 0; i < 8; ++i) cfg.nozzles.push_back({i, -1.75 + 0.5 * i, 0.0});
  cfg.actuation_latency = latency;
  return cfg;
}

ErrorCode fire_error(const FlowerTarget& t, const VehicleState& s, double latency = 0.0) {
  try {
    solve_fire_time(t, s, Nozzle{}, latency);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::invalid_input;
}

}  // namespace

TEST_CASE("dedupe") {
  const std::vector<FlowerTarget> close{at(1.0, 0.0), at(1.005, 0.0)};
  const auto merged = dedupe_targets(close, 0.02);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].x() == doctest::Approx(1.0025).epsilon(1e-12));

  const std::vector<FlowerTarget> apart{at(1.0, 0.0), at(1.05, 0.0)};
  CHECK(dedupe_targets(apart, 0.02).size() == 2);

  const std::vector<FlowerTarget> same{at(1.0, 0.0), at(1.0, 0.0), at(2.0, 0.0)};
  CHECK(dedupe_targets(same, 0.0).size() == 2);
  const std::vector<FlowerTarget> distinct{at(1.0, 0.0), at(1.001, 0.0), at(2.0, 0.0)};
  CHECK(dedupe_targets(distinct, 0.0).size() == 3);

  // Earliest timestamp wins.
  const std::vector<FlowerTarget> timed{at(1.0, 0.0, 1.5, 0.3), at(1.01, 0.0, 1.5, 0.1)};
  CHECK(dedupe_targets(timed, 0.02)[0].timestamp == 0.1);
}

TEST_CASE("dedupe is permutation invariant") {
  test::Gen gen(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<FlowerTarget> ts;
    for (int i = gen.integer(0, 30); i > 0; --i) ts.push_back(at(gen.uniform(0, 1), gen.uniform(0, 0.3)));
    const auto a = dedupe_targets(ts, 0.05);
    std::shuffle(ts.begin(), ts.end(), gen.engine());
    const auto b = dedupe_targets(ts, 0.05);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].position == b[i].position);
  }
}

TEST_CASE("fire time examples") {
  CHECK(solve_fire_time(at(1.0, 0.0), {0.5, 0.0, 0.0}, Nozzle{}, 0.0) == 2.0);
  CHECK(solve_fire_time(at(1.0, 0.0), {0.0, 0.5, 0.0}, Nozzle{}, 0.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(solve_fire_time(at(1.0, 0.0), {0.5, 0.0, 10.0}, Nozzle{}, 0.02) == doctest::Approx(11.98).epsilon(1e-15));
  CHECK(solve_fire_time(at(1.3, 0.0), {0.5, 0.0, 0.0}, Nozzle{0, 0.0, 0.3}, 0.0) == doctest::Approx(2.0).epsilon(1e-15));

  CHECK(fire_error(at(-0.5, 0.0), {0.5, 0.0, 0.0}) == ErrorCode::target_unreachable);
  CHECK(fire_error(at(1.0, 0.0), {0.0, 0.0, 0.0}) == ErrorCode::target_unreachable);
  // Braking to a stop before the target.
  CHECK(fire_error(at(1.0, 0.0), {0.5, -0.5, 0.0}) == ErrorCode::target_unreachable);
  // Braking with the target behind: the vehicle stops rather than reversing.
  CHECK(fire_error(at(-0.2, 0.0), {0.5, -0.3, 0.0}) == ErrorCode::target_unreachable);
  CHECK(fire_error(at(0.001, 0.0), {0.5, 0.0, 0.0}, 0.02) == ErrorCode::too_late);
}

TEST_CASE("nozzle lands on the target") {
  test::Gen gen(29);
  double worst = 0.0;
  int solved = 0;
  for (int i = 0; i < 10000; ++i) {
    const VehicleState s{gen.uniform(0.05, 2.0), gen.uniform(-0.3, 0.5), gen.uniform(0, 100)};
    const Nozzle n{0, 0.0, gen.uniform(-0.5, 0.5)};
    const double latency = gen.uniform(0.0, 0.05);
    const auto t = at(n.x + gen.uniform(-1.0, 3.0), 0.0);
    try {
      const double fire = solve_fire_time(t, s, n, latency);
      const double travelled = s.distance_at(fire + latency);
      worst = std::max(worst, std::abs(travelled - (t.x() - n.x)));
      ++solved;
    } catch (const Error& e) {
      // Only when braking stops short or the crossing falls inside the latency.
      const bool stops = s.a < 0.0 && s.v0 * s.v0 / (-2.0 * s.a) < t.x() - n.x;
      const bool behind = t.x() < n.x;
      CHECK((e.code() == ErrorCode::too_late || (e.code() == ErrorCode::target_unreachable && (stops || behind))));
    }
  }
  CHECK(solved > 6000);
  CHECK(worst <= 1e-9);
}

TEST_CASE("plan examples") {
  NozzleConfig cfg;
  cfg.reach_lateral = 0.2;
  cfg.actuation_latency = 0.0;
  const std::vector<FlowerTarget> wide{at(1.0, 0.5)};
  const auto miss = plan_spray(wide, {0.5, 0.0, 0.0}, cfg);
  CHECK(miss.commands.empty());
  REQUIRE(miss.misses.size() == 1);
  CHECK(miss.misses[0].reason == MissReason::no_nozzle_coverage);

  cfg.spray_duration = 0.1;
  const std::vector<FlowerTarget> pair{at(1.0, 0.0), at(1.01, 0.0)};
  const auto merged = plan_spray(pair, {0.5, 0.0, 0.0}, cfg);
  REQUIRE(merged.commands.size() == 1);
  CHECK(merged.commands[0].targets.size() == 2);
  CHECK(merged.commands[0].fire_time == 2.0);
  CHECK(merged.commands[0].duration == doctest::Approx(0.12).epsilon(1e-12));

  const std::vector<FlowerTarget> behind{at(-0.5, 0.0)};
  const auto late = plan_spray(behind, {0.5, 0.0, 0.0}, cfg);
  CHECK(late.commands.empty());
  REQUIRE(late.misses.size() == 1);
  CHECK(late.misses[0].reason == MissReason::target_unreachable);
}

TEST_CASE("plan properties") {
  test::Gen gen(31);
  const NozzleConfig cfg = bar(0.02);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<FlowerTarget> ts;
    for (int i = gen.integer(0, 25); i > 0; --i) ts.push_back(at(gen.uniform(-0.5, 3.0), gen.uniform(-2.3, 2.3)));
    const VehicleState s{gen.uniform(0.1, 1.5), gen.uniform(-0.1, 0.2), gen.uniform(0, 5)};
    const auto plan = plan_spray(ts, s, cfg);

    std::size_t covered = plan.misses.size();
    for (const auto& c : plan.commands) covered += c.targets.size();
    CHECK(covered == ts.size());

    for (std::size_t i = 1; i < plan.commands.size(); ++i) {
      CHECK(plan.commands[i - 1].fire_time <= plan.commands[i].fire_time);
    }
    for (const auto& n : cfg.nozzles) {
      double last_end = -1e300;
      for (const auto& c : plan.commands) {
        if (c.nozzle_id != n.id) continue;
        CHECK(c.fire_time > last_end);
        last_end = c.end_time();
      }
    }

    std::shuffle(ts.begin(), ts.end(), gen.engine());
    const auto again = plan_spray(ts, s, cfg);
    REQUIRE(again.commands.size() == plan.commands.size());
    for (std::size_t i = 0; i < plan.commands.size(); ++i) {
      CHECK(again.commands[i].nozzle_id == plan.commands[i].nozzle_id);
      CHECK(again.commands[i].fire_time == plan.commands[i].fire_time);
      CHECK(again.commands[i].duration == plan.commands[i].duration);
      CHECK(to_spray_jsonl(again.commands[i]) == to_spray_jsonl(plan.commands[i]));
    }
    CHECK(again.misses.size() == plan.misses.size());
  }
}

TEST_CASE("stateful scheduler merges across batches") {
  NozzleConfig cfg;
  cfg.actuation_latency = 0.0;
  SprayScheduler sched(cfg);
  std::vector<SprayMiss> misses;
  const std::vector<FlowerTarget> first{at(1.0, 0.0)};
  CHECK(sched.submit(first, {0.5, 0.0, 0.0}, misses).empty());
  // Same flower seen 0.05 s later, 2.5 cm closer.
  const std::vector<FlowerTarget> second{at(0.985, 0.0)};
  CHECK(sched.submit(second, {0.5, 0.0, 0.05}, misses).empty());
  CHECK(sched.pending() == 1);
  const auto out = sched.flush();
  REQUIRE(out.size() == 1);
  CHECK(out[0].targets.size() == 2);
  CHECK(misses.empty());
  CHECK(sched.pending() == 0);
}

TEST_CASE("vehicle state and nozzle config parsing") {
  const auto s = parse_vehicle_state("v=0.5,a=0.1,t0=2");
  CHECK(s.v0 == 0.5);
  CHECK(s.a == 0.1);
  CHECK(s.t0 == 2.0);
  CHECK(parse_vehicle_state("v=1").a == 0.0);
  CHECK_THROWS_AS(parse_vehicle_state("speed=1"), Error);

  const auto cfg = parse_nozzle_config(
      "[sprayer]\nreach_lateral = 0.3\nactuation_latency = 0.01\nspray_duration = 0.2\n"
      "[nozzle.3]\ny = 0.5\n[nozzle.1]\ny = -0.5\nx = 0.1\n");
  CHECK(cfg.reach_lateral == 0.3);
  REQUIRE(cfg.nozzles.size() == 2);
  CHECK_THROWS_AS(parse_nozzle_config("[nozzle.x]\ny = 0\n"), Error);
  CHECK_THROWS_AS(parse_nozzle_config("[sprayer]\nspray_duration = 0\n"), Error);
}

TEST_CASE("spray JSONL") {
  SprayCommand c{2, 1.5, 0.1, {at(1.0, 0.5, 1.5)}};
  CHECK(to_spray_jsonl(c) == R"({"nozzle":2,"fire_time":1.5,"duration":0.1,"target_xyz":[1.0,0.5,1.5]})");
  SprayMiss m{at(1.0, 0.5, 1.5, 0.25), MissReason::too_late};
  CHECK(to_spray_jsonl(m) == R"({"miss":"TooLate","target_xyz":[1.0,0.5,1.5],"timestamp":0.25})");
}

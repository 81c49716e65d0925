#include <doctest.h>

#include <fstream>
#include <mutex>
#include <thread>

#include "kiwi/async_logger.hpp"
#include "support.hpp"

using namespace kiwi;

namespace {

struct Collect {
  std::mutex mu;
  std::vector<std::string> seen;
  LogSink sink() {
    return [this](const LogRecord& r) {
      std::lock_guard lock(mu);
      seen.push_back(r.payload);
    };
  }
};

LoggerConfig with_capacity(std::size_t n, DropPolicy p = DropPolicy::drop_oldest) {
  LoggerConfig cfg;
  cfg.queue_capacity = n;
  cfg.drop_policy = p;
  return cfg;
}

std::size_t count_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("drop policies at capacity") {
  SUBCASE("drop oldest") {
    Collect c;
    AsyncLogger log(with_capacity(2), c.sink(), true);
    for (const char* p : {"1", "2", "3"}) log.log({"events", p, ""});
    log.flush();
    CHECK(c.seen == std::vector<std::string>{"2", "3"});
    const auto s = log.stats();
    CHECK(s.dropped == 1);
    CHECK(s.persisted == 2);
    CHECK(s.offered == 3);
    CHECK(s.high_water == 2);
  }
  SUBCASE("drop newest") {
    Collect c;
    AsyncLogger log(with_capacity(2, DropPolicy::drop_newest), c.sink(), true);
    CHECK(log.log({"events", "1", ""}));
    CHECK(log.log({"events", "2", ""}));
    CHECK_FALSE(log.log({"events", "3", ""}));
    log.flush();
    CHECK(c.seen == std::vector<std::string>{"1", "2"});
    CHECK(log.stats().dropped == 1);
  }
  SUBCASE("room for everything") {
    Collect c;
    AsyncLogger log(with_capacity(100), c.sink(), true);
    for (int i = 0; i < 100; ++i) log.log({"events", std::to_string(i), ""});
    log.flush();
    CHECK(log.stats().dropped == 0);
    CHECK(c.seen.size() == 100);
    CHECK(c.seen.front() == "0");
    CHECK(c.seen.back() == "99");
  }
}

TEST_CASE("file sink conservation") {
  test::TempDir dir("logger");
  LoggerConfig cfg = with_capacity(16);
  cfg.out_dir = dir.path();
  {
    AsyncLogger log(cfg);
    for (int i = 0; i < 10000; ++i) log.log({"events", "{\"i\":" + std::to_string(i) + "}", ""});
    log.shutdown();
    const auto s = log.stats();
    CHECK(s.offered == 10000);
    CHECK(s.persisted + s.dropped == 10000);
    CHECK(count_lines(dir / "events.jsonl") == s.persisted);
  }
  {
    AsyncLogger log(cfg);
    log.log({"images", "\x89PNGdata", "f/one.png"});
    log.shutdown();
    std::ifstream in(dir / "images" / "f" / "one.png", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    CHECK(bytes == "\x89PNGdata");
  }
}

TEST_CASE("concurrent producers") {
  Collect c;
  AsyncLogger log(with_capacity(8), c.sink());
  std::vector<std::thread> producers;
  for (int t = 0; t < 4; ++t) {
    producers.emplace_back([&log, t] {
      for (int i = 0; i < 2500; ++i) log.log({"s" + std::to_string(t), "x", ""});
    });
  }
  for (auto& p : producers) p.join();
  log.shutdown();
  const auto s = log.stats();
  CHECK(s.offered == 10000);
  CHECK(s.persisted + s.dropped == s.offered);
  CHECK(c.seen.size() == s.persisted);
  CHECK(s.high_water <= 8);
}

TEST_CASE("failures and shutdown") {
  SUBCASE("log after shutdown") {
    Collect c;
    AsyncLogger log(with_capacity(4), c.sink());
    log.shutdown();
    log.shutdown();
    try {
      log.log({"events", "late", ""});
      FAIL("expected a shutdown error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::shutdown);
    }
  }
  SUBCASE("sink errors are counted, not thrown") {
    AsyncLogger log(with_capacity(4), [](const LogRecord&) { throw Error(ErrorCode::io, "disk full"); });
    log.log({"events", "a", ""});
    log.flush();
    CHECK(log.stats().failed == 1);
    CHECK(log.stats().persisted == 0);
  }
  SUBCASE("oversized records are dropped") {
    LoggerConfig cfg = with_capacity(4);
    cfg.max_record_bytes = 8;
    Collect c;
    AsyncLogger log(cfg, c.sink());
    CHECK_FALSE(log.log({"events", std::string(64, 'x'), ""}));
    log.flush();
    CHECK(log.stats().dropped == 1);
    CHECK(c.seen.empty());
  }
  SUBCASE("config") {
    CHECK(drop_policy_from_string("drop_newest") == DropPolicy::drop_newest);
    CHECK(to_string(DropPolicy::drop_oldest) == "drop_oldest");
    CHECK_THROWS_AS(drop_policy_from_string("drop_all"), Error);
    CHECK_THROWS_AS(with_capacity(0).validate(), Error);
  }
}

#pragma once

// Bounded asynchronous record logger. Producers never block: when the queue
// is full a record is dropped according to the policy and counted. A single
// background thread hands queued records to a sink.

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "kiwi/core.hpp"

namespace kiwi {

enum class DropPolicy { drop_oldest, drop_newest };

std::string_view to_string(DropPolicy policy);
DropPolicy drop_policy_from_string(std::string_view text);

struct LoggerConfig {
  std::filesystem::path out_dir;
  std::size_t queue_capacity = 1024;
  DropPolicy drop_policy = DropPolicy::drop_oldest;
  bool save_images = false;
  bool enabled = true;
  std::size_t max_record_bytes = std::size_t{8} << 20;

  void validate() const;
};

struct LogRecord {
  std::string stream;   // line records go to <stream>.jsonl
  std::string payload;  // one line, or encoded image bytes
  std::string file;     // set for image records: path under images/

  std::size_t bytes() const { return payload.size() + stream.size() + file.size(); }
};

struct LoggerStats {
  std::uint64_t offered = 0;
  std::uint64_t accepted = 0;
  std::uint64_t dropped = 0;   // evicted, rejected or oversized
  std::uint64_t persisted = 0;
  std::uint64_t failed = 0;    // sink errors
  std::size_t high_water = 0;  // most records ever queued
};

using LogSink = std::function<void(const LogRecord&)>;

// Appends line records to <dir>/<stream>.jsonl and writes image records to
// <dir>/images/<file>. Not thread-safe; the logger calls it from one thread.
class FileSink {
 public:
  explicit FileSink(std::filesystem::path dir);
  void operator()(const LogRecord& record);

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::shared_ptr<std::ofstream>, std::less<>> streams_;
};

class AsyncLogger {
 public:
  // A null sink writes files under cfg.out_dir. A paused logger queues but
  // does not persist until resume().
  explicit AsyncLogger(LoggerConfig cfg, LogSink sink = nullptr, bool start_paused = false);
  ~AsyncLogger();
  AsyncLogger(const AsyncLogger&) = delete;
  AsyncLogger& operator=(const AsyncLogger&) = delete;

  // True when the record was queued. Throws Error(shutdown) once shut down.
  bool log(LogRecord record);

  void pause();
  void resume();
  // Blocks until every queued record has reached the sink (resumes first).
  void flush();
  // Drains the queue and stops the writer thread. Idempotent.
  void shutdown();

  LoggerStats stats() const;
  const LoggerConfig& config() const { return cfg_; }

 private:
  void run();

  LoggerConfig cfg_;
  LogSink sink_;
  mutable std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<LogRecord> queue_;
  LoggerStats stats_;
  bool paused_ = false;
  bool stopping_ = false;
  bool closed_ = false;
  bool writing_ = false;
  std::thread worker_;
};

}  // namespace kiwi

#include "kiwi/async_logger.hpp"

#include <utility>

namespace kiwi {

std::string_view to_string(DropPolicy policy) {
  return policy == DropPolicy::drop_oldest ? "drop_oldest" : "drop_newest";
}

DropPolicy drop_policy_from_string(std::string_view text) {
  if (text == "drop_oldest") return DropPolicy::drop_oldest;
  if (text == "drop_newest") return DropPolicy::drop_newest;
  throw Error(ErrorCode::config, "unknown drop policy '" + std::string(text) + "'");
}

void LoggerConfig::validate() const {
  if (queue_capacity < 1) throw Error(ErrorCode::config, "queue_capacity must be >= 1");
  if (max_record_bytes < 1) throw Error(ErrorCode::config, "max_record_bytes must be >= 1");
}

FileSink::FileSink(std::filesystem::path dir) : dir_(std::move(dir)) {}

void FileSink::operator()(const LogRecord& record) {
  if (!record.file.empty()) {
    const auto path = dir_ / "images" / record.file;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out.write(record.payload.data(), static_cast<std::streamsize>(record.payload.size()));
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    return;
  }
  auto it = streams_.find(record.stream);
  if (it == streams_.end()) {
    std::filesystem::create_directories(dir_);
    const auto path = dir_ / (record.stream + ".jsonl");
    auto out = std::make_shared<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*out) throw Error(ErrorCode::io, "cannot open " + path.string());
    it = streams_.emplace(record.stream, std::move(out)).first;
  }
  auto& out = *it->second;
  out << record.payload << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::io, "write failed for stream " + record.stream);
}

AsyncLogger::AsyncLogger(LoggerConfig cfg, LogSink sink, bool start_paused)
    : cfg_(std::move(cfg)), sink_(std::move(sink)), paused_(start_paused) {
  cfg_.validate();
  if (!sink_) sink_ = FileSink(cfg_.out_dir);
  worker_ = std::thread([this] { run(); });
}

AsyncLogger::~AsyncLogger() { shutdown(); }

bool AsyncLogger::log(LogRecord record) {
  std::lock_guard lock(mu_);
  if (closed_) throw Error(ErrorCode::shutdown, "logger has been shut down");
  ++stats_.offered;
  if (record.bytes() > cfg_.max_record_bytes) {
    ++stats_.dropped;
    return false;
  }
  if (queue_.size() >= cfg_.queue_capacity) {
    ++stats_.dropped;
    if (cfg_.drop_policy == DropPolicy::drop_newest) return false;
    queue_.pop_front();
  }
  queue_.push_back(std::move(record));
  ++stats_.accepted;
  stats_.high_water = std::max(stats_.high_water, queue_.size());
  wake_.notify_one();
  return true;
}

void AsyncLogger::pause() {
  std::lock_guard lock(mu_);
  paused_ = true;
}

void AsyncLogger::resume() {
  std::lock_guard lock(mu_);
  paused_ = false;
  wake_.notify_one();
}

void AsyncLogger::flush() {
  std::unique_lock lock(mu_);
  paused_ = false;
  wake_.notify_one();
  idle_.wait(lock, [this] { return queue_.empty() && !writing_; });
}

void AsyncLogger::shutdown() {
  {
    std::lock_guard lock(mu_);
    if (closed_ && !worker_.joinable()) return;
    closed_ = true;
    stopping_ = true;
    paused_ = false;
    wake_.notify_one();
  }
  if (worker_.joinable()) worker_.join();
  idle_.notify_all();
}

LoggerStats AsyncLogger::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void AsyncLogger::run() {
  std::unique_lock lock(mu_);
  for (;;) {
    wake_.wait(lock, [this] { return stopping_ || (!paused_ && !queue_.empty()); });
    if (queue_.empty() && stopping_) break;
    if (paused_ && !stopping_) continue;
    LogRecord record = std::move(queue_.front());
    queue_.pop_front();
    writing_ = true;
    lock.unlock();
    bool ok = true;
    try {
      sink_(record);
    } catch (...) {
      ok = false;
    }
    lock.lock();
    writing_ = false;
    if (ok) {
      ++stats_.persisted;
    } else {
      ++stats_.failed;
    }
    if (queue_.empty()) idle_.notify_all();
  }
  idle_.notify_all();
}

}  // namespace kiwi

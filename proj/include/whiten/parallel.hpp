#pragma once

// Fork/join executor used for the row-, column- and pixel-parallel stages.
// Work items are independent and each item's arithmetic does not depend on
// which thread runs it, so results are identical for any worker count.

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "whiten/core.hpp"

namespace whiten {

struct Strategy {
  enum class Kind { serial, parallel };
  Kind kind = Kind::serial;
  unsigned workers = 1;

  static Strategy serial() { return {Kind::serial, 1}; }
  static Strategy parallel(unsigned workers) {
    if (workers == 0) throw Error("parallel strategy needs at least one worker");
    return {Kind::parallel, workers};
  }
  std::string name() const {
    return kind == Kind::serial ? "serial" : "parallel(" + std::to_string(workers) + ")";
  }
};

class Executor {
 public:
  explicit Executor(Strategy s = Strategy::serial()) : strategy_(s) {
    if (s.kind == Strategy::Kind::parallel && s.workers == 0) {
      throw Error("parallel strategy needs at least one worker");
    }
    const unsigned extra = s.kind == Strategy::Kind::parallel ? s.workers - 1 : 0;
    threads_.reserve(extra);
    for (unsigned i = 0; i < extra; ++i) threads_.emplace_back([this] { worker_loop(); });
  }

  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  ~Executor() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  const Strategy& strategy() const { return strategy_; }
  unsigned workers() const { return static_cast<unsigned>(threads_.size()) + 1; }

  /// Calls fn(i) for every i in [0, n) and returns once all calls finished.
  template <class F>
  void for_each(std::size_t n, F&& fn) {
    if (n == 0) return;
    if (threads_.empty() || n == 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    std::function<void(std::size_t)> body = std::ref(fn);
    {
      std::lock_guard lock(mu_);
      job_ = &body;
      job_size_ = n;
      next_.store(0);
      active_ = threads_.size();
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    run_items();
    std::unique_lock lock(mu_);
    done_.wait(lock, [this] { return active_ == 0; });
    job_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void run_items() {
    for (;;) {
      const std::size_t i = next_.fetch_add(1);
      if (i >= job_size_) return;
      try {
        (*job_)(i);
      } catch (...) {
        std::lock_guard lock(mu_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  void worker_loop() {
    std::size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      run_items();
      {
        std::lock_guard lock(mu_);
        --active_;
      }
      done_.notify_one();
    }
  }

  Strategy strategy_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t job_size_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t active_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

}  // namespace whiten

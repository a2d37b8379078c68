#pragma once

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <vector>

namespace consmrf {

/// Fixed set of workers released together by run() and joined at a barrier.
/// With one worker the job runs on the calling thread.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t n_workers)
      : n_workers_(n_workers), start_(static_cast<std::ptrdiff_t>(n_workers + 1)),
        done_(static_cast<std::ptrdiff_t>(n_workers + 1)) {
    if (n_workers == 0) throw std::invalid_argument("WorkerPool needs at least one worker");
    if (n_workers_ == 1) return;
    threads_.reserve(n_workers_);
    for (std::size_t w = 0; w < n_workers_; ++w) threads_.emplace_back([this, w] { loop(w); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    if (threads_.empty()) return;
    stop_.store(true, std::memory_order_release);
    start_.arrive_and_wait();
    for (auto& t : threads_) t.join();
  }

  std::size_t size() const noexcept { return n_workers_; }

  /// Runs job(worker_index) on every worker; returns after all finished and
  /// rethrows the first exception raised by any of them.
  void run(const std::function<void(std::size_t)>& job) {
    if (threads_.empty()) {
      job(0);
      return;
    }
    job_ = &job;
    error_ = nullptr;
    start_.arrive_and_wait();
    done_.arrive_and_wait();
    job_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void loop(std::size_t w) {
    for (;;) {
      start_.arrive_and_wait();
      if (stop_.load(std::memory_order_acquire)) return;
      try {
        (*job_)(w);
      } catch (...) {
        std::lock_guard lock(error_mutex_);
        if (!error_) error_ = std::current_exception();
      }
      done_.arrive_and_wait();
    }
  }

  std::size_t n_workers_;
  std::barrier<> start_;
  std::barrier<> done_;
  std::vector<std::thread> threads_;
  std::atomic<bool> stop_{false};
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::exception_ptr error_;
  std::mutex error_mutex_;
};

/// Longest-processing-time assignment: items sorted by descending load (ties
/// by index) are dealt round-robin to workers.
inline std::vector<std::vector<std::size_t>> assign_round_robin_by_load(const std::vector<std::size_t>& loads,
                                                                       std::size_t n_workers) {
  std::vector<std::size_t> order(loads.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return loads[a] > loads[b]; });
  std::vector<std::vector<std::size_t>> out(n_workers);
  for (std::size_t i = 0; i < order.size(); ++i) out[i % n_workers].push_back(order[i]);
  return out;
}

}  // namespace consmrf

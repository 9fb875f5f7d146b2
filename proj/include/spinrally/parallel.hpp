#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace spinrally {

/// Fixed set of threads running data-parallel loops. Iterations are split into
/// contiguous blocks; the calling thread takes block 0. With one worker the
/// loop runs inline.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned workers = 1) : workers_(std::max(1u, workers)) {
    for (unsigned i = 1; i < workers_; ++i) threads_.emplace_back([this, i] { run(i); });
  }

  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      quit_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  unsigned size() const { return workers_; }

  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (workers_ == 1 || n < 2) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    {
      std::lock_guard lock(mu_);
      fn_ = &fn;
      n_ = n;
      pending_ = workers_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    run_block(0);
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    fn_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void run_block(unsigned w) {
    const std::size_t lo = n_ * w / workers_;
    const std::size_t hi = n_ * (w + 1) / workers_;
    try {
      for (std::size_t i = lo; i < hi; ++i) (*fn_)(i);
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!error_) error_ = std::current_exception();
    }
  }

  void run(unsigned w) {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (quit_) return;
      }
      run_block(w);
      {
        std::lock_guard lock(mu_);
        --pending_;
      }
      done_cv_.notify_one();
    }
  }

  unsigned workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* fn_ = nullptr;
  std::size_t n_ = 0;
  unsigned pending_ = 0;
  std::uint64_t generation_ = 0;
  bool quit_ = false;
  std::exception_ptr error_;
};

}  // namespace spinrally

/*
 Copyright 2026 The rfmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rfmpc {

/// Fixed pool that runs parallel_for over a contiguous index range split into
/// one static chunk per worker. The calling thread takes the first chunk.
/// Each index is processed by exactly one thread, so results written to
/// per-index slots do not depend on the worker count.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers = 1) : workers_(workers == 0 ? 1 : workers) {
    for (std::size_t i = 1; i < workers_; ++i) threads_.emplace_back([this, i] { loop(i); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    start_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  [[nodiscard]] std::size_t workers() const { return workers_; }

  /// Runs fn(i) for i in [begin, end). If several indices throw, the
  /// exception of the lowest index is rethrown.
  void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn) {
    if (end <= begin) return;
    if (workers_ == 1 || end - begin == 1) {
      for (std::size_t i = begin; i < end; ++i) fn(i);
      return;
    }
    errors_.assign(end - begin, nullptr);
    {
      std::lock_guard lock(mutex_);
      task_ = &fn;
      begin_ = begin;
      end_ = end;
      pending_ = workers_ - 1;
      ++generation_;
    }
    start_cv_.notify_all();
    run_chunk(0);
    {
      std::unique_lock lock(mutex_);
      done_cv_.wait(lock, [this] { return pending_ == 0; });
      task_ = nullptr;
    }
    for (auto& e : errors_) {
      if (e) std::rethrow_exception(e);
    }
  }

 private:
  void run_chunk(std::size_t worker) {
    const std::size_t count = end_ - begin_;
    const std::size_t lo = begin_ + count * worker / workers_;
    const std::size_t hi = begin_ + count * (worker + 1) / workers_;
    for (std::size_t i = lo; i < hi; ++i) {
      try {
        (*task_)(i);
      } catch (...) {
        errors_[i - begin_] = std::current_exception();
      }
    }
  }

  void loop(std::size_t worker) {
    std::size_t seen = 0;
    while (true) {
      {
        std::unique_lock lock(mutex_);
        start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      run_chunk(worker);
      {
        std::lock_guard lock(mutex_);
        --pending_;
      }
      done_cv_.notify_one();
    }
  }

  std::size_t workers_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
  std::vector<std::exception_ptr> errors_;
};

}  // namespace rfmpc

#pragma once

#include <condition_variable>
#include <exception>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace detcnn {

/// Fixed-size worker pool running statically partitioned loops.
///
/// parallel_for splits [0, n) into contiguous chunks, one per worker. Kernels
/// that use it must write each output element from exactly one sequential
/// accumulation, so results never depend on the worker count.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t threads = 1);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const noexcept { return workers_.size() + 1; }

  /// Calls body(begin, end) on disjoint chunks covering [0, n). Blocks until
  /// all chunks finish; rethrows the first exception.
  void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

 private:
  void worker_loop(std::size_t index);

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
  std::size_t job_n_ = 0;
  std::size_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stopping_ = false;
  std::exception_ptr error_;
};

/// Runs on `pool` when given, inline otherwise.
void parallel_for(ThreadPool* pool, std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace detcnn

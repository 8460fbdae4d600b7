#pragma once

#include <cstdint>
#include <functional>

namespace stc {

// Fixed-size worker pool. parallel_for partitions [begin, end) into contiguous
// chunks, one per worker; every index is processed by exactly one thread, so
// results are bit-identical for any pool size (no cross-thread reductions are
// ever expressed through this interface).
//
// Pool size comes from STCNET_THREADS, defaulting to the hardware thread
// count. Nested parallel_for calls run inline on the calling worker.
class ThreadPool {
 public:
  static ThreadPool& global();

  int size() const;

  void parallel_for(int64_t begin, int64_t end,
                    const std::function<void(int64_t, int64_t)>& body);

  ~ThreadPool();

 private:
  explicit ThreadPool(int threads);
  struct Impl;
  Impl* impl_;
};

}  // namespace stc

#include "stc/threadpool.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stc {

namespace {
thread_local bool inside_pool = false;

int configured_threads() {
  if (const char* env = std::getenv("STCNET_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

struct ThreadPool::Impl {
  struct Task {
    const std::function<void(int64_t, int64_t)>* body = nullptr;
    int64_t begin = 0, end = 0, chunk = 0;
    std::atomic<int64_t> next{0};
    std::atomic<int> remaining{0};
    std::exception_ptr error;
    std::mutex error_mu;
  };

  std::vector<std::thread> workers;
  std::mutex mu;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  Task* task = nullptr;
  uint64_t generation = 0;
  bool stop = false;

  void run_chunks(Task& t) {
    for (;;) {
      int64_t i = t.next.fetch_add(1);
      int64_t b = t.begin + i * t.chunk;
      if (b >= t.end) break;
      int64_t e = std::min(t.end, b + t.chunk);
      try {
        (*t.body)(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lock(t.error_mu);
        if (!t.error) t.error = std::current_exception();
      }
    }
  }

  void worker_loop() {
    inside_pool = true;
    uint64_t seen = 0;
    for (;;) {
      Task* t;
      {
        std::unique_lock<std::mutex> lock(mu);
        cv_work.wait(lock, [&] { return stop || generation != seen; });
        if (stop) return;
        seen = generation;
        t = task;
      }
      run_chunks(*t);
      if (t->remaining.fetch_sub(1) == 1) {
        std::lock_guard<std::mutex> lock(mu);
        cv_done.notify_all();
      }
    }
  }
};

ThreadPool::ThreadPool(int threads) : impl_(new Impl) {
  for (int i = 0; i < threads - 1; ++i)
    impl_->workers.emplace_back([this] { impl_->worker_loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->stop = true;
  }
  impl_->cv_work.notify_all();
  for (auto& w : impl_->workers) w.join();
  delete impl_;
}

ThreadPool& ThreadPool::global() {
  static ThreadPool pool(configured_threads());
  return pool;
}

int ThreadPool::size() const { return static_cast<int>(impl_->workers.size()) + 1; }

void ThreadPool::parallel_for(int64_t begin, int64_t end,
                              const std::function<void(int64_t, int64_t)>& body) {
  if (begin >= end) return;
  int n = size();
  if (n == 1 || inside_pool || end - begin == 1) {
    body(begin, end);
    return;
  }
  Impl::Task t;
  t.body = &body;
  t.begin = begin;
  t.end = end;
  // ~2 chunks per worker smooths uneven chunk costs without hurting determinism
  // (chunk ownership never affects results).
  t.chunk = std::max<int64_t>(1, (end - begin + 2 * n - 1) / (2 * n));
  t.remaining.store(n - 1);
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->task = &t;
    ++impl_->generation;
  }
  impl_->cv_work.notify_all();
  // The caller joins the work; while it does, nested parallel_for calls from
  // the body must run inline (a second concurrent task would deadlock).
  inside_pool = true;
  impl_->run_chunks(t);
  inside_pool = false;
  {
    std::unique_lock<std::mutex> lock(impl_->mu);
    impl_->cv_done.wait(lock, [&] { return t.remaining.load() == 0; });
    impl_->task = nullptr;
  }
  if (t.error) std::rethrow_exception(t.error);
}

}  // namespace stc

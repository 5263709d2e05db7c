#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace spv {

/// Resolves a worker count: a positive request wins, otherwise SPV_THREADS,
/// otherwise the hardware concurrency.
unsigned resolve_workers(unsigned requested = 0);

/// Fixed-size pool that runs `n_tasks` indexed tasks and blocks until all of
/// them have finished. Tasks are claimed dynamically, so callers must write
/// results into per-task slots to stay deterministic.
class ThreadPool {
public:
    explicit ThreadPool(unsigned workers);
    ~ThreadPool();

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    unsigned size() const { return static_cast<unsigned>(threads_.size()) + 1; }

    void run(std::size_t n_tasks, const std::function<void(std::size_t)>& task);

private:
    void worker_loop();
    void drain();

    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)>* task_ = nullptr;
    std::size_t n_tasks_ = 0;
    std::size_t next_ = 0;
    std::size_t finished_ = 0;
    std::size_t generation_ = 0;
    bool stop_ = false;
};

/// Runs `task(i)` for i in [0, n) on `workers` threads (inline when 1).
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& task);

}  // namespace spv

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace flowrecon {

// FLOWRECON_THREADS caps worker parallelism (default: machine cores).
inline int worker_count() {
    static const int n = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        if (const char* env = std::getenv("FLOWRECON_THREADS")) {
            const int cap = std::atoi(env);
            if (cap >= 1 && cap < hw) hw = cap;
        }
        return hw;
    }();
    return n;
}

namespace detail {

class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(worker_count());
        return pool;
    }

    // Runs job(i) for i in [0, jobs) across the pool and blocks until done.
    void run(std::size_t jobs, const std::function<void(std::size_t)>& job) {
        if (jobs == 0) return;
        if (workers_.empty() || jobs == 1) {
            for (std::size_t i = 0; i < jobs; ++i) job(i);
            return;
        }
        {
            std::lock_guard<std::mutex> lock(mutex_);
            job_ = &job;
            total_ = jobs;
            next_.store(0, std::memory_order_relaxed);
            pending_ = jobs;
            ++generation_;
        }
        cv_start_.notify_all();
        work();  // the calling thread participates
        std::unique_lock<std::mutex> lock(mutex_);
        cv_done_.wait(lock, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

private:
    explicit ThreadPool(int threads) {
        for (int t = 1; t < threads; ++t)
            workers_.emplace_back([this] { worker_loop(); });
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            stop_ = true;
        }
        cv_start_.notify_all();
        for (auto& w : workers_) w.join();
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_start_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
            }
            work();
        }
    }

    void work() {
        for (;;) {
            const std::size_t i = next_.fetch_add(1, std::memory_order_relaxed);
            if (i >= total_) break;
            (*job_)(i);
            std::lock_guard<std::mutex> lock(mutex_);
            if (--pending_ == 0) cv_done_.notify_all();
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable cv_start_, cv_done_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::atomic<std::size_t> next_{0};
    std::size_t total_ = 0;
    std::size_t pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace detail

// Deterministic chunked map: splits [0,n) into fixed-size chunks and calls
// fn(chunk_index, begin, end). Chunk boundaries depend only on n and `chunk`,
// never on the thread count, so per-chunk partial results merged in chunk
// order give bit-identical totals for any FLOWRECON_THREADS setting.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t chunk, Fn&& fn) {
    if (n == 0) return;
    if (chunk == 0) chunk = 1;
    const std::size_t num_chunks = (n + chunk - 1) / chunk;
    if (num_chunks == 1 || worker_count() == 1) {
        for (std::size_t c = 0; c < num_chunks; ++c)
            fn(c, c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    detail::ThreadPool::instance().run(num_chunks, [&](std::size_t c) {
        fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    });
}

}  // namespace flowrecon

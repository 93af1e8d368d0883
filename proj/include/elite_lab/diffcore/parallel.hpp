#ifndef ELITE_LAB_DIFFCORE_PARALLEL_HPP
#define ELITE_LAB_DIFFCORE_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace elite::diff {

// Worker budget for kernels that split independent output rows across
// threads. Every output element is produced by exactly one worker with the
// same summation order, so results do not depend on the worker count.
// Reductions over the whole tensor always run serially.
class Parallelism {
public:
    static std::size_t workers() { return instance().workers_; }

    static void set_workers(std::size_t n) { instance().workers_ = std::max<std::size_t>(1, n); }

    // Serial mode: one worker. Used by every test and by timing runs.
    static void set_serial() { set_workers(1); }

    static bool serial() { return workers() == 1; }

    // ELITE_LAB_THREADS caps the worker count; default is the hardware count.
    static std::size_t from_environment() {
        std::size_t n = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("ELITE_LAB_THREADS")) {
            try {
                long v = std::stol(env);
                if (v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
            } catch (...) {
            }
        }
        return n;
    }

private:
    static Parallelism& instance() {
        static Parallelism p;
        return p;
    }
    std::size_t workers_ = 1;
};

// Runs fn(begin, end) over [0, n) in contiguous chunks.
template <class Fn>
void parallel_rows(std::size_t n, std::size_t work_per_row, Fn&& fn) {
    const std::size_t workers = Parallelism::workers();
    if (workers <= 1 || n < 2 || n * work_per_row < (1u << 16)) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunks = std::min(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(chunks - 1);
    const std::size_t step = (n + chunks - 1) / chunks;
    for (std::size_t c = 1; c < chunks; ++c) {
        const std::size_t b = c * step;
        const std::size_t e = std::min(n, b + step);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(std::size_t{0}, std::min(n, step));
    for (auto& t : pool) t.join();
}

}  // namespace elite::diff

#endif  // ELITE_LAB_DIFFCORE_PARALLEL_HPP

// Worker pool helpers for embarrassingly parallel ensembles.
//
// Work items are identified by index; results are written into per-index slots
// and reduced afterwards in index order, so outputs never depend on the number
// of workers or on scheduling.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace collapsim {

/// Resolves a requested worker count; 0 means "all hardware threads".
inline unsigned resolve_workers(unsigned requested) {
    if (requested > 0) {
        return requested;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for every i in [0, n). The first exception thrown by any worker
/// is rethrown on the calling thread after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    workers = std::min<unsigned>(resolve_workers(workers), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                failed = true;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(body);
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

/// Neumaier compensated summation.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            carry_ += (sum_ - t) + x;
        } else {
            carry_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

/// Mean and standard error of the mean, accumulated in the order given.
struct MeanStderr {
    double mean = 0.0;
    double sem = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& values) {
    MeanStderr out;
    const std::size_t n = values.size();
    if (n == 0) {
        return out;
    }
    CompensatedSum s;
    for (double v : values) {
        s.add(v);
    }
    out.mean = s.value() / static_cast<double>(n);
    if (n < 2) {
        return out;
    }
    CompensatedSum ss;
    for (double v : values) {
        const double d = v - out.mean;
        ss.add(d * d);
    }
    out.sem = std::sqrt(ss.value() / static_cast<double>(n - 1) / static_cast<double>(n));
    return out;
}

} // namespace collapsim

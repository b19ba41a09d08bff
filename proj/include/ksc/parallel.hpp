#pragma once

// Index-parallel loop capped by KSCTL_THREADS (unset or < 2 runs inline).
// Each index must write only its own outputs, so results never depend on the split.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ksc {

inline int thread_cap() {
    const char* env = std::getenv("KSCTL_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return std::max(1, n);
}

inline void parallel_for(int n, const std::function<void(int)>& body) {
    const int workers = std::min(thread_cap(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ksc

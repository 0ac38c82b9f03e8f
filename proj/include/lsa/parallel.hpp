#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace lsa {

// Index-parallel loop; results must be written to per-index slots so the
// outcome does not depend on the worker count.
inline void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& body) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    workers.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t)
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
        });
    for (auto& w : workers) w.join();
}

}  // namespace lsa

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace gwperc {

/// Splits [begin, end) into fixed-size chunks, evaluates `fn(lo, hi)` for
/// each chunk on up to `threads` workers, and returns the results in chunk
/// order. Chunk boundaries do not depend on `threads`, so a caller that
/// merges the results in order gets the same answer for any thread count.
template <class Fn>
auto map_chunks(std::uint64_t begin, std::uint64_t end, std::uint64_t chunk_size, unsigned threads, Fn&& fn)
    -> std::vector<std::invoke_result_t<Fn&, std::uint64_t, std::uint64_t>> {
    using Result = std::invoke_result_t<Fn&, std::uint64_t, std::uint64_t>;
    chunk_size = std::max<std::uint64_t>(chunk_size, 1);
    const std::uint64_t total = end > begin ? end - begin : 0;
    const std::uint64_t chunks = (total + chunk_size - 1) / chunk_size;

    std::vector<std::optional<Result>> slots(chunks);
    std::vector<std::exception_ptr> errors(chunks);
    std::atomic<std::uint64_t> next{0};
    auto worker = [&] {
        for (std::uint64_t c = next++; c < chunks; c = next++) {
            const std::uint64_t lo = begin + c * chunk_size;
            const std::uint64_t hi = std::min(end, lo + chunk_size);
            try {
                slots[c].emplace(fn(lo, hi));
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };

    const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(std::max(threads, 1U), chunks));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    }

    std::vector<Result> out;
    out.reserve(chunks);
    for (std::uint64_t c = 0; c < chunks; ++c) {
        if (errors[c]) std::rethrow_exception(errors[c]);
        out.push_back(std::move(*slots[c]));
    }
    return out;
}

}  // namespace gwperc

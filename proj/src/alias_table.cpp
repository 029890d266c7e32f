#include "gwperc/alias_table.hpp"

#include <numeric>

#include "gwperc/errors.hpp"

namespace gwperc {

AliasTable::AliasTable(const std::vector<double>& weights) : size_(weights.size()) {
    if (weights.empty() || weights.size() > (std::uint64_t{1} << 31))
        throw InvalidParameter("alias table needs between 1 and 2^31 weights");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) throw InvalidParameter("alias table weights must have positive sum");

    const std::size_t n = weights.size();
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
        if (weights[i] < 0.0) throw InvalidParameter("negative alias table weight");
        scaled[i] = weights[i] * static_cast<double>(n) / total;
        (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    threshold_.assign(n, std::uint64_t{1} << 32);
    alias_.resize(n);
    for (std::size_t i = 0; i < n; ++i) alias_[i] = static_cast<std::uint32_t>(i);
    while (!small.empty() && !large.empty()) {
        const std::uint32_t s = small.back();
        small.pop_back();
        const std::uint32_t l = large.back();
        threshold_[s] = static_cast<std::uint64_t>(scaled[s] * 4294967296.0);
        alias_[s] = l;
        scaled[l] -= 1.0 - scaled[s];
        if (scaled[l] < 1.0) {
            large.pop_back();
            small.push_back(l);
        }
    }
    // Leftovers are 1 up to rounding and keep their own column.
}

}  // namespace gwperc

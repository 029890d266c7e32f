#pragma once

#include <string>
#include <vector>

#include "gwperc/errors.hpp"
#include "gwperc/rng.hpp"
#include "gwperc/tree_store.hpp"

namespace gwperc::detail {

[[noreturn]] inline void abort_run(std::uint64_t cap) {
    throw RunAborted("run visited more than " + std::to_string(cap) + " cluster vertices");
}

// Offspring beyond this are handled one push at a time instead of
// reserving room for every child up front.
constexpr std::uint64_t kWideNode = 4096;

// Expands one cluster level. `make(item, j, i)` builds the entry for child i
// of frontier[j]; entries are written unconditionally and kept when the edge
// is open, which avoids a mispredicted branch per edge. Returns the number
// of entries kept at the front of `next`.
template <class Item, class KeyOf, class Make>
std::size_t expand_level(const TreeStore& store, const Coin& coin, RandomStream& rng, const Item* frontier,
                         std::size_t size, std::vector<Item>& next, std::uint64_t& visits, std::uint64_t cap,
                         KeyOf key_of, Make make) {
    std::size_t out = 0;
    for (std::size_t j = 0; j < size; ++j) {
        if (++visits > cap) abort_run(cap);
        const std::uint64_t children = store.offspring_count(key_of(frontier[j]));
        if (children > kWideNode) {
            for (std::uint64_t i = 0; i < children; ++i) {
                if (!coin.flip(rng)) continue;
                if (out == next.size()) next.resize(2 * out + 64);
                next[out++] = make(frontier[j], j, i);
            }
            continue;
        }
        if (out + children > next.size()) next.resize(2 * (out + children) + 64);
        for (std::uint64_t i = 0; i < children; ++i) {
            next[out] = make(frontier[j], j, i);
            out += coin.flip(rng);
        }
    }
    return out;
}

}  // namespace gwperc::detail

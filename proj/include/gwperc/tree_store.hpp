#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <type_traits>
#include <utility>
#include <vector>

#include "gwperc/offspring.hpp"
#include "gwperc/rng.hpp"

namespace gwperc {

/// 128-bit hash of a root path. Lane `a` is an iterated mix of the path;
/// lane `b` folds each step's index and mixed `a` in with an odd multiplier,
/// so two paths collide only if both lanes do. Collisions are accepted at
/// the 2^-64 scale.
struct NodeKey {
    std::uint64_t a;
    std::uint64_t b;

    static constexpr NodeKey root() noexcept { return {0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL}; }

    constexpr NodeKey child(std::uint64_t index) const noexcept {
        const std::uint64_t tag = index + 1;
        const std::uint64_t na = mix64(a + tag * 0x9e3779b97f4a7c15ULL);
        const std::uint64_t nb = (b ^ tag) * 0xc2b2ae3d27d4eb4fULL + na;
        return {na, nb};
    }

    friend constexpr auto operator<=>(const NodeKey&, const NodeKey&) = default;
};

struct NodeKeyHash {
    std::size_t operator()(const NodeKey& key) const noexcept {
        return static_cast<std::size_t>(key.a ^ (key.b * 0x9e3779b97f4a7c15ULL));
    }
};

/// Allocator whose value-initializing construct is default-initialization,
/// so resizing a vector of integers does not zero it.
template <class T>
struct UninitAllocator : std::allocator<T> {
    template <class U>
    struct rebind {
        using other = UninitAllocator<U>;
    };
    UninitAllocator() = default;
    template <class U>
    UninitAllocator(const UninitAllocator<U>&) noexcept {}

    template <class U>
    void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(p)) U;
    }
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

using KeyLane = std::vector<std::uint64_t, UninitAllocator<std::uint64_t>>;

/// Node keys as two parallel lanes; the layout batch expansion works on.
struct KeyColumns {
    KeyLane a;
    KeyLane b;

    std::size_t size() const noexcept { return a.size(); }
    void resize(std::size_t n) {
        a.resize(n);
        b.resize(n);
    }
    NodeKey operator[](std::size_t i) const noexcept { return {a[i], b[i]}; }
    void assign(const NodeKey& key) {
        a.assign(1, key.a);
        b.assign(1, key.b);
    }
};

/// A vertex named by its child indices from the root (root = empty path).
struct NodeRef {
    std::vector<std::uint32_t> path;

    std::size_t depth() const noexcept { return path.size(); }
    NodeRef child(std::uint32_t index) const;
    NodeRef parent() const;
    /// Ancestor relation is the prefix relation; a node is its own ancestor.
    bool is_ancestor_of(const NodeRef& other) const noexcept;

    friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

struct WEstimate {
    NodeRef node;
    int depth = 0;
    std::uint64_t count = 1;  // |T_m(v)|
    double value = 1.0;       // |T_m(v)| / mu^m
};

struct TreeStoreOptions {
    /// Node visits allowed per expansion call (generation_size, w_estimate).
    std::uint64_t expansion_budget = 100'000'000;
    /// Byte budget of the offspring memo used by the NodeRef interface.
    std::size_t cache_bytes = std::size_t{64} << 20;
};

/// The quenched environment: a supercritical GW tree whose offspring counts
/// are a pure function of (tree_seed, path). Nothing is stored except an
/// evictable memo, so the tree can be queried in any order from any thread.
class TreeStore {
public:
    TreeStore(OffspringSpec spec, std::uint64_t tree_seed, TreeStoreOptions options = {});
    ~TreeStore();
    TreeStore(TreeStore&&) noexcept;
    TreeStore& operator=(TreeStore&&) noexcept;

    const OffspringSpec& spec() const noexcept { return spec_; }
    const ModelConstants& constants() const noexcept { return constants_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const TreeStoreOptions& options() const noexcept { return options_; }

    /// Unchecked, uncached draw for a node key. This is the hot path.
    std::uint64_t offspring_count(const NodeKey& key) const noexcept {
        return spec_.sample_from_uniform(node_uniform(key));
    }

    /// Uniform in [0, 1) attached to a node; offspring_count inverts it.
    double node_uniform(std::uint64_t a, std::uint64_t b) const noexcept {
        const std::uint64_t h = mix64(a ^ lane_a_ ^ (b * lane_b_));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    }
    double node_uniform(const NodeKey& key) const noexcept { return node_uniform(key.a, key.b); }

    /// offspring_count for keys[lo, hi); out[i - lo] receives the count.
    void offspring_counts(const KeyColumns& keys, std::size_t lo, std::size_t hi, std::uint64_t* out) const noexcept;

    /// Children of keys[lo, hi) in breadth-first order, written to `next`
    /// (resized to fit). counts[i - lo] receives the offspring of keys[i].
    /// `staging` is scratch space the caller may reuse across calls.
    void expand(const KeyColumns& keys, std::size_t lo, std::size_t hi, std::uint64_t* counts, KeyColumns& next,
                KeyLane& staging) const;

    /// Checked draw: throws UnreachableNode if a path index is out of range.
    std::uint64_t offspring_count(const NodeRef& node) const;
    /// Key of a reachable node (validates every prefix).
    NodeKey key_of(const NodeRef& node) const;

    /// |T_m|, by depth-first expansion.
    std::uint64_t generation_size(int m) const;
    /// |T_m(v)| for the subtree rooted at `key`.
    std::uint64_t subtree_generation_size(const NodeKey& key, int m) const;

    /// W_m(v) = |T_m(v)| / mu^m.
    WEstimate w_estimate(const NodeRef& node, int m) const;
    double w_value(const NodeKey& key, int m) const;

    std::uint64_t cache_hits() const noexcept;
    std::uint64_t cache_misses() const noexcept;
    std::size_t cache_size() const noexcept;
    void clear_cache() const;

private:
    void check_budget(const NodeKey& key, int m) const;
    std::uint64_t memo_offspring(const NodeKey& key) const;

    class Memo;

    OffspringSpec spec_;
    ModelConstants constants_;
    std::uint64_t seed_;
    std::uint64_t lane_a_;
    std::uint64_t lane_b_;
    TreeStoreOptions options_;
    std::unique_ptr<Memo> memo_;
};

}  // namespace gwperc

#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <unordered_map>
#include <vector>

#include "gwperc/rng.hpp"
#include "gwperc/tree_store.hpp"

namespace gwperc {

/// A finite rooted tree (vertex 0 is the root) with positive vertex weights
/// that are harmonic for retention p: w(v) = p * sum of w over children at
/// every internal vertex. Leaf weights are free.
class WeightedFiniteTree {
public:
    /// Validates structure, positivity and harmonicity (relative 1e-12).
    WeightedFiniteTree(std::vector<std::vector<std::size_t>> children, std::vector<double> weights, double p);

    /// Fills internal weights from the leaves upward. Entries of
    /// `leaf_weights` at internal vertices are ignored.
    static WeightedFiniteTree harmonic(std::vector<std::vector<std::size_t>> children,
                                       const std::vector<double>& leaf_weights, double p);

    /// Children lists from breadth-first offspring counts, e.g. {2, 1, 1}
    /// is a root with two children that have one child each.
    static std::vector<std::vector<std::size_t>> children_from_counts(const std::vector<std::size_t>& bfs_counts);

    std::size_t size() const noexcept { return children_.size(); }
    double p() const noexcept { return p_; }
    double weight(std::size_t v) const { return weights_.at(v); }
    const std::vector<std::size_t>& children(std::size_t v) const { return children_.at(v); }
    std::size_t parent(std::size_t v) const { return parent_.at(v); }
    int depth(std::size_t v) const { return depth_.at(v); }
    int height() const noexcept { return height_; }

private:
    std::vector<std::vector<std::size_t>> children_;
    std::vector<std::size_t> parent_;
    std::vector<int> depth_;
    std::vector<double> weights_;
    double p_;
    int height_ = 0;
};

/// A connected vertex set containing the root, as sorted vertex ids.
struct FiniteSubtree {
    std::vector<std::size_t> vertices;

    friend auto operator<=>(const FiniteSubtree&, const FiniteSubtree&) = default;
};

inline constexpr std::uint64_t kEnumerationBudget = 1'000'000;

/// Number of root-containing subtrees of the first n levels (saturates at
/// budget + 1).
std::uint64_t count_subtrees(const WeightedFiniteTree& wt, int n, std::uint64_t budget = kEnumerationBudget);

/// Every root-containing subtree of the first n levels, in a fixed order.
/// Throws EnumerationBudget when there are more than `budget`.
std::vector<FiniteSubtree> enumerate_subtrees(const WeightedFiniteTree& wt, int n,
                                              std::uint64_t budget = kEnumerationBudget);

/// P(root cluster restricted to n levels = t) = p^{edges} (1-p)^{closed boundary edges}.
double cluster_probability(const WeightedFiniteTree& wt, const FiniteSubtree& t, int n);

/// IIC measure of the level-n cluster t: (sum of w over t's level-n vertices
/// / w(root)) * P(cluster = t). Throws NotSubtree or HeightMismatch.
double iic_measure_exact(const WeightedFiniteTree& wt, const FiniteSubtree& t, int n);

/// max over height-n subtrees t of |sum of mu_{n+1} over extensions of t - mu_n(t)|.
double iic_consistency_check(const WeightedFiniteTree& wt, int n, std::uint64_t budget = kEnumerationBudget);

/// |sum over height-n subtrees of mu_n - 1|.
double iic_normalization_defect(const WeightedFiniteTree& wt, int n, std::uint64_t budget = kEnumerationBudget);

struct FiniteIICDraw {
    FiniteSubtree cluster;
    std::vector<std::size_t> spine;  // root first, n + 1 vertices
};

/// Spine-decomposition draw from the level-n IIC measure of a weighted tree.
FiniteIICDraw sample_iic_finite(const WeightedFiniteTree& wt, int n, RandomStream& rng);

struct IICSample {
    int level = 0;
    std::vector<std::uint32_t> spine_path;   // child index taken at each level
    std::uint64_t cluster_level_count = 0;   // IIC vertices at `level`
    double z = 0.0;                          // level^{-beta} * cluster_level_count

    /// Spine vertex s_k as a root path.
    NodeRef spine_vertex(int k) const;
    std::vector<NodeRef> spine() const;
};

struct IICOptions {
    int m_W = 40;
    /// Spine children shallower than this have their |T_{m_W}| counts cached
    /// across samples; deeper ones are counted in a window that follows the
    /// spine. -1 picks floor(log(3e4) / log mu). Results do not depend on it.
    int shared_depth = -1;
    std::size_t cache_entries = 4'000'000;
    /// Off-spine cluster vertices expanded per sample before RunAborted.
    std::uint64_t node_cap = 10'000'000;
};

/// Renormalized spine kernel at a vertex: |T_{m_W}(child_i)| / sum_j |T_{m_W}(child_j)|.
std::vector<double> spine_kernel(const TreeStore& store, const NodeKey& vertex, int m_W);

/// Quenched IIC sampler on a fixed tree. Reuse one instance for many
/// samples; it keeps scratch space and the shared count cache.
class IICSampler {
public:
    IICSampler(const TreeStore& store, int n, IICOptions options = {});

    IICSample sample(RandomStream& rng);

    int shared_depth() const noexcept { return shared_depth_; }
    std::uint64_t window_nodes() const noexcept { return window_nodes_; }

private:
    struct Level {
        KeyColumns keys;
        // child_begin[i - expanded_lo] = index in the next level of the first
        // child of keys[i]; one extra entry closes the last range.
        std::vector<std::uint64_t> child_begin;
        std::size_t expanded_lo = 0;
        bool expanded = false;
        std::size_t lo = 0;
        std::size_t hi = 0;
    };

    void choose_counts(const NodeKey& vertex, int depth, std::uint64_t children);
    std::uint64_t cached_count(const NodeKey& key);
    Level take_level();
    void window_clear();
    void window_reset(const NodeKey& key);
    void window_ensure(std::size_t levels);
    void window_expand(Level& level, Level& next);
    void window_advance(std::uint64_t child);
    std::pair<std::size_t, std::size_t> window_child_range(std::size_t level, std::size_t lo, std::size_t hi) const;

    const TreeStore* store_;
    int n_;
    IICOptions options_;
    int shared_depth_;
    double scale_;
    Coin coin_;
    std::unordered_map<NodeKey, std::uint64_t, NodeKeyHash> cache_;
    std::deque<Level> window_;
    std::vector<Level> spare_;
    std::vector<std::uint64_t> scratch_;
    KeyLane staged_;
    bool window_active_ = false;
    std::uint64_t window_nodes_ = 0;
    std::vector<std::uint64_t> counts_;
    std::vector<NodeKey> frontier_;
    std::vector<NodeKey> next_;
};

IICSample sample_iic(const TreeStore& store, int n, int m_W, RandomStream& rng);

/// IIC stream for sample `sample_index` on tree `tree_index`.
RandomStream iic_stream(std::uint64_t master_seed, std::uint64_t tree_index, std::uint64_t sample_index);

/// One line-delimited JSON record: sample_index, n, count.
void write_iic_record(std::ostream& out, std::uint64_t sample_index, const IICSample& sample);

}  // namespace gwperc

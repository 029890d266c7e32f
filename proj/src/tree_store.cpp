#include "gwperc/tree_store.hpp"

#include <cmath>
#include <list>
#include <mutex>
#include <string>
#include <unordered_map>

#include "gwperc/errors.hpp"

namespace gwperc {

namespace {
// Expected generation sizes up to this are counted level by level in
// memory; larger ones fall back to depth-first search.
constexpr double kBreadthFirstLimit = 1 << 20;
}  // namespace

NodeRef NodeRef::child(std::uint32_t index) const {
    NodeRef out{path};
    out.path.push_back(index);
    return out;
}

NodeRef NodeRef::parent() const {
    if (path.empty()) throw UnreachableNode("the root has no parent");
    return NodeRef{{path.begin(), path.end() - 1}};
}

bool NodeRef::is_ancestor_of(const NodeRef& other) const noexcept {
    if (path.size() > other.path.size()) return false;
    for (std::size_t i = 0; i < path.size(); ++i)
        if (path[i] != other.path[i]) return false;
    return true;
}

// Least-recently-used offspring memo. Correctness never depends on it:
// every value it holds is recomputable from the key.
class TreeStore::Memo {
public:
    explicit Memo(std::size_t bytes) : capacity_(std::max<std::size_t>(bytes / kEntryBytes, 1)) {}

    template <class Compute>
    std::uint64_t get(const NodeKey& key, Compute&& compute) {
        std::lock_guard lock(mutex_);
        if (auto it = index_.find(key); it != index_.end()) {
            ++hits_;
            order_.splice(order_.begin(), order_, it->second);
            return it->second->second;
        }
        ++misses_;
        const std::uint64_t value = compute();
        order_.emplace_front(key, value);
        index_.emplace(key, order_.begin());
        if (index_.size() > capacity_) {
            index_.erase(order_.back().first);
            order_.pop_back();
        }
        return value;
    }

    void clear() {
        std::lock_guard lock(mutex_);
        order_.clear();
        index_.clear();
    }

    std::uint64_t hits() const {
        std::lock_guard lock(mutex_);
        return hits_;
    }
    std::uint64_t misses() const {
        std::lock_guard lock(mutex_);
        return misses_;
    }
    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return index_.size();
    }

private:
    // list node + hash node + key/value, rounded up.
    static constexpr std::size_t kEntryBytes = 96;

    using Entry = std::pair<NodeKey, std::uint64_t>;
    mutable std::mutex mutex_;
    std::size_t capacity_;
    std::list<Entry> order_;
    std::unordered_map<NodeKey, std::list<Entry>::iterator, NodeKeyHash> index_;
    std::uint64_t hits_ = 0;
    std::uint64_t misses_ = 0;
};

TreeStore::TreeStore(OffspringSpec spec, std::uint64_t tree_seed, TreeStoreOptions options)
    : spec_(std::move(spec)),
      constants_(gwperc::constants(spec_)),
      seed_(tree_seed),
      lane_a_(hash_combine(tree_seed, domain::tree, 1)),
      lane_b_(hash_combine(tree_seed, domain::tree, 2)),
      options_(options),
      memo_(std::make_unique<Memo>(options.cache_bytes)) {}

TreeStore::~TreeStore() = default;
TreeStore::TreeStore(TreeStore&&) noexcept = default;
TreeStore& TreeStore::operator=(TreeStore&&) noexcept = default;

namespace {

template <std::size_t Support>
void small_counts(const TreeStore& store, const double* table, const std::uint64_t* a, const std::uint64_t* b,
                  std::size_t n, std::uint64_t* out) {
    double cdf[Support];
    for (std::size_t j = 0; j < Support; ++j) cdf[j] = table[j];
    for (std::size_t i = 0; i < n; ++i) {
        const double u = store.node_uniform(a[i], b[i]);
        std::uint64_t k = 0;
        for (std::size_t j = 0; j < Support; ++j) k += cdf[j] <= u;
        out[i] = k;
    }
}

// Child c of node i goes to slot i * Support + c of the staging lanes; the
// loop vectorizes. Placement then walks the nodes in order: every node
// writes Support slots and the surplus is overwritten by the next node or
// falls into the padding.
template <std::size_t Support>
void expand_fixed(const KeyColumns& keys, std::size_t lo, std::size_t n, const std::uint64_t* counts,
                  KeyColumns& next, KeyLane& staging) {
    staging.resize(2 * n * Support);
    std::uint64_t* __restrict lane_a = staging.data();
    std::uint64_t* __restrict lane_b = staging.data() + n * Support;
    const std::uint64_t* a = keys.a.data() + lo;
    const std::uint64_t* b = keys.b.data() + lo;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < Support; ++c) {
            const NodeKey child = NodeKey{a[i], b[i]}.child(c);
            lane_a[i * Support + c] = child.a;
            lane_b[i * Support + c] = child.b;
        }
    std::uint64_t* out_a = next.a.data();
    std::uint64_t* out_b = next.b.data();
    std::uint64_t at = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < Support; ++c) {
            out_a[at + c] = lane_a[i * Support + c];
            out_b[at + c] = lane_b[i * Support + c];
        }
        at += counts[i];
    }
}

}  // namespace

void TreeStore::offspring_counts(const KeyColumns& keys, std::size_t lo, std::size_t hi,
                                 std::uint64_t* out) const noexcept {
    const double* cdf = spec_.small_cdf();
    const std::uint64_t* a = keys.a.data() + lo;
    const std::uint64_t* b = keys.b.data() + lo;
    const std::size_t n = hi - lo;
    switch (spec_.small_support()) {
        case 1: return small_counts<1>(*this, cdf, a, b, n, out);
        case 2: return small_counts<2>(*this, cdf, a, b, n, out);
        case 3: return small_counts<3>(*this, cdf, a, b, n, out);
        case 4: return small_counts<4>(*this, cdf, a, b, n, out);
        case 5: return small_counts<5>(*this, cdf, a, b, n, out);
        case 6: return small_counts<6>(*this, cdf, a, b, n, out);
        case 7: return small_counts<7>(*this, cdf, a, b, n, out);
        case 8: return small_counts<8>(*this, cdf, a, b, n, out);
        default:
            for (std::size_t i = 0; i < n; ++i) out[i] = offspring_count(NodeKey{a[i], b[i]});
    }
}

void TreeStore::expand(const KeyColumns& keys, std::size_t lo, std::size_t hi, std::uint64_t* counts,
                       KeyColumns& next, KeyLane& staging) const {
    offspring_counts(keys, lo, hi, counts);
    const std::size_t n = hi - lo;
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) total += counts[i];
    const std::size_t support = spec_.small_support();
    next.resize(total + support);
    switch (support) {
        case 1: expand_fixed<1>(keys, lo, n, counts, next, staging); break;
        case 2: expand_fixed<2>(keys, lo, n, counts, next, staging); break;
        case 3: expand_fixed<3>(keys, lo, n, counts, next, staging); break;
        case 4: expand_fixed<4>(keys, lo, n, counts, next, staging); break;
        default: {
            std::uint64_t at = 0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::uint64_t c = 0; c < counts[i]; ++c) {
                    const NodeKey child = keys[lo + i].child(c);
                    next.a[at] = child.a;
                    next.b[at++] = child.b;
                }
        }
    }
    next.resize(total);
}

std::uint64_t TreeStore::memo_offspring(const NodeKey& key) const {
    return memo_->get(key, [&] { return offspring_count(key); });
}

NodeKey TreeStore::key_of(const NodeRef& node) const {
    NodeKey key = NodeKey::root();
    for (std::size_t depth = 0; depth < node.path.size(); ++depth) {
        const std::uint64_t children = memo_offspring(key);
        if (node.path[depth] >= children)
            throw UnreachableNode("index " + std::to_string(node.path[depth]) + " at depth " +
                                  std::to_string(depth) + " but the vertex has " +
                                  std::to_string(children) + " children");
        key = key.child(node.path[depth]);
    }
    return key;
}

std::uint64_t TreeStore::offspring_count(const NodeRef& node) const {
    return memo_offspring(key_of(node));
}

void TreeStore::check_budget(const NodeKey&, int m) const {
    if (m < 0) throw BudgetExceeded("negative depth");
    const double expected = std::pow(constants_.mu, m);
    if (expected > static_cast<double>(options_.expansion_budget))
        throw BudgetExceeded("expected expansion mu^" + std::to_string(m) + " = " + std::to_string(expected) +
                             " exceeds budget " + std::to_string(options_.expansion_budget));
}

std::uint64_t TreeStore::subtree_generation_size(const NodeKey& key, int m) const {
    check_budget(key, m);
    if (m == 0) return 1;
    if (std::pow(constants_.mu, m) <= kBreadthFirstLimit) {
        KeyColumns level, next;
        KeyLane staging;
        level.assign(key);
        std::vector<std::uint64_t> counts;
        std::uint64_t visits = 0;
        for (int depth = 0; depth < m; ++depth) {
            visits += level.size();
            if (visits > options_.expansion_budget)
                throw BudgetExceeded("expansion visited more than " + std::to_string(options_.expansion_budget) +
                                     " nodes");
            counts.resize(level.size());
            if (depth + 1 == m) {
                offspring_counts(level, 0, level.size(), counts.data());
                std::uint64_t total = 0;
                for (std::uint64_t c : counts) total += c;
                return total;
            }
            expand(level, 0, level.size(), counts.data(), next, staging);
            std::swap(level, next);
        }
    }
    std::uint64_t count = 0;
    std::uint64_t visits = 0;
    // Depth-first: memory is O(m * branching) regardless of generation size.
    std::vector<std::pair<NodeKey, int>> stack{{key, 0}};
    while (!stack.empty()) {
        const auto [node, depth] = stack.back();
        stack.pop_back();
        const std::uint64_t children = offspring_count(node);
        if (++visits > options_.expansion_budget)
            throw BudgetExceeded("expansion visited more than " + std::to_string(options_.expansion_budget) +
                                 " nodes");
        if (depth + 1 == m) {
            count += children;
            continue;
        }
        for (std::uint64_t i = children; i-- > 0;) stack.emplace_back(node.child(i), depth + 1);
    }
    return count;
}

std::uint64_t TreeStore::generation_size(int m) const { return subtree_generation_size(NodeKey::root(), m); }

WEstimate TreeStore::w_estimate(const NodeRef& node, int m) const {
    WEstimate out;
    out.node = node;
    out.depth = m;
    out.count = subtree_generation_size(key_of(node), m);
    out.value = static_cast<double>(out.count) / std::pow(constants_.mu, m);
    return out;
}

double TreeStore::w_value(const NodeKey& key, int m) const {
    return static_cast<double>(subtree_generation_size(key, m)) / std::pow(constants_.mu, m);
}

std::uint64_t TreeStore::cache_hits() const noexcept { return memo_->hits(); }
std::uint64_t TreeStore::cache_misses() const noexcept { return memo_->misses(); }
std::size_t TreeStore::cache_size() const noexcept { return memo_->size(); }
void TreeStore::clear_cache() const { memo_->clear(); }

}  // namespace gwperc

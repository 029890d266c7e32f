#include "gwperc/iic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include <json.hpp>

#include "gwperc/errors.hpp"
#include "cluster_expand.hpp"

namespace gwperc {

namespace {

constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

bool harmonic_at(double weight, double sum, double p) {
    return std::abs(weight - p * sum) <= 1e-12 * std::max(1.0, std::abs(weight));
}

// Uniform index in [0, total) from one 64-bit draw.
std::uint64_t below(std::uint64_t word, std::uint64_t total) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(word) * total) >> 64);
}

}  // namespace

// --- weighted finite trees ------------------------------------------------

WeightedFiniteTree::WeightedFiniteTree(std::vector<std::vector<std::size_t>> children, std::vector<double> weights,
                                       double p)
    : children_(std::move(children)), weights_(std::move(weights)), p_(p) {
    const std::size_t n = children_.size();
    if (n == 0) throw InvalidTree("a tree needs at least the root");
    if (weights_.size() != n) throw InvalidTree("one weight per vertex required");
    if (!(p > 0.0 && p < 1.0)) throw InvalidParameter("retention must lie in (0, 1)");

    parent_.assign(n, kNoParent);
    depth_.assign(n, -1);
    depth_[0] = 0;
    // Breadth-first from the root: every vertex must be reached exactly once.
    std::vector<std::size_t> queue{0};
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t v = queue[head];
        for (std::size_t c : children_[v]) {
            if (c >= n || c == 0 || parent_[c] != kNoParent)
                throw InvalidTree("vertex " + std::to_string(c) + " is out of range or has two parents");
            parent_[c] = v;
            depth_[c] = depth_[v] + 1;
            height_ = std::max(height_, depth_[c]);
            queue.push_back(c);
        }
    }
    if (queue.size() != n) throw InvalidTree("some vertices are not reachable from the root");

    for (std::size_t v = 0; v < n; ++v) {
        if (!(weights_[v] > 0.0) || !std::isfinite(weights_[v]))
            throw InvalidTree("weight of vertex " + std::to_string(v) + " is not positive");
        if (children_[v].empty()) continue;
        double sum = 0.0;
        for (std::size_t c : children_[v]) sum += weights_[c];
        if (!harmonic_at(weights_[v], sum, p_))
            throw InvalidTree("weights are not harmonic at vertex " + std::to_string(v));
    }
}

WeightedFiniteTree WeightedFiniteTree::harmonic(std::vector<std::vector<std::size_t>> children,
                                                const std::vector<double>& leaf_weights, double p) {
    const std::size_t n = children.size();
    if (leaf_weights.size() != n) throw InvalidTree("one weight entry per vertex required");
    // Children always carry larger ids than parents in the layouts we build,
    // but do not rely on it: order vertices by a breadth-first pass.
    std::vector<std::size_t> order{0};
    for (std::size_t head = 0; head < order.size() && order.size() <= n; ++head)
        for (std::size_t c : children[order[head]])
            if (c < n) order.push_back(c);
    std::vector<double> weights(leaf_weights);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::size_t v = *it;
        if (v >= n || children[v].empty()) continue;
        double sum = 0.0;
        for (std::size_t c : children[v]) sum += c < n ? weights[c] : 0.0;
        weights[v] = p * sum;
    }
    return WeightedFiniteTree(std::move(children), std::move(weights), p);
}

std::vector<std::vector<std::size_t>> WeightedFiniteTree::children_from_counts(
    const std::vector<std::size_t>& bfs_counts) {
    std::vector<std::vector<std::size_t>> children(1);
    std::size_t next_id = 1;
    for (std::size_t v = 0; v < bfs_counts.size(); ++v) {
        if (v >= children.size()) throw InvalidTree("offspring count given for a vertex that does not exist");
        for (std::size_t i = 0; i < bfs_counts[v]; ++i) {
            children[v].push_back(next_id++);
            children.emplace_back();
        }
    }
    return children;
}

// --- enumeration and the exact measure ------------------------------------

namespace {

std::uint64_t count_from(const WeightedFiniteTree& wt, std::size_t v, int n, std::uint64_t cap) {
    if (wt.depth(v) >= n) return 1;
    std::uint64_t total = 1;
    for (std::size_t c : wt.children(v)) {
        const std::uint64_t options = 1 + count_from(wt, c, n, cap);
        total = total > cap / options ? cap : total * options;
    }
    return std::min(total, cap);
}

std::vector<std::vector<std::size_t>> enumerate_from(const WeightedFiniteTree& wt, std::size_t v, int n) {
    std::vector<std::vector<std::size_t>> sets{{v}};
    if (wt.depth(v) >= n) return sets;
    for (std::size_t c : wt.children(v)) {
        const auto below_c = enumerate_from(wt, c, n);
        std::vector<std::vector<std::size_t>> grown;
        grown.reserve(sets.size() * (below_c.size() + 1));
        for (const auto& s : sets) {
            grown.push_back(s);
            for (const auto& sub : below_c) {
                auto merged = s;
                merged.insert(merged.end(), sub.begin(), sub.end());
                grown.push_back(std::move(merged));
            }
        }
        sets = std::move(grown);
    }
    return sets;
}

int subtree_height(const WeightedFiniteTree& wt, const FiniteSubtree& t) {
    int h = 0;
    for (std::size_t v : t.vertices) h = std::max(h, wt.depth(v));
    return h;
}

std::vector<char> membership(const WeightedFiniteTree& wt, const FiniteSubtree& t) {
    std::vector<char> in(wt.size(), 0);
    for (std::size_t v : t.vertices) in[v] = 1;
    return in;
}

void validate_subtree(const WeightedFiniteTree& wt, const FiniteSubtree& t) {
    if (t.vertices.empty() || t.vertices.front() != 0) throw NotSubtree("subtree must contain the root");
    for (std::size_t i = 0; i < t.vertices.size(); ++i) {
        if (t.vertices[i] >= wt.size()) throw NotSubtree("vertex " + std::to_string(t.vertices[i]) + " not in tree");
        if (i > 0 && t.vertices[i] <= t.vertices[i - 1]) throw NotSubtree("vertex ids must be sorted and distinct");
    }
    const auto in = membership(wt, t);
    for (std::size_t v : t.vertices)
        if (v != 0 && !in[wt.parent(v)])
            throw NotSubtree("vertex " + std::to_string(v) + " is present without its parent");
}

double measure_unchecked(const WeightedFiniteTree& wt, const FiniteSubtree& t, int n) {
    double top = 0.0;
    for (std::size_t v : t.vertices)
        if (wt.depth(v) == n) top += wt.weight(v);
    return top / wt.weight(0) * cluster_probability(wt, t, n);
}

}  // namespace

std::uint64_t count_subtrees(const WeightedFiniteTree& wt, int n, std::uint64_t budget) {
    return count_from(wt, 0, n, budget + 1);
}

std::vector<FiniteSubtree> enumerate_subtrees(const WeightedFiniteTree& wt, int n, std::uint64_t budget) {
    if (n < 0) throw InvalidLevels("n must be >= 0");
    const std::uint64_t count = count_subtrees(wt, n, budget);
    if (count > budget)
        throw EnumerationBudget("more than " + std::to_string(budget) + " subtrees of height <= " + std::to_string(n));
    auto sets = enumerate_from(wt, 0, n);
    std::vector<FiniteSubtree> out;
    out.reserve(sets.size());
    for (auto& s : sets) {
        std::sort(s.begin(), s.end());
        out.push_back(FiniteSubtree{std::move(s)});
    }
    return out;
}

double cluster_probability(const WeightedFiniteTree& wt, const FiniteSubtree& t, int n) {
    const auto in = membership(wt, t);
    std::uint64_t closed = 0;
    for (std::size_t v : t.vertices) {
        if (wt.depth(v) >= n) continue;
        for (std::size_t c : wt.children(v)) closed += in[c] ? 0 : 1;
    }
    const double edges = static_cast<double>(t.vertices.size() - 1);
    return std::pow(wt.p(), edges) * std::pow(1.0 - wt.p(), static_cast<double>(closed));
}

double iic_measure_exact(const WeightedFiniteTree& wt, const FiniteSubtree& t, int n) {
    validate_subtree(wt, t);
    const int h = subtree_height(wt, t);
    if (h != n)
        throw HeightMismatch("subtree has height " + std::to_string(h) + ", expected " + std::to_string(n));
    return measure_unchecked(wt, t, n);
}

double iic_consistency_check(const WeightedFiniteTree& wt, int n, std::uint64_t budget) {
    if (n < 0) throw InvalidLevels("n must be >= 0");
    if (wt.height() < n + 1)
        throw HeightMismatch("consistency at level " + std::to_string(n) + " needs height >= " +
                             std::to_string(n + 1) + ", tree has " + std::to_string(wt.height()));
    std::map<FiniteSubtree, double> projected;
    for (const auto& t : enumerate_subtrees(wt, n + 1, budget)) {
        if (subtree_height(wt, t) != n + 1) continue;
        FiniteSubtree restricted;
        for (std::size_t v : t.vertices)
            if (wt.depth(v) <= n) restricted.vertices.push_back(v);
        projected[restricted] += measure_unchecked(wt, t, n + 1);
    }
    double defect = 0.0;
    for (const auto& t : enumerate_subtrees(wt, n, budget)) {
        if (subtree_height(wt, t) != n) continue;
        const auto it = projected.find(t);
        const double lifted = it == projected.end() ? 0.0 : it->second;
        defect = std::max(defect, std::abs(lifted - measure_unchecked(wt, t, n)));
    }
    return defect;
}

double iic_normalization_defect(const WeightedFiniteTree& wt, int n, std::uint64_t budget) {
    double total = 0.0;
    for (const auto& t : enumerate_subtrees(wt, n, budget))
        if (subtree_height(wt, t) == n) total += measure_unchecked(wt, t, n);
    return std::abs(total - 1.0);
}

FiniteIICDraw sample_iic_finite(const WeightedFiniteTree& wt, int n, RandomStream& rng) {
    if (n < 0) throw InvalidLevels("n must be >= 0");
    if (wt.height() < n) throw HeightMismatch("tree is shorter than the requested level");
    const Coin coin(wt.p());
    FiniteIICDraw draw;
    draw.spine.push_back(0);
    draw.cluster.vertices.push_back(0);
    std::vector<std::size_t> frontier, next;
    std::size_t spine = 0;
    for (int level = 0; level < n; ++level) {
        const auto& kids = wt.children(spine);
        if (kids.empty()) throw HeightMismatch("spine reached a leaf above the requested level");
        double total = 0.0;
        for (std::size_t c : kids) total += wt.weight(c);
        const double u = rng.uniform() * total;
        std::size_t chosen = kids.back();
        double cumulative = 0.0;
        for (std::size_t c : kids) {
            cumulative += wt.weight(c);
            if (u < cumulative) {
                chosen = c;
                break;
            }
        }
        next.clear();
        for (std::size_t v : frontier)
            for (std::size_t c : wt.children(v))
                if (coin.flip(rng)) next.push_back(c);
        for (std::size_t c : kids)
            if (c != chosen && coin.flip(rng)) next.push_back(c);
        draw.cluster.vertices.insert(draw.cluster.vertices.end(), next.begin(), next.end());
        draw.cluster.vertices.push_back(chosen);
        draw.spine.push_back(chosen);
        spine = chosen;
        frontier.swap(next);
    }
    std::sort(draw.cluster.vertices.begin(), draw.cluster.vertices.end());
    return draw;
}

// --- quenched sampler -------------------------------------------------------


NodeRef IICSample::spine_vertex(int k) const {
    if (k < 0 || k > level) throw InvalidLevels("spine index " + std::to_string(k) + " outside [0, level]");
    return NodeRef{{spine_path.begin(), spine_path.begin() + k}};
}

std::vector<NodeRef> IICSample::spine() const {
    std::vector<NodeRef> out;
    out.reserve(static_cast<std::size_t>(level) + 1);
    for (int k = 0; k <= level; ++k) out.push_back(spine_vertex(k));
    return out;
}

std::vector<double> spine_kernel(const TreeStore& store, const NodeKey& vertex, int m_W) {
    const std::uint64_t x = store.offspring_count(vertex);
    std::vector<double> counts(x);
    for (std::uint64_t i = 0; i < x; ++i)
        counts[i] = static_cast<double>(store.subtree_generation_size(vertex.child(i), m_W));
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (double& c : counts) c /= total;
    return counts;
}

IICSampler::IICSampler(const TreeStore& store, int n, IICOptions options)
    : store_(&store), n_(n), options_(options), coin_(store.constants().p_c) {
    if (n < 1) throw InvalidLevels("IIC level must be >= 1");
    if (options_.m_W < 0) throw InvalidParameter("m_W must be >= 0");
    const double mu = store.constants().mu;
    if (std::pow(mu, options_.m_W) > static_cast<double>(store.options().expansion_budget))
        throw BudgetExceeded("mu^m_W exceeds the expansion budget");
    shared_depth_ = options_.shared_depth >= 0 ? options_.shared_depth
                                               : static_cast<int>(std::floor(std::log(3e4) / std::log(mu)));
    shared_depth_ = std::clamp(shared_depth_, 0, n);
    scale_ = std::pow(static_cast<double>(n), -store.constants().beta);
}

std::uint64_t IICSampler::cached_count(const NodeKey& key) {
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    if (cache_.size() >= options_.cache_entries) cache_.clear();
    const std::uint64_t count = store_->subtree_generation_size(key, options_.m_W);
    cache_.emplace(key, count);
    return count;
}

void IICSampler::window_reset(const NodeKey& key) {
    window_clear();
    Level root = take_level();
    root.keys.assign(key);
    root.lo = 0;
    root.hi = 1;
    window_.push_back(std::move(root));
    window_active_ = true;
}

void IICSampler::window_expand(Level& level, Level& next) {
    const std::size_t width = level.hi - level.lo;
    scratch_.resize(width);
    store_->expand(level.keys, level.lo, level.hi, scratch_.data(), next.keys, staged_);
    level.child_begin.resize(width + 1);
    level.child_begin[0] = 0;
    level.expanded_lo = level.lo;
    for (std::size_t i = 0; i < width; ++i) level.child_begin[i + 1] = level.child_begin[i] + scratch_[i];
    level.expanded = true;
    next.lo = 0;
    next.hi = next.keys.size();
    window_nodes_ += width;
}

void IICSampler::window_ensure(std::size_t levels) {
    while (window_.size() < levels + 1) {
        Level next = take_level();
        window_expand(window_.back(), next);
        window_.push_back(std::move(next));
    }
}

std::pair<std::size_t, std::size_t> IICSampler::window_child_range(std::size_t level, std::size_t lo,
                                                                   std::size_t hi) const {
    const Level& l = window_[level];
    return {l.child_begin[lo - l.expanded_lo], l.child_begin[hi - l.expanded_lo]};
}

void IICSampler::window_advance(std::uint64_t child) {
    const Level& top = window_.front();
    const std::size_t first = top.child_begin[top.lo - top.expanded_lo] + child;
    std::pair<std::size_t, std::size_t> range{first, first + 1};
    for (std::size_t j = 1; j < window_.size(); ++j) {
        window_[j].lo = range.first;
        window_[j].hi = range.second;
        if (j + 1 < window_.size()) range = window_child_range(j, range.first, range.second);
    }
    spare_.push_back(std::move(window_.front()));
    window_.pop_front();
}

void IICSampler::window_clear() {
    while (!window_.empty()) {
        spare_.push_back(std::move(window_.back()));
        window_.pop_back();
    }
}

IICSampler::Level IICSampler::take_level() {
    if (spare_.empty()) return {};
    Level level = std::move(spare_.back());
    spare_.pop_back();
    level.expanded = false;
    return level;
}

void IICSampler::choose_counts(const NodeKey& vertex, int depth, std::uint64_t children) {
    counts_.assign(children, 1);
    if (options_.m_W == 0) return;
    if (depth < shared_depth_) {
        for (std::uint64_t i = 0; i < children; ++i) counts_[i] = cached_count(vertex.child(i));
        return;
    }
    const auto m = static_cast<std::size_t>(options_.m_W);
    window_ensure(m + 1);
    const Level& top = window_.front();
    const std::size_t first = top.child_begin[top.lo - top.expanded_lo];
    for (std::uint64_t i = 0; i < children; ++i) {
        std::pair<std::size_t, std::size_t> range{first + i, first + i + 1};
        for (std::size_t j = 1; j <= m; ++j) range = window_child_range(j, range.first, range.second);
        counts_[i] = range.second - range.first;
    }
}

IICSample IICSampler::sample(RandomStream& rng) {
    IICSample out;
    out.level = n_;
    out.spine_path.reserve(static_cast<std::size_t>(n_));
    window_active_ = false;
    window_clear();

    NodeKey spine = NodeKey::root();
    std::size_t size = 0;
    std::uint64_t visits = 0;
    const auto key_of = [](const NodeKey& key) -> const NodeKey& { return key; };
    const auto make = [](const NodeKey& key, std::size_t, std::uint64_t i) { return key.child(i); };

    for (int depth = 0; depth < n_; ++depth) {
        const bool windowed = depth >= shared_depth_;
        if (windowed && !window_active_) window_reset(spine);

        const std::uint64_t children = store_->offspring_count(spine);
        std::uint64_t chosen = 0;
        if (children > 1) {
            choose_counts(spine, depth, children);
            const std::uint64_t total = std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
            std::uint64_t r = below(rng.next_u64(), total);
            while (r >= counts_[chosen]) r -= counts_[chosen++];
        }
        if (windowed) {
            window_ensure(1);
            window_advance(chosen);
        }

        size = detail::expand_level(*store_, coin_, rng, frontier_.data(), size, next_, visits, options_.node_cap,
                                    key_of, make);
        for (std::uint64_t i = 0; i < children; ++i) {
            if (i == chosen || !coin_.flip(rng)) continue;
            if (size == next_.size()) next_.resize(2 * size + 64);
            next_[size++] = spine.child(i);
        }
        frontier_.swap(next_);
        spine = spine.child(chosen);
        out.spine_path.push_back(static_cast<std::uint32_t>(chosen));
    }
    out.cluster_level_count = size + 1;
    out.z = static_cast<double>(out.cluster_level_count) * scale_;
    return out;
}

IICSample sample_iic(const TreeStore& store, int n, int m_W, RandomStream& rng) {
    IICOptions options;
    options.m_W = m_W;
    IICSampler sampler(store, n, options);
    return sampler.sample(rng);
}

RandomStream iic_stream(std::uint64_t master_seed, std::uint64_t tree_index, std::uint64_t sample_index) {
    return RandomStream(hash_combine(master_seed, domain::iic, tree_index), sample_index);
}

void write_iic_record(std::ostream& out, std::uint64_t sample_index, const IICSample& sample) {
    out << nlohmann::json{{"sample_index", sample_index}, {"n", sample.level}, {"count", sample.cluster_level_count}}
               .dump()
        << '\n';
}

}  // namespace gwperc

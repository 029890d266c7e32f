#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gwperc/errors.hpp"
#include "gwperc/iic.hpp"
#include "stats.hpp"

using namespace gwperc;

namespace {

FiniteSubtree sub(std::vector<std::size_t> v) { return FiniteSubtree{std::move(v)}; }

WeightedFiniteTree binary_tree(int height, double p) {
    std::vector<std::size_t> counts;
    std::size_t internal = 0;
    for (int d = 0; d < height; ++d) internal += std::size_t{1} << d;
    counts.assign(internal, 2);
    const auto children = WeightedFiniteTree::children_from_counts(counts);
    return WeightedFiniteTree::harmonic(children, std::vector<double>(children.size(), 1.0), p);
}

// The first n levels of a stored tree, with the key of every vertex.
struct Truncated {
    std::vector<std::vector<std::size_t>> children;
    std::vector<NodeKey> keys;
};

Truncated truncate(const TreeStore& store, int n) {
    Truncated t;
    t.children.emplace_back();
    t.keys.push_back(NodeKey::root());
    std::vector<std::size_t> level{0};
    for (int d = 0; d < n; ++d) {
        std::vector<std::size_t> next;
        for (std::size_t v : level) {
            const auto x = store.offspring_count(t.keys[v]);
            for (std::uint64_t i = 0; i < x; ++i) {
                const std::size_t id = t.children.size();
                t.children[v].push_back(id);
                t.children.emplace_back();
                t.keys.push_back(t.keys[v].child(i));
                next.push_back(id);
            }
        }
        level = std::move(next);
    }
    return t;
}

// Exact law of (spine path, level-n count) for the quenched sampler:
// spine steps follow |T_{m_W}(child)| renormalized, off-spine edges are
// Bernoulli(p). P(t, spine) = p^{-n} P(cluster = t) * prod kernel(spine).
std::map<std::pair<std::vector<std::uint32_t>, std::uint64_t>, double> sampler_law(const TreeStore& store, int n,
                                                                                  int m_W) {
    const auto tr = truncate(store, n);
    const double p = store.constants().p_c;
    const auto wt = WeightedFiniteTree::harmonic(tr.children, std::vector<double>(tr.children.size(), 1.0), p);
    std::vector<double> kernel(tr.children.size(), 1.0);  // kernel into each non-root vertex
    std::vector<std::uint32_t> index(tr.children.size(), 0);
    for (std::size_t v = 0; v < tr.children.size(); ++v) {
        double total = 0.0;
        for (std::size_t c : tr.children[v]) total += static_cast<double>(store.subtree_generation_size(tr.keys[c], m_W));
        for (std::size_t i = 0; i < tr.children[v].size(); ++i) {
            const std::size_t c = tr.children[v][i];
            kernel[c] = static_cast<double>(store.subtree_generation_size(tr.keys[c], m_W)) / total;
            index[c] = static_cast<std::uint32_t>(i);
        }
    }
    std::map<std::pair<std::vector<std::uint32_t>, std::uint64_t>, double> law;
    for (const auto& t : enumerate_subtrees(wt, n)) {
        std::vector<std::size_t> top;
        for (std::size_t v : t.vertices)
            if (wt.depth(v) == n) top.push_back(v);
        if (top.empty()) continue;
        const double base = cluster_probability(wt, t, n) / std::pow(p, n);
        for (std::size_t v : top) {
            std::vector<std::uint32_t> path(static_cast<std::size_t>(n));
            double prob = base;
            for (std::size_t u = v; u != 0; u = wt.parent(u)) {
                path[static_cast<std::size_t>(wt.depth(u)) - 1] = index[u];
                prob *= kernel[u];
            }
            law[{path, top.size()}] += prob;
        }
    }
    return law;
}

}  // namespace

TEST_CASE("weighted trees validate harmonicity") {
    const auto children = WeightedFiniteTree::children_from_counts({2});
    CHECK_NOTHROW(WeightedFiniteTree(children, {1.0, 1.0, 1.0}, 0.5));
    CHECK_THROWS_AS(WeightedFiniteTree(children, {1.2, 1.0, 1.0}, 0.5), InvalidTree);
    CHECK_THROWS_AS(WeightedFiniteTree(children, {1.0, -1.0, 3.0}, 0.5), InvalidTree);
    CHECK_THROWS_AS(WeightedFiniteTree({{1}, {0}}, {1.0, 1.0}, 0.5), InvalidTree);
    const auto h = WeightedFiniteTree::harmonic(WeightedFiniteTree::children_from_counts({2, 1, 1}),
                                                {0, 0, 0, 2.0, 4.0}, 0.5);
    CHECK(h.weight(1) == 1.0);
    CHECK(h.weight(2) == 2.0);
    CHECK(h.weight(0) == 1.5);
    CHECK(h.height() == 2);
}

TEST_CASE("binary root measure") {
    const auto children = WeightedFiniteTree::children_from_counts({2});
    const WeightedFiniteTree wt(children, {3.0, 3.0, 3.0}, 0.5);
    CHECK(iic_measure_exact(wt, sub({0, 1}), 1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(iic_measure_exact(wt, sub({0, 2}), 1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(iic_measure_exact(wt, sub({0, 1, 2}), 1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(iic_normalization_defect(wt, 1) <= 1e-15);
    CHECK_THROWS_AS(iic_measure_exact(wt, sub({0}), 1), HeightMismatch);
    CHECK_THROWS_AS(iic_measure_exact(wt, sub({1}), 1), NotSubtree);
    CHECK_THROWS_AS(iic_measure_exact(wt, sub({0, 7}), 1), NotSubtree);
}

TEST_CASE("single-path tree") {
    const auto children = WeightedFiniteTree::children_from_counts({1, 1, 1, 1});
    const auto wt = WeightedFiniteTree::harmonic(children, {0, 0, 0, 0, 1.0}, 0.3);
    for (int n = 0; n <= 4; ++n) {
        std::vector<std::size_t> path;
        for (int d = 0; d <= n; ++d) path.push_back(static_cast<std::size_t>(d));
        CHECK(iic_measure_exact(wt, sub(path), n) == doctest::Approx(1.0).epsilon(1e-14));
    }
    for (int n = 0; n <= 3; ++n) CHECK(iic_consistency_check(wt, n) <= 1e-15);
    CHECK_THROWS_AS(iic_consistency_check(wt, 4), HeightMismatch);
}

TEST_CASE("consistency on a binary tree of height 3") {
    const auto wt = binary_tree(3, 0.5);
    for (int n = 0; n <= 2; ++n) CHECK(iic_consistency_check(wt, n) <= 1e-12);
    for (int n = 0; n <= 3; ++n) CHECK(iic_normalization_defect(wt, n) <= 1e-12);
}

TEST_CASE("consistency under random harmonic weights") {
    RandomStream rng(12, 0);
    // every leaf at depth 3, so weights are harmonic at all shallower levels
    const auto children = WeightedFiniteTree::children_from_counts({3, 2, 1, 2, 2, 2, 1, 1, 3});
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> leaves(children.size());
        for (double& w : leaves) w = 0.1 + rng.uniform();
        const auto wt = WeightedFiniteTree::harmonic(children, leaves, 0.2 + 0.6 * rng.uniform());
        for (int n = 0; n < wt.height(); ++n) CHECK(iic_consistency_check(wt, n) <= 1e-12);
    }
}

TEST_CASE("enumeration counts and budget") {
    const auto wt = binary_tree(3, 0.5);
    // root-containing subtrees of a full binary tree: f(0)=1, f(h)=(1+f(h-1))^2
    CHECK(count_subtrees(wt, 1) == 4);
    CHECK(count_subtrees(wt, 2) == 25);
    CHECK(count_subtrees(wt, 3) == 676);
    CHECK(enumerate_subtrees(wt, 2).size() == 25);
    CHECK_THROWS_AS(enumerate_subtrees(wt, 3, 100), EnumerationBudget);
    const auto t = sub({0, 1, 3});
    CHECK(cluster_probability(wt, t, 2) == doctest::Approx(std::pow(0.5, 2) * std::pow(0.5, 2)));
}

TEST_CASE("finite spine sampler matches the exact measure") {
    const auto wt = WeightedFiniteTree::harmonic(WeightedFiniteTree::children_from_counts({3, 1, 2, 2}),
                                                 {0, 0, 0, 0, 0.5, 1.0, 2.0, 3.0, 1.0}, 0.4);
    const int n = 2;
    std::map<FiniteSubtree, std::uint64_t> counts;
    const std::uint64_t samples = 300'000;
    for (std::uint64_t i = 0; i < samples; ++i) {
        RandomStream rng(77, i);
        const auto draw = sample_iic_finite(wt, n, rng);
        REQUIRE(draw.spine.size() == 3);
        for (std::size_t k = 1; k < draw.spine.size(); ++k) CHECK(wt.parent(draw.spine[k]) == draw.spine[k - 1]);
        ++counts[draw.cluster];
    }
    std::uint64_t covered = 0;
    for (const auto& t : enumerate_subtrees(wt, n)) {
        double exact = 0.0;
        try {
            exact = iic_measure_exact(wt, t, n);
        } catch (const HeightMismatch&) {
        }
        const std::uint64_t k = counts.count(t) ? counts[t] : 0;
        covered += k;
        if (exact == 0.0) CHECK(k == 0);
        else CHECK(teststats::binomial_z(k, samples, exact) < 4.0);
    }
    CHECK(covered == samples);
}

TEST_CASE("spine kernel on the binary tree is one half") {
    const TreeStore store(OffspringSpec::explicit_law({{2, 1.0}}), 4);
    const auto k = spine_kernel(store, NodeKey::root().child(1), 6);
    REQUIRE(k.size() == 2);
    CHECK(k[0] == 0.5);
    CHECK(k[1] == 0.5);
}

TEST_CASE("quenched IIC samples are well formed") {
    const TreeStore store(OffspringSpec::explicit_law({{1, 0.8}, {2, 0.2}}), 3);
    IICOptions options;
    options.m_W = 10;
    IICSampler one(store, 1, options);
    IICSampler deep(store, 30, options);
    for (std::uint64_t i = 0; i < 200; ++i) {
        RandomStream a = iic_stream(1, 0, i), b = iic_stream(1, 0, i);
        const auto s1 = one.sample(a);
        CHECK(s1.cluster_level_count >= 1);
        const auto s = deep.sample(b);
        CHECK(s.level == 30);
        CHECK(s.cluster_level_count >= 1);
        CHECK(s.z == doctest::Approx(static_cast<double>(s.cluster_level_count) / 30.0));
        REQUIRE(s.spine_path.size() == 30);
        const auto spine = s.spine();
        REQUIRE(spine.size() == 31);
        for (int k = 0; k < 30; ++k) {
            CHECK(spine[static_cast<std::size_t>(k) + 1].parent() == spine[static_cast<std::size_t>(k)]);
            CHECK(s.spine_path[static_cast<std::size_t>(k)] < store.offspring_count(spine[static_cast<std::size_t>(k)]));
        }
    }
}

TEST_CASE("shared cache and window do not change samples") {
    const TreeStore store(OffspringSpec::explicit_law({{1, 0.6}, {2, 0.3}, {3, 0.1}}), 8);
    IICOptions a, b, c;
    a.m_W = b.m_W = c.m_W = 12;
    a.shared_depth = 0;
    b.shared_depth = 40;
    c.cache_entries = 3;
    IICSampler sa(store, 40, a), sb(store, 40, b), sc(store, 40, c);
    for (std::uint64_t i = 0; i < 300; ++i) {
        RandomStream ra = iic_stream(2, 1, i), rb = iic_stream(2, 1, i), rc = iic_stream(2, 1, i);
        const auto x = sa.sample(ra), y = sb.sample(rb), z = sc.sample(rc);
        CHECK(x.spine_path == y.spine_path);
        CHECK(x.cluster_level_count == y.cluster_level_count);
        CHECK(x.spine_path == z.spine_path);
        CHECK(x.cluster_level_count == z.cluster_level_count);
    }
}

TEST_CASE("quenched sampler matches its exact law on a small tree") {
    for (const auto& [spec, seed, n] : {std::tuple{OffspringSpec::explicit_law({{1, 1.0 / 3}, {2, 1.0 / 3}, {3, 1.0 / 3}}), 5ULL, 2},
                                        std::tuple{OffspringSpec::explicit_law({{1, 0.5}, {2, 0.5}}), 9ULL, 3}}) {
        const TreeStore store(spec, seed);
        const int m_W = 4;
        const auto law = sampler_law(store, n, m_W);
        double total = 0.0;
        for (const auto& [key, p] : law) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

        IICOptions options;
        options.m_W = m_W;
        IICSampler sampler(store, n, options);
        std::map<std::pair<std::vector<std::uint32_t>, std::uint64_t>, std::uint64_t> counts;
        const std::uint64_t samples = 200'000;
        for (std::uint64_t i = 0; i < samples; ++i) {
            RandomStream rng = iic_stream(seed, 0, i);
            const auto s = sampler.sample(rng);
            ++counts[{s.spine_path, s.cluster_level_count}];
        }
        for (const auto& [key, k] : counts) CHECK(law.count(key) == 1);
        for (const auto& [key, p] : law) {
            const std::uint64_t k = counts.count(key) ? counts[key] : 0;
            CHECK(teststats::binomial_z(k, samples, p) < 4.0);
        }
    }
}

TEST_CASE("IIC records and argument checks") {
    IICSample s;
    s.level = 5;
    s.cluster_level_count = 3;
    std::ostringstream out;
    write_iic_record(out, 11, s);
    const auto j = nlohmann::json::parse(out.str());
    CHECK(j["sample_index"] == 11);
    CHECK(j["n"] == 5);
    CHECK(j["count"] == 3);
    const TreeStore store(OffspringSpec::explicit_law({{2, 1.0}}), 1);
    CHECK_THROWS_AS(IICSampler(store, 0), InvalidLevels);
    IICOptions big;
    big.m_W = 40;
    CHECK_THROWS_AS(IICSampler(store, 5, big), BudgetExceeded);
}

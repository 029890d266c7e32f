#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

#include "gwperc/errors.hpp"
#include "gwperc/tree_store.hpp"
#include "stats.hpp"

using namespace gwperc;

namespace {

const OffspringSpec mu12 = OffspringSpec::explicit_law({{1, 0.8}, {2, 0.2}});
const OffspringSpec mixed = OffspringSpec::explicit_law({{1, 0.5}, {2, 0.2}, {3, 0.2}, {12, 0.1}});

// Brute-force |T_m(v)| by recursion over offspring_count.
std::uint64_t brute_size(const TreeStore& store, const NodeKey& key, int m) {
    if (m == 0) return 1;
    std::uint64_t total = 0;
    const auto x = store.offspring_count(key);
    for (std::uint64_t i = 0; i < x; ++i) total += brute_size(store, key.child(i), m - 1);
    return total;
}

NodeRef random_node(const TreeStore& store, RandomStream& rng, int depth) {
    NodeRef v;
    for (int d = 0; d < depth; ++d) {
        const auto x = store.offspring_count(v);
        v = v.child(static_cast<std::uint32_t>(rng.next_u64() % x));
    }
    return v;
}

}  // namespace

TEST_CASE("node refs") {
    NodeRef root;
    CHECK(root.depth() == 0);
    const NodeRef a = root.child(1).child(0);
    CHECK(a.depth() == 2);
    CHECK(a.parent() == root.child(1));
    CHECK(root.is_ancestor_of(a));
    CHECK(a.is_ancestor_of(a));
    CHECK_FALSE(root.child(0).is_ancestor_of(a));
    CHECK_FALSE(a.is_ancestor_of(root));
}

TEST_CASE("node keys are path hashes") {
    const NodeKey r = NodeKey::root();
    CHECK(r.child(0) == r.child(0));
    CHECK(r.child(0) != r.child(1));
    CHECK(r.child(0).child(1) != r.child(1).child(0));
}

TEST_CASE("offspring counts are a pure function of seed and path") {
    const TreeStore a(mixed, 42), b(mixed, 42), c(mixed, 43);
    RandomStream rng(1, 1);
    std::vector<NodeRef> nodes;
    for (int i = 0; i < 200; ++i) nodes.push_back(random_node(a, rng, 1 + i % 20));
    std::vector<std::uint64_t> first;
    for (const auto& v : nodes) first.push_back(a.offspring_count(v));
    a.clear_cache();
    std::vector<std::size_t> order(nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = order.size() - 1 - i;
    for (std::size_t i : order) CHECK(a.offspring_count(nodes[i]) == first[i]);
    for (std::size_t i = 0; i < nodes.size(); ++i) CHECK(b.offspring_count(nodes[i]) == first[i]);
    std::vector<std::uint64_t> threaded(nodes.size());
    {
        std::jthread t1([&] { for (std::size_t i = 0; i < nodes.size(); i += 2) threaded[i] = b.offspring_count(nodes[i]); });
        std::jthread t2([&] { for (std::size_t i = 1; i < nodes.size(); i += 2) threaded[i] = b.offspring_count(nodes[i]); });
    }
    CHECK(threaded == first);
    bool differs = false;
    NodeKey k = NodeKey::root();
    for (int i = 0; i < 200; ++i, k = k.child(0)) differs |= a.offspring_count(k) != c.offspring_count(k);
    CHECK(differs);
}

TEST_CASE("offspring counts are at least one and reachability is checked") {
    const TreeStore store(mu12, 7);
    CHECK_THROWS_AS(store.offspring_count(NodeRef{{5}}), UnreachableNode);
    CHECK_THROWS_AS(store.key_of(NodeRef{{0, 0, 0, 9}}), UnreachableNode);
    RandomStream rng(2, 2);
    for (int i = 0; i < 1000; ++i) CHECK(store.offspring_count(random_node(store, rng, 10)) >= 1);
}

TEST_CASE("degenerate binary tree") {
    const TreeStore store(OffspringSpec::explicit_law({{2, 1.0}}), 3);
    CHECK(store.offspring_count(NodeRef{{1, 0, 1}}) == 2);
    CHECK(store.generation_size(0) == 1);
    CHECK(store.generation_size(10) == 1024);
    for (int m : {0, 3, 8}) CHECK(store.w_estimate(NodeRef{{1, 1}}, m).value == 1.0);
}

TEST_CASE("root offspring law over re-seeds") {
    std::vector<std::uint64_t> counts(4, 0);
    for (std::uint64_t s = 0; s < 1'000'000; ++s) {
        const auto x = TreeStore(mixed, s).offspring_count(NodeKey::root());
        ++counts[x == 12 ? 3 : x - 1];
    }
    CHECK(teststats::chi_square_pvalue(counts, {0.5, 0.2, 0.2, 0.1}) > 1e-3);
}

TEST_CASE("generation sizes agree with brute force on both traversal paths") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const TreeStore store(mixed, seed);
        for (int m : {0, 1, 5, 9}) CHECK(store.subtree_generation_size(NodeKey::root(), m) == brute_size(store, NodeKey::root(), m));
        const TreeStore slow(mu12, seed);
        const NodeKey v = NodeKey::root().child(0);
        CHECK(slow.subtree_generation_size(v, 30) == brute_size(slow, v, 30));
    }
}

TEST_CASE("expansion budget") {
    TreeStoreOptions options;
    options.expansion_budget = 1000;
    const TreeStore store(OffspringSpec::explicit_law({{2, 1.0}}), 1, options);
    CHECK_THROWS_AS(store.generation_size(20), BudgetExceeded);
}

TEST_CASE("W martingale mean") {
    teststats::Running r;
    for (std::uint64_t s = 0; s < 10'000; ++s)
        r.add(static_cast<double>(TreeStore(mu12, s).generation_size(10)) / std::pow(1.2, 10));
    CHECK(r.z(1.0) < 4.0);
}

TEST_CASE("W recursion is exact") {
    const TreeStore store(mixed, 11);
    RandomStream rng(5, 5);
    const double mu = store.constants().mu;
    for (int i = 0; i < 100; ++i) {
        const NodeRef v = random_node(store, rng, static_cast<int>(rng.next_u64() % 6));
        const int m = static_cast<int>(rng.next_u64() % 6);
        const auto x = store.offspring_count(v);
        std::uint64_t sum_counts = 0;
        for (std::uint32_t c = 0; c < x; ++c) sum_counts += store.w_estimate(v.child(c), m).count;
        const auto w = store.w_estimate(v, m + 1);
        CHECK(w.count == sum_counts);
        CHECK(w.value == static_cast<double>(sum_counts) / std::pow(mu, m + 1));
        CHECK(store.w_estimate(v, 0).value == 1.0);
    }
}

TEST_CASE("batched counts and expansion agree with the scalar path") {
    for (const auto& spec : {mu12, mixed, OffspringSpec::zeta_tail(1.5)}) {
        const TreeStore store(spec, 99);
        KeyColumns keys;
        keys.resize(300);
        NodeKey k = NodeKey::root();
        for (std::size_t i = 0; i < 300; ++i) {
            k = k.child(i % 3);
            keys.a[i] = k.a;
            keys.b[i] = k.b;
        }
        std::vector<std::uint64_t> counts(300);
        store.offspring_counts(keys, 10, 290, counts.data());
        for (std::size_t i = 10; i < 290; ++i) CHECK(counts[i - 10] == store.offspring_count(keys[i]));

        KeyColumns next;
        KeyLane staging;
        std::vector<std::uint64_t> c2(300);
        store.expand(keys, 10, 290, c2.data(), next, staging);
        std::size_t at = 0;
        for (std::size_t i = 10; i < 290; ++i) {
            REQUIRE(c2[i - 10] == counts[i - 10]);
            for (std::uint64_t j = 0; j < c2[i - 10]; ++j, ++at) CHECK(next[at] == keys[i].child(j));
        }
        CHECK(next.size() == at);
    }
}

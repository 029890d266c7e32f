#include "gwperc/percolation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include <boost/math/distributions/binomial.hpp>
#include <boost/random/binomial_distribution.hpp>
#include <json.hpp>

#include "gwperc/errors.hpp"
#include "gwperc/parallel.hpp"
#include "cluster_expand.hpp"

namespace gwperc {

using detail::abort_run;
using detail::expand_level;

int ClusterTrace::height() const noexcept {
    for (int level = static_cast<int>(counts.size()) - 1; level >= 0; --level)
        if (counts[static_cast<std::size_t>(level)] > 0) return level;
    return -1;
}

RandomStream run_stream(std::uint64_t master_seed, std::uint64_t tree_index, std::uint64_t run_index) {
    return RandomStream(hash_combine(master_seed, domain::percolation, tree_index), run_index);
}

RandomStream annealed_stream(std::uint64_t master_seed, std::uint64_t run_index) {
    return RandomStream::derive(master_seed, domain::annealed, run_index);
}

namespace {

ClusterTrace trace_from_counts(int n_max, std::vector<std::uint64_t> counts) {
    ClusterTrace trace;
    trace.n_max = n_max;
    trace.counts = std::move(counts);
    trace.survival = trace.counts.back() > 0;
    return trace;
}

}  // namespace

// --- quenched ---------------------------------------------------------------

QuenchedRunner::QuenchedRunner(const TreeStore& store, RunOptions options)
    : store_(&store), options_(std::move(options)), coin_(store.constants().p_c) {}

int QuenchedRunner::run_counts(int n_max, RandomStream& rng, std::vector<std::uint64_t>& counts) {
    if (n_max < 0) throw InvalidLevels("n_max must be >= 0");
    counts.assign(static_cast<std::size_t>(n_max) + 1, 0);
    counts[0] = 1;
    if (frontier_.empty()) frontier_.resize(64);
    frontier_[0] = NodeKey::root();
    std::size_t size = 1;
    std::uint64_t visits = 0;
    int height = 0;
    const auto key_of = [](const NodeKey& key) -> const NodeKey& { return key; };
    const auto make = [](const NodeKey& key, std::size_t, std::uint64_t i) { return key.child(i); };
    for (int level = 0; level < n_max; ++level) {
        size = expand_level(*store_, coin_, rng, frontier_.data(), size, next_, visits, options_.node_cap, key_of,
                            make);
        if (size == 0) break;
        counts[static_cast<std::size_t>(level) + 1] = size;
        height = level + 1;
        frontier_.swap(next_);
    }
    return height;
}

ClusterTrace QuenchedRunner::run(int n_max, RandomStream& rng) {
    if (options_.record_levels.empty()) {
        std::vector<std::uint64_t> counts;
        run_counts(n_max, rng, counts);
        return trace_from_counts(n_max, std::move(counts));
    }

    if (n_max < 0) throw InvalidLevels("n_max must be >= 0");
    // Lineage per level: (index of parent in the previous level, child index).
    struct Entry {
        NodeKey key;
        std::uint32_t parent;
        std::uint32_t child;
    };
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> lineage(1, {{0, 0}});
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(n_max) + 1, 0);
    counts[0] = 1;
    std::vector<Entry> frontier{{NodeKey::root(), 0, 0}}, next;
    std::size_t size = 1;
    std::uint64_t visits = 0;
    const auto key_of = [](const Entry& e) -> const NodeKey& { return e.key; };
    const auto make = [](const Entry& e, std::size_t j, std::uint64_t i) {
        return Entry{e.key.child(i), static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(i)};
    };
    for (int level = 0; level < n_max; ++level) {
        size = expand_level(*store_, coin_, rng, frontier.data(), size, next, visits, options_.node_cap, key_of, make);
        if (size == 0) break;
        counts[static_cast<std::size_t>(level) + 1] = size;
        auto& links = lineage.emplace_back(size);
        for (std::size_t j = 0; j < size; ++j) links[j] = {next[j].parent, next[j].child};
        frontier.swap(next);
    }

    ClusterTrace trace = trace_from_counts(n_max, std::move(counts));
    for (int level : options_.record_levels) {
        if (level < 0 || level > n_max) throw InvalidLevels("recorded level " + std::to_string(level) + " outside [0, n_max]");
        auto& out = trace.level_sets[level];
        if (static_cast<std::size_t>(level) >= lineage.size()) continue;
        const auto& entries = lineage[static_cast<std::size_t>(level)];
        out.reserve(entries.size());
        for (std::size_t j = 0; j < entries.size(); ++j) {
            NodeRef ref;
            ref.path.resize(static_cast<std::size_t>(level));
            std::size_t index = j;
            for (int d = level; d > 0; --d) {
                const auto& [parent, child] = lineage[static_cast<std::size_t>(d)][index];
                ref.path[static_cast<std::size_t>(d) - 1] = child;
                index = parent;
            }
            out.push_back(std::move(ref));
        }
    }
    return trace;
}

ClusterTrace run_cluster(const TreeStore& store, int n_max, RandomStream& rng, const RunOptions& options) {
    QuenchedRunner runner(store, options);
    return runner.run(n_max, rng);
}

// --- annealed ---------------------------------------------------------------

AnnealedRunner::AnnealedRunner(const OffspringSpec& spec, RunOptions options)
    : spec_(spec), options_(std::move(options)), p_c_(constants(spec).p_c) {
    binomial_.reserve(kSmallThinning);
    for (std::uint64_t x = 0; x < kSmallThinning; ++x) {
        const boost::math::binomial_distribution<double> law(static_cast<double>(x), p_c_);
        std::vector<double> weights(x + 1);
        for (std::uint64_t z = 0; z <= x; ++z) weights[z] = boost::math::pdf(law, static_cast<double>(z));
        binomial_.emplace_back(weights);
    }
}

std::uint64_t AnnealedRunner::thinned(std::uint64_t children, RandomStream& rng) const {
    if (children < kSmallThinning) return binomial_[children].sample(rng.next_u64());
    boost::random::binomial_distribution<std::int64_t, double> binomial(static_cast<std::int64_t>(children), p_c_);
    return static_cast<std::uint64_t>(binomial(rng));
}

int AnnealedRunner::run_counts(int n_max, RandomStream& rng, std::vector<std::uint64_t>& counts) {
    if (n_max < 0) throw InvalidLevels("n_max must be >= 0");
    counts.assign(static_cast<std::size_t>(n_max) + 1, 0);
    counts[0] = 1;
    std::uint64_t current = 1;
    std::uint64_t visits = 0;
    int height = 0;
    for (int level = 0; level < n_max; ++level) {
        std::uint64_t next = 0;
        for (std::uint64_t j = 0; j < current; ++j) {
            if (++visits > options_.node_cap) abort_run(options_.node_cap);
            const std::uint64_t children = spec_.sample(rng);
            next += thinned(children, rng);
        }
        if (next == 0) break;
        counts[static_cast<std::size_t>(level) + 1] = next;
        height = level + 1;
        current = next;
    }
    return height;
}

ClusterTrace AnnealedRunner::run(int n_max, RandomStream& rng) {
    std::vector<std::uint64_t> counts;
    run_counts(n_max, rng, counts);
    return trace_from_counts(n_max, std::move(counts));
}

ClusterTrace run_annealed(const OffspringSpec& spec, int n_max, RandomStream& rng, const RunOptions& options) {
    AnnealedRunner runner(spec, options);
    return runner.run(n_max, rng);
}

// --- connector diagnostic ---------------------------------------------------

double ConnectorStats::prob_zero() const noexcept {
    return survivors ? static_cast<double>(zero) / static_cast<double>(survivors) : 0.0;
}
double ConnectorStats::prob_one() const noexcept {
    return survivors ? static_cast<double>(one) / static_cast<double>(survivors) : 0.0;
}
double ConnectorStats::prob_two_plus() const noexcept {
    return survivors ? static_cast<double>(two_plus) / static_cast<double>(survivors) : 0.0;
}

std::uint64_t count_connectors(const TreeStore& store, int n, int m, RandomStream& rng, std::uint64_t node_cap,
                               std::vector<std::pair<NodeKey, std::uint32_t>>& frontier,
                               std::vector<std::pair<NodeKey, std::uint32_t>>& next) {
    const Coin coin(store.constants().p_c);
    if (frontier.empty()) frontier.resize(64);
    frontier[0] = {NodeKey::root(), 0};
    std::size_t size = 1;
    std::uint64_t visits = 0;
    const auto key_of = [](const std::pair<NodeKey, std::uint32_t>& e) -> const NodeKey& { return e.first; };
    const auto make = [](const std::pair<NodeKey, std::uint32_t>& e, std::size_t, std::uint64_t i) {
        return std::pair{e.first.child(i), e.second};
    };
    for (int level = 0; level < n; ++level) {
        if (level == m)
            for (std::size_t j = 0; j < size; ++j) frontier[j].second = static_cast<std::uint32_t>(j);
        size = expand_level(store, coin, rng, frontier.data(), size, next, visits, node_cap, key_of, make);
        if (size == 0) return 0;
        frontier.swap(next);
    }
    if (m == n) return size;
    // Breadth-first order keeps descendants of one level-m vertex contiguous.
    std::uint64_t distinct = 0;
    for (std::size_t j = 0; j < size; ++j)
        if (j == 0 || frontier[j].second != frontier[j - 1].second) ++distinct;
    return distinct;
}

ConnectorStats connector_diagnostic(const TreeStore& store, int n, int m, const ConnectorOptions& options) {
    if (m < 0 || n < 0 || m > n) throw InvalidLevels("need 0 <= m <= n, got m=" + std::to_string(m) + " n=" + std::to_string(n));
    constexpr std::uint64_t kChunk = 4096;
    constexpr std::uint64_t kWave = 16 * kChunk;
    constexpr std::size_t kHistogram = 16;

    struct ChunkResult {
        std::vector<std::uint64_t> connectors;  // per run: 0 if extinct
        std::vector<bool> aborted;
    };

    ConnectorStats stats;
    stats.n = n;
    stats.m = m;
    stats.histogram.assign(kHistogram, 0);
    std::uint64_t begin = 0;
    while (stats.survivors < options.target_survivors && begin < options.max_runs) {
        const std::uint64_t end = std::min(options.max_runs, begin + kWave);
        auto chunks = map_chunks(begin, end, kChunk, options.threads, [&](std::uint64_t lo, std::uint64_t hi) {
            ChunkResult result;
            result.connectors.resize(hi - lo);
            result.aborted.assign(hi - lo, false);
            std::vector<std::pair<NodeKey, std::uint32_t>> a, b;
            for (std::uint64_t r = lo; r < hi; ++r) {
                RandomStream rng = run_stream(options.master_seed, options.tree_index, r);
                try {
                    result.connectors[r - lo] = count_connectors(store, n, m, rng, options.node_cap, a, b);
                } catch (const RunAborted&) {
                    result.aborted[r - lo] = true;
                }
            }
            return result;
        });
        // Merge in run order; stop exactly at the target.
        for (const auto& chunk : chunks) {
            for (std::size_t j = 0; j < chunk.connectors.size(); ++j) {
                if (stats.survivors >= options.target_survivors) break;
                ++stats.runs;
                if (chunk.aborted[j]) {
                    ++stats.aborted;
                    continue;
                }
                const std::uint64_t c = chunk.connectors[j];
                if (c == 0) continue;
                ++stats.survivors;
                ++stats.histogram[std::min<std::uint64_t>(c, kHistogram - 1)];
                (c == 1 ? stats.one : stats.two_plus) += 1;
            }
        }
        begin = end;
    }
    return stats;
}

int connector_level(int n, double alpha, double mu, double eps) {
    if (n < 1) return 0;
    const double m = (1.0 + eps) / ((alpha - 1.0) * std::log(mu)) * std::log(static_cast<double>(n));
    return std::clamp(static_cast<int>(std::floor(m)), 0, n);
}

int connector_level(int n, const ModelConstants& constants) {
    return connector_level(n, constants.alpha, constants.mu, (constants.alpha - 1.0) / 2.0);
}

double subsequence_exponent(double alpha) {
    const double root = std::sqrt(alpha);
    return (root + 1.0) / (root - 1.0);
}

std::uint64_t subsequence_scale(std::uint64_t k, double alpha) {
    return static_cast<std::uint64_t>(std::llround(std::pow(static_cast<double>(k), subsequence_exponent(alpha))));
}

int interpolated_connector_level(int n, const ModelConstants& constants) {
    if (n < 1) return 0;
    std::uint64_t k = 1;
    while (subsequence_scale(k + 1, constants.alpha) <= static_cast<std::uint64_t>(n)) ++k;
    const auto n_k = static_cast<int>(subsequence_scale(k, constants.alpha));
    return connector_level(n_k, constants);
}

void write_trace_record(std::ostream& out, std::uint64_t run_index, const ClusterTrace& trace,
                        const std::vector<int>& levels) {
    nlohmann::json y = nlohmann::json::object();
    for (int level : levels)
        if (level >= 0 && level <= trace.n_max) y[std::to_string(level)] = trace.at(level);
    out << nlohmann::json{{"run_index", run_index}, {"survival", trace.survival}, {"Y", y}}.dump() << '\n';
}

}  // namespace gwperc

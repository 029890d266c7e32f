#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include "gwperc/alias_table.hpp"
#include "gwperc/rng.hpp"
#include "gwperc/tree_store.hpp"

namespace gwperc {

/// Root-cluster level counts Y_0..Y_{n_max} of one percolation run.
struct ClusterTrace {
    int n_max = 0;
    std::vector<std::uint64_t> counts;
    bool survival = false;  // Y_{n_max} > 0
    /// Cluster vertices at the levels requested in RunOptions (quenched only).
    std::map<int, std::vector<NodeRef>> level_sets;

    /// Last level with a nonzero count.
    int height() const noexcept;
    std::uint64_t at(int level) const { return counts.at(static_cast<std::size_t>(level)); }
};

struct RunOptions {
    std::vector<int> record_levels;
    /// Cluster vertices expanded per run before RunAborted is raised.
    std::uint64_t node_cap = 10'000'000;
};

/// Percolation stream for run `run_index` on tree `tree_index`. Disjoint from
/// every tree stream by domain separation.
RandomStream run_stream(std::uint64_t master_seed, std::uint64_t tree_index, std::uint64_t run_index);
/// Stream for an annealed run (fresh tree per run).
RandomStream annealed_stream(std::uint64_t master_seed, std::uint64_t run_index);

/// Critical (retention 1/mu) Bernoulli edge percolation on the fixed tree,
/// explored breadth-first up to level n_max. Reusable scratch buffers make
/// repeated runs allocation-free.
class QuenchedRunner {
public:
    explicit QuenchedRunner(const TreeStore& store, RunOptions options = {});

    ClusterTrace run(int n_max, RandomStream& rng);

    /// Same exploration, writing only level counts into `counts` (resized to
    /// n_max + 1). Returns the height.
    int run_counts(int n_max, RandomStream& rng, std::vector<std::uint64_t>& counts);

private:
    const TreeStore* store_;
    RunOptions options_;
    Coin coin_;
    std::vector<NodeKey> frontier_;
    std::vector<NodeKey> next_;
};

ClusterTrace run_cluster(const TreeStore& store, int n_max, RandomStream& rng, const RunOptions& options = {});

/// Annealed run: offspring counts are drawn fresh, so the cluster is a
/// critical GW process with Binomial(X, 1/mu) offspring. Level sets are not
/// recorded in this mode (there is no fixed tree to name vertices in).
class AnnealedRunner {
public:
    static constexpr std::uint64_t kSmallThinning = 65;

    explicit AnnealedRunner(const OffspringSpec& spec, RunOptions options = {});

    ClusterTrace run(int n_max, RandomStream& rng);
    int run_counts(int n_max, RandomStream& rng, std::vector<std::uint64_t>& counts);

private:
    std::uint64_t thinned(std::uint64_t children, RandomStream& rng) const;

    OffspringSpec spec_;
    RunOptions options_;
    double p_c_;
    /// binomial_[x] samples Binomial(x, p_c) for x < kSmallThinning.
    std::vector<AliasTable> binomial_;
};

ClusterTrace run_annealed(const OffspringSpec& spec, int n_max, RandomStream& rng,
                          const RunOptions& options = {});

struct ConnectorStats {
    int n = 0;
    int m = 0;
    std::uint64_t runs = 0;       // runs performed
    std::uint64_t survivors = 0;  // runs with Y_n > 0 that were classified
    std::uint64_t aborted = 0;
    std::uint64_t zero = 0;
    std::uint64_t one = 0;
    std::uint64_t two_plus = 0;
    /// histogram[c] = surviving runs with exactly c connectors (c < size).
    std::vector<std::uint64_t> histogram;

    double prob_zero() const noexcept;
    double prob_one() const noexcept;
    double prob_two_plus() const noexcept;
};

/// Counts, for one run, the level-m cluster vertices with an open
/// monotone path to level n. Returns 0 when the cluster dies before n.
std::uint64_t count_connectors(const TreeStore& store, int n, int m, RandomStream& rng, std::uint64_t node_cap,
                               std::vector<std::pair<NodeKey, std::uint32_t>>& scratch_a,
                               std::vector<std::pair<NodeKey, std::uint32_t>>& scratch_b);

struct ConnectorOptions {
    std::uint64_t target_survivors = 100'000;
    std::uint64_t max_runs = 100'000'000;
    std::uint64_t master_seed = 0;
    std::uint64_t tree_index = 0;
    unsigned threads = 1;
    std::uint64_t node_cap = 10'000'000;
};

/// Runs percolation until `target_survivors` runs reach level n, and
/// classifies each survivor by its number of level-m connectors.
ConnectorStats connector_diagnostic(const TreeStore& store, int n, int m, const ConnectorOptions& options);

/// Connector level m(n) = floor((1 + eps) / ((alpha - 1) log mu) * log n),
/// with eps = (alpha - 1) / 2 by default.
int connector_level(int n, double alpha, double mu, double eps);
int connector_level(int n, const ModelConstants& constants);

/// Subsequence exponent A = (sqrt(alpha) + 1) / (sqrt(alpha) - 1).
double subsequence_exponent(double alpha);
/// n_k = round(k^A), k >= 1.
std::uint64_t subsequence_scale(std::uint64_t k, double alpha);
/// ell_n = m(n_k) for n in [n_k, n_{k+1}).
int interpolated_connector_level(int n, const ModelConstants& constants);

/// One line-delimited JSON record: run_index, survival, and Y at `levels`.
void write_trace_record(std::ostream& out, std::uint64_t run_index, const ClusterTrace& trace,
                        const std::vector<int>& levels);

}  // namespace gwperc

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "gwperc/percolation.hpp"

namespace gwperc {

inline constexpr double kConfidence = 0.99;
inline constexpr int kBootstrapReplicates = 1000;
inline constexpr std::uint64_t kMinSurvivors = 100;
inline constexpr std::uint64_t kMinBinCount = 200;
inline constexpr double kBinHalfWidth = 0.25;

/// Two-sided standard normal quantile for the given confidence.
double normal_quantile(double confidence);

struct ProportionEstimate {
    std::uint64_t successes = 0;
    std::uint64_t trials = 0;
    double estimate = 0.0;
    double std_error = 0.0;
    double ci_lo = 0.0;  // Wilson score interval
    double ci_hi = 0.0;

    nlohmann::json to_json() const;
};

/// Wilson score interval. Throws EmptyBatch when trials == 0.
ProportionEstimate wilson_interval(std::uint64_t successes, std::uint64_t trials, double confidence = kConfidence);

/// Running count of survivors. Merging is plain addition.
class SurvivalSummary {
public:
    void add(bool survived) noexcept {
        ++runs_;
        survived_ += survived ? 1 : 0;
    }
    void merge(const SurvivalSummary& other) noexcept {
        runs_ += other.runs_;
        survived_ += other.survived_;
    }
    std::uint64_t runs() const noexcept { return runs_; }
    std::uint64_t survived() const noexcept { return survived_; }
    ProportionEstimate estimate(double confidence = kConfidence) const;

private:
    std::uint64_t runs_ = 0;
    std::uint64_t survived_ = 0;
};

/// Fraction of traces with Y_n > 0 and its Wilson interval. Throws
/// EmptyBatch for no traces and InvalidLevels if a trace stops before n.
ProportionEstimate survival_estimate(const std::vector<ClusterTrace>& traces, int n);

/// Survival fractions at several levels from the same runs.
class SurvivalCurve {
public:
    explicit SurvivalCurve(std::vector<int> levels);

    void add(const ClusterTrace& trace);
    void add_counts(const std::vector<std::uint64_t>& counts);
    void merge(const SurvivalCurve& other);

    const std::vector<int>& levels() const noexcept { return levels_; }
    const SurvivalSummary& at(std::size_t i) const { return summaries_.at(i); }

private:
    std::vector<int> levels_;
    std::vector<SurvivalSummary> summaries_;
};

struct TransformPoint {
    double theta = 0.0;
    double estimate = 0.0;
    double std_error = 0.0;
    double ci_lo = 0.0;  // bootstrap percentile interval
    double ci_hi = 0.0;

    nlohmann::json to_json() const;
};

/// Streaming empirical Laplace transform E[exp(-theta X)] over a theta grid,
/// with the mean of X and a Poisson bootstrap: every observation carries,
/// for each replicate, a Poisson(1) weight drawn from a stream keyed by its
/// run index. Memory is constant in the number of observations and merging
/// summaries of disjoint runs equals summarizing their union.
class LaplaceSummary {
public:
    LaplaceSummary(std::vector<double> theta, std::uint64_t bootstrap_seed,
                   int replicates = kBootstrapReplicates);

    /// Adds observation X = value from run `run_index`. Conditioning (for
    /// example on survival) is the caller's filter.
    void add(std::uint64_t run_index, double value);
    void merge(const LaplaceSummary& other);

    const std::vector<double>& theta() const noexcept { return theta_; }
    std::uint64_t count() const noexcept { return count_; }
    double mean() const;
    double mean_std_error() const;

    /// Per-theta point estimates with percentile bootstrap intervals at
    /// the given confidence. Throws InsufficientSurvivors below min_count.
    std::vector<TransformPoint> estimate(std::uint64_t min_count = kMinSurvivors,
                                         double confidence = kConfidence) const;

private:
    std::vector<double> theta_;
    std::uint64_t seed_;
    int replicates_;
    std::uint64_t count_ = 0;
    double sum_ = 0.0;
    double sum_sq_ = 0.0;
    std::vector<double> sum_f_;
    std::vector<double> sum_f_sq_;
    std::vector<double> boot_w_;
    std::vector<double> boot_wf_;  // replicate-major: [r * theta + j]
    std::vector<double> scratch_;
};

/// Conditional transform of scale * Y_n over surviving traces.
std::vector<TransformPoint> laplace_estimate(const std::vector<ClusterTrace>& traces, int n,
                                             const std::vector<double>& theta, double scale,
                                             std::uint64_t bootstrap_seed = 0);

/// Pairs (x, y) = (scaled Y_n, scaled Y_{2n}) of surviving runs, in run
/// order. Binning needs the batch median, so the pairs are kept.
class TransitionSample {
public:
    void add(double x, double y);
    void merge(const TransitionSample& other);

    std::size_t size() const noexcept { return x_.size(); }
    const std::vector<double>& x() const noexcept { return x_; }
    const std::vector<double>& y() const noexcept { return y_; }
    double median_x() const;

private:
    std::vector<double> x_;
    std::vector<double> y_;
};

struct BinEstimate {
    double center = 0.0;
    double half_width = 0.0;
    std::uint64_t count = 0;
    double mean_x = 0.0;
    /// Dropped bins have fewer than the minimum count and no transform.
    bool dropped = false;
    std::vector<TransformPoint> transform;

    nlohmann::json to_json() const;
};

/// For each bin [a - f a, a + f a] the empirical transform of y among pairs
/// with x in the bin. An empty `centers` means one bin at the median x.
std::vector<BinEstimate> binned_transition_estimate(const TransitionSample& sample, const std::vector<double>& theta,
                                                    std::vector<double> centers = {},
                                                    double half_width_fraction = kBinHalfWidth,
                                                    std::uint64_t min_count = kMinBinCount,
                                                    std::uint64_t bootstrap_seed = 0);

/// Same, building the sample from traces recording levels n and 2n; runs
/// with Y_n = 0 are left out.
std::vector<BinEstimate> binned_transition_estimate(const std::vector<ClusterTrace>& traces, int n,
                                                    const std::vector<double>& theta, double scale,
                                                    std::vector<double> centers = {},
                                                    double half_width_fraction = kBinHalfWidth,
                                                    std::uint64_t min_count = kMinBinCount,
                                                    std::uint64_t bootstrap_seed = 0);

}  // namespace gwperc

#include "gwperc/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "gwperc/errors.hpp"
#include "gwperc/rng.hpp"

namespace gwperc {

namespace {

// Thresholds t_k = 2^64 P(Poisson(1) <= k); a draw is #{k : t_k <= word}.
// Mass beyond the table is below the 2^-64 resolution of the word.
constexpr std::size_t kPoissonTable = 24;

std::array<std::uint64_t, kPoissonTable> poisson_one_thresholds() {
    std::array<std::uint64_t, kPoissonTable> t{};
    double term = std::exp(-1.0);
    double cdf = 0.0;
    for (std::size_t k = 0; k < kPoissonTable; ++k) {
        cdf += term;
        term /= static_cast<double>(k + 1);
        t[k] = cdf >= 1.0 ? ~std::uint64_t{0} : static_cast<std::uint64_t>(std::ldexp(cdf, 64));
    }
    return t;
}

const std::array<std::uint64_t, kPoissonTable>& poisson_thresholds() {
    static const auto table = poisson_one_thresholds();
    return table;
}

double percentile(std::vector<double>& values, double q) {
    if (values.empty()) return 0.0;
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    double b = a;
    if (hi != lo) b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + (pos - static_cast<double>(lo)) * (b - a);
}

void check_confidence(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) throw DomainError("confidence must be in (0, 1)");
}

}  // namespace

double normal_quantile(double confidence) {
    check_confidence(confidence);
    const boost::math::normal_distribution<double> normal;
    return boost::math::quantile(normal, 0.5 + 0.5 * confidence);
}

nlohmann::json ProportionEstimate::to_json() const {
    return {{"successes", successes}, {"trials", trials}, {"estimate", estimate},
            {"std_error", std_error}, {"ci_lo", ci_lo},     {"ci_hi", ci_hi}};
}

ProportionEstimate wilson_interval(std::uint64_t successes, std::uint64_t trials, double confidence) {
    if (trials == 0) throw EmptyBatch("no runs to estimate a proportion from");
    if (successes > trials) throw DomainError("more successes than trials");
    const double z = normal_quantile(confidence);
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));

    ProportionEstimate out;
    out.successes = successes;
    out.trials = trials;
    out.estimate = p;
    out.std_error = std::sqrt(p * (1.0 - p) / n);
    out.ci_lo = successes == 0 ? 0.0 : std::clamp(center - half, 0.0, p);
    out.ci_hi = successes == trials ? 1.0 : std::clamp(center + half, p, 1.0);
    return out;
}

ProportionEstimate SurvivalSummary::estimate(double confidence) const {
    return wilson_interval(survived_, runs_, confidence);
}

ProportionEstimate survival_estimate(const std::vector<ClusterTrace>& traces, int n) {
    if (traces.empty()) throw EmptyBatch("no traces");
    if (n < 0) throw InvalidLevels("level must be >= 0");
    SurvivalSummary summary;
    for (const auto& trace : traces) {
        if (trace.n_max < n) throw InvalidLevels("trace stops at level " + std::to_string(trace.n_max));
        summary.add(trace.at(n) > 0);
    }
    return summary.estimate();
}

SurvivalCurve::SurvivalCurve(std::vector<int> levels) : levels_(std::move(levels)), summaries_(levels_.size()) {
    for (int level : levels_)
        if (level < 0) throw InvalidLevels("levels must be >= 0");
}

void SurvivalCurve::add(const ClusterTrace& trace) { add_counts(trace.counts); }

void SurvivalCurve::add_counts(const std::vector<std::uint64_t>& counts) {
    for (std::size_t i = 0; i < levels_.size(); ++i) {
        const auto level = static_cast<std::size_t>(levels_[i]);
        if (level >= counts.size()) throw InvalidLevels("trace stops before level " + std::to_string(level));
        summaries_[i].add(counts[level] > 0);
    }
}

void SurvivalCurve::merge(const SurvivalCurve& other) {
    if (other.levels_ != levels_) throw DomainError("merging survival curves over different levels");
    for (std::size_t i = 0; i < summaries_.size(); ++i) summaries_[i].merge(other.summaries_[i]);
}

nlohmann::json TransformPoint::to_json() const {
    return {{"theta", theta}, {"estimate", estimate}, {"std_error", std_error}, {"ci_lo", ci_lo}, {"ci_hi", ci_hi}};
}

LaplaceSummary::LaplaceSummary(std::vector<double> theta, std::uint64_t bootstrap_seed, int replicates)
    : theta_(std::move(theta)), seed_(hash_combine(bootstrap_seed, domain::bootstrap)), replicates_(replicates) {
    if (replicates_ < 1) throw DomainError("need at least one bootstrap replicate");
    for (double t : theta_)
        if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("theta must be finite and >= 0");
    sum_f_.assign(theta_.size(), 0.0);
    sum_f_sq_.assign(theta_.size(), 0.0);
    boot_w_.assign(static_cast<std::size_t>(replicates_), 0.0);
    boot_wf_.assign(static_cast<std::size_t>(replicates_) * theta_.size(), 0.0);
    scratch_.resize(theta_.size());
}

void LaplaceSummary::add(std::uint64_t run_index, double value) {
    if (!(value >= 0.0) || !std::isfinite(value)) throw DomainError("observations must be finite and >= 0");
    ++count_;
    sum_ += value;
    sum_sq_ += value * value;
    const std::size_t k = theta_.size();
    for (std::size_t j = 0; j < k; ++j) {
        scratch_[j] = std::exp(-theta_[j] * value);
        sum_f_[j] += scratch_[j];
        sum_f_sq_[j] += scratch_[j] * scratch_[j];
    }
    const auto& table = poisson_thresholds();
    RandomStream rng(seed_, run_index);
    for (int r = 0; r < replicates_; ++r) {
        const std::uint64_t word = rng.next_u64();
        unsigned w = 0;
        for (std::uint64_t t : table) w += t <= word;
        if (w == 0) continue;
        const double weight = w;
        boot_w_[static_cast<std::size_t>(r)] += weight;
        double* row = boot_wf_.data() + static_cast<std::size_t>(r) * k;
        for (std::size_t j = 0; j < k; ++j) row[j] += weight * scratch_[j];
    }
}

void LaplaceSummary::merge(const LaplaceSummary& other) {
    if (other.theta_ != theta_ || other.seed_ != seed_ || other.replicates_ != replicates_)
        throw DomainError("merging incompatible Laplace summaries");
    count_ += other.count_;
    sum_ += other.sum_;
    sum_sq_ += other.sum_sq_;
    for (std::size_t j = 0; j < theta_.size(); ++j) {
        sum_f_[j] += other.sum_f_[j];
        sum_f_sq_[j] += other.sum_f_sq_[j];
    }
    for (std::size_t i = 0; i < boot_w_.size(); ++i) boot_w_[i] += other.boot_w_[i];
    for (std::size_t i = 0; i < boot_wf_.size(); ++i) boot_wf_[i] += other.boot_wf_[i];
}

double LaplaceSummary::mean() const {
    if (count_ == 0) throw EmptyBatch("no observations");
    return sum_ / static_cast<double>(count_);
}

double LaplaceSummary::mean_std_error() const {
    if (count_ < 2) throw InsufficientSurvivors("need two observations for a standard error");
    const double n = static_cast<double>(count_);
    const double m = sum_ / n;
    const double var = std::max(0.0, sum_sq_ / n - m * m) * n / (n - 1.0);
    return std::sqrt(var / n);
}

std::vector<TransformPoint> LaplaceSummary::estimate(std::uint64_t min_count, double confidence) const {
    check_confidence(confidence);
    if (count_ < std::max<std::uint64_t>(min_count, 1))
        throw InsufficientSurvivors(std::to_string(count_) + " observations, need " + std::to_string(min_count));
    const double n = static_cast<double>(count_);
    const std::size_t k = theta_.size();
    std::vector<TransformPoint> out;
    out.reserve(k);
    std::vector<double> replicate;
    replicate.reserve(static_cast<std::size_t>(replicates_));
    for (std::size_t j = 0; j < k; ++j) {
        TransformPoint point;
        point.theta = theta_[j];
        point.estimate = sum_f_[j] / n;
        const double var = std::max(0.0, sum_f_sq_[j] / n - point.estimate * point.estimate);
        point.std_error = n > 1.0 ? std::sqrt(var / (n - 1.0)) : 0.0;
        replicate.clear();
        for (int r = 0; r < replicates_; ++r) {
            const double w = boot_w_[static_cast<std::size_t>(r)];
            if (w > 0.0) replicate.push_back(boot_wf_[static_cast<std::size_t>(r) * k + j] / w);
        }
        const double tail = 0.5 * (1.0 - confidence);
        point.ci_lo = std::min(percentile(replicate, tail), point.estimate);
        point.ci_hi = std::max(percentile(replicate, 1.0 - tail), point.estimate);
        if (replicate.empty()) point.ci_lo = point.ci_hi = point.estimate;
        out.push_back(point);
    }
    return out;
}

std::vector<TransformPoint> laplace_estimate(const std::vector<ClusterTrace>& traces, int n,
                                             const std::vector<double>& theta, double scale,
                                             std::uint64_t bootstrap_seed) {
    if (traces.empty()) throw EmptyBatch("no traces");
    if (!(scale > 0.0)) throw DomainError("scale must be > 0");
    LaplaceSummary summary(theta, bootstrap_seed);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        if (traces[i].n_max < n) throw InvalidLevels("trace stops at level " + std::to_string(traces[i].n_max));
        const std::uint64_t y = traces[i].at(n);
        if (y > 0) summary.add(i, scale * static_cast<double>(y));
    }
    return summary.estimate();
}

void TransitionSample::add(double x, double y) {
    if (!(x >= 0.0) || !(y >= 0.0) || !std::isfinite(x) || !std::isfinite(y))
        throw DomainError("transition pairs must be finite and >= 0");
    x_.push_back(x);
    y_.push_back(y);
}

void TransitionSample::merge(const TransitionSample& other) {
    x_.insert(x_.end(), other.x_.begin(), other.x_.end());
    y_.insert(y_.end(), other.y_.begin(), other.y_.end());
}

double TransitionSample::median_x() const {
    if (x_.empty()) throw EmptyBatch("no transition pairs");
    std::vector<double> copy = x_;
    return percentile(copy, 0.5);
}

nlohmann::json BinEstimate::to_json() const {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : transform) points.push_back(p.to_json());
    return {{"center", center}, {"half_width", half_width}, {"count", count},
            {"mean_x", mean_x}, {"dropped", dropped},       {"transform", points}};
}

std::vector<BinEstimate> binned_transition_estimate(const TransitionSample& sample, const std::vector<double>& theta,
                                                    std::vector<double> centers, double half_width_fraction,
                                                    std::uint64_t min_count, std::uint64_t bootstrap_seed) {
    if (!(half_width_fraction > 0.0)) throw DomainError("bin half-width fraction must be > 0");
    if (centers.empty()) centers.push_back(sample.median_x());
    std::vector<BinEstimate> out;
    for (std::size_t b = 0; b < centers.size(); ++b) {
        BinEstimate bin;
        bin.center = centers[b];
        bin.half_width = half_width_fraction * centers[b];
        LaplaceSummary summary(theta, hash_combine(bootstrap_seed, b));
        double sum_x = 0.0;
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const double x = sample.x()[i];
            if (x <= 0.0 || std::abs(x - bin.center) > bin.half_width) continue;
            sum_x += x;
            summary.add(i, sample.y()[i]);
        }
        bin.count = summary.count();
        bin.mean_x = bin.count > 0 ? sum_x / static_cast<double>(bin.count) : 0.0;
        if (bin.count < std::max<std::uint64_t>(min_count, 1)) {
            bin.dropped = true;
        } else {
            bin.transform = summary.estimate(min_count);
        }
        out.push_back(std::move(bin));
    }
    return out;
}

std::vector<BinEstimate> binned_transition_estimate(const std::vector<ClusterTrace>& traces, int n,
                                                    const std::vector<double>& theta, double scale,
                                                    std::vector<double> centers, double half_width_fraction,
                                                    std::uint64_t min_count, std::uint64_t bootstrap_seed) {
    if (traces.empty()) throw EmptyBatch("no traces");
    TransitionSample sample;
    for (const auto& trace : traces) {
        if (trace.n_max < 2 * n) throw InvalidLevels("traces must reach level 2n");
        const std::uint64_t y = trace.at(n);
        if (y > 0) sample.add(scale * static_cast<double>(y), scale * static_cast<double>(trace.at(2 * n)));
    }
    if (sample.size() == 0 && centers.empty()) {
        return {BinEstimate{0.0, 0.0, 0, 0.0, true, {}}};
    }
    return binned_transition_estimate(sample, theta, std::move(centers), half_width_fraction, min_count,
                                      bootstrap_seed);
}

}  // namespace gwperc

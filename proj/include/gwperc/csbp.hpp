#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "gwperc/limit_laws.hpp"
#include "gwperc/rng.hpp"

namespace gwperc {

/// Exact transitions of the alpha = 2 CSBP limit. Over a step dt from mass
/// a, the new mass is a compound Poisson sum: N ~ Poisson(a C / dt) jumps,
/// each Exp(rate C / dt). Throws UnsupportedRegime for stable laws.
class CsbpSampler {
public:
    explicit CsbpSampler(const ModelConstants& constants);

    const ModelConstants& constants() const noexcept { return constants_; }

    double step(double a, double dt, RandomStream& rng) const;

    /// Masses at each time of a strictly increasing grid, starting from a0
    /// at time 0. A leading 0 in the grid returns a0 for it.
    std::vector<double> path(double a0, const std::vector<double>& times, RandomStream& rng) const;

private:
    ModelConstants constants_;
};

double step_alpha2(const ModelConstants& constants, double a, double dt, RandomStream& rng);
std::vector<double> path_alpha2(const ModelConstants& constants, double a0, const std::vector<double>& times,
                                RandomStream& rng);

/// Stream for CSBP path `index`.
RandomStream csbp_stream(std::uint64_t master_seed, std::uint64_t index);

/// CSV with header `time,mass`.
void write_path_csv(std::ostream& out, const std::vector<double>& times, const std::vector<double>& masses);

/// Monte Carlo statistic with its standard error and the value it is
/// compared to.
struct CheckedMean {
    double estimate = 0.0;
    double std_error = 0.0;
    double target = 0.0;

    /// |estimate - target| / std_error (0 when both agree exactly).
    double z() const noexcept;
};

struct CsbpSelfCheck {
    double a = 1.0;
    double dt = 1.0;
    std::uint64_t paths = 0;
    std::vector<double> theta;
    /// Mean mass after one step and after two steps (target a).
    CheckedMean mean_one_step;
    CheckedMean mean_two_step;
    /// Empirical transform after one step vs the closed-form transition.
    std::vector<CheckedMean> lt_one_step;
    /// Two steps of dt vs one step of 2 dt, as the difference of the two
    /// empirical transforms (target 0).
    std::vector<CheckedMean> lt_two_vs_one;
    /// Extinction frequency by 2 dt vs exp(-a C / (2 dt)).
    CheckedMean extinction;

    double max_z() const noexcept;
};

/// Runs `paths` independent two-step paths (dt, dt) and one-step paths
/// (2 dt) from mass a and compares them with the closed forms.
CsbpSelfCheck csbp_self_check(const ModelConstants& constants, double a, double dt, std::uint64_t paths,
                              const std::vector<double>& theta, std::uint64_t master_seed, unsigned threads);

}  // namespace gwperc

#pragma once

#include "gwperc/offspring.hpp"

namespace gwperc {

/// Closed-form limit objects built from the model constants: the conditioned
/// limit transform phi, the CSBP log-Laplace flow u_t, the branching
/// mechanism psi, the CSBP transition transform, and the transform of the
/// size-biased limit Y*.
///
/// Every quantity is written in terms of x = theta / C_alpha and
/// y = x^{alpha-1}, using x = y^beta, so that the large-argument regime is
/// evaluated through log1p/expm1 rather than by cancellation.
class LimitLaw {
public:
    explicit LimitLaw(const ModelConstants& constants);

    const ModelConstants& constants() const noexcept { return constants_; }

    /// E[exp(-theta Y)] = 1 - (theta/C)(1 + (theta/C)^{alpha-1})^{-beta}.
    double phi(double theta) const;
    /// 1 - phi(theta), evaluated without cancellation.
    double one_minus_phi(double theta) const;
    /// Analytic derivative phi'(theta) = -C^{-1} (1 + (theta/C)^{alpha-1})^{-beta-1}.
    double phi_prime(double theta) const;

    /// u_t(lambda) = lambda (1 + (lambda/C)^{alpha-1} t)^{-beta}.
    double u(double t, double lambda) const;
    /// psi(lambda) = beta C^{1-alpha} lambda^alpha.
    double psi(double lambda) const;

    /// exp{-a C dt^{-beta} (1 - phi(theta dt^beta))}; equals exp{-a u(dt, theta)}.
    double csbp_transition_lt(double a, double dt, double theta) const;
    /// Same quantity via exp{-a u(dt, theta)}.
    double csbp_transition_lt_flow(double a, double dt, double theta) const;
    /// exp{-a C dt^{-beta}}: mass of extinction by time dt.
    double csbp_extinction(double a, double dt) const;

    /// E[exp(-theta Y*)] = -C phi'(theta).
    double size_biased_lt(double theta) const;

    /// E[Y] = 1 / C_alpha.
    double mean() const noexcept { return 1.0 / constants_.c_alpha; }
    /// E[Y*] = E[Y^2] / E[Y]; finite only in the finite-variance case (2 / C).
    double size_biased_mean() const;

private:
    // log(x) - beta log1p(y) at argument theta, i.e. log(C^{-1} u_1(theta)).
    double log_scaled_u1(double theta) const;

    ModelConstants constants_;
};

}  // namespace gwperc

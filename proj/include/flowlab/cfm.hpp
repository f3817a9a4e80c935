#pragma once

#include <vector>

#include "flowlab/mixture.hpp"

namespace flowlab {

/// Time-dependent operations refuse t > 1 - kTimeEpsilon (the 1/(1-t) singularity).
inline constexpr double kTimeEpsilon = 1e-3;
inline constexpr double kMaxTime = 1.0 - kTimeEpsilon;

/// One Gaussian component of the time-t marginal, indexed by the
/// (prior component j, target component k) pair that produced it.
struct PathComponent {
    std::size_t prior_index = 0;
    std::size_t target_index = 0;
    double weight = 0.0;
    Vector mean;               // t mu1_k + (1-t) mu0_j
    double variance = 0.0;     // s^2 = t^2 sigma1_k^2 + (1-t)^2 sigma0_j^2
    double target_gain = 0.0;  // t sigma1_k^2 / s^2     (Cov(x1, xt) / Var(xt))
    double prior_gain = 0.0;   // (1-t) sigma0_j^2 / s^2 (Cov(x0, xt) / Var(xt))
};

/// Conditional-path schedule at time t for a given prior/target pair.
struct PathParams {
    double t = 0.0;
    std::vector<PathComponent> components;
};

PathParams path_params(double t, const GaussianMixture& prior, const GaussianMixture& target);

/// Posterior over the target given x_t = x.
struct PosteriorSummary {
    Vector alpha;                        // per target component
    std::vector<Vector> component_means; // E[x1 | x_t = x, component k]
    Vector mean;                         // E[x1 | x_t = x]
};

/// Posterior and velocity queries at one fixed t, with the path precomputed.
/// Used for batch evaluation where the same t is queried many times.
class FixedTimePosterior {
public:
    FixedTimePosterior(double t, const GaussianMixture& prior, const GaussianMixture& target);

    double t() const { return params_.t; }
    const PathParams& params() const { return params_; }
    const GaussianMixture& marginal() const { return marginal_; }

    PosteriorSummary at(const Vector& x) const;
    /// (E[x1 | x_t = x] - x) / (1-t), without the time-range check.
    Vector velocity(const Vector& x) const;
    /// Row-wise velocity for a batch of points.
    Points velocities(const Points& x) const;

private:
    GaussianMixture prior_;
    GaussianMixture target_;
    PathParams params_;
    GaussianMixture marginal_;
};

/// x_t = t x1 + (1-t) x0.
Vector conditional_sample(double t, const Vector& x0, const Vector& x1);

/// (x1 - x) / (1-t). Throws SingularityError for t > 1 - kTimeEpsilon.
Vector conditional_velocity(double t, const Vector& x, const Vector& x1);

/// Time-t marginal of the Gaussian conditional path. With a single centered
/// prior this is sum_k w_k N(t mu_k, (t^2 sigma1_k^2 + (1-t)^2 sigma0^2) I);
/// a mixture prior yields one component per (prior, target) pair.
GaussianMixture marginal_at(double t, const GaussianMixture& prior, const GaussianMixture& target);

/// Exact Gaussian-conjugacy posterior. Defined on t in [0, 1).
PosteriorSummary posterior(double t, const Vector& x, const GaussianMixture& prior,
                           const GaussianMixture& target);

/// Marginal (FM-optimal) velocity E[x1 - x0 | x_t = x] = (E[x1 | x_t = x] - x) / (1-t).
/// Defined on t in [0, 1 - kTimeEpsilon].
Vector optimal_velocity(double t, const Vector& x, const GaussianMixture& prior,
                        const GaussianMixture& target);

/// Hyperplane where both modes of a symmetric two-component target are equally likely.
struct DecisionBoundary {
    Vector point;   // midpoint of the two time-t component means
    Vector normal;  // unit vector pointing from mode 2 toward mode 1
};

/// Throws UnsupportedConfiguration unless the target has two equally weighted
/// components of equal sigma and the prior is a single Gaussian.
void require_symmetric_bimodal(const GaussianMixture& prior, const GaussianMixture& target);

DecisionBoundary decision_boundary(double t, const GaussianMixture& prior,
                                   const GaussianMixture& target);

/// Idealized velocity step across the boundary: |m1(x,t) - m2(x,t)| / (1-t),
/// the saturation value of the posterior switch. boundary_point must lie on H_t.
double jump_magnitude(double t, const Vector& boundary_point, const GaussianMixture& prior,
                      const GaussianMixture& target);

/// Mode-shorthand amplitude |mu1 - mu2| / (1-t): the sigma1 -> 0 limit of jump_magnitude.
double mode_shorthand_jump(double t, const GaussianMixture& target);

/// Mode-averaging reference field (m1 + m2) / (2(1-t)) - x / (1-t).
Vector averaged_velocity(double t, const Vector& x, const GaussianMixture& prior,
                         const GaussianMixture& target);

}  // namespace flowlab

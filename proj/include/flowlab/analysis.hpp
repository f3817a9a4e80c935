#pragma once

#include <cstdint>
#include <vector>

#include "flowlab/flow_sim.hpp"
#include "flowlab/mixture.hpp"

namespace flowlab {

/// Two-sided velocity differences across the decision boundary H_t.
struct JumpProfile {
    double t = 0.0;
    Vector point;   // on H_t
    Vector normal;  // unit, from mode 2 toward mode 1
    std::vector<double> offsets;
    std::vector<Vector> v_plus;   // field at point + delta * normal
    std::vector<Vector> v_minus;  // field at point - delta * normal
    std::vector<double> jump;     // |v_plus - v_minus|
    std::vector<double> alpha_plus;   // posterior of mode 1 at the + probe
    std::vector<double> alpha_minus;  // posterior of mode 1 at the - probe
    /// Part of the oracle difference due to the posterior switch alone,
    /// (alpha_plus - alpha_minus) * amplitude. Bounded by amplitude.
    std::vector<double> switching;
    double amplitude = 0.0;       // jump_magnitude(t)
    double mode_shorthand = 0.0;  // |mu1 - mu2| / (1-t)
};

/// Evaluates `field` at boundary_point +/- delta * n for each delta > 0.
JumpProfile profile_jump(const VelocityField& field, const GaussianMixture& prior,
                         const GaussianMixture& target, double t,
                         const std::vector<double>& offsets);

/// Ratio of network to oracle two-sided jump at the offset `delta`
/// (which must appear in both profiles).
double underestimation_ratio(const JumpProfile& network, const JumpProfile& oracle, double delta);

struct PosteriorPoint {
    double offset = 0.0;
    double alpha = 0.0;
};

/// Posterior of mode 1 at n evenly spaced signed offsets in [-halfwidth, halfwidth]
/// along the boundary normal.
std::vector<PosteriorPoint> posterior_profile(double t, const GaussianMixture& prior,
                                              const GaussianMixture& target, std::size_t n,
                                              double halfwidth);

/// Largest finite-difference slope d alpha / d offset in a profile.
double max_slope(const std::vector<PosteriorPoint>& profile);

struct BandError {
    double t = 0.0;
    double error = 0.0;  // mean |v(x,t) - v*(x,t)|^2 over the band
    std::size_t samples = 0;
};

/// Samples from p_t restricted to the slab |<x - boundary, n>| <= halfwidth.
/// The normal coordinate is drawn by rejection from a uniform proposal on the
/// slab; the orthogonal coordinates stay Gaussian.
Points sample_band(double t, const GaussianMixture& prior, const GaussianMixture& target,
                   double halfwidth, std::size_t n, Rng& rng);

/// Mean squared deviation of `field` from the oracle over band samples at each t.
std::vector<BandError> error_band_scan(const VelocityField& field, const GaussianMixture& prior,
                                       const GaussianMixture& target,
                                       const std::vector<double>& times, double halfwidth,
                                       std::size_t samples, const Rng& rng);

struct ModeMetrics {
    std::size_t count = 0;
    std::vector<double> mode_fractions;  // within mode_radius of each target mean
    double covered_fraction = 0.0;       // within mode_radius of any mean
    double midpoint_mass = 0.0;          // within midpoint_radius of the mode midpoint
    Vector mean;
    Vector stddev;
};

ModeMetrics mode_metrics(const Points& endpoints, const GaussianMixture& target,
                         double mode_radius = 1.5, double midpoint_radius = 1.0);

struct GridSpec {
    double lo = -5.0;
    double hi = 5.0;
    int n = 61;
};

struct ResidualStats {
    double max_abs = 0.0;
    double mean_abs = 0.0;
    double max_density = 0.0;
    double bound = 0.0;  // tolerance * max_density
    std::size_t points = 0;

    bool within_bound() const { return max_abs <= bound; }
};

/// Central-difference residual of d p_t / dt + div(p_t v) on a tensor grid
/// (d = 1 or 2), with p_t the closed-form marginal and v the given field.
ResidualStats continuity_residual(const VelocityField& field, const GaussianMixture& prior,
                                  const GaussianMixture& target, double t, const GridSpec& grid,
                                  double space_step = 1e-3, double time_step = 1e-4,
                                  double tolerance = 1e-3);

}  // namespace flowlab

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "flowlab/rng.hpp"

namespace flowlab {

using Vector = Eigen::VectorXd;
/// A batch of points, one row per point.
using Points = Eigen::MatrixXd;

/// N(mean, sigma^2 I).
struct IsotropicGaussian {
    Vector mean;
    double sigma = 1.0;

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Weighted mixture of isotropic Gaussians sharing one ambient dimension.
///
/// Construction validates: at least one component, sigma > 0, consistent
/// dimensions, nonnegative weights summing to 1 within 1e-12.
class GaussianMixture {
public:
    GaussianMixture(std::vector<IsotropicGaussian> components, std::vector<double> weights);

    /// Single-component convenience constructor.
    explicit GaussianMixture(IsotropicGaussian component);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return components_.size(); }
    const std::vector<IsotropicGaussian>& components() const { return components_; }
    const IsotropicGaussian& component(std::size_t k) const { return components_[k]; }
    const std::vector<double>& weights() const { return weights_; }
    double weight(std::size_t k) const { return weights_[k]; }

    /// Weighted mean of the component means.
    Vector mean() const;

private:
    std::vector<IsotropicGaussian> components_;
    std::vector<double> weights_;
    std::size_t dim_ = 0;
};

/// log sum_k w_k N(x; mu_k, sigma_k^2 I), evaluated with log-sum-exp.
double log_density(const GaussianMixture& m, const Vector& x);

/// n i.i.d. draws (rows). Component by weight, then Gaussian.
Points sample(const GaussianMixture& m, std::size_t n, Rng& rng);

/// Posterior component probabilities gamma_k(x) proportional to w_k N(x; mu_k, sigma_k^2 I).
Vector responsibilities(const GaussianMixture& m, const Vector& x);

/// Per-component log(w_k N(x; mu_k, sigma_k^2 I)); shared by the two functions above.
Vector log_weighted_terms(const GaussianMixture& m, const Vector& x);

/// Numerically stable log(sum(exp(v))).
double log_sum_exp(const Vector& v);

}  // namespace flowlab

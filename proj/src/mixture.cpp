#include "flowlab/mixture.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "flowlab/errors.hpp"

namespace flowlab {

GaussianMixture::GaussianMixture(std::vector<IsotropicGaussian> components,
                                 std::vector<double> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
    if (components_.empty()) {
        throw InputError("mixture needs at least one component");
    }
    if (weights_.size() != components_.size()) {
        throw InputError("mixture has " + std::to_string(components_.size()) +
                         " components but " + std::to_string(weights_.size()) + " weights");
    }
    dim_ = components_.front().dim();
    if (dim_ == 0) {
        throw InputError("mixture dimension must be at least 1");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const auto& c = components_[k];
        if (c.dim() != dim_) {
            throw InputError("component " + std::to_string(k) + " has dimension " +
                             std::to_string(c.dim()) + ", expected " + std::to_string(dim_));
        }
        if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) {
            throw InputError("component " + std::to_string(k) + " sigma must be positive");
        }
        if (!c.mean.allFinite()) {
            throw InputError("component " + std::to_string(k) + " mean is not finite");
        }
        if (!(weights_[k] >= 0.0)) {
            throw InputError("component " + std::to_string(k) + " weight is negative");
        }
        total += weights_[k];
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw InputError("mixture weights sum to " + std::to_string(total) + ", expected 1");
    }
}

GaussianMixture::GaussianMixture(IsotropicGaussian component)
    : GaussianMixture(std::vector<IsotropicGaussian>{std::move(component)}, {1.0}) {}

Vector GaussianMixture::mean() const {
    Vector m = Vector::Zero(static_cast<Eigen::Index>(dim_));
    for (std::size_t k = 0; k < size(); ++k) {
        m += weights_[k] * components_[k].mean;
    }
    return m;
}

double log_sum_exp(const Vector& v) {
    const double hi = v.maxCoeff();
    if (!std::isfinite(hi)) {
        return hi;
    }
    return hi + std::log((v.array() - hi).exp().sum());
}

Vector log_weighted_terms(const GaussianMixture& m, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != m.dim()) {
        throw InputError("point has dimension " + std::to_string(x.size()) +
                         ", mixture has dimension " + std::to_string(m.dim()));
    }
    const double d = static_cast<double>(m.dim());
    Vector terms(static_cast<Eigen::Index>(m.size()));
    for (std::size_t k = 0; k < m.size(); ++k) {
        const auto& c = m.component(k);
        const double var = c.sigma * c.sigma;
        const double w = m.weight(k);
        terms[static_cast<Eigen::Index>(k)] =
            (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) -
            0.5 * d * std::log(2.0 * std::numbers::pi * var) -
            (x - c.mean).squaredNorm() / (2.0 * var);
    }
    return terms;
}

double log_density(const GaussianMixture& m, const Vector& x) {
    return log_sum_exp(log_weighted_terms(m, x));
}

Vector responsibilities(const GaussianMixture& m, const Vector& x) {
    const Vector terms = log_weighted_terms(m, x);
    const double lse = log_sum_exp(terms);
    Vector gamma = (terms.array() - lse).exp().matrix();
    return gamma / gamma.sum();
}

Points sample(const GaussianMixture& m, std::size_t n, Rng& rng) {
    if (n == 0) {
        throw InputError("sample count must be at least 1");
    }
    const auto d = static_cast<Eigen::Index>(m.dim());
    Points out(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = m.component(rng.categorical(m.weights()));
        for (Eigen::Index j = 0; j < d; ++j) {
            out(static_cast<Eigen::Index>(i), j) = c.mean[j] + c.sigma * rng.normal();
        }
    }
    return out;
}

}  // namespace flowlab

#include "flowlab/cfm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "flowlab/errors.hpp"

namespace flowlab {

namespace {

void check_same_dim(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw InputError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
}

void check_velocity_time(double t) {
    if (!(t >= 0.0)) {
        throw DomainError("time " + std::to_string(t) + " is negative");
    }
    if (t > kMaxTime) {
        throw SingularityError("time " + std::to_string(t) + " exceeds 1 - " +
                               std::to_string(kTimeEpsilon));
    }
}

}  // namespace

PathParams path_params(double t, const GaussianMixture& prior, const GaussianMixture& target) {
    if (!(t >= 0.0 && t < 1.0)) {
        throw DomainError("path time must lie in [0, 1), got " + std::to_string(t));
    }
    if (prior.dim() != target.dim()) {
        throw InputError("prior and target dimensions differ");
    }
    PathParams p;
    p.t = t;
    p.components.reserve(prior.size() * target.size());
    for (std::size_t j = 0; j < prior.size(); ++j) {
        const auto& c0 = prior.component(j);
        const double v0 = c0.sigma * c0.sigma;
        for (std::size_t k = 0; k < target.size(); ++k) {
            const auto& c1 = target.component(k);
            const double v1 = c1.sigma * c1.sigma;
            PathComponent pc;
            pc.prior_index = j;
            pc.target_index = k;
            pc.weight = prior.weight(j) * target.weight(k);
            pc.mean = t * c1.mean + (1.0 - t) * c0.mean;
            pc.variance = t * t * v1 + (1.0 - t) * (1.0 - t) * v0;
            pc.target_gain = t * v1 / pc.variance;
            pc.prior_gain = (1.0 - t) * v0 / pc.variance;
            p.components.push_back(std::move(pc));
        }
    }
    return p;
}

Vector conditional_sample(double t, const Vector& x0, const Vector& x1) {
    check_same_dim(x0, x1);
    return t * x1 + (1.0 - t) * x0;
}

Vector conditional_velocity(double t, const Vector& x, const Vector& x1) {
    check_same_dim(x, x1);
    check_velocity_time(t);
    return (x1 - x) / (1.0 - t);
}

GaussianMixture marginal_at(double t, const GaussianMixture& prior,
                            const GaussianMixture& target) {
    const PathParams p = path_params(t, prior, target);
    std::vector<IsotropicGaussian> comps;
    std::vector<double> weights;
    comps.reserve(p.components.size());
    weights.reserve(p.components.size());
    for (const auto& pc : p.components) {
        comps.push_back({pc.mean, std::sqrt(pc.variance)});
        weights.push_back(pc.weight);
    }
    // Products of normalized weights can drift from 1 by a few ulps.
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    for (double& w : weights) {
        w /= total;
    }
    return GaussianMixture(std::move(comps), std::move(weights));
}

FixedTimePosterior::FixedTimePosterior(double t, const GaussianMixture& prior,
                                       const GaussianMixture& target)
    : prior_(prior),
      target_(target),
      params_(path_params(t, prior, target)),
      marginal_(marginal_at(t, prior, target)) {}

PosteriorSummary FixedTimePosterior::at(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != target_.dim()) {
        throw InputError("point has dimension " + std::to_string(x.size()) +
                         ", target has dimension " + std::to_string(target_.dim()));
    }
    const Vector gamma = responsibilities(marginal_, x);

    const auto d = x.size();
    PosteriorSummary s;
    s.alpha = Vector::Zero(static_cast<Eigen::Index>(target_.size()));
    s.component_means.assign(target_.size(), Vector::Zero(d));
    s.mean = Vector::Zero(d);
    // Prior-weighted fallback for components whose responsibility underflows.
    std::vector<Vector> fallback(target_.size(), Vector::Zero(d));

    for (std::size_t i = 0; i < params_.components.size(); ++i) {
        const auto& pc = params_.components[i];
        const Vector& mu1 = target_.component(pc.target_index).mean;
        // Conjugacy: E[x1 | x_t = x, pair] = mu1 + (Cov(x1, x_t) / Var(x_t)) (x - E[x_t]).
        const Vector m = mu1 + pc.target_gain * (x - pc.mean);
        const double g = gamma[static_cast<Eigen::Index>(i)];
        s.alpha[static_cast<Eigen::Index>(pc.target_index)] += g;
        s.component_means[pc.target_index] += g * m;
        fallback[pc.target_index] += prior_.weight(pc.prior_index) * m;
        s.mean += g * m;
    }
    for (std::size_t k = 0; k < target_.size(); ++k) {
        const double a = s.alpha[static_cast<Eigen::Index>(k)];
        if (a > 0.0) {
            s.component_means[k] /= a;
        } else {
            s.component_means[k] = fallback[k];
        }
    }
    return s;
}

Vector FixedTimePosterior::velocity(const Vector& x) const {
    return velocities(x.transpose()).row(0).transpose();
}

Points FixedTimePosterior::velocities(const Points& x) const {
    if (static_cast<std::size_t>(x.cols()) != target_.dim()) {
        throw InputError("point has dimension " + std::to_string(x.cols()) +
                         ", target has dimension " + std::to_string(target_.dim()));
    }
    const Eigen::Index n = x.rows();
    const auto nc = static_cast<Eigen::Index>(params_.components.size());
    const double d = static_cast<double>(x.cols());

    Eigen::MatrixXd logt(n, nc);
    for (Eigen::Index i = 0; i < nc; ++i) {
        const auto& c = marginal_.component(static_cast<std::size_t>(i));
        const double var = c.sigma * c.sigma;
        const double w = marginal_.weight(static_cast<std::size_t>(i));
        const double offset = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) -
                              0.5 * d * std::log(2.0 * std::numbers::pi * var);
        logt.col(i) = ((x.rowwise() - c.mean.transpose()).rowwise().squaredNorm() / (-2.0 * var))
                          .array() + offset;
    }
    const Vector hi = logt.rowwise().maxCoeff();
    Eigen::MatrixXd gamma = (logt.colwise() - hi).array().exp().matrix();
    gamma.array().colwise() /= gamma.rowwise().sum().array();

    // x = t x1 + (1-t) x0 holds exactly, so E[x1 - x0 | x] = (E[x1 | x] - x) / (1-t)
    // for any prior, mixture or not.
    Points mean = Points::Zero(n, x.cols());
    for (Eigen::Index i = 0; i < nc; ++i) {
        const auto& pc = params_.components[static_cast<std::size_t>(i)];
        const Vector& mu1 = target_.component(pc.target_index).mean;
        Points m = pc.target_gain * (x.rowwise() - pc.mean.transpose());
        m.rowwise() += mu1.transpose();
        mean += gamma.col(i).asDiagonal() * m;
    }
    return (mean - x) / (1.0 - params_.t);
}

PosteriorSummary posterior(double t, const Vector& x, const GaussianMixture& prior,
                           const GaussianMixture& target) {
    if (!(t >= 0.0 && t < 1.0)) {
        throw DomainError("posterior time must lie in [0, 1), got " + std::to_string(t));
    }
    return FixedTimePosterior(t, prior, target).at(x);
}

Vector optimal_velocity(double t, const Vector& x, const GaussianMixture& prior,
                        const GaussianMixture& target) {
    check_velocity_time(t);
    return FixedTimePosterior(t, prior, target).velocity(x);
}

void require_symmetric_bimodal(const GaussianMixture& prior, const GaussianMixture& target) {
    if (target.size() != 2) {
        throw UnsupportedConfiguration("boundary analysis needs a two-component target, got " +
                                       std::to_string(target.size()));
    }
    if (std::abs(target.weight(0) - target.weight(1)) > 1e-12) {
        throw UnsupportedConfiguration("boundary analysis needs equal target weights");
    }
    if (std::abs(target.component(0).sigma - target.component(1).sigma) > 1e-12) {
        throw UnsupportedConfiguration("boundary analysis needs equal target sigmas");
    }
    if ((target.component(0).mean - target.component(1).mean).norm() == 0.0) {
        throw UnsupportedConfiguration("target modes coincide");
    }
    if (prior.size() != 1) {
        throw UnsupportedConfiguration("boundary analysis needs a single-component prior");
    }
    if (prior.dim() != target.dim()) {
        throw InputError("prior and target dimensions differ");
    }
}

DecisionBoundary decision_boundary(double t, const GaussianMixture& prior,
                                   const GaussianMixture& target) {
    require_symmetric_bimodal(prior, target);
    const Vector& mu1 = target.component(0).mean;
    const Vector& mu2 = target.component(1).mean;
    const Vector diff = mu1 - mu2;
    return {t * 0.5 * (mu1 + mu2) + (1.0 - t) * prior.component(0).mean, diff / diff.norm()};
}

double jump_magnitude(double t, const Vector& boundary_point, const GaussianMixture& prior,
                      const GaussianMixture& target) {
    require_symmetric_bimodal(prior, target);
    check_velocity_time(t);
    if (t == 0.0) {
        throw DomainError("jump magnitude is defined for t in (0, 1)");
    }
    const DecisionBoundary b = decision_boundary(t, prior, target);
    check_same_dim(boundary_point, b.point);
    const double off = (boundary_point - b.point).dot(b.normal);
    if (std::abs(off) > 1e-9 * (1.0 + boundary_point.norm())) {
        throw InputError("point is not on the decision boundary (signed offset " +
                         std::to_string(off) + ")");
    }
    const PosteriorSummary s = posterior(t, boundary_point, prior, target);
    return (s.component_means[0] - s.component_means[1]).norm() / (1.0 - t);
}

double mode_shorthand_jump(double t, const GaussianMixture& target) {
    if (target.size() != 2) {
        throw UnsupportedConfiguration("mode-shorthand jump needs a two-component target");
    }
    check_velocity_time(t);
    return (target.component(0).mean - target.component(1).mean).norm() / (1.0 - t);
}

Vector averaged_velocity(double t, const Vector& x, const GaussianMixture& prior,
                         const GaussianMixture& target) {
    if (target.size() != 2) {
        throw UnsupportedConfiguration("averaged velocity needs a two-component target");
    }
    check_velocity_time(t);
    const PosteriorSummary s = posterior(t, x, prior, target);
    return (0.5 * (s.component_means[0] + s.component_means[1]) - x) / (1.0 - t);
}

}  // namespace flowlab

#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "flowlab/mixture.hpp"

namespace flowlab::test {

inline Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) {
        v[i++] = x;
    }
    return v;
}

/// N(0, I) in d dimensions.
inline GaussianMixture standard_prior(std::size_t d = 2) {
    return GaussianMixture(IsotropicGaussian{Vector::Zero(static_cast<Eigen::Index>(d)), 1.0});
}

/// 0.5 N((3,0), 0.25 I) + 0.5 N((-3,0), 0.25 I); component 0 is the +3 mode.
inline GaussianMixture bimodal_target() {
    return GaussianMixture({{vec({3.0, 0.0}), 0.5}, {vec({-3.0, 0.0}), 0.5}}, {0.5, 0.5});
}

/// 1D N(2, 0.25).
inline GaussianMixture unimodal_target() {
    return GaussianMixture(IsotropicGaussian{vec({2.0}), 0.5});
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("flowlab_test_" + name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace flowlab::test

namespace flowlab::test {

/// Joint (x0, x1) draws whose x_t = t x1 + (1-t) x0 landed within a radius
/// of a probe point. Drawn directly from the prior and target, so it is
/// independent of the closed-form posterior it is used to check.
struct BallHits {
    std::vector<Vector> xt;
    std::vector<Vector> x0;
    std::vector<Vector> x1;
    std::vector<std::size_t> label;  // target component of each draw

    std::size_t size() const { return xt.size(); }
};

inline std::vector<BallHits> mc_ball_hits(double t, const GaussianMixture& prior,
                                          const GaussianMixture& target,
                                          const std::vector<Vector>& probes, double radius,
                                          std::size_t draws, std::uint64_t seed) {
    const auto d = static_cast<Eigen::Index>(target.dim());
    std::vector<BallHits> out(probes.size());
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal;
    std::discrete_distribution<std::size_t> pick0(prior.weights().begin(), prior.weights().end());
    std::discrete_distribution<std::size_t> pick1(target.weights().begin(), target.weights().end());
    const double r2 = radius * radius;
    Vector x0(d), x1(d), xt(d);
    for (std::size_t i = 0; i < draws; ++i) {
        const auto& c0 = prior.component(pick0(eng));
        const std::size_t k = pick1(eng);
        const auto& c1 = target.component(k);
        for (Eigen::Index j = 0; j < d; ++j) {
            x0[j] = c0.mean[j] + c0.sigma * normal(eng);
            x1[j] = c1.mean[j] + c1.sigma * normal(eng);
        }
        xt = t * x1 + (1.0 - t) * x0;
        for (std::size_t p = 0; p < probes.size(); ++p) {
            if ((xt - probes[p]).squaredNorm() <= r2) {
                out[p].xt.push_back(xt);
                out[p].x0.push_back(x0);
                out[p].x1.push_back(x1);
                out[p].label.push_back(k);
            }
        }
    }
    return out;
}

/// Sample mean and standard error (per coordinate) of a list of vectors.
struct MeanAndError {
    Vector mean;
    Vector stderr_;
};

inline MeanAndError mean_and_error(const std::vector<Vector>& xs) {
    const double n = static_cast<double>(xs.size());
    Vector sum = Vector::Zero(xs.front().size()), sum2 = sum;
    for (const auto& x : xs) {
        sum += x;
        sum2 += x.cwiseProduct(x);
    }
    const Vector m = sum / n;
    const Vector var = ((sum2 / n - m.cwiseProduct(m)) * (n / (n - 1.0))).cwiseMax(0.0);
    return {m, (var / n).cwiseSqrt()};
}

}  // namespace flowlab::test

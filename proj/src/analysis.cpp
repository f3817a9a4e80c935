#include "flowlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "flowlab/cfm.hpp"
#include "flowlab/errors.hpp"
#include "flowlab/parallel.hpp"

namespace flowlab {

JumpProfile profile_jump(const VelocityField& field, const GaussianMixture& prior,
                         const GaussianMixture& target, double t,
                         const std::vector<double>& offsets) {
    const DecisionBoundary b = decision_boundary(t, prior, target);
    const FixedTimePosterior post(t, prior, target);

    JumpProfile p;
    p.t = t;
    p.point = b.point;
    p.normal = b.normal;
    p.amplitude = jump_magnitude(t, b.point, prior, target);
    p.mode_shorthand = mode_shorthand_jump(t, target);

    Points probes(static_cast<Eigen::Index>(2 * offsets.size()), b.point.size());
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        if (!(offsets[i] > 0.0)) {
            throw InputError("jump offsets must be positive");
        }
        probes.row(static_cast<Eigen::Index>(2 * i)) = (b.point + offsets[i] * b.normal).transpose();
        probes.row(static_cast<Eigen::Index>(2 * i + 1)) =
            (b.point - offsets[i] * b.normal).transpose();
    }
    const Points v = field.evaluate(t, probes);
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(2 * i);
        p.offsets.push_back(offsets[i]);
        p.v_plus.push_back(v.row(r).transpose());
        p.v_minus.push_back(v.row(r + 1).transpose());
        p.jump.push_back((v.row(r) - v.row(r + 1)).norm());
        const double ap = post.at(probes.row(r).transpose()).alpha[0];
        const double am = post.at(probes.row(r + 1).transpose()).alpha[0];
        p.alpha_plus.push_back(ap);
        p.alpha_minus.push_back(am);
        p.switching.push_back((ap - am) * p.amplitude);
    }
    return p;
}

double underestimation_ratio(const JumpProfile& network, const JumpProfile& oracle, double delta) {
    auto find = [delta](const JumpProfile& p) {
        for (std::size_t i = 0; i < p.offsets.size(); ++i) {
            if (p.offsets[i] == delta) {
                return p.jump[i];
            }
        }
        throw InputError("offset " + std::to_string(delta) + " is not in the jump profile");
    };
    return find(network) / find(oracle);
}

std::vector<PosteriorPoint> posterior_profile(double t, const GaussianMixture& prior,
                                              const GaussianMixture& target, std::size_t n,
                                              double halfwidth) {
    if (n < 2) {
        throw InputError("posterior profile needs at least two points");
    }
    const DecisionBoundary b = decision_boundary(t, prior, target);
    const FixedTimePosterior post(t, prior, target);
    std::vector<PosteriorPoint> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Symmetric construction so the middle sample of an odd count is exactly 0.
        const double u = (2.0 * static_cast<double>(i) - static_cast<double>(n - 1)) /
                         static_cast<double>(n - 1);
        const double offset = u * halfwidth;
        out.push_back({offset, post.at(b.point + offset * b.normal).alpha[0]});
    }
    return out;
}

double max_slope(const std::vector<PosteriorPoint>& profile) {
    double best = 0.0;
    for (std::size_t i = 1; i < profile.size(); ++i) {
        const double dx = profile[i].offset - profile[i - 1].offset;
        best = std::max(best, std::abs(profile[i].alpha - profile[i - 1].alpha) / dx);
    }
    return best;
}

namespace {

// P(lo <= Z <= hi) for Z ~ N(c, s^2), accurate in either tail.
double interval_mass(double lo, double hi, double c, double s) {
    const double a = (lo - c) / (s * std::numbers::sqrt2);
    const double b = (hi - c) / (s * std::numbers::sqrt2);
    if (a >= 0.0) {
        return 0.5 * (std::erfc(a) - std::erfc(b));
    }
    if (b <= 0.0) {
        return 0.5 * (std::erfc(-b) - std::erfc(-a));
    }
    return 1.0 - 0.5 * (std::erfc(-a) + std::erfc(b));
}

}  // namespace

Points sample_band(double t, const GaussianMixture& prior, const GaussianMixture& target,
                   double halfwidth, std::size_t n, Rng& rng) {
    if (!(halfwidth > 0.0)) {
        throw InputError("band halfwidth must be positive");
    }
    const DecisionBoundary b = decision_boundary(t, prior, target);
    const GaussianMixture marginal = marginal_at(t, prior, target);

    std::vector<double> centers, band_weights;
    double total = 0.0;
    for (std::size_t k = 0; k < marginal.size(); ++k) {
        const auto& c = marginal.component(k);
        centers.push_back((c.mean - b.point).dot(b.normal));
        band_weights.push_back(marginal.weight(k) *
                               interval_mass(-halfwidth, halfwidth, centers.back(), c.sigma));
        total += band_weights.back();
    }
    if (!(total > 0.0)) {
        throw InputError("band carries no probability mass");
    }
    for (double& w : band_weights) {
        w /= total;
    }

    Points out(static_cast<Eigen::Index>(n), b.point.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.categorical(band_weights);
        const auto& c = marginal.component(k);
        const double peak = std::clamp(centers[k], -halfwidth, halfwidth);
        double z = 0.0;
        for (;;) {
            z = rng.uniform(-halfwidth, halfwidth);
            const double log_ratio =
                ((peak - centers[k]) * (peak - centers[k]) - (z - centers[k]) * (z - centers[k])) /
                (2.0 * c.sigma * c.sigma);
            if (rng.uniform() < std::exp(log_ratio)) {
                break;
            }
        }
        Vector x(b.point.size());
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            x[j] = c.mean[j] + c.sigma * rng.normal();
        }
        x += (z - (x - b.point).dot(b.normal)) * b.normal;
        out.row(static_cast<Eigen::Index>(i)) = x.transpose();
    }
    return out;
}

std::vector<BandError> error_band_scan(const VelocityField& field, const GaussianMixture& prior,
                                       const GaussianMixture& target,
                                       const std::vector<double>& times, double halfwidth,
                                       std::size_t samples, const Rng& root) {
    if (samples == 0) {
        throw InputError("band scan needs at least one sample");
    }
    const OracleField oracle(prior, target);
    std::vector<BandError> out;
    for (std::size_t i = 0; i < times.size(); ++i) {
        Rng rng = root.split(i);
        const double t = times[i];
        const Points x = sample_band(t, prior, target, halfwidth, samples, rng);
        const Points diff = field.evaluate(t, x) - oracle.evaluate(t, x);
        out.push_back({t, diff.rowwise().squaredNorm().mean(), samples});
    }
    return out;
}

ModeMetrics mode_metrics(const Points& endpoints, const GaussianMixture& target,
                         double mode_radius, double midpoint_radius) {
    if (endpoints.rows() == 0) {
        throw InputError("endpoint batch is empty");
    }
    if (static_cast<std::size_t>(endpoints.cols()) != target.dim()) {
        throw InputError("endpoint dimension does not match the target");
    }
    const std::size_t n = static_cast<std::size_t>(endpoints.rows());
    Vector midpoint = Vector::Zero(endpoints.cols());
    for (const auto& c : target.components()) {
        midpoint += c.mean;
    }
    midpoint /= static_cast<double>(target.size());

    ModeMetrics m;
    m.count = n;
    m.mode_fractions.assign(target.size(), 0.0);
    std::size_t covered = 0, middle = 0;
    for (Eigen::Index i = 0; i < endpoints.rows(); ++i) {
        const Vector x = endpoints.row(i).transpose();
        std::size_t best = target.size();
        double best_dist = mode_radius;
        for (std::size_t k = 0; k < target.size(); ++k) {
            const double dist = (x - target.component(k).mean).norm();
            if (dist <= best_dist) {
                best = k;
                best_dist = dist;
            }
        }
        if (best < target.size()) {
            m.mode_fractions[best] += 1.0;
            ++covered;
        }
        if ((x - midpoint).norm() <= midpoint_radius) {
            ++middle;
        }
    }
    for (double& f : m.mode_fractions) {
        f /= static_cast<double>(n);
    }
    m.covered_fraction = static_cast<double>(covered) / static_cast<double>(n);
    m.midpoint_mass = static_cast<double>(middle) / static_cast<double>(n);
    m.mean = endpoints.colwise().mean().transpose();
    m.stddev = ((endpoints.rowwise() - m.mean.transpose()).array().square().colwise().sum() /
                static_cast<double>(n))
                   .sqrt()
                   .matrix()
                   .transpose();
    return m;
}

ResidualStats continuity_residual(const VelocityField& field, const GaussianMixture& prior,
                                  const GaussianMixture& target, double t, const GridSpec& grid,
                                  double space_step, double time_step, double tolerance) {
    const std::size_t d = target.dim();
    if (d != 1 && d != 2) {
        throw InputError("continuity residual supports dimension 1 or 2");
    }
    if (grid.n < 2 || !(grid.hi > grid.lo)) {
        throw InputError("invalid residual grid");
    }
    if (t - time_step < 0.0 || t + time_step > kMaxTime) {
        throw DomainError("residual time too close to the ends of [0, 1 - time epsilon]");
    }
    const GaussianMixture p_now = marginal_at(t, prior, target);
    const GaussianMixture p_next = marginal_at(t + time_step, prior, target);
    const GaussianMixture p_prev = marginal_at(t - time_step, prior, target);
    auto density = [](const GaussianMixture& m, const Vector& x) {
        return std::exp(log_density(m, x));
    };

    const std::size_t n = static_cast<std::size_t>(grid.n);
    const std::size_t total = d == 1 ? n : n * n;
    auto coord = [&](std::size_t i) {
        return grid.lo + (grid.hi - grid.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    std::vector<double> residual(total), dens(total);

    parallel_chunks(total, std::max<std::size_t>(1, total / 64),
                    [&](std::size_t, std::size_t begin, std::size_t end) {
        // Each point needs the field at 2d shifted locations.
        Points probes(static_cast<Eigen::Index>(2 * d), static_cast<Eigen::Index>(d));
        for (std::size_t idx = begin; idx < end; ++idx) {
            Vector x(static_cast<Eigen::Index>(d));
            x[0] = coord(idx % n);
            if (d == 2) {
                x[1] = coord(idx / n);
            }
            for (std::size_t j = 0; j < d; ++j) {
                Vector xp = x, xm = x;
                xp[static_cast<Eigen::Index>(j)] += space_step;
                xm[static_cast<Eigen::Index>(j)] -= space_step;
                probes.row(static_cast<Eigen::Index>(2 * j)) = xp.transpose();
                probes.row(static_cast<Eigen::Index>(2 * j + 1)) = xm.transpose();
            }
            const Points v = field.evaluate(t, probes);
            double divergence = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const auto r = static_cast<Eigen::Index>(2 * j);
                const double fp =
                    density(p_now, probes.row(r).transpose()) * v(r, static_cast<Eigen::Index>(j));
                const double fm = density(p_now, probes.row(r + 1).transpose()) *
                                  v(r + 1, static_cast<Eigen::Index>(j));
                divergence += (fp - fm) / (2.0 * space_step);
            }
            const double dpdt = (density(p_next, x) - density(p_prev, x)) / (2.0 * time_step);
            residual[idx] = std::abs(dpdt + divergence);
            dens[idx] = density(p_now, x);
        }
    });

    ResidualStats s;
    s.points = total;
    double sum = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
        s.max_abs = std::max(s.max_abs, residual[i]);
        s.max_density = std::max(s.max_density, dens[i]);
        sum += residual[i];
    }
    s.mean_abs = sum / static_cast<double>(total);
    s.bound = tolerance * s.max_density;
    return s;
}

}  // namespace flowlab

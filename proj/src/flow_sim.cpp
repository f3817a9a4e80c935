#include "flowlab/flow_sim.hpp"

#include <cmath>
#include <string>

#include "flowlab/errors.hpp"
#include "flowlab/parallel.hpp"

namespace flowlab {

Vector VelocityField::at(double t, const Vector& x) const {
    Points row = x.transpose();
    return evaluate(t, row).row(0).transpose();
}

std::string_view to_string(FieldSource s) {
    switch (s) {
        case FieldSource::oracle: return "oracle";
        case FieldSource::network: return "network";
        case FieldSource::averaged: return "averaged";
    }
    return "unknown";
}

FieldSource parse_field_source(std::string_view name) {
    if (name == "oracle") return FieldSource::oracle;
    if (name == "network") return FieldSource::network;
    if (name == "averaged") return FieldSource::averaged;
    throw InputError("unknown field source '" + std::string(name) +
                     "' (expected oracle|network|averaged)");
}

std::string_view to_string(Method m) { return m == Method::euler ? "euler" : "rk4"; }

Method parse_method(std::string_view name) {
    if (name == "euler") return Method::euler;
    if (name == "rk4") return Method::rk4;
    throw InputError("unknown integration method '" + std::string(name) + "' (expected euler|rk4)");
}

OracleField::OracleField(GaussianMixture prior, GaussianMixture target)
    : prior_(std::move(prior)), target_(std::move(target)) {
    if (prior_.dim() != target_.dim()) {
        throw InputError("prior and target dimensions differ");
    }
}

Points OracleField::evaluate(double t, const Points& x) const {
    if (t > kMaxTime) {
        throw SingularityError("oracle field evaluated at t = " + std::to_string(t));
    }
    return FixedTimePosterior(t, prior_, target_).velocities(x);
}

AveragedField::AveragedField(GaussianMixture prior, GaussianMixture target)
    : prior_(std::move(prior)), target_(std::move(target)) {
    if (target_.size() != 2) {
        throw UnsupportedConfiguration("averaged field needs a two-component target");
    }
}

Points AveragedField::evaluate(double t, const Points& x) const {
    if (t > kMaxTime) {
        throw SingularityError("averaged field evaluated at t = " + std::to_string(t));
    }
    const FixedTimePosterior post(t, prior_, target_);
    Points v(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Vector xi = x.row(i).transpose();
        const PosteriorSummary s = post.at(xi);
        v.row(i) = ((0.5 * (s.component_means[0] + s.component_means[1]) - xi) / (1.0 - t))
                       .transpose();
    }
    return v;
}

Points FunctionField::evaluate(double t, const Points& x) const {
    Points v(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        v.row(i) = fn_(t, x.row(i).transpose()).transpose();
    }
    return v;
}

Points ShiftedField::evaluate(double t, const Points& x) const {
    Points v = base_.evaluate(t, x);
    v.rowwise() += shift_.transpose();
    return v;
}

std::unique_ptr<VelocityField> make_field(FieldSource source, const GaussianMixture& prior,
                                          const GaussianMixture& target, const VelocityNet* net) {
    switch (source) {
        case FieldSource::oracle: return std::make_unique<OracleField>(prior, target);
        case FieldSource::averaged: return std::make_unique<AveragedField>(prior, target);
        case FieldSource::network:
            if (!net) {
                throw InputError("network field requires a checkpoint");
            }
            if (net->dim() != target.dim()) {
                throw InputError("checkpoint dimension does not match the target");
            }
            return std::make_unique<NetworkField>(*net);
    }
    throw InputError("unknown field source");
}

namespace {

constexpr std::size_t kChunkSize = 256;

void check_finite(const Points& x, std::size_t offset, int step) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (!x.row(i).allFinite()) {
            const std::size_t id = offset + static_cast<std::size_t>(i);
            throw IntegrationError("particle " + std::to_string(id) +
                                       " became non-finite at step " + std::to_string(step),
                                   id, step);
        }
    }
}

}  // namespace

IntegrationResult integrate(const VelocityField& field, const Points& x0,
                            const IntegrateOptions& opts) {
    if (opts.steps < 1) {
        throw InputError("step count must be at least 1");
    }
    if (!(opts.t_end > 0.0) || opts.t_end > kMaxTime + 1e-15) {
        throw InputError("t_end must lie in (0, 1 - time epsilon]");
    }
    if (opts.record_every < 0) {
        throw InputError("record_every must be nonnegative");
    }
    if (static_cast<std::size_t>(x0.cols()) != field.dim()) {
        throw InputError("particle dimension does not match the field");
    }
    const std::size_t n = static_cast<std::size_t>(x0.rows());
    const int steps = opts.steps;
    const double h = opts.t_end / steps;
    auto time_at = [&](int i) { return i == steps ? opts.t_end : opts.t_end * i / steps; };
    auto recorded = [&](int i) {
        return opts.record_every > 0 && (i % opts.record_every == 0 || i == steps);
    };

    IntegrationResult result;
    result.endpoints.resize(x0.rows(), x0.cols());
    if (opts.record_every > 0) {
        result.trajectories.resize(n);
    }

    const std::size_t chunks = (n + kChunkSize - 1) / kChunkSize;
    parallel_chunks(n, chunks, [&](std::size_t, std::size_t begin, std::size_t end) {
        const auto b = static_cast<Eigen::Index>(begin);
        const auto len = static_cast<Eigen::Index>(end - begin);
        Points x = x0.middleRows(b, len);
        check_finite(x, begin, 0);
        auto record = [&](int i) {
            for (Eigen::Index r = 0; r < len; ++r) {
                auto& tr = result.trajectories[begin + static_cast<std::size_t>(r)];
                tr.particle_id = begin + static_cast<std::size_t>(r);
                tr.steps.push_back(i);
                tr.times.push_back(time_at(i));
                tr.positions.push_back(x.row(r).transpose());
            }
        };
        if (recorded(0)) {
            record(0);
        }
        for (int i = 0; i < steps; ++i) {
            const double t = time_at(i);
            if (opts.method == Method::euler) {
                x += h * field.evaluate(t, x);
            } else {
                const double tm = t + 0.5 * h;
                const double tn = time_at(i + 1);
                const Points k1 = field.evaluate(t, x);
                const Points k2 = field.evaluate(tm, Points(x + 0.5 * h * k1));
                const Points k3 = field.evaluate(tm, Points(x + 0.5 * h * k2));
                const Points k4 = field.evaluate(tn, Points(x + h * k3));
                x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            check_finite(x, begin, i + 1);
            if (recorded(i + 1)) {
                record(i + 1);
            }
        }
        result.endpoints.middleRows(b, len) = x;
    });
    return result;
}

namespace {

double fitted_slope(const std::vector<ConvergenceLevel>& levels) {
    const double n = static_cast<double>(levels.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& l : levels) {
        const double x = std::log(l.h);
        const double y = std::log(l.error);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<ConvergenceLevel> study(const VelocityField& field, const Points& x0, double t_end,
                                    Method method, const std::vector<int>& ladder, int factor) {
    if (ladder.size() < 2) {
        throw InputError("convergence study needs at least two step counts");
    }
    int finest = 0;
    for (int s : ladder) {
        finest = std::max(finest, s);
    }
    IntegrateOptions opts{method, finest * factor, t_end, 0};
    const Points reference = integrate(field, x0, opts).endpoints;
    std::vector<ConvergenceLevel> levels;
    for (int s : ladder) {
        opts.steps = s;
        const Points end = integrate(field, x0, opts).endpoints;
        levels.push_back({s, t_end / s, (end - reference).cwiseAbs().maxCoeff()});
    }
    return levels;
}

}  // namespace

ConvergenceReport convergence_order(const VelocityField& field, const Points& x0, double t_end,
                                    const ConvergenceOptions& opts) {
    if (opts.reference_factor < 2) {
        throw InputError("reference factor must be at least 2");
    }
    ConvergenceReport r;
    r.euler = study(field, x0, t_end, Method::euler, opts.euler_steps, opts.reference_factor);
    r.rk4 = study(field, x0, t_end, Method::rk4, opts.rk4_steps, opts.reference_factor);
    r.euler_slope = fitted_slope(r.euler);
    r.rk4_slope = fitted_slope(r.rk4);
    return r;
}

}  // namespace flowlab

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "flowlab/cfm.hpp"
#include "flowlab/mixture.hpp"
#include "flowlab/velocity_net.hpp"

namespace flowlab {

/// A time-dependent velocity field evaluated on batches of particles.
/// Implementations must be safe for concurrent read-only use.
class VelocityField {
public:
    virtual ~VelocityField() = default;

    virtual std::size_t dim() const = 0;
    virtual std::string_view name() const = 0;
    /// Rows of x are particles; returns one velocity row per particle.
    virtual Points evaluate(double t, const Points& x) const = 0;

    /// Single-point convenience wrapper.
    Vector at(double t, const Vector& x) const;
};

enum class FieldSource { oracle, network, averaged };

std::string_view to_string(FieldSource s);
FieldSource parse_field_source(std::string_view name);

/// Exact marginal velocity of the Gaussian-mixture path.
class OracleField final : public VelocityField {
public:
    OracleField(GaussianMixture prior, GaussianMixture target);
    std::size_t dim() const override { return target_.dim(); }
    std::string_view name() const override { return "oracle"; }
    Points evaluate(double t, const Points& x) const override;

    const GaussianMixture& prior() const { return prior_; }
    const GaussianMixture& target() const { return target_; }

private:
    GaussianMixture prior_;
    GaussianMixture target_;
};

/// Mode-averaging reference field for a two-component target.
class AveragedField final : public VelocityField {
public:
    AveragedField(GaussianMixture prior, GaussianMixture target);
    std::size_t dim() const override { return target_.dim(); }
    std::string_view name() const override { return "averaged"; }
    Points evaluate(double t, const Points& x) const override;

private:
    GaussianMixture prior_;
    GaussianMixture target_;
};

class NetworkField final : public VelocityField {
public:
    explicit NetworkField(VelocityNet net) : net_(std::move(net)) {}
    std::size_t dim() const override { return net_.dim(); }
    std::string_view name() const override { return "network"; }
    Points evaluate(double t, const Points& x) const override { return net_.forward(x, t); }

    const VelocityNet& net() const { return net_; }

private:
    VelocityNet net_;
};

/// Pointwise field from a callable; used for analytic test fields.
class FunctionField final : public VelocityField {
public:
    using Fn = std::function<Vector(double, const Vector&)>;
    FunctionField(std::size_t dim, Fn fn, std::string name = "function")
        : dim_(dim), fn_(std::move(fn)), name_(std::move(name)) {}
    std::size_t dim() const override { return dim_; }
    std::string_view name() const override { return name_; }
    Points evaluate(double t, const Points& x) const override;

private:
    std::size_t dim_;
    Fn fn_;
    std::string name_;
};

/// Adds a constant vector to another field (negative controls).
class ShiftedField final : public VelocityField {
public:
    ShiftedField(const VelocityField& base, Vector shift) : base_(base), shift_(std::move(shift)) {}
    std::size_t dim() const override { return base_.dim(); }
    std::string_view name() const override { return "shifted"; }
    Points evaluate(double t, const Points& x) const override;

private:
    const VelocityField& base_;
    Vector shift_;
};

/// Builds the field for a source tag. `net` is required for FieldSource::network.
std::unique_ptr<VelocityField> make_field(FieldSource source, const GaussianMixture& prior,
                                          const GaussianMixture& target,
                                          const VelocityNet* net = nullptr);

enum class Method { euler, rk4 };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct IntegrateOptions {
    Method method = Method::rk4;
    int steps = 200;
    double t_end = kMaxTime;
    /// Record every k-th step (plus the final one); 0 disables trajectory recording.
    int record_every = 0;
};

struct Trajectory {
    std::size_t particle_id = 0;
    std::vector<int> steps;
    std::vector<double> times;
    std::vector<Vector> positions;
};

struct IntegrationResult {
    Points endpoints;
    std::vector<Trajectory> trajectories;  // one per particle when recording
};

/// Fixed-step explicit integration of dx/dt = v(t, x) from t = 0 to t_end.
/// Throws IntegrationError naming the particle and step if a state becomes non-finite.
IntegrationResult integrate(const VelocityField& field, const Points& x0,
                            const IntegrateOptions& opts);

struct ConvergenceLevel {
    int steps = 0;
    double h = 0.0;
    double error = 0.0;  // max endpoint deviation from the reference
};

struct ConvergenceOptions {
    std::vector<int> euler_steps{1 << 18, 1 << 19, 1 << 20, 1 << 21};
    std::vector<int> rk4_steps{50, 100, 200, 400};
    int reference_factor = 10;
};

struct ConvergenceReport {
    std::vector<ConvergenceLevel> euler;
    std::vector<ConvergenceLevel> rk4;
    double euler_slope = 0.0;
    double rk4_slope = 0.0;
};

/// Self-convergence study: each method is compared against its own run with
/// reference_factor times more steps than its finest level; slopes are the
/// least-squares fit of log(error) against log(h).
ConvergenceReport convergence_order(const VelocityField& field, const Points& x0, double t_end,
                                    const ConvergenceOptions& opts = {});

}  // namespace flowlab

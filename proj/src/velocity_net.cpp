#include "flowlab/velocity_net.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowlab/cfm.hpp"
#include "flowlab/errors.hpp"

namespace flowlab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::silu: return "silu";
        case Activation::relu: return "relu";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "silu") return Activation::silu;
    if (name == "relu") return Activation::relu;
    throw InputError("unknown activation '" + std::string(name) + "' (expected silu|relu)");
}

namespace {

using Matrix = Eigen::MatrixXd;

void activate(Activation a, const Matrix& z, Matrix& out) {
    if (a == Activation::silu) {
        out = z.array() / (1.0 + (-z.array()).exp());
    } else {
        out = z.array().max(0.0);
    }
}

// Multiplies g in place by d act / dz evaluated at z; `scratch` keeps its storage.
void scale_by_slope(Activation a, const Matrix& z, Matrix& g, Matrix& scratch) {
    if (a == Activation::silu) {
        scratch = (1.0 / (1.0 + (-z.array()).exp())).matrix();
        g.array() *= scratch.array() * (1.0 + z.array() * (1.0 - scratch.array()));
    } else {
        g.array() *= (z.array() > 0.0).cast<double>();
    }
}

// Columns are samples. pre[l] is layer l's pre-activation and post[l] its input,
// so post[0] is the network input and pre.back() the output. Buffers are reused
// across calls with the same batch size.
struct ForwardTrace {
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
};

const Matrix& run_forward(const VelocityNet& net, const Matrix& input, ForwardTrace& tr) {
    const auto& layers = net.layers();
    tr.pre.resize(layers.size());
    tr.post.resize(layers.size());
    tr.post[0] = input;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix& z = tr.pre[l];
        z.resize(layers[l].weight.rows(), input.cols());
        z.noalias() = layers[l].weight * tr.post[l];
        z.colwise() += layers[l].bias;
        if (l + 1 < layers.size()) {
            activate(net.activation(), z, tr.post[l + 1]);
        }
    }
    return tr.pre.back();
}

Matrix run_forward(const VelocityNet& net, const Matrix& input) {
    ForwardTrace tr;
    return run_forward(net, input, tr);
}

/// Reusable buffers for repeated gradient evaluations.
struct GradWorkspace {
    Matrix input;
    Matrix target;
    ForwardTrace trace;
    Matrix delta;
    Matrix next;
    Matrix scratch;
};

Matrix make_input(const Points& x, const Vector& t, std::size_t dim) {
    if (static_cast<std::size_t>(x.cols()) != dim) {
        throw InputError("input has dimension " + std::to_string(x.cols()) +
                         ", network expects " + std::to_string(dim));
    }
    if (t.size() != x.rows()) {
        throw InputError("time vector length does not match batch size");
    }
    if (!x.allFinite() || !t.allFinite()) {
        throw InputError("network input is not finite");
    }
    Matrix in(x.cols() + 1, x.rows());
    in.topRows(x.cols()) = x.transpose();
    in.row(x.cols()) = t.transpose();
    return in;
}

}  // namespace

VelocityNet::VelocityNet(std::vector<std::size_t> sizes, Activation activation)
    : sizes_(std::move(sizes)), activation_(activation) {
    if (sizes_.size() < 2) {
        throw InputError("network needs at least an input and an output layer");
    }
    for (std::size_t s : sizes_) {
        if (s == 0) {
            throw InputError("layer widths must be positive");
        }
    }
    if (sizes_.front() != sizes_.back() + 1) {
        throw InputError("input width must equal output width + 1 (time feature)");
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(sizes_[l]);
        const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
        layers_.push_back({Matrix::Zero(out, in), Vector::Zero(out)});
    }
}

VelocityNet VelocityNet::initialized(std::size_t dim, const std::vector<std::size_t>& hidden,
                                     Activation activation, Rng& rng) {
    std::vector<std::size_t> sizes{dim + 1};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(dim);
    VelocityNet net(std::move(sizes), activation);
    for (auto& layer : net.layers_) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
                layer.weight(i, j) = rng.uniform(-bound, bound);
            }
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            layer.bias[i] = rng.uniform(-bound, bound);
        }
    }
    return net;
}

Points VelocityNet::forward(const Points& x, const Vector& t) const {
    return run_forward(*this, make_input(x, t, dim())).transpose();
}

Points VelocityNet::forward(const Points& x, double t) const {
    return forward(x, Vector::Constant(x.rows(), t));
}

Vector VelocityNet::forward(const Vector& x, double t) const {
    Points row = x.transpose();
    return forward(row, t).row(0).transpose();
}

std::size_t VelocityNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
        n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    }
    return n;
}

std::vector<double> VelocityNet::flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers_) {
        flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
        flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return flat;
}

void VelocityNet::set_flat_parameters(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) {
        throw InputError("parameter vector has the wrong length");
    }
    std::size_t pos = 0;
    for (auto& l : layers_) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.weight.size(), l.weight.data());
        pos += static_cast<std::size_t>(l.weight.size());
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.data());
        pos += static_cast<std::size_t>(l.bias.size());
    }
}

std::uint64_t VelocityNet::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : flat_parameters()) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char b : bytes) {
            h = (h ^ b) * 0x100000001b3ULL;
        }
    }
    return h;
}

bool VelocityNet::operator==(const VelocityNet& other) const {
    return sizes_ == other.sizes_ && activation_ == other.activation_ &&
           flat_parameters() == other.flat_parameters();
}

namespace {

void fm_targets_and_input(const VelocityNet& net, const FmBatch& batch, Matrix& input,
                          Matrix& target) {
    if (batch.x0.rows() == 0) {
        throw InputError("batch is empty");
    }
    if (batch.x0.rows() != batch.x1.rows() || batch.x0.cols() != batch.x1.cols()) {
        throw InputError("x0 and x1 batches differ in shape");
    }
    if ((batch.t.array() < 0.0).any() || (batch.t.array() > kMaxTime).any()) {
        throw DomainError("batch times must lie in [0, 1 - time epsilon]");
    }
    // x_t = t x1 + (1-t) x0 row-wise; the conditional velocity target is x1 - x0.
    const Points xt = (batch.x1.array().colwise() * batch.t.array() +
                       batch.x0.array().colwise() * (1.0 - batch.t.array()))
                          .matrix();
    input = make_input(xt, batch.t, net.dim());
    target = (batch.x1 - batch.x0).transpose();
}

void loss_and_grad_into(const VelocityNet& net, const FmBatch& batch, GradWorkspace& ws,
                        LossAndGrad& r) {
    fm_targets_and_input(net, batch, ws.input, ws.target);
    const Matrix& out = run_forward(net, ws.input, ws.trace);
    const double n = static_cast<double>(batch.x0.rows());

    ws.delta = out - ws.target;
    r.loss = ws.delta.squaredNorm() / n;
    ws.delta *= 2.0 / n;

    const auto& layers = net.layers();
    r.grad.resize(layers.size());
    for (std::size_t l = layers.size(); l-- > 0;) {
        r.grad[l].weight.resize(layers[l].weight.rows(), layers[l].weight.cols());
        r.grad[l].weight.noalias() = ws.delta * ws.trace.post[l].transpose();
        r.grad[l].bias = ws.delta.rowwise().sum();
        if (l > 0) {
            ws.next.resize(layers[l].weight.cols(), ws.delta.cols());
            ws.next.noalias() = layers[l].weight.transpose() * ws.delta;
            scale_by_slope(net.activation(), ws.trace.pre[l - 1], ws.next, ws.scratch);
            std::swap(ws.delta, ws.next);
        }
    }
}

}  // namespace

double fm_loss(const VelocityNet& net, const FmBatch& batch) {
    Matrix input, target;
    fm_targets_and_input(net, batch, input, target);
    return (run_forward(net, input) - target).squaredNorm() / static_cast<double>(batch.x0.rows());
}

LossAndGrad loss_and_grad(const VelocityNet& net, const FmBatch& batch) {
    GradWorkspace ws;
    LossAndGrad r;
    loss_and_grad_into(net, batch, ws, r);
    return r;
}

FmBatch draw_batch(const GaussianMixture& prior, const GaussianMixture& target, std::size_t n,
                   Rng& rng) {
    FmBatch b;
    b.t.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        b.t[static_cast<Eigen::Index>(i)] = rng.uniform(0.0, kMaxTime);
    }
    b.x0 = sample(prior, n, rng);
    b.x1 = sample(target, n, rng);
    return b;
}

TrainReport train(VelocityNet& net, const GaussianMixture& prior, const GaussianMixture& target,
                  const TrainConfig& cfg, Rng& rng,
                  const std::function<void(int, double)>& on_epoch) {
    if (prior.dim() != target.dim() || prior.dim() != net.dim()) {
        throw InputError("network, prior, and target dimensions must agree");
    }
    if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.steps_per_epoch < 1 ||
        cfg.learning_rate < 0.0) {
        throw InputError("invalid training configuration");
    }
    const auto start = std::chrono::steady_clock::now();

    auto& layers = net.layers();
    std::vector<Layer> m1, m2;
    for (const auto& l : layers) {
        m1.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
        m2.push_back(m1.back());
    }

    TrainReport report;
    GradWorkspace ws;
    LossAndGrad lg;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double sum = 0.0;
        for (int s = 0; s < cfg.steps_per_epoch; ++s) {
            const FmBatch batch =
                draw_batch(prior, target, static_cast<std::size_t>(cfg.batch_size), rng);
            loss_and_grad_into(net, batch, ws, lg);
            sum += lg.loss;
            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            auto adam = [&](auto& param, auto& mom1, auto& mom2, const auto& g) {
                mom1 = cfg.beta1 * mom1 + (1.0 - cfg.beta1) * g;
                mom2 = cfg.beta2 * mom2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
                param.array() -= cfg.learning_rate * (mom1.array() / c1) /
                                 ((mom2.array() / c2).sqrt() + cfg.adam_epsilon);
            };
            for (std::size_t l = 0; l < layers.size(); ++l) {
                adam(layers[l].weight, m1[l].weight, m2[l].weight, lg.grad[l].weight);
                adam(layers[l].bias, m1[l].bias, m2[l].bias, lg.grad[l].bias);
            }
        }
        const double mean = sum / cfg.steps_per_epoch;
        if (!std::isfinite(mean)) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch), epoch);
        }
        report.epoch_loss.push_back(mean);
        if (on_epoch) {
            on_epoch(epoch, mean);
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.checksum = net.checksum();
    return report;
}

// Checkpoint layout (little-endian):
//   char[8]  "FLOWLAB\0"
//   u32      format version
//   u32      activation (0 silu, 1 relu)
//   u64      number of layer sizes, then u64 per size
//   per layer: weight doubles row-major (out x in), then bias doubles
namespace {

constexpr char kMagic[8] = {'F', 'L', 'O', 'W', 'L', 'A', 'B', '\0'};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view& in) {
    if (in.size() < sizeof(T)) {
        throw InputError("checkpoint is truncated");
    }
    T v;
    std::memcpy(&v, in.data(), sizeof(T));
    in.remove_prefix(sizeof(T));
    return v;
}

}  // namespace

std::string checkpoint_bytes(const VelocityNet& net) {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, net.activation() == Activation::silu ? 0u : 1u);
    put<std::uint64_t>(out, net.sizes().size());
    for (std::size_t s : net.sizes()) {
        put<std::uint64_t>(out, s);
    }
    for (const auto& l : net.layers()) {
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
                put<double>(out, l.weight(i, j));
            }
        }
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
            put<double>(out, l.bias[i]);
        }
    }
    return out;
}

VelocityNet checkpoint_from_bytes(std::string_view in) {
    if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
        throw InputError("not a flowlab checkpoint");
    }
    in.remove_prefix(sizeof(kMagic));
    const auto version = take<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw InputError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto act = take<std::uint32_t>(in);
    if (act > 1) {
        throw InputError("checkpoint has unknown activation tag");
    }
    const auto count = take<std::uint64_t>(in);
    if (count < 2 || count > 1024) {
        throw InputError("checkpoint has an implausible layer count");
    }
    std::vector<std::size_t> sizes;
    for (std::uint64_t i = 0; i < count; ++i) {
        sizes.push_back(static_cast<std::size_t>(take<std::uint64_t>(in)));
    }
    VelocityNet net(sizes, act == 0 ? Activation::silu : Activation::relu);
    for (auto& l : net.layers()) {
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
                l.weight(i, j) = take<double>(in);
            }
        }
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
            l.bias[i] = take<double>(in);
        }
    }
    if (!in.empty()) {
        throw InputError("checkpoint has trailing bytes");
    }
    return net;
}

void save_checkpoint(const VelocityNet& net, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot write checkpoint " + path.string());
    }
    const std::string bytes = checkpoint_bytes(net);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

VelocityNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw InputError("cannot open checkpoint " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return checkpoint_from_bytes(ss.str());
}

}  // namespace flowlab

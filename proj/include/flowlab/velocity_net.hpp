#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "flowlab/mixture.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

enum class Activation { silu, relu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Vector bias;             // out
};

/// MLP velocity model v(x, t); the input is x with t appended.
class VelocityNet {
public:
    /// All-zero parameters. sizes = {d + 1, hidden..., d}.
    VelocityNet(std::vector<std::size_t> sizes, Activation activation);

    /// Uniform fan-in initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    static VelocityNet initialized(std::size_t dim, const std::vector<std::size_t>& hidden,
                                   Activation activation, Rng& rng);

    std::size_t dim() const { return sizes_.back(); }
    const std::vector<std::size_t>& sizes() const { return sizes_; }
    Activation activation() const { return activation_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    Vector forward(const Vector& x, double t) const;
    /// Rows of x are points; t holds one time per row.
    Points forward(const Points& x, const Vector& t) const;
    Points forward(const Points& x, double t) const;

    std::size_t parameter_count() const;
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(const std::vector<double>& flat);

    /// FNV-1a over the raw parameter bytes.
    std::uint64_t checksum() const;

    bool operator==(const VelocityNet& other) const;

private:
    std::vector<std::size_t> sizes_;
    Activation activation_;
    std::vector<Layer> layers_;
};

/// Flow-matching minibatch: rows of x0 and x1 pair up with entries of t.
struct FmBatch {
    Points x0;
    Points x1;
    Vector t;
};

struct LossAndGrad {
    double loss = 0.0;
    std::vector<Layer> grad;  // same shapes as VelocityNet::layers()
};

/// Mean over the batch of |v(x_t, t) - (x1 - x0)|^2 with x_t = t x1 + (1-t) x0,
/// and its gradient by backpropagation.
LossAndGrad loss_and_grad(const VelocityNet& net, const FmBatch& batch);

/// Loss only.
double fm_loss(const VelocityNet& net, const FmBatch& batch);

struct TrainConfig {
    int epochs = 50;
    int batch_size = 256;
    int steps_per_epoch = 200;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> epoch_loss;
    double wall_seconds = 0.0;
    std::uint64_t checksum = 0;
};

/// Draws one minibatch: t ~ U[0, 1 - kTimeEpsilon], x0 ~ prior, x1 ~ target.
FmBatch draw_batch(const GaussianMixture& prior, const GaussianMixture& target,
                   std::size_t n, Rng& rng);

/// Adam on fresh minibatches. Throws TrainingError if an epoch loss is not finite.
TrainReport train(VelocityNet& net, const GaussianMixture& prior, const GaussianMixture& target,
                  const TrainConfig& cfg, Rng& rng,
                  const std::function<void(int, double)>& on_epoch = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_bytes(const VelocityNet& net);
VelocityNet checkpoint_from_bytes(std::string_view bytes);
void save_checkpoint(const VelocityNet& net, const std::filesystem::path& path);
VelocityNet load_checkpoint(const std::filesystem::path& path);

}  // namespace flowlab

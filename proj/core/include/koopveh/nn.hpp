#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "koopveh/matrix.hpp"

namespace koopveh::nn {

enum class Activation { relu, sigmoid, linear };

struct LayerSpec {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Activation activation = Activation::linear;
    bool has_bias = true;
};

using NetSpec = std::vector<LayerSpec>;

/// Chain of [dims[0] .. dims.back()] layers: ReLU hidden, `last` on the
/// final layer, with or without a final-layer bias.
NetSpec make_spec(const std::vector<std::size_t>& dims, Activation last, bool last_bias);

struct MlpParams {
    std::vector<numkit::Matrix> weights;          // out_dim x in_dim
    std::vector<std::vector<double>> biases;      // empty vector when no bias

    std::size_t count() const;
    void flatten_into(std::vector<double>& flat) const;
    void unflatten_from(const double* flat);      // reads count() doubles
    double squared_norm() const;
};

/// Columns of x are independent samples.
struct ForwardCache {
    std::vector<numkit::Matrix> activations;  // activations[0] = input, back() = output
    std::vector<numkit::Matrix> preact;
};

numkit::Matrix forward(const MlpParams& params, const NetSpec& spec, const numkit::Matrix& x,
                       ForwardCache* cache = nullptr);
std::vector<double> forward(const MlpParams& params, const NetSpec& spec,
                            const std::vector<double>& x);

struct Gradients {
    std::vector<numkit::Matrix> weights;
    std::vector<std::vector<double>> biases;

    static Gradients zeros_like(const MlpParams& p);
    void flatten_into(std::vector<double>& flat) const;
    void scale(double s);
};

/// Backpropagates output_grad (same shape as the forward output) through the
/// cached pass, accumulating into grads; returns the input gradient.
numkit::Matrix backward(const MlpParams& params, const NetSpec& spec, const ForwardCache& cache,
                        const numkit::Matrix& output_grad, Gradients& grads);

/// Weights and biases drawn U[-f, f] with f = 1/sqrt(fan_in).
MlpParams init_uniform(const NetSpec& spec, std::uint64_t seed);

/// Adam with bias correction over one flat parameter vector.
struct AdamState {
    double rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    std::vector<double> m;
    std::vector<double> v;

    void update(std::vector<double>& params, const std::vector<double>& grads);
};

/// Checkpoint: binary dims header + little-endian doubles, with the spec in
/// a JSON sidecar next to it.
void save_params(const MlpParams& params, const NetSpec& spec, const std::string& path);
std::pair<MlpParams, NetSpec> load_params(const std::string& path);

}  // namespace koopveh::nn

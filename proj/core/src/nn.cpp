#include "koopveh/nn.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace koopveh::nn {

using numkit::Matrix;

NetSpec make_spec(const std::vector<std::size_t>& dims, Activation last, bool last_bias) {
    if (dims.size() < 2) throw std::invalid_argument("make_spec: need at least two dims");
    NetSpec spec;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const bool is_last = (l + 2 == dims.size());
        spec.push_back({dims[l], dims[l + 1], is_last ? last : Activation::relu,
                        is_last ? last_bias : true});
    }
    return spec;
}

std::size_t MlpParams::count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

void MlpParams::flatten_into(std::vector<double>& flat) const {
    for (const auto& w : weights) flat.insert(flat.end(), w.data(), w.data() + w.size());
    for (const auto& b : biases) flat.insert(flat.end(), b.begin(), b.end());
}

void MlpParams::unflatten_from(const double* flat) {
    for (auto& w : weights) {
        std::memcpy(w.data(), flat, w.size() * sizeof(double));
        flat += w.size();
    }
    for (auto& b : biases) {
        std::memcpy(b.data(), flat, b.size() * sizeof(double));
        flat += b.size();
    }
}

double MlpParams::squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights)
        for (std::size_t i = 0; i < w.size(); ++i) s += w.data()[i] * w.data()[i];
    for (const auto& b : biases)
        for (double x : b) s += x * x;
    return s;
}

namespace {

void apply_activation(Matrix& z, Activation a) {
    switch (a) {
        case Activation::relu:
            for (std::size_t i = 0; i < z.size(); ++i)
                if (z.data()[i] < 0.0) z.data()[i] = 0.0;
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < z.size(); ++i)
                z.data()[i] = 1.0 / (1.0 + std::exp(-z.data()[i]));
            break;
        case Activation::linear:
            break;
    }
}

}  // namespace

Matrix forward(const MlpParams& params, const NetSpec& spec, const Matrix& x,
               ForwardCache* cache) {
    if (spec.empty() || params.weights.size() != spec.size())
        throw std::invalid_argument("forward: params/spec mismatch");
    if (x.rows() != spec.front().in_dim)
        throw std::invalid_argument("forward: input dimension mismatch");
    if (cache) {
        cache->activations.clear();
        cache->preact.clear();
        cache->activations.push_back(x);
    }
    Matrix h = x;
    for (std::size_t l = 0; l < spec.size(); ++l) {
        Matrix z = numkit::matmul(params.weights[l], h);
        if (spec[l].has_bias) {
            const auto& b = params.biases[l];
            for (std::size_t i = 0; i < z.rows(); ++i)
                for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += b[i];
        }
        if (cache) cache->preact.push_back(z);
        apply_activation(z, spec[l].activation);
        if (cache) cache->activations.push_back(z);
        h = std::move(z);
    }
    return h;
}

std::vector<double> forward(const MlpParams& params, const NetSpec& spec,
                            const std::vector<double>& x) {
    return forward(params, spec, Matrix::from_column(x)).column(0);
}

Gradients Gradients::zeros_like(const MlpParams& p) {
    Gradients g;
    for (const auto& w : p.weights) g.weights.emplace_back(w.rows(), w.cols());
    for (const auto& b : p.biases) g.biases.emplace_back(b.size(), 0.0);
    return g;
}

void Gradients::flatten_into(std::vector<double>& flat) const {
    for (const auto& w : weights) flat.insert(flat.end(), w.data(), w.data() + w.size());
    for (const auto& b : biases) flat.insert(flat.end(), b.begin(), b.end());
}

void Gradients::scale(double s) {
    for (auto& w : weights)
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] *= s;
    for (auto& b : biases)
        for (double& x : b) x *= s;
}

Matrix backward(const MlpParams& params, const NetSpec& spec, const ForwardCache& cache,
                const Matrix& output_grad, Gradients& grads) {
    if (cache.activations.size() != spec.size() + 1 || cache.preact.size() != spec.size())
        throw std::invalid_argument("backward: stale or mismatched cache");
    if (output_grad.rows() != spec.back().out_dim ||
        output_grad.cols() != cache.activations.back().cols())
        throw std::invalid_argument("backward: output gradient shape");

    Matrix delta = output_grad;
    for (std::size_t l = spec.size(); l-- > 0;) {
        switch (spec[l].activation) {
            case Activation::relu: {
                const Matrix& z = cache.preact[l];
                for (std::size_t i = 0; i < delta.size(); ++i)
                    if (z.data()[i] <= 0.0) delta.data()[i] = 0.0;  // subgradient 0 at 0
                break;
            }
            case Activation::sigmoid: {
                const Matrix& a = cache.activations[l + 1];
                for (std::size_t i = 0; i < delta.size(); ++i)
                    delta.data()[i] *= a.data()[i] * (1.0 - a.data()[i]);
                break;
            }
            case Activation::linear:
                break;
        }
        const Matrix& input = cache.activations[l];
        // dW += delta * input^T
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(delta.rows()),
                    static_cast<int>(input.rows()), static_cast<int>(delta.cols()), 1.0,
                    delta.data(), static_cast<int>(delta.cols()), input.data(),
                    static_cast<int>(input.cols()), 1.0, grads.weights[l].data(),
                    static_cast<int>(grads.weights[l].cols()));
        if (spec[l].has_bias) {
            auto& gb = grads.biases[l];
            for (std::size_t i = 0; i < delta.rows(); ++i)
                for (std::size_t j = 0; j < delta.cols(); ++j) gb[i] += delta(i, j);
        }
        if (l > 0) {
            // d(input) = W^T * delta
            Matrix next(params.weights[l].cols(), delta.cols());
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans,
                        static_cast<int>(params.weights[l].cols()),
                        static_cast<int>(delta.cols()), static_cast<int>(delta.rows()), 1.0,
                        params.weights[l].data(), static_cast<int>(params.weights[l].cols()),
                        delta.data(), static_cast<int>(delta.cols()), 0.0, next.data(),
                        static_cast<int>(next.cols()));
            delta = std::move(next);
        } else {
            Matrix next(params.weights[0].cols(), delta.cols());
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans,
                        static_cast<int>(params.weights[0].cols()),
                        static_cast<int>(delta.cols()), static_cast<int>(delta.rows()), 1.0,
                        params.weights[0].data(), static_cast<int>(params.weights[0].cols()),
                        delta.data(), static_cast<int>(delta.cols()), 0.0, next.data(),
                        static_cast<int>(next.cols()));
            return next;
        }
    }
    return Matrix();  // unreachable for nonempty specs
}

MlpParams init_uniform(const NetSpec& spec, std::uint64_t seed) {
    numkit::Rng rng(seed);
    MlpParams p;
    for (const auto& layer : spec) {
        if (layer.in_dim < 1 || layer.out_dim < 1)
            throw std::invalid_argument("init_uniform: zero layer dimension");
        const double f = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
        Matrix w(layer.out_dim, layer.in_dim);
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-f, f);
        p.weights.push_back(std::move(w));
        std::vector<double> b;
        if (layer.has_bias) {
            b.resize(layer.out_dim);
            for (double& x : b) x = rng.uniform(-f, f);
        }
        p.biases.push_back(std::move(b));
    }
    return p;
}

void AdamState::update(std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("AdamState: parameter/gradient shape mismatch");
    if (m.empty()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    }
    if (m.size() != params.size())
        throw std::invalid_argument("AdamState: moment shape mismatch");
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= rate * mhat / (std::sqrt(vhat) + epsilon);
    }
}

void save_params(const MlpParams& params, const NetSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_params: cannot open " + path);
    const std::uint32_t layers = static_cast<std::uint32_t>(spec.size());
    out.write(reinterpret_cast<const char*>(&layers), sizeof(layers));
    for (const auto& l : spec) {
        const std::uint32_t dims[4] = {static_cast<std::uint32_t>(l.in_dim),
                                       static_cast<std::uint32_t>(l.out_dim),
                                       static_cast<std::uint32_t>(l.activation),
                                       l.has_bias ? 1u : 0u};
        out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    }
    std::vector<double> flat;
    params.flatten_into(flat);
    out.write(reinterpret_cast<const char*>(flat.data()),
              static_cast<std::streamsize>(flat.size() * sizeof(double)));

    nlohmann::json meta;
    meta["format"] = "koopveh-mlp-v1";
    meta["layers"] = layers;
    meta["parameters"] = flat.size();
    std::ofstream js(path + ".json");
    js << meta.dump(2) << "\n";
}

std::pair<MlpParams, NetSpec> load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_params: cannot open " + path);
    std::uint32_t layers = 0;
    in.read(reinterpret_cast<char*>(&layers), sizeof(layers));
    NetSpec spec;
    for (std::uint32_t l = 0; l < layers; ++l) {
        std::uint32_t dims[4];
        in.read(reinterpret_cast<char*>(dims), sizeof(dims));
        spec.push_back({dims[0], dims[1], static_cast<Activation>(dims[2]), dims[3] != 0});
    }
    MlpParams p;
    for (const auto& l : spec) {
        p.weights.emplace_back(l.out_dim, l.in_dim);
        p.biases.emplace_back(l.has_bias ? l.out_dim : 0, 0.0);
    }
    std::vector<double> flat(p.count());
    in.read(reinterpret_cast<char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_params: truncated file " + path);
    p.unflatten_from(flat.data());
    return {std::move(p), std::move(spec)};
}

}  // namespace koopveh::nn

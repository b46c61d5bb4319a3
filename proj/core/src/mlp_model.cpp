#include "koopveh/mlp_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace koopveh::mlpnet {

using numkit::Matrix;

std::vector<double> predict_next(const MlpDynModel& model, const std::vector<double>& x,
                                 const std::vector<double>& u) {
    if (x.size() != model.state_dim) throw std::invalid_argument("predict_next: bad state dim");
    std::vector<double> z = x;
    z.insert(z.end(), u.begin(), u.end());
    return nn::forward(model.params, model.spec, z);
}

std::vector<std::vector<double>> predict_multistep(
    const MlpDynModel& model, const std::vector<double>& x0,
    const std::vector<std::vector<double>>& u_seq) {
    std::vector<std::vector<double>> out;
    out.reserve(u_seq.size() + 1);
    out.push_back(x0);
    for (const auto& u : u_seq) out.push_back(predict_next(model, out.back(), u));
    return out;
}

MlpLossValues mlp_loss(const MlpDynModel& model, const std::vector<dataset::Window>& batch,
                       const MlpLossWeights& weights, nn::Gradients* grads) {
    if (batch.empty()) throw std::invalid_argument("mlp_loss: empty batch");
    const std::size_t bs = batch.size();
    const std::size_t p = batch[0].u_seq.size();
    const std::size_t n = model.state_dim;
    const std::size_t m = batch[0].u_seq[0].size();
    if (model.spec.front().in_dim != n + m)
        throw std::invalid_argument("mlp_loss: model input dim mismatch");
    for (const auto& w : batch)
        if (w.u_seq.size() != p || w.x_seq.size() != p || w.x0.size() != n)
            throw std::invalid_argument("mlp_loss: ragged batch");

    std::vector<Matrix> x(p + 1);
    std::vector<Matrix> u(p);
    x[0] = Matrix(n, bs);
    for (std::size_t k = 0; k < bs; ++k) x[0].set_column(k, batch[k].x0);
    for (std::size_t i = 0; i < p; ++i) {
        x[i + 1] = Matrix(n, bs);
        u[i] = Matrix(m, bs);
        for (std::size_t k = 0; k < bs; ++k) {
            x[i + 1].set_column(k, batch[k].x_seq[i]);
            u[i].set_column(k, batch[k].u_seq[i]);
        }
    }

    // Self-fed rollout: x_hat[i] = M([x_hat[i-1]; u[i-1]]).
    std::vector<Matrix> x_hat(p + 1);
    std::vector<nn::ForwardCache> cache(p + 1);
    x_hat[0] = x[0];
    for (std::size_t i = 1; i <= p; ++i) {
        Matrix z(n + m, bs);
        z.set_block(0, 0, x_hat[i - 1]);
        z.set_block(n, 0, u[i - 1]);
        x_hat[i] = nn::forward(model.params, model.spec, z, grads ? &cache[i] : nullptr);
    }

    const double scale = 1.0 / (static_cast<double>(p) * static_cast<double>(bs));
    MlpLossValues loss;
    for (std::size_t i = 1; i <= p; ++i) {
        const Matrix e = x[i] - x_hat[i];
        loss.pred += e.frobenius_norm() * e.frobenius_norm();
        for (std::size_t k = 0; k < bs; ++k) {
            double mx = 0.0;
            for (std::size_t r = 0; r < n; ++r) mx = std::max(mx, std::abs(e(r, k)));
            loss.inf_norm += mx;
        }
    }
    loss.pred *= scale;
    loss.inf_norm *= scale;
    loss.total = weights.b1 * loss.pred + weights.b2 * loss.inf_norm +
                 weights.b3 * model.params.squared_norm();
    if (!grads) return loss;

    *grads = nn::Gradients::zeros_like(model.params);
    // Backprop through time: each step's input gradient carries the state
    // block back to the previous step.
    Matrix g_carry;  // gradient w.r.t. x_hat[i], accumulated top-down
    for (std::size_t i = p; i >= 1; --i) {
        Matrix g = x_hat[i] - x[i];
        g *= 2.0 * weights.b1 * scale;
        for (std::size_t k = 0; k < bs; ++k) {
            std::size_t arg = 0;
            double best = -1.0;
            for (std::size_t r = 0; r < n; ++r) {
                const double a = std::abs(x[i](r, k) - x_hat[i](r, k));
                if (a > best) {
                    best = a;
                    arg = r;
                }
            }
            if (best > 0.0)
                g(arg, k) += weights.b2 * scale *
                             (x[i](arg, k) - x_hat[i](arg, k) > 0.0 ? -1.0 : 1.0);
        }
        if (g_carry.rows() > 0) g += g_carry;
        const Matrix g_in = nn::backward(model.params, model.spec, cache[i], g, *grads);
        g_carry = g_in.block(0, 0, n, bs);
    }
    for (std::size_t l = 0; l < model.params.weights.size(); ++l) {
        for (std::size_t j = 0; j < model.params.weights[l].size(); ++j)
            grads->weights[l].data()[j] += 2.0 * weights.b3 * model.params.weights[l].data()[j];
        for (std::size_t j = 0; j < model.params.biases[l].size(); ++j)
            grads->biases[l][j] += 2.0 * weights.b3 * model.params.biases[l][j];
    }
    return loss;
}

namespace {

double validation_pred_loss(const MlpDynModel& model,
                            const std::vector<dataset::Window>& windows,
                            const MlpLossWeights& weights) {
    if (windows.empty()) return 0.0;
    double sum = 0.0;
    std::size_t batches = 0;
    const std::size_t chunk = 64;
    for (std::size_t start = 0; start < windows.size(); start += chunk) {
        const std::size_t end = std::min(windows.size(), start + chunk);
        std::vector<dataset::Window> b(windows.begin() + start, windows.begin() + end);
        sum += mlp_loss(model, b, weights).pred;
        ++batches;
    }
    return sum / static_cast<double>(batches);
}

std::vector<dataset::Window> gather_windows(const std::vector<plant::Episode>& episodes,
                                            const dataset::NormalizationStats& stats,
                                            std::size_t p, std::size_t tau,
                                            std::uint64_t seed) {
    std::vector<dataset::Window> all;
    std::uint64_t s = seed;
    for (const auto& ep : episodes) {
        auto w = dataset::window_sequences(ep, stats, p, tau, ++s);
        std::move(w.begin(), w.end(), std::back_inserter(all));
    }
    return all;
}

}  // namespace

MlpTrainResult train_mlp(const koopman::TrainingData& data, const koopman::TrainConfig& config,
                         const MlpLossWeights& weights, std::uint64_t seed) {
    if (config.p < 1 || config.batch_size < 1 || !(config.stop_tolerance > 0.0))
        throw std::invalid_argument("train_mlp: invalid config");
    data.stats.validate();

    const std::size_t n_tau = dataset::kStateDim * config.tau;
    const std::size_t m = dataset::kControlDim;

    std::vector<std::size_t> dims = {n_tau + m, 32, 64, 128, 128, 64, 32};
    std::size_t rand_layer = 0;
    if (config.random_layer.enabled) {
        dims.push_back(config.random_layer.width);
        rand_layer = dims.size() - 1;  // layer producing this width
    }
    dims.push_back(n_tau);
    rand_layer = config.random_layer.enabled ? rand_layer - 1 : 0;

    MlpTrainResult result;
    MlpDynModel& model = result.model;
    model.spec = nn::make_spec(dims, nn::Activation::sigmoid, true);
    model.params = nn::init_uniform(model.spec, seed);
    model.state_dim = n_tau;
    model.stats = data.stats;

    // Flat spans of the random layer (all weights first, then all biases).
    std::size_t rand_w_begin = 0, rand_w_end = 0, rand_b_begin = 0, rand_b_end = 0;
    if (config.random_layer.enabled) {
        std::size_t off = 0;
        for (std::size_t l = 0; l < model.spec.size(); ++l) {
            const std::size_t wsize = model.spec[l].in_dim * model.spec[l].out_dim;
            if (l == rand_layer) {
                rand_w_begin = off;
                rand_w_end = off + wsize;
            }
            off += wsize;
        }
        for (std::size_t l = 0; l < model.spec.size(); ++l) {
            if (l == rand_layer) {
                rand_b_begin = off;
                rand_b_end = off + model.params.biases[l].size();
            }
            off += model.params.biases[l].size();
        }
    }

    nn::AdamState adam;
    adam.rate = config.learning_rate;

    const std::vector<dataset::Window> val_windows = gather_windows(
        data.validation, data.stats, config.p, config.tau, seed ^ 0xabcdef);
    const std::size_t val_cap = std::min<std::size_t>(val_windows.size(), 256);
    const std::vector<dataset::Window> val_subset(val_windows.begin(),
                                                  val_windows.begin() + val_cap);

    std::vector<double> flat, gflat;
    flat.reserve(model.params.count());
    model.params.flatten_into(flat);
    numkit::Rng shuffle_rng(seed ^ 0x5eed);
    numkit::Rng layer_rng(seed ^ 0x7a11);

    std::size_t batches = 0;
    double running_pred = 0.0;
    std::size_t running_count = 0;
    bool stop = false;

    {
        koopman::HistoryRow init;
        init.val_recon = validation_pred_loss(model, val_subset, weights);
        init.train_recon = init.val_recon;
        result.history.push_back(init);
    }

    for (std::size_t epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
        auto windows = gather_windows(data.train, data.stats, config.p, config.tau,
                                      seed + 1000 * (epoch + 1));
        if (windows.empty()) throw std::invalid_argument("train_mlp: no usable windows");
        for (std::size_t i = windows.size(); i > 1; --i)
            std::swap(windows[i - 1], windows[shuffle_rng.index(i)]);

        for (std::size_t start = 0; start < windows.size() && !stop;
             start += config.batch_size) {
            const std::size_t end = std::min(windows.size(), start + config.batch_size);
            std::vector<dataset::Window> batch(windows.begin() + start, windows.begin() + end);

            if (config.random_layer.enabled) {
                auto& w = model.params.weights[rand_layer];
                auto& b = model.params.biases[rand_layer];
                for (std::size_t j = 0; j < w.size(); ++j)
                    w.data()[j] = layer_rng.gauss(0.0, config.random_layer.sigma);
                for (double& v : b) v = layer_rng.gauss(0.0, config.random_layer.sigma);
                flat.clear();
                model.params.flatten_into(flat);
            }

            nn::Gradients grads;
            const MlpLossValues loss = mlp_loss(model, batch, weights, &grads);
            if (!std::isfinite(loss.total))
                throw koopman::TrainingFault("train_mlp: non-finite loss", result.history,
                                             batches);
            if (loss.total > 1e6)
                throw koopman::TrainingFault("train_mlp: loss diverged", result.history,
                                             batches);
            result.final_loss = loss.total;
            running_pred += loss.pred;
            ++running_count;

            if (std::abs(loss.total) <= config.stop_tolerance) {
                stop = true;
                break;
            }

            gflat.clear();
            gflat.reserve(flat.size());
            grads.flatten_into(gflat);
            if (config.random_layer.enabled) {
                std::fill(gflat.begin() + static_cast<std::ptrdiff_t>(rand_w_begin),
                          gflat.begin() + static_cast<std::ptrdiff_t>(rand_w_end), 0.0);
                std::fill(gflat.begin() + static_cast<std::ptrdiff_t>(rand_b_begin),
                          gflat.begin() + static_cast<std::ptrdiff_t>(rand_b_end), 0.0);
            }

            adam.update(flat, gflat);
            model.params.unflatten_from(flat.data());
            ++batches;

            if (batches % config.log_every == 0) {
                koopman::HistoryRow row;
                row.batch = batches;
                row.train_recon = running_pred / static_cast<double>(running_count);
                row.val_recon = validation_pred_loss(model, val_subset, weights);
                result.history.push_back(row);
                running_pred = 0.0;
                running_count = 0;
            }
            if (config.max_batches > 0 && batches >= config.max_batches) stop = true;
        }
    }
    result.batches = batches;
    return result;
}

void save_checkpoint(const MlpDynModel& model, const std::string& path) {
    nn::save_params(model.params, model.spec, path + ".net.bin");
    nlohmann::json j;
    j["format"] = "koopveh-mlpdyn-v1";
    j["state_dim"] = model.state_dim;
    j["stats_min"] = model.stats.min;
    j["stats_max"] = model.stats.max;
    std::ofstream out(path + ".json");
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path + ".json");
    out << j.dump() << "\n";
}

MlpDynModel load_checkpoint(const std::string& path) {
    MlpDynModel model;
    auto net = nn::load_params(path + ".net.bin");
    model.params = std::move(net.first);
    model.spec = std::move(net.second);
    std::ifstream in(path + ".json");
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path + ".json");
    nlohmann::json j;
    in >> j;
    model.state_dim = j.at("state_dim").get<std::size_t>();
    const auto mn = j.at("stats_min").get<std::vector<double>>();
    const auto mx = j.at("stats_max").get<std::vector<double>>();
    std::copy(mn.begin(), mn.end(), model.stats.min.begin());
    std::copy(mx.begin(), mx.end(), model.stats.max.begin());
    return model;
}

}  // namespace koopveh::mlpnet

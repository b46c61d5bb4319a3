#include "koopveh/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace koopveh::koopman {

using numkit::Matrix;

LinearLiftedModel fit_lifted(const Matrix& phi_x, const Matrix& phi_y, const Matrix& u,
                             const Matrix& x) {
    const std::size_t m_snap = phi_x.cols();
    if (phi_y.cols() != m_snap || u.cols() != m_snap || x.cols() != m_snap)
        throw std::invalid_argument("fit_lifted: snapshot counts differ");
    const std::size_t big_l = phi_x.rows();
    const std::size_t m = u.rows();

    // W stacks Psi(x_k) = [phi(x_k); u_k]; [A B] = Phi_y W^T (W W^T)^dagger.
    Matrix w(big_l + m, m_snap);
    w.set_block(0, 0, phi_x);
    w.set_block(big_l, 0, u);
    const Matrix ab = numkit::lstsq_right(phi_y, w);
    const Matrix c = numkit::lstsq_right(x, phi_x);

    LinearLiftedModel model;
    model.a = ab.block(0, 0, big_l, big_l);
    model.b = ab.block(0, big_l, big_l, m);
    model.c = c;
    model.residual_ab = (phi_y - numkit::matmul(ab, w)).frobenius_norm();
    model.residual_c = (x - numkit::matmul(c, phi_x)).frobenius_norm();
    return model;
}

namespace {

template <typename LiftFn>
LinearLiftedModel fit_with_lift(const Matrix& x, const Matrix& y, const Matrix& u,
                                LiftFn&& lift_fn) {
    const std::size_t m_snap = x.cols();
    std::vector<double> first = lift_fn(x.column(0));
    Matrix phi_x(first.size(), m_snap);
    Matrix phi_y(first.size(), m_snap);
    phi_x.set_column(0, first);
    phi_y.set_column(0, lift_fn(y.column(0)));
    for (std::size_t k = 1; k < m_snap; ++k) {
        phi_x.set_column(k, lift_fn(x.column(k)));
        phi_y.set_column(k, lift_fn(y.column(k)));
    }
    return fit_lifted(phi_x, phi_y, u, x);
}

}  // namespace

LinearLiftedModel edmd_fit(const Matrix& x, const Matrix& y, const Matrix& u,
                           const lifting::TpsDictionary& dict) {
    auto fn = [dict](const std::vector<double>& v) { return lifting::lift(v, dict); };
    LinearLiftedModel model = fit_with_lift(x, y, u, fn);
    model.lift = fn;
    return model;
}

LinearLiftedModel elm_edmd_fit(const Matrix& x, const Matrix& y, const Matrix& u,
                               const lifting::ElmFeatureMap& map) {
    auto fn = [map](const std::vector<double>& v) { return lifting::elm_lift(v, map); };
    LinearLiftedModel model = fit_with_lift(x, y, u, fn);
    model.lift = fn;
    return model;
}

std::vector<std::vector<double>> rollout_lifted(const Matrix& a, const Matrix& b,
                                                const std::vector<double>& phi0,
                                                const std::vector<std::vector<double>>& u_seq) {
    if (a.rows() != a.cols() || a.rows() != phi0.size() || b.rows() != a.rows())
        throw std::invalid_argument("rollout_lifted: dimension mismatch");
    std::vector<std::vector<double>> out;
    out.reserve(u_seq.size());
    std::vector<double> phi = phi0;
    for (const auto& u : u_seq) {
        std::vector<double> next = numkit::matvec(a, phi);
        const std::vector<double> bu = numkit::matvec(b, u);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] += bu[i];
        out.push_back(next);
        phi = std::move(next);
    }
    return out;
}

Matrix DeepKoopmanModel::encode(const Matrix& x) const {
    const Matrix feats = nn::forward(encoder, encoder_spec, x);
    Matrix phi(lifted_dim(), x.cols());
    phi.set_block(0, 0, x);
    phi.set_block(state_dim, 0, feats);
    return phi;
}

std::vector<double> DeepKoopmanModel::encode(const std::vector<double>& x) const {
    return encode(Matrix::from_column(x)).column(0);
}

Matrix DeepKoopmanModel::decode(const Matrix& phi) const {
    return nn::forward(decoder, decoder_spec, phi);
}

std::vector<double> DeepKoopmanModel::decode(const std::vector<double>& phi) const {
    return decode(Matrix::from_column(phi)).column(0);
}

LossValues deep_losses(const DeepKoopmanModel& model,
                       const std::vector<dataset::Window>& batch, const LossWeights& weights,
                       DeepGradients* grads) {
    if (batch.empty()) throw std::invalid_argument("deep_losses: empty batch");
    const std::size_t bs = batch.size();
    const std::size_t p = batch[0].u_seq.size();
    const std::size_t n = model.state_dim;
    const std::size_t big_l = model.lifted_dim();
    const std::size_t m = model.control_dim();
    for (const auto& w : batch)
        if (w.u_seq.size() != p || w.x_seq.size() != p || w.x0.size() != n)
            throw std::invalid_argument("deep_losses: ragged batch");

    // Column-stacked batch tensors: X[0] is the start state, X[i] the i-th
    // target; U[i] advances X[i] to X[i+1].
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

    // Forward: encodings of every sampled state, the linear rollout, and
    // both decode paths.
    std::vector<nn::ForwardCache> enc_cache(p + 1);
    std::vector<Matrix> phi(p + 1);
    for (std::size_t i = 0; i <= p; ++i) {
        const Matrix feats = nn::forward(model.encoder, model.encoder_spec, x[i],
                                         grads ? &enc_cache[i] : nullptr);
        phi[i] = Matrix(big_l, bs);
        phi[i].set_block(0, 0, x[i]);
        phi[i].set_block(n, 0, feats);
    }
    std::vector<Matrix> phi_hat(p + 1);
    phi_hat[0] = phi[0];
    for (std::size_t i = 1; i <= p; ++i) {
        phi_hat[i] = numkit::matmul(model.a, phi_hat[i - 1]);
        phi_hat[i] += numkit::matmul(model.b, u[i - 1]);
    }
    std::vector<nn::ForwardCache> dec_rec_cache(p + 1), dec_roll_cache(p + 1);
    std::vector<Matrix> d_rec(p + 1), d_roll(p + 1);
    for (std::size_t i = 1; i <= p; ++i) {
        d_rec[i] = nn::forward(model.decoder, model.decoder_spec, phi[i],
                               grads ? &dec_rec_cache[i] : nullptr);
        d_roll[i] = nn::forward(model.decoder, model.decoder_spec, phi_hat[i],
                                grads ? &dec_roll_cache[i] : nullptr);
    }

    const double scale = 1.0 / (static_cast<double>(p) * static_cast<double>(bs));
    LossValues loss;
    for (std::size_t i = 1; i <= p; ++i) {
        const Matrix e_rec = x[i] - d_rec[i];
        const Matrix e_roll = x[i] - d_roll[i];
        const Matrix e_lift = phi[i] - phi_hat[i];
        loss.recon += e_rec.frobenius_norm() * e_rec.frobenius_norm();
        loss.pred += e_roll.frobenius_norm() * e_roll.frobenius_norm();
        loss.lifted += e_lift.frobenius_norm() * e_lift.frobenius_norm();
        for (std::size_t k = 0; k < bs; ++k) {
            double m_rec = 0.0, m_roll = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                m_rec = std::max(m_rec, std::abs(e_rec(r, k)));
                m_roll = std::max(m_roll, std::abs(e_roll(r, k)));
            }
            loss.inf_norm += m_rec + m_roll;
        }
    }
    loss.recon *= scale;
    loss.pred *= scale;
    loss.lifted *= scale;
    loss.inf_norm *= scale;
    loss.total = weights.a1 * loss.recon + weights.a2 * loss.pred + weights.a3 * loss.lifted +
                 weights.a4 * loss.inf_norm + weights.a5 * model.encoder.squared_norm() +
                 weights.a6 * model.decoder.squared_norm();
    if (!grads) return loss;

    grads->encoder = nn::Gradients::zeros_like(model.encoder);
    grads->decoder = nn::Gradients::zeros_like(model.decoder);
    grads->a = Matrix(big_l, big_l);
    grads->b = Matrix(big_l, m);

    std::vector<Matrix> g_phi(p + 1), g_phi_hat(p + 1);
    for (std::size_t i = 0; i <= p; ++i) {
        g_phi[i] = Matrix(big_l, bs);
        g_phi_hat[i] = Matrix(big_l, bs);
    }

    auto add_inf_subgrad = [&](Matrix& g, const Matrix& err, double coeff) {
        // d||v||_inf: sign at the largest-magnitude entry of each column.
        for (std::size_t k = 0; k < err.cols(); ++k) {
            std::size_t arg = 0;
            double best = -1.0;
            for (std::size_t r = 0; r < err.rows(); ++r)
                if (std::abs(err(r, k)) > best) {
                    best = std::abs(err(r, k));
                    arg = r;
                }
            if (best > 0.0) g(arg, k) += coeff * (err(arg, k) > 0.0 ? -1.0 : 1.0);
        }
    };

    for (std::size_t i = 1; i <= p; ++i) {
        // Reconstruction decode path.
        Matrix g_rec = d_rec[i] - x[i];
        g_rec *= 2.0 * weights.a1 * scale;
        add_inf_subgrad(g_rec, x[i] - d_rec[i], weights.a4 * scale);
        g_phi[i] += nn::backward(model.decoder, model.decoder_spec, dec_rec_cache[i], g_rec,
                                 grads->decoder);
        // Rollout decode path.
        Matrix g_roll = d_roll[i] - x[i];
        g_roll *= 2.0 * weights.a2 * scale;
        add_inf_subgrad(g_roll, x[i] - d_roll[i], weights.a4 * scale);
        g_phi_hat[i] += nn::backward(model.decoder, model.decoder_spec, dec_roll_cache[i],
                                     g_roll, grads->decoder);
        // Lifted-space linearity.
        Matrix g_lift = phi[i] - phi_hat[i];
        g_lift *= 2.0 * weights.a3 * scale;
        g_phi[i] += g_lift;
        g_lift *= -1.0;
        g_phi_hat[i] += g_lift;
    }

    // Backpropagate the rollout recursion phi_hat_i = A phi_hat_{i-1} + B u.
    const Matrix a_t = numkit::transpose(model.a);
    for (std::size_t i = p; i >= 1; --i) {
        grads->a += numkit::matmul(g_phi_hat[i], numkit::transpose(phi_hat[i - 1]));
        grads->b += numkit::matmul(g_phi_hat[i], numkit::transpose(u[i - 1]));
        g_phi_hat[i - 1] += numkit::matmul(a_t, g_phi_hat[i]);
    }
    g_phi[0] += g_phi_hat[0];

    // Encoder receives the feature block of each lifted gradient.
    for (std::size_t i = 0; i <= p; ++i) {
        const Matrix g_feat = g_phi[i].block(n, 0, big_l - n, bs);
        nn::backward(model.encoder, model.encoder_spec, enc_cache[i], g_feat, grads->encoder);
    }

    // l2 regularizers.
    for (std::size_t l = 0; l < model.encoder.weights.size(); ++l) {
        for (std::size_t j = 0; j < model.encoder.weights[l].size(); ++j)
            grads->encoder.weights[l].data()[j] +=
                2.0 * weights.a5 * model.encoder.weights[l].data()[j];
        for (std::size_t j = 0; j < model.encoder.biases[l].size(); ++j)
            grads->encoder.biases[l][j] += 2.0 * weights.a5 * model.encoder.biases[l][j];
    }
    for (std::size_t l = 0; l < model.decoder.weights.size(); ++l) {
        for (std::size_t j = 0; j < model.decoder.weights[l].size(); ++j)
            grads->decoder.weights[l].data()[j] +=
                2.0 * weights.a6 * model.decoder.weights[l].data()[j];
        for (std::size_t j = 0; j < model.decoder.biases[l].size(); ++j)
            grads->decoder.biases[l][j] += 2.0 * weights.a6 * model.decoder.biases[l][j];
    }
    return loss;
}

namespace {

double reconstruction_loss(const DeepKoopmanModel& model,
                           const std::vector<dataset::Window>& windows) {
    if (windows.empty()) return 0.0;
    const std::size_t n = model.state_dim;
    std::size_t count = 0;
    double sum = 0.0;
    for (const auto& w : windows) {
        Matrix x(n, w.x_seq.size());
        for (std::size_t i = 0; i < w.x_seq.size(); ++i) x.set_column(i, w.x_seq[i]);
        const Matrix d = model.decode(model.encode(x));
        const Matrix e = x - d;
        sum += e.frobenius_norm() * e.frobenius_norm();
        count += w.x_seq.size();
    }
    return sum / static_cast<double>(count);
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

TrainResult train_deep(const TrainingData& data, const TrainConfig& config,
                       const LossWeights& weights, std::uint64_t seed) {
    if (config.p < 1 || config.batch_size < 1 || !(config.stop_tolerance > 0.0))
        throw std::invalid_argument("train_deep: invalid config");
    data.stats.validate();

    const std::size_t n_tau = dataset::kStateDim * config.tau;
    const std::size_t k = config.feature_dim;
    const std::size_t big_l = n_tau + k;
    const std::size_t m = dataset::kControlDim;

    std::vector<std::size_t> enc_dims = {n_tau, 32, 64};
    std::size_t random_layer_index = 0;
    if (config.random_layer.enabled) {
        enc_dims.push_back(config.random_layer.width);
        random_layer_index = enc_dims.size() - 1;  // layer producing this dim
    }
    enc_dims.push_back(k);
    const std::vector<std::size_t> dec_dims = {big_l, 128, 64, 32, n_tau};

    TrainResult result;
    DeepKoopmanModel& model = result.model;
    model.encoder_spec = nn::make_spec(enc_dims, nn::Activation::linear, false);
    model.decoder_spec = nn::make_spec(dec_dims, nn::Activation::sigmoid, true);
    model.encoder = nn::init_uniform(model.encoder_spec, seed);
    model.decoder = nn::init_uniform(model.decoder_spec, seed + 1);
    model.a = Matrix::identity(big_l);
    model.b = Matrix(big_l, m);
    model.state_dim = n_tau;
    model.stats = data.stats;

    const std::size_t enc_count = model.encoder.count();
    const std::size_t dec_count = model.decoder.count();
    const std::size_t total = enc_count + dec_count + big_l * big_l + big_l * m;

    nn::AdamState adam;
    adam.rate = config.learning_rate;

    // Flat layout: [encoder | decoder | A | B].
    auto flatten_params = [&](std::vector<double>& flat) {
        flat.clear();
        flat.reserve(total);
        model.encoder.flatten_into(flat);
        model.decoder.flatten_into(flat);
        flat.insert(flat.end(), model.a.data(), model.a.data() + model.a.size());
        flat.insert(flat.end(), model.b.data(), model.b.data() + model.b.size());
    };
    auto unflatten_params = [&](const std::vector<double>& flat) {
        const double* ptr = flat.data();
        model.encoder.unflatten_from(ptr);
        ptr += enc_count;
        model.decoder.unflatten_from(ptr);
        ptr += dec_count;
        std::copy(ptr, ptr + model.a.size(), model.a.data());
        ptr += model.a.size();
        std::copy(ptr, ptr + model.b.size(), model.b.data());
    };

    // Random-layer spans within the encoder flat block (all weights come
    // first, then all biases).
    const std::size_t rand_layer = random_layer_index > 0 ? random_layer_index - 1 : 0;
    std::size_t rand_w_begin = 0, rand_w_end = 0, rand_b_begin = 0, rand_b_end = 0;
    if (config.random_layer.enabled) {
        std::size_t off = 0;
        for (std::size_t l = 0; l < model.encoder_spec.size(); ++l) {
            const std::size_t wsize =
                model.encoder_spec[l].in_dim * model.encoder_spec[l].out_dim;
            if (l == rand_layer) {
                rand_w_begin = off;
                rand_w_end = off + wsize;
            }
            off += wsize;
        }
        for (std::size_t l = 0; l < model.encoder_spec.size(); ++l) {
            if (l == rand_layer) {
                rand_b_begin = off;
                rand_b_end = off + model.encoder.biases[l].size();
            }
            off += model.encoder.biases[l].size();
        }
    }

    const std::vector<dataset::Window> val_windows = gather_windows(
        data.validation, data.stats, config.p, config.tau, seed ^ 0xabcdef);
    const std::size_t val_cap = std::min<std::size_t>(val_windows.size(), 256);
    const std::vector<dataset::Window> val_subset(val_windows.begin(),
                                                  val_windows.begin() + val_cap);

    std::vector<double> flat, gflat;
    flatten_params(flat);
    numkit::Rng shuffle_rng(seed ^ 0x5eed);
    numkit::Rng layer_rng(seed ^ 0x7a11);

    std::size_t batches = 0;
    double running_recon = 0.0;
    std::size_t running_count = 0;
    bool stop = false;

    {
        HistoryRow init;
        init.val_recon = reconstruction_loss(model, val_subset);
        init.train_recon = init.val_recon;
        result.history.push_back(init);
    }

    for (std::size_t epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
        auto windows = gather_windows(data.train, data.stats, config.p, config.tau,
                                      seed + 1000 * (epoch + 1));
        if (windows.empty()) throw std::invalid_argument("train_deep: no usable windows");
        for (std::size_t i = windows.size(); i > 1; --i)
            std::swap(windows[i - 1], windows[shuffle_rng.index(i)]);

        for (std::size_t start = 0; start < windows.size() && !stop;
             start += config.batch_size) {
            const std::size_t end = std::min(windows.size(), start + config.batch_size);
            std::vector<dataset::Window> batch(windows.begin() + start, windows.begin() + end);

            if (config.random_layer.enabled) {
                auto& w = model.encoder.weights[rand_layer];
                auto& b = model.encoder.biases[rand_layer];
                for (std::size_t j = 0; j < w.size(); ++j)
                    w.data()[j] = layer_rng.gauss(0.0, config.random_layer.sigma);
                for (double& v : b) v = layer_rng.gauss(0.0, config.random_layer.sigma);
                flatten_params(flat);
            }

            DeepGradients dg;
            const LossValues loss = deep_losses(model, batch, weights, &dg);
            if (!std::isfinite(loss.total))
                throw TrainingFault("train_deep: non-finite loss", result.history, batches);
            if (loss.total > 1e6)
                throw TrainingFault("train_deep: loss diverged", result.history, batches);
            result.final_loss = loss.total;
            running_recon += loss.recon;
            ++running_count;

            if (std::abs(loss.total) <= config.stop_tolerance) {
                stop = true;
                break;
            }

            gflat.clear();
            gflat.reserve(total);
            dg.encoder.flatten_into(gflat);
            dg.decoder.flatten_into(gflat);
            gflat.insert(gflat.end(), dg.a.data(), dg.a.data() + dg.a.size());
            gflat.insert(gflat.end(), dg.b.data(), dg.b.data() + dg.b.size());

            if (batches < config.freeze_ab_until)
                std::fill(gflat.begin() + static_cast<std::ptrdiff_t>(enc_count + dec_count),
                          gflat.end(), 0.0);
            if (config.random_layer.enabled) {
                std::fill(gflat.begin() + static_cast<std::ptrdiff_t>(rand_w_begin),
                          gflat.begin() + static_cast<std::ptrdiff_t>(rand_w_end), 0.0);
                std::fill(gflat.begin() + static_cast<std::ptrdiff_t>(rand_b_begin),
                          gflat.begin() + static_cast<std::ptrdiff_t>(rand_b_end), 0.0);
            }

            adam.update(flat, gflat);
            unflatten_params(flat);
            ++batches;

            if (batches % config.log_every == 0) {
                HistoryRow row;
                row.batch = batches;
                row.train_recon = running_recon / static_cast<double>(running_count);
                row.val_recon = reconstruction_loss(model, val_subset);
                result.history.push_back(row);
                running_recon = 0.0;
                running_count = 0;
            }
            if (config.max_batches > 0 && batches >= config.max_batches) stop = true;
        }
    }
    result.batches = batches;
    return result;
}

std::vector<std::vector<double>> predict_multistep(
    const DeepKoopmanModel& model, const std::vector<double>& x0,
    const std::vector<std::vector<double>>& u_seq) {
    std::vector<std::vector<double>> out;
    out.reserve(u_seq.size() + 1);
    std::vector<double> phi = model.encode(x0);
    out.push_back(model.decode(phi));
    for (const auto& u : u_seq) {
        std::vector<double> next = numkit::matvec(model.a, phi);
        const std::vector<double> bu = numkit::matvec(model.b, u);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] += bu[i];
        phi = std::move(next);
        out.push_back(model.decode(phi));
    }
    return out;
}

std::vector<std::vector<double>> predict_multistep(
    const LinearLiftedModel& model, const std::vector<double>& x0,
    const std::vector<std::vector<double>>& u_seq) {
    if (!model.lift) throw std::invalid_argument("predict_multistep: model has no lifting map");
    std::vector<std::vector<double>> out;
    out.reserve(u_seq.size() + 1);
    std::vector<double> phi = model.lift(x0);
    out.push_back(numkit::matvec(model.c, phi));
    for (const auto& u : u_seq) {
        std::vector<double> next = numkit::matvec(model.a, phi);
        const std::vector<double> bu = numkit::matvec(model.b, u);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] += bu[i];
        phi = std::move(next);
        out.push_back(numkit::matvec(model.c, phi));
    }
    return out;
}

SpectrumReport spectrum(const Matrix& a) {
    SpectrumReport report;
    report.eigenvalues = numkit::eigvals(a);
    std::stable_sort(report.eigenvalues.begin(), report.eigenvalues.end(),
                     [](const auto& x, const auto& y) { return std::abs(x) > std::abs(y); });
    report.spectral_radius =
        report.eigenvalues.empty() ? 0.0 : std::abs(report.eigenvalues.front());
    report.stable = report.spectral_radius <= 1.0 + 1e-6;
    return report;
}

void save_history_csv(const std::vector<HistoryRow>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_history_csv: cannot open " + path);
    out.precision(17);
    out << "batch,train_recon,val_recon\n";
    for (const auto& row : history)
        out << row.batch << ',' << row.train_recon << ',' << row.val_recon << '\n';
}

void save_checkpoint(const DeepKoopmanModel& model, const std::string& path) {
    nn::save_params(model.encoder, model.encoder_spec, path + ".enc.bin");
    nn::save_params(model.decoder, model.decoder_spec, path + ".dec.bin");
    nlohmann::json j;
    j["format"] = "koopveh-deep-v1";
    j["state_dim"] = model.state_dim;
    j["lifted_dim"] = model.lifted_dim();
    j["control_dim"] = model.control_dim();
    j["a"] = std::vector<double>(model.a.data(), model.a.data() + model.a.size());
    j["b"] = std::vector<double>(model.b.data(), model.b.data() + model.b.size());
    j["stats_min"] = model.stats.min;
    j["stats_max"] = model.stats.max;
    std::ofstream out(path + ".json");
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path + ".json");
    out << j.dump() << "\n";
}

DeepKoopmanModel load_checkpoint(const std::string& path) {
    DeepKoopmanModel model;
    auto enc = nn::load_params(path + ".enc.bin");
    model.encoder = std::move(enc.first);
    model.encoder_spec = std::move(enc.second);
    auto dec = nn::load_params(path + ".dec.bin");
    model.decoder = std::move(dec.first);
    model.decoder_spec = std::move(dec.second);
    std::ifstream in(path + ".json");
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path + ".json");
    nlohmann::json j;
    in >> j;
    model.state_dim = j.at("state_dim").get<std::size_t>();
    const auto big_l = j.at("lifted_dim").get<std::size_t>();
    const auto m = j.at("control_dim").get<std::size_t>();
    model.a = Matrix(big_l, big_l, j.at("a").get<std::vector<double>>());
    model.b = Matrix(big_l, m, j.at("b").get<std::vector<double>>());
    const auto mn = j.at("stats_min").get<std::vector<double>>();
    const auto mx = j.at("stats_max").get<std::vector<double>>();
    std::copy(mn.begin(), mn.end(), model.stats.min.begin());
    std::copy(mx.begin(), mx.end(), model.stats.max.begin());
    return model;
}

}  // namespace koopveh::koopman

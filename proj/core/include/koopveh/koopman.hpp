#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "koopveh/dataset.hpp"
#include "koopveh/lifting.hpp"
#include "koopveh/matrix.hpp"
#include "koopveh/nn.hpp"

namespace koopveh::koopman {

/// Lifted linear predictor phi+ = A phi + B u, x = C phi, with the lifting
/// map attached for prediction.
struct LinearLiftedModel {
    numkit::Matrix a;  // L x L
    numkit::Matrix b;  // L x m
    numkit::Matrix c;  // n x L
    std::function<std::vector<double>(const std::vector<double>&)> lift;
    double residual_ab = 0.0;  // ||Phi_y - [A B] W||_F
    double residual_c = 0.0;   // ||X - C Xi||_F
};

/// Least-squares fit of [A B] and C from column-aligned snapshots.
/// x, y: n x M with y_k = f(x_k, u_k); u: m x M; phi supplied by the
/// dictionary.
LinearLiftedModel edmd_fit(const numkit::Matrix& x, const numkit::Matrix& y,
                           const numkit::Matrix& u, const lifting::TpsDictionary& dict);
LinearLiftedModel elm_edmd_fit(const numkit::Matrix& x, const numkit::Matrix& y,
                               const numkit::Matrix& u, const lifting::ElmFeatureMap& map);
/// Shared core over precomputed lifted snapshots.
LinearLiftedModel fit_lifted(const numkit::Matrix& phi_x, const numkit::Matrix& phi_y,
                             const numkit::Matrix& u, const numkit::Matrix& x);

/// phi_{i} = A phi_{i-1} + B u_{i-1}; returns [phi_1 .. phi_p].
std::vector<std::vector<double>> rollout_lifted(const numkit::Matrix& a,
                                                const numkit::Matrix& b,
                                                const std::vector<double>& phi0,
                                                const std::vector<std::vector<double>>& u_seq);

/// Encoder/decoder networks with the in-graph lifted matrices. The lifted
/// state is [x_concat; encoder(x_concat)], so L = n*tau + K.
struct DeepKoopmanModel {
    nn::NetSpec encoder_spec;
    nn::NetSpec decoder_spec;
    nn::MlpParams encoder;
    nn::MlpParams decoder;
    numkit::Matrix a;  // L x L
    numkit::Matrix b;  // L x m
    std::size_t state_dim = 6;  // n * tau
    dataset::NormalizationStats stats;

    std::size_t feature_dim() const { return encoder_spec.back().out_dim; }
    std::size_t lifted_dim() const { return state_dim + feature_dim(); }
    std::size_t control_dim() const { return b.cols(); }

    /// Columns are samples; returns the L x b lifted block [X; enc(X)].
    numkit::Matrix encode(const numkit::Matrix& x) const;
    std::vector<double> encode(const std::vector<double>& x) const;
    numkit::Matrix decode(const numkit::Matrix& phi) const;
    std::vector<double> decode(const std::vector<double>& phi) const;
};

struct LossWeights {
    double a1 = 1.0;   // reconstruction
    double a2 = 1.0;   // multi-step state prediction
    double a3 = 0.3;   // lifted-space linearity
    double a4 = 1e-9;  // infinity-norm robustness
    double a5 = 1e-9;  // encoder l2
    double a6 = 1e-9;  // decoder l2
};

/// Redrawn-per-batch random hidden layer for the robustness experiment.
struct RandomLayerConfig {
    bool enabled = false;
    std::size_t width = 64;
    double sigma = 0.1;
};

struct TrainConfig {
    std::size_t p = 41;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 50;
    std::size_t max_batches = 0;  // 0 = no batch cap
    double stop_tolerance = 1e-12;
    std::uint64_t seed = 0;
    std::size_t freeze_ab_until = 0;  // batches before A, B join training
    double learning_rate = 1e-4;
    std::size_t tau = 2;
    std::size_t feature_dim = 10;  // K
    std::size_t log_every = 1000;
    RandomLayerConfig random_layer;
};

struct LossValues {
    double total = 0.0;
    double recon = 0.0;      // L_{o,x}
    double pred = 0.0;       // L_{x,x}
    double lifted = 0.0;     // L_{x,o}
    double inf_norm = 0.0;   // L_inf
};

struct DeepGradients {
    nn::Gradients encoder;
    nn::Gradients decoder;
    numkit::Matrix a;
    numkit::Matrix b;
};

/// Weighted loss of a window batch and its gradients through the full
/// p-step rollout.
LossValues deep_losses(const DeepKoopmanModel& model,
                       const std::vector<dataset::Window>& batch, const LossWeights& weights,
                       DeepGradients* grads = nullptr);

struct HistoryRow {
    std::size_t batch = 0;
    double train_recon = 0.0;
    double val_recon = 0.0;
};

struct TrainResult {
    DeepKoopmanModel model;
    std::vector<HistoryRow> history;
    std::size_t batches = 0;
    double final_loss = 0.0;
};

struct TrainingFault : std::runtime_error {
    TrainingFault(std::string msg, std::vector<HistoryRow> h, std::size_t batch)
        : std::runtime_error(std::move(msg)), history(std::move(h)), batch_index(batch) {}
    std::vector<HistoryRow> history;
    std::size_t batch_index;
};

struct TrainingData {
    std::vector<plant::Episode> train;
    std::vector<plant::Episode> validation;
    dataset::NormalizationStats stats;
};

TrainResult train_deep(const TrainingData& data, const TrainConfig& config,
                       const LossWeights& weights, std::uint64_t seed);

/// Multi-step prediction in normalized concatenated coordinates: phi
/// advances linearly, states come back through the decoder. Returns
/// [x_hat_0 .. x_hat_p] where x_hat_0 is the reconstruction of x0.
std::vector<std::vector<double>> predict_multistep(
    const DeepKoopmanModel& model, const std::vector<double>& x0,
    const std::vector<std::vector<double>>& u_seq);
std::vector<std::vector<double>> predict_multistep(
    const LinearLiftedModel& model, const std::vector<double>& x0,
    const std::vector<std::vector<double>>& u_seq);

struct SpectrumReport {
    std::vector<std::complex<double>> eigenvalues;  // sorted by modulus, descending
    bool stable = false;                            // all |mu| <= 1 + 1e-6
    double spectral_radius = 0.0;
};

SpectrumReport spectrum(const numkit::Matrix& a);

void save_history_csv(const std::vector<HistoryRow>& history, const std::string& path);

/// Checkpoint: encoder/decoder in the binary layout plus A, B and the
/// normalization stats in one JSON archive.
void save_checkpoint(const DeepKoopmanModel& model, const std::string& path);
DeepKoopmanModel load_checkpoint(const std::string& path);

}  // namespace koopveh::koopman

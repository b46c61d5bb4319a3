#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "koopveh/dataset.hpp"
#include "koopveh/koopman.hpp"
#include "koopveh/nn.hpp"

namespace koopveh::mlpnet {

/// One-step dynamics predictor x_next = M([x; u]) used as the comparison
/// model against the lifted linear ones.
struct MlpDynModel {
    nn::NetSpec spec;
    nn::MlpParams params;
    std::size_t state_dim = 6;  // n * tau
    dataset::NormalizationStats stats;
};

struct MlpLossWeights {
    double b1 = 1.0;   // multi-step prediction
    double b2 = 1e-9;  // infinity-norm robustness
    double b3 = 1e-9;  // l2
};

struct MlpLossValues {
    double total = 0.0;
    double pred = 0.0;
    double inf_norm = 0.0;
};

/// Single forward pass in normalized coordinates.
std::vector<double> predict_next(const MlpDynModel& model, const std::vector<double>& x,
                                 const std::vector<double>& u);

/// Self-fed rollout [x_hat_0 .. x_hat_p] with x_hat_0 = x0.
std::vector<std::vector<double>> predict_multistep(
    const MlpDynModel& model, const std::vector<double>& x0,
    const std::vector<std::vector<double>>& u_seq);

/// Multi-step loss over a window batch; the rollout feeds its own
/// predictions after the first step. Gradients via backprop through time.
MlpLossValues mlp_loss(const MlpDynModel& model, const std::vector<dataset::Window>& batch,
                       const MlpLossWeights& weights, nn::Gradients* grads = nullptr);

struct MlpTrainResult {
    MlpDynModel model;
    std::vector<koopman::HistoryRow> history;
    std::size_t batches = 0;
    double final_loss = 0.0;
};

/// Mirrors the deep-model training loop: same windowing, Adam defaults,
/// stopping rules, and optional redrawn-per-batch random hidden layer.
MlpTrainResult train_mlp(const koopman::TrainingData& data, const koopman::TrainConfig& config,
                         const MlpLossWeights& weights, std::uint64_t seed);

void save_checkpoint(const MlpDynModel& model, const std::string& path);
MlpDynModel load_checkpoint(const std::string& path);

}  // namespace koopveh::mlpnet

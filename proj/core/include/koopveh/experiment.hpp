#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "koopveh/dempc.hpp"
#include "koopveh/koopman.hpp"
#include "koopveh/lifting.hpp"
#include "koopveh/mlp_model.hpp"
#include "koopveh/plant.hpp"

namespace koopveh::experiment {

enum class ModelType { edmd, elm_edmd, deep_edmd, mlp };

std::string to_string(ModelType t);
ModelType model_type_from_string(const std::string& s);

/// Everything a run needs, loadable from a `key = value` config file with an
/// embedded schema version.
struct ExperimentConfig {
    int schema_version = 1;
    std::string plant_params_path;  // empty = built-in defaults
    std::size_t episodes = 40;
    std::size_t episode_length = 10000;
    double dt = 0.01;
    std::uint64_t split_seed = 7;
    ModelType model = ModelType::deep_edmd;
    std::string out_dir = "out";

    koopman::TrainConfig train;
    koopman::LossWeights loss;
    mlpnet::MlpLossWeights mlp;
    dempc::MpcConfig mpc;
    plant::ExcitationPolicy excitation;

    std::size_t edmd_centers = 10;       // TPS dictionary size
    std::size_t mpc_steps = 2000;
    std::size_t robustness_repeats = 100;
    std::size_t robustness_batches = 3000;
    std::size_t eval_horizon = 41;

    void validate() const;  // throws std::invalid_argument with the bad key
};

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& c, const std::string& path);

/// desk: minutes-scale sizes (5 episodes x 2000 steps, 30k batches,
/// shortened rollout). paper: full corpus scale.
void apply_preset(ExperimentConfig& c, const std::string& preset);

struct RunContext {
    ExperimentConfig config;
    std::uint64_t seed = 0;
    std::string out_dir;  // overrides config.out_dir when non-empty
};

int cmd_simulate(const RunContext& ctx);
int cmd_train(const RunContext& ctx);
int cmd_evaluate(const RunContext& ctx);
int cmd_robustness(const RunContext& ctx);
int cmd_mpc(const RunContext& ctx);

// --- building blocks shared with the test suites ---

std::vector<plant::Episode> generate_corpus(const ExperimentConfig& c, std::uint64_t seed);

struct PreparedData {
    koopman::TrainingData data;
    std::vector<plant::Episode> test;
};

/// Corpus generation + split + normalization stats from the training split.
PreparedData prepare(const ExperimentConfig& c, std::uint64_t seed);

/// TPS-RBF EDMD baseline on plain normalized states.
koopman::LinearLiftedModel fit_edmd_baseline(const PreparedData& d, const ExperimentConfig& c,
                                             std::uint64_t seed);

struct RmseReport {
    std::array<double, dataset::kStateDim> channel{};
    double overall = 0.0;
};

/// Per-channel normalized RMSE of open-loop predictions over `horizon`
/// steps, comparing the most recent state block.
RmseReport multistep_rmse(const koopman::DeepKoopmanModel& model,
                          const std::vector<dataset::Window>& windows, std::size_t horizon);
RmseReport multistep_rmse(const koopman::LinearLiftedModel& model,
                          const std::vector<dataset::Window>& windows, std::size_t horizon);
RmseReport multistep_rmse(const mlpnet::MlpDynModel& model,
                          const std::vector<dataset::Window>& windows, std::size_t horizon);

/// Redraws the second-to-last layer N(0, sigma^2); the layer inserted by
/// the random-robustness training variant.
void redraw_random_layer(nn::MlpParams& params, double sigma, numkit::Rng& rng);

/// FNV-1a 64 over a file's bytes, hex-encoded.
std::string file_hash(const std::string& path);

}  // namespace koopveh::experiment

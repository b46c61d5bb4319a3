#include "koopveh/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "koopveh/dataset.hpp"

namespace koopveh::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ModelType t) {
    switch (t) {
        case ModelType::edmd: return "edmd";
        case ModelType::elm_edmd: return "elm-edmd";
        case ModelType::deep_edmd: return "deep-edmd";
        case ModelType::mlp: return "mlp";
    }
    return "deep-edmd";
}

ModelType model_type_from_string(const std::string& s) {
    if (s == "edmd") return ModelType::edmd;
    if (s == "elm-edmd") return ModelType::elm_edmd;
    if (s == "deep-edmd") return ModelType::deep_edmd;
    if (s == "mlp") return ModelType::mlp;
    throw std::invalid_argument("unknown model type '" + s +
                                "' (expected edmd | elm-edmd | deep-edmd | mlp)");
}

void ExperimentConfig::validate() const {
    if (schema_version != 1)
        throw std::invalid_argument("config: unsupported schema_version " +
                                    std::to_string(schema_version));
    if (episodes < 1) throw std::invalid_argument("config: episodes must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("config: dt must be positive");
    if (train.tau < 1 || train.p < 1)
        throw std::invalid_argument("config: train.tau and train.p must be >= 1");
    if (episode_length < 2) throw std::invalid_argument("config: episode_length must be >= 2");
    if (!(train.learning_rate > 0.0))
        throw std::invalid_argument("config: train.learning_rate must be positive");
    if (train.batch_size < 1) throw std::invalid_argument("config: train.batch_size must be >= 1");
    if (train.feature_dim < 1) throw std::invalid_argument("config: train.feature_dim must be >= 1");
    if (loss.a1 < 0 || loss.a2 < 0 || loss.a3 < 0 || loss.a4 < 0 || loss.a5 < 0 || loss.a6 < 0)
        throw std::invalid_argument("config: loss weights must be nonnegative");
    mpc.validate();
    if (mpc.throttle_max > 1.0)
        throw std::invalid_argument("config: mpc.throttle_max out of range (fraction <= 1)");
    if (mpc.brake_max_mpa > 20.0)
        throw std::invalid_argument("config: mpc.brake_max_mpa out of range (<= 20 MPa)");
    if (mpc.steer_limit_deg > 900.0)
        throw std::invalid_argument("config: mpc.steer_limit_deg out of range (<= 900 deg)");
    if (edmd_centers < 1) throw std::invalid_argument("config: edmd_centers must be >= 1");
    if (robustness_repeats < 2)
        throw std::invalid_argument("config: robustness_repeats must be >= 2");
    if (eval_horizon < 1) throw std::invalid_argument("config: eval_horizon must be >= 1");
    if (!plant_params_path.empty() && !fs::exists(plant_params_path))
        throw std::invalid_argument("config: plant params file not found: " + plant_params_path);
}

namespace {

std::map<std::string, std::string> read_kv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw std::runtime_error("config: line " + std::to_string(lineno) +
                                         ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config: line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "': not a number: '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return u;
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "': not an integer: '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config: key '" + key + "': not a bool: '" + v + "'");
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    const auto kv = read_kv(path);
    ExperimentConfig c;
    for (const auto& [key, value] : kv) {
        if (key == "schema_version") c.schema_version = static_cast<int>(to_u64(key, value));
        else if (key == "plant_params") c.plant_params_path = value;
        else if (key == "episodes") c.episodes = to_u64(key, value);
        else if (key == "episode_length") c.episode_length = to_u64(key, value);
        else if (key == "dt") c.dt = to_double(key, value);
        else if (key == "split_seed") c.split_seed = to_u64(key, value);
        else if (key == "model") c.model = model_type_from_string(value);
        else if (key == "out_dir") c.out_dir = value;
        else if (key == "train.p") c.train.p = to_u64(key, value);
        else if (key == "train.batch_size") c.train.batch_size = to_u64(key, value);
        else if (key == "train.max_epochs") c.train.max_epochs = to_u64(key, value);
        else if (key == "train.max_batches") c.train.max_batches = to_u64(key, value);
        else if (key == "train.stop_tolerance") c.train.stop_tolerance = to_double(key, value);
        else if (key == "train.learning_rate") c.train.learning_rate = to_double(key, value);
        else if (key == "train.tau") c.train.tau = to_u64(key, value);
        else if (key == "train.feature_dim") c.train.feature_dim = to_u64(key, value);
        else if (key == "train.log_every") c.train.log_every = to_u64(key, value);
        else if (key == "train.freeze_ab_until") c.train.freeze_ab_until = to_u64(key, value);
        else if (key == "random.enabled") c.train.random_layer.enabled = to_bool(key, value);
        else if (key == "random.width") c.train.random_layer.width = to_u64(key, value);
        else if (key == "random.sigma") c.train.random_layer.sigma = to_double(key, value);
        else if (key == "loss.a1") c.loss.a1 = to_double(key, value);
        else if (key == "loss.a2") c.loss.a2 = to_double(key, value);
        else if (key == "loss.a3") c.loss.a3 = to_double(key, value);
        else if (key == "loss.a4") c.loss.a4 = to_double(key, value);
        else if (key == "loss.a5") c.loss.a5 = to_double(key, value);
        else if (key == "loss.a6") c.loss.a6 = to_double(key, value);
        else if (key == "mlp.b1") c.mlp.b1 = to_double(key, value);
        else if (key == "mlp.b2") c.mlp.b2 = to_double(key, value);
        else if (key == "mlp.b3") c.mlp.b3 = to_double(key, value);
        else if (key == "mpc.np") c.mpc.np = to_u64(key, value);
        else if (key == "mpc.nc") c.mpc.nc = to_u64(key, value);
        else if (key == "mpc.q") c.mpc.q = to_double(key, value);
        else if (key == "mpc.r") c.mpc.r = to_double(key, value);
        else if (key == "mpc.rho") c.mpc.rho = to_double(key, value);
        else if (key == "mpc.q_raw_only") c.mpc.q_raw_only = to_bool(key, value);
        else if (key == "mpc.steer_limit_deg") c.mpc.steer_limit_deg = to_double(key, value);
        else if (key == "mpc.throttle_max") c.mpc.throttle_max = to_double(key, value);
        else if (key == "mpc.brake_max_mpa") c.mpc.brake_max_mpa = to_double(key, value);
        else if (key == "mpc.steer_rate_deg") c.mpc.steer_rate_deg = to_double(key, value);
        else if (key == "mpc.throttle_rate") c.mpc.throttle_rate = to_double(key, value);
        else if (key == "mpc.brake_rate_mpa") c.mpc.brake_rate_mpa = to_double(key, value);
        else if (key == "mpc_steps") c.mpc_steps = to_u64(key, value);
        else if (key == "edmd_centers") c.edmd_centers = to_u64(key, value);
        else if (key == "robustness_repeats") c.robustness_repeats = to_u64(key, value);
        else if (key == "robustness_batches") c.robustness_batches = to_u64(key, value);
        else if (key == "eval_horizon") c.eval_horizon = to_u64(key, value);
        else if (key == "excitation.steer_noise_deg") c.excitation.steer_noise_deg = to_double(key, value);
        else if (key == "excitation.steer_filter") c.excitation.steer_filter = to_double(key, value);
        else if (key == "excitation.steer_limit_deg") c.excitation.steer_limit_deg = to_double(key, value);
        else if (key == "excitation.throttle_max") c.excitation.throttle_max = to_double(key, value);
        else if (key == "excitation.brake_max_mpa") c.excitation.brake_max_mpa = to_double(key, value);
        else if (key == "excitation.hold_seconds") c.excitation.hold_seconds = to_double(key, value);
        else if (key == "excitation.brake_probability") c.excitation.brake_probability = to_double(key, value);
        else throw std::runtime_error("config: unknown key '" + key + "'");
    }
    c.mpc.raw_dim = dataset::kStateDim * c.train.tau;
    c.mpc.dt = c.dt;
    c.validate();
    return c;
}

void save_config(const ExperimentConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_config: cannot open " + path);
    out.precision(17);
    out << "schema_version = " << c.schema_version << "\n";
    if (!c.plant_params_path.empty()) out << "plant_params = " << c.plant_params_path << "\n";
    out << "episodes = " << c.episodes << "\n"
        << "episode_length = " << c.episode_length << "\n"
        << "dt = " << c.dt << "\n"
        << "split_seed = " << c.split_seed << "\n"
        << "model = " << to_string(c.model) << "\n"
        << "out_dir = " << c.out_dir << "\n"
        << "train.p = " << c.train.p << "\n"
        << "train.batch_size = " << c.train.batch_size << "\n"
        << "train.max_epochs = " << c.train.max_epochs << "\n"
        << "train.max_batches = " << c.train.max_batches << "\n"
        << "train.stop_tolerance = " << c.train.stop_tolerance << "\n"
        << "train.learning_rate = " << c.train.learning_rate << "\n"
        << "train.tau = " << c.train.tau << "\n"
        << "train.feature_dim = " << c.train.feature_dim << "\n"
        << "train.log_every = " << c.train.log_every << "\n"
        << "train.freeze_ab_until = " << c.train.freeze_ab_until << "\n"
        << "random.enabled = " << (c.train.random_layer.enabled ? "true" : "false") << "\n"
        << "random.width = " << c.train.random_layer.width << "\n"
        << "random.sigma = " << c.train.random_layer.sigma << "\n"
        << "loss.a1 = " << c.loss.a1 << "\n"
        << "loss.a2 = " << c.loss.a2 << "\n"
        << "loss.a3 = " << c.loss.a3 << "\n"
        << "loss.a4 = " << c.loss.a4 << "\n"
        << "loss.a5 = " << c.loss.a5 << "\n"
        << "loss.a6 = " << c.loss.a6 << "\n"
        << "mlp.b1 = " << c.mlp.b1 << "\n"
        << "mlp.b2 = " << c.mlp.b2 << "\n"
        << "mlp.b3 = " << c.mlp.b3 << "\n"
        << "mpc.np = " << c.mpc.np << "\n"
        << "mpc.nc = " << c.mpc.nc << "\n"
        << "mpc.q = " << c.mpc.q << "\n"
        << "mpc.r = " << c.mpc.r << "\n"
        << "mpc.rho = " << c.mpc.rho << "\n"
        << "mpc.q_raw_only = " << (c.mpc.q_raw_only ? "true" : "false") << "\n"
        << "mpc.steer_limit_deg = " << c.mpc.steer_limit_deg << "\n"
        << "mpc.throttle_max = " << c.mpc.throttle_max << "\n"
        << "mpc.brake_max_mpa = " << c.mpc.brake_max_mpa << "\n"
        << "mpc.steer_rate_deg = " << c.mpc.steer_rate_deg << "\n"
        << "mpc.throttle_rate = " << c.mpc.throttle_rate << "\n"
        << "mpc.brake_rate_mpa = " << c.mpc.brake_rate_mpa << "\n"
        << "mpc_steps = " << c.mpc_steps << "\n"
        << "edmd_centers = " << c.edmd_centers << "\n"
        << "robustness_repeats = " << c.robustness_repeats << "\n"
        << "robustness_batches = " << c.robustness_batches << "\n"
        << "eval_horizon = " << c.eval_horizon << "\n"
        << "excitation.steer_noise_deg = " << c.excitation.steer_noise_deg << "\n"
        << "excitation.steer_filter = " << c.excitation.steer_filter << "\n"
        << "excitation.steer_limit_deg = " << c.excitation.steer_limit_deg << "\n"
        << "excitation.throttle_max = " << c.excitation.throttle_max << "\n"
        << "excitation.brake_max_mpa = " << c.excitation.brake_max_mpa << "\n"
        << "excitation.hold_seconds = " << c.excitation.hold_seconds << "\n"
        << "excitation.brake_probability = " << c.excitation.brake_probability << "\n";
}

void apply_preset(ExperimentConfig& c, const std::string& preset) {
    if (preset == "desk") {
        c.episodes = 5;
        c.episode_length = 2000;
        c.train.p = 10;
        c.train.max_batches = 30000;
        c.train.max_epochs = 1000000;
        c.train.log_every = 1000;
        c.mpc_steps = 1500;
        c.robustness_repeats = 20;
        c.robustness_batches = 3000;
        c.eval_horizon = 41;
    } else if (preset == "paper") {
        c.episodes = 40;
        c.episode_length = 10000;
        c.train.p = 41;
        c.train.max_batches = 0;
        c.train.max_epochs = 50;
        c.train.log_every = 1000;
        c.mpc_steps = 6000;
        c.robustness_repeats = 100;
        c.robustness_batches = 30000;
        c.eval_horizon = 41;
    } else {
        throw std::invalid_argument("unknown preset '" + preset + "' (expected desk | paper)");
    }
}

std::vector<plant::Episode> generate_corpus(const ExperimentConfig& c, std::uint64_t seed) {
    const plant::VehicleParams params = c.plant_params_path.empty()
                                            ? plant::VehicleParams{}
                                            : plant::load_params(c.plant_params_path);
    std::vector<plant::Episode> episodes;
    episodes.reserve(c.episodes);
    for (std::size_t i = 0; i < c.episodes; ++i)
        episodes.push_back(plant::generate_episode(c.excitation, c.episode_length,
                                                   seed * 7919 + i + 1, params, c.dt));
    return episodes;
}

PreparedData prepare(const ExperimentConfig& c, std::uint64_t seed) {
    std::vector<plant::Episode> episodes = generate_corpus(c, seed);
    const dataset::Split split = dataset::split_episodes(episodes.size(), c.split_seed);
    PreparedData out;
    for (std::size_t i : split.train) out.data.train.push_back(episodes[i]);
    for (std::size_t i : split.validation) out.data.validation.push_back(episodes[i]);
    for (std::size_t i : split.test) out.test.push_back(episodes[i]);
    out.data.stats = dataset::compute_stats(out.data.train);
    return out;
}

namespace {

/// Column-stacked normalized one-step snapshots from episodes.
void snapshot_matrices(const std::vector<plant::Episode>& episodes,
                       const dataset::NormalizationStats& stats, numkit::Matrix& x,
                       numkit::Matrix& y, numkit::Matrix& u) {
    std::size_t total = 0;
    for (const auto& ep : episodes)
        if (ep.length() > 1) total += ep.length() - 1;
    x = numkit::Matrix(dataset::kStateDim, total);
    y = numkit::Matrix(dataset::kStateDim, total);
    u = numkit::Matrix(dataset::kControlDim, total);
    std::size_t k = 0;
    for (const auto& ep : episodes)
        for (std::size_t t = 0; t + 1 < ep.length(); ++t, ++k) {
            x.set_column(k, dataset::normalize_state(ep.states[t], stats));
            y.set_column(k, dataset::normalize_state(ep.states[t + 1], stats));
            u.set_column(k, dataset::normalize_control(ep.controls[t], stats));
        }
}

}  // namespace

koopman::LinearLiftedModel fit_edmd_baseline(const PreparedData& d, const ExperimentConfig& c,
                                             std::uint64_t seed) {
    numkit::Matrix x, y, u;
    snapshot_matrices(d.data.train, d.data.stats, x, y, u);
    if (x.cols() == 0) throw std::invalid_argument("fit_edmd_baseline: no snapshots");

    // Centers drawn around the empirical normalized-state distribution.
    std::vector<double> mean(dataset::kStateDim, 0.0), stddev(dataset::kStateDim, 0.0);
    for (std::size_t ch = 0; ch < dataset::kStateDim; ++ch) {
        for (std::size_t k = 0; k < x.cols(); ++k) mean[ch] += x(ch, k);
        mean[ch] /= static_cast<double>(x.cols());
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double dd = x(ch, k) - mean[ch];
            stddev[ch] += dd * dd;
        }
        stddev[ch] = std::sqrt(stddev[ch] / static_cast<double>(x.cols()));
        if (!(stddev[ch] > 1e-12)) stddev[ch] = 0.1;
    }
    const lifting::TpsDictionary dict =
        lifting::sample_centers(mean, stddev, c.edmd_centers, seed ^ 0xc37e25ull, true);
    return koopman::edmd_fit(x, y, u, dict);
}

namespace {

RmseReport rmse_from_errors(const std::vector<std::array<double, dataset::kStateDim>>& sq,
                            std::size_t count) {
    RmseReport r;
    double all = 0.0;
    for (std::size_t ch = 0; ch < dataset::kStateDim; ++ch) {
        double s = 0.0;
        for (const auto& e : sq) s += e[ch];
        r.channel[ch] = std::sqrt(s / static_cast<double>(count));
        all += s;
    }
    r.overall = std::sqrt(all / static_cast<double>(count * dataset::kStateDim));
    return r;
}

template <typename PredictFn>
RmseReport rmse_generic(const std::vector<dataset::Window>& windows, std::size_t horizon,
                        PredictFn&& predict) {
    if (windows.empty()) throw std::invalid_argument("multistep_rmse: no windows");
    if (windows[0].u_seq.size() < horizon)
        throw std::invalid_argument("multistep_rmse: windows shorter than horizon");
    std::vector<std::array<double, dataset::kStateDim>> sq;
    std::size_t count = 0;
    for (const auto& w : windows) {
        const std::vector<std::vector<double>> u(w.u_seq.begin(),
                                                 w.u_seq.begin() + horizon);
        const std::vector<std::vector<double>> preds = predict(w, u);
        std::array<double, dataset::kStateDim> acc{};
        for (std::size_t i = 1; i <= horizon; ++i) {
            const auto& pred = preds[i];
            const auto& truth = w.x_seq[i - 1];
            const std::size_t po = pred.size() - dataset::kStateDim;
            const std::size_t to = truth.size() - dataset::kStateDim;
            for (std::size_t ch = 0; ch < dataset::kStateDim; ++ch) {
                const double e = pred[po + ch] - truth[to + ch];
                acc[ch] += e * e;
            }
        }
        sq.push_back(acc);
        count += horizon;
    }
    return rmse_from_errors(sq, count);
}

}  // namespace

RmseReport multistep_rmse(const koopman::DeepKoopmanModel& model,
                          const std::vector<dataset::Window>& windows, std::size_t horizon) {
    return rmse_generic(windows, horizon, [&](const dataset::Window& w, const auto& u) {
        return koopman::predict_multistep(model, w.x0, u);
    });
}

RmseReport multistep_rmse(const koopman::LinearLiftedModel& model,
                          const std::vector<dataset::Window>& windows, std::size_t horizon) {
    return rmse_generic(windows, horizon, [&](const dataset::Window& w, const auto& u) {
        const std::vector<double> x0(w.x0.end() - dataset::kStateDim, w.x0.end());
        return koopman::predict_multistep(model, x0, u);
    });
}

RmseReport multistep_rmse(const mlpnet::MlpDynModel& model,
                          const std::vector<dataset::Window>& windows, std::size_t horizon) {
    return rmse_generic(windows, horizon, [&](const dataset::Window& w, const auto& u) {
        return mlpnet::predict_multistep(model, w.x0, u);
    });
}

void redraw_random_layer(nn::MlpParams& params, double sigma, numkit::Rng& rng) {
    if (params.weights.size() < 2)
        throw std::invalid_argument("redraw_random_layer: too few layers");
    const std::size_t l = params.weights.size() - 2;
    auto& w = params.weights[l];
    auto& b = params.biases[l];
    for (std::size_t j = 0; j < w.size(); ++j) w.data()[j] = rng.gauss(0.0, sigma);
    for (double& v : b) v = rng.gauss(0.0, sigma);
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file_hash: cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!in) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

namespace {

std::string resolve_out_dir(const RunContext& ctx) {
    const std::string dir = ctx.out_dir.empty() ? ctx.config.out_dir : ctx.out_dir;
    fs::create_directories(dir);
    return dir;
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << "\n";
}

std::vector<dataset::Window> test_windows(const PreparedData& d, const ExperimentConfig& c,
                                          std::size_t p, std::uint64_t seed) {
    std::vector<dataset::Window> windows;
    std::uint64_t s = seed;
    for (const auto& ep : d.test) {
        auto w = dataset::window_sequences(ep, d.data.stats, p, c.train.tau, ++s);
        std::move(w.begin(), w.end(), std::back_inserter(windows));
    }
    return windows;
}

json rmse_json(const RmseReport& r) {
    return json{{"v_x", r.channel[0]},
                {"v_y", r.channel[1]},
                {"yaw_rate", r.channel[2]},
                {"overall", r.overall}};
}

void save_linear_model(const koopman::LinearLiftedModel& m, const std::string& path) {
    json j;
    j["format"] = "koopveh-linear-v1";
    j["rows"] = m.a.rows();
    j["controls"] = m.b.cols();
    j["states"] = m.c.rows();
    j["a"] = std::vector<double>(m.a.data(), m.a.data() + m.a.size());
    j["b"] = std::vector<double>(m.b.data(), m.b.data() + m.b.size());
    j["c"] = std::vector<double>(m.c.data(), m.c.data() + m.c.size());
    j["residual_ab"] = m.residual_ab;
    j["residual_c"] = m.residual_c;
    write_json(j, path);
}

}  // namespace

int cmd_simulate(const RunContext& ctx) {
    ctx.config.validate();
    const std::string dir = resolve_out_dir(ctx);
    const std::vector<plant::Episode> episodes = generate_corpus(ctx.config, ctx.seed);

    json manifest;
    manifest["schema_version"] = 1;
    manifest["seed"] = ctx.seed;
    manifest["episodes"] = episodes.size();
    manifest["episode_length"] = ctx.config.episode_length;
    json files = json::array();
    std::uint64_t combined = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "episode_%03zu.csv", i);
        const std::string path = dir + "/" + name;
        dataset::write_csv(episodes[i], path);
        const std::string h = file_hash(path);
        files.push_back(json{{"file", name}, {"fnv64", h}});
        for (char ch : h) {
            combined ^= static_cast<unsigned char>(ch);
            combined *= 0x100000001b3ull;
        }
    }
    manifest["files"] = files;
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(combined));
    manifest["corpus_hash"] = hex;
    write_json(manifest, dir + "/manifest.json");
    return 0;
}

int cmd_train(const RunContext& ctx) {
    ctx.config.validate();
    const std::string dir = resolve_out_dir(ctx);
    const PreparedData d = prepare(ctx.config, ctx.seed);
    dataset::save_stats(d.data.stats, dir + "/stats.json");

    json summary;
    summary["model"] = to_string(ctx.config.model);
    summary["seed"] = ctx.seed;
    switch (ctx.config.model) {
        case ModelType::deep_edmd: {
            const koopman::TrainResult r =
                koopman::train_deep(d.data, ctx.config.train, ctx.config.loss, ctx.seed);
            koopman::save_checkpoint(r.model, dir + "/deep_model");
            koopman::save_history_csv(r.history, dir + "/history.csv");
            const koopman::SpectrumReport spec = koopman::spectrum(r.model.a);
            summary["batches"] = r.batches;
            summary["final_loss"] = r.final_loss;
            summary["spectral_radius"] = spec.spectral_radius;
            summary["spectrum_stable"] = spec.stable;
            break;
        }
        case ModelType::mlp: {
            const mlpnet::MlpTrainResult r =
                mlpnet::train_mlp(d.data, ctx.config.train, ctx.config.mlp, ctx.seed);
            mlpnet::save_checkpoint(r.model, dir + "/mlp_model");
            koopman::save_history_csv(r.history, dir + "/history.csv");
            summary["batches"] = r.batches;
            summary["final_loss"] = r.final_loss;
            break;
        }
        case ModelType::edmd: {
            const koopman::LinearLiftedModel m =
                fit_edmd_baseline(d, ctx.config, ctx.seed);
            save_linear_model(m, dir + "/edmd_model.json");
            summary["residual_ab"] = m.residual_ab;
            summary["residual_c"] = m.residual_c;
            break;
        }
        case ModelType::elm_edmd: {
            numkit::Matrix x, y, u;
            snapshot_matrices(d.data.train, d.data.stats, x, y, u);
            const lifting::ElmFeatureMap map = lifting::make_elm_map(
                dataset::kStateDim, {32, 64, ctx.config.train.feature_dim},
                ctx.seed ^ 0xe1f0ull, true);
            const koopman::LinearLiftedModel m = koopman::elm_edmd_fit(x, y, u, map);
            save_linear_model(m, dir + "/elm_edmd_model.json");
            lifting::save_elm_map(map, dir + "/elm_map.json");
            summary["residual_ab"] = m.residual_ab;
            summary["residual_c"] = m.residual_c;
            break;
        }
    }
    write_json(summary, dir + "/train_summary.json");
    return 0;
}

int cmd_evaluate(const RunContext& ctx) {
    ctx.config.validate();
    const std::string dir = resolve_out_dir(ctx);
    const PreparedData d = prepare(ctx.config, ctx.seed);
    const std::size_t p_eval = ctx.config.eval_horizon;
    const std::vector<dataset::Window> windows =
        test_windows(d, ctx.config, p_eval, ctx.seed ^ 0x7e57ull);

    std::vector<std::size_t> horizons = {1};
    if (p_eval >= 10) horizons.push_back(10);
    if (p_eval > 10) horizons.push_back(p_eval);

    json metrics;
    metrics["model"] = to_string(ctx.config.model);
    metrics["horizons"] = horizons;
    json per_h = json::object();

    auto eval_with = [&](const auto& model) {
        for (std::size_t h : horizons)
            per_h[std::to_string(h)] = rmse_json(multistep_rmse(model, windows, h));
    };
    switch (ctx.config.model) {
        case ModelType::deep_edmd:
            eval_with(koopman::load_checkpoint(dir + "/deep_model"));
            break;
        case ModelType::mlp:
            eval_with(mlpnet::load_checkpoint(dir + "/mlp_model"));
            break;
        case ModelType::edmd:
            eval_with(fit_edmd_baseline(d, ctx.config, ctx.seed));
            break;
        case ModelType::elm_edmd: {
            numkit::Matrix x, y, u;
            snapshot_matrices(d.data.train, d.data.stats, x, y, u);
            const lifting::ElmFeatureMap map = lifting::make_elm_map(
                dataset::kStateDim, {32, 64, ctx.config.train.feature_dim},
                ctx.seed ^ 0xe1f0ull, true);
            eval_with(koopman::elm_edmd_fit(x, y, u, map));
            break;
        }
    }
    metrics["rmse"] = per_h;

    // Open-loop error curve along the start of the first test episode.
    {
        const plant::Episode& ep = d.test.front();
        const std::size_t tau = ctx.config.train.tau;
        const std::size_t p = std::min<std::size_t>(500, ep.length() - tau - 1);
        std::vector<dataset::Window> lw =
            dataset::window_sequences(ep, d.data.stats, p, tau, 0);
        if (!lw.empty()) {
            const dataset::Window& w = lw.front();
            std::vector<std::vector<double>> preds;
            if (ctx.config.model == ModelType::deep_edmd) {
                preds = koopman::predict_multistep(koopman::load_checkpoint(dir + "/deep_model"),
                                                   w.x0, w.u_seq);
            } else if (ctx.config.model == ModelType::mlp) {
                preds = mlpnet::predict_multistep(mlpnet::load_checkpoint(dir + "/mlp_model"),
                                                  w.x0, w.u_seq);
            } else {
                const std::vector<double> x0(w.x0.end() - dataset::kStateDim, w.x0.end());
                const koopman::LinearLiftedModel m = fit_edmd_baseline(d, ctx.config, ctx.seed);
                preds = koopman::predict_multistep(m, x0, w.u_seq);
            }
            std::ofstream curve(dir + "/rollout_error.csv");
            curve.precision(17);
            curve << "step,error\n";
            for (std::size_t i = 1; i <= p; ++i) {
                const auto& pred = preds[i];
                const auto& truth = w.x_seq[i - 1];
                const std::size_t po = pred.size() - dataset::kStateDim;
                const std::size_t to = truth.size() - dataset::kStateDim;
                double e = 0.0;
                for (std::size_t ch = 0; ch < dataset::kStateDim; ++ch) {
                    const double dd = pred[po + ch] - truth[to + ch];
                    e += dd * dd;
                }
                curve << i << ',' << std::sqrt(e / dataset::kStateDim) << '\n';
            }
        }
    }
    write_json(metrics, dir + "/metrics.json");
    return 0;
}

int cmd_robustness(const RunContext& ctx) {
    ctx.config.validate();
    const std::string dir = resolve_out_dir(ctx);
    const PreparedData d = prepare(ctx.config, ctx.seed);

    koopman::TrainConfig tc = ctx.config.train;
    tc.random_layer.enabled = true;
    tc.max_batches = ctx.config.robustness_batches;
    tc.max_epochs = 1000000;

    const koopman::TrainResult deep =
        koopman::train_deep(d.data, tc, ctx.config.loss, ctx.seed);
    const mlpnet::MlpTrainResult mlp =
        mlpnet::train_mlp(d.data, tc, ctx.config.mlp, ctx.seed);

    const std::vector<dataset::Window> windows =
        test_windows(d, ctx.config, ctx.config.eval_horizon, ctx.seed ^ 0x7e57ull);
    const std::size_t cap = std::min<std::size_t>(windows.size(), 64);
    const std::vector<dataset::Window> subset(windows.begin(), windows.begin() + cap);

    const std::size_t repeats = ctx.config.robustness_repeats;
    std::vector<RmseReport> deep_runs(repeats), mlp_runs(repeats);
    numkit::Rng rng(ctx.seed ^ 0x0b07ull);
    std::ofstream per_repeat(dir + "/robustness_repeats.csv");
    per_repeat.precision(17);
    per_repeat << "repeat,model,v_x,v_y,yaw_rate,overall\n";
    for (std::size_t r = 0; r < repeats; ++r) {
        koopman::DeepKoopmanModel dm = deep.model;
        redraw_random_layer(dm.encoder, tc.random_layer.sigma, rng);
        deep_runs[r] = multistep_rmse(dm, subset, ctx.config.eval_horizon);
        mlpnet::MlpDynModel mm = mlp.model;
        redraw_random_layer(mm.params, tc.random_layer.sigma, rng);
        mlp_runs[r] = multistep_rmse(mm, subset, ctx.config.eval_horizon);
        per_repeat << r << ",deep-edmd," << deep_runs[r].channel[0] << ','
                   << deep_runs[r].channel[1] << ',' << deep_runs[r].channel[2] << ','
                   << deep_runs[r].overall << '\n';
        per_repeat << r << ",mlp," << mlp_runs[r].channel[0] << ',' << mlp_runs[r].channel[1]
                   << ',' << mlp_runs[r].channel[2] << ',' << mlp_runs[r].overall << '\n';
    }

    auto stats_of = [&](const std::vector<RmseReport>& runs) {
        json j;
        for (std::size_t ch = 0; ch < dataset::kStateDim; ++ch) {
            double mean = 0.0;
            for (const auto& r : runs) mean += r.channel[ch];
            mean /= static_cast<double>(runs.size());
            double var = 0.0;
            for (const auto& r : runs) {
                const double dd = r.channel[ch] - mean;
                var += dd * dd;
            }
            var /= static_cast<double>(runs.size() - 1);
            const char* names[] = {"v_x", "v_y", "yaw_rate"};
            j[names[ch]] = json{{"mean", mean}, {"variance", var}};
        }
        return j;
    };

    // Post-training loss level under continued random-layer redraws.
    auto settled_loss_deep = [&]() {
        double sum = 0.0;
        numkit::Rng lr(ctx.seed ^ 0x10551ull);
        const std::size_t evals = 20;
        for (std::size_t i = 0; i < evals; ++i) {
            koopman::DeepKoopmanModel dm = deep.model;
            redraw_random_layer(dm.encoder, tc.random_layer.sigma, lr);
            sum += koopman::deep_losses(dm, subset, ctx.config.loss).total;
        }
        return sum / static_cast<double>(evals);
    };
    auto settled_loss_mlp = [&]() {
        double sum = 0.0;
        numkit::Rng lr(ctx.seed ^ 0x10552ull);
        const std::size_t evals = 20;
        for (std::size_t i = 0; i < evals; ++i) {
            mlpnet::MlpDynModel mm = mlp.model;
            redraw_random_layer(mm.params, tc.random_layer.sigma, lr);
            sum += mlpnet::mlp_loss(mm, subset, ctx.config.mlp).total;
        }
        return sum / static_cast<double>(evals);
    };

    json summary;
    summary["repeats"] = repeats;
    summary["deep_edmd"] = stats_of(deep_runs);
    summary["mlp"] = stats_of(mlp_runs);
    summary["deep_edmd"]["settled_loss"] = settled_loss_deep();
    summary["mlp"]["settled_loss"] = settled_loss_mlp();
    summary["deep_edmd"]["train_batches"] = deep.batches;
    summary["mlp"]["train_batches"] = mlp.batches;
    write_json(summary, dir + "/robustness.json");
    return 0;
}

int cmd_mpc(const RunContext& ctx) {
    ctx.config.validate();
    const std::string dir = resolve_out_dir(ctx);
    const PreparedData d = prepare(ctx.config, ctx.seed);
    const plant::VehicleParams params = ctx.config.plant_params_path.empty()
                                            ? plant::VehicleParams{}
                                            : plant::load_params(ctx.config.plant_params_path);

    const koopman::DeepKoopmanModel model = koopman::load_checkpoint(dir + "/deep_model");
    dempc::MpcConfig mc = ctx.config.mpc;
    mc.raw_dim = model.state_dim;
    dempc::MpcController controller(model, mc);

    const plant::Episode& reference = d.test.front();
    const dempc::TrackingLog log =
        dempc::run_closed_loop(params, controller, reference, ctx.config.mpc_steps);
    dempc::save_tracking_csv(log, dir + "/tracking.csv");

    std::array<double, dataset::kStateDim> sq{};
    std::vector<double> times;
    times.reserve(log.rows.size());
    for (const auto& r : log.rows) {
        sq[0] += (r.state.v_x - r.reference.v_x) * (r.state.v_x - r.reference.v_x);
        sq[1] += (r.state.v_y - r.reference.v_y) * (r.state.v_y - r.reference.v_y);
        sq[2] += (r.state.yaw_rate - r.reference.yaw_rate) *
                 (r.state.yaw_rate - r.reference.yaw_rate);
        times.push_back(r.qp_ms);
    }
    const double n = static_cast<double>(log.rows.size());
    std::sort(times.begin(), times.end());
    double mean_ms = 0.0;
    for (double t : times) mean_ms += t;
    mean_ms /= std::max(1.0, n);

    json summary;
    summary["steps"] = log.rows.size();
    summary["qp_faults"] = log.qp_faults;
    summary["aborted"] = log.aborted;
    summary["rmse"] = json{{"v_x", std::sqrt(sq[0] / std::max(1.0, n))},
                           {"v_y", std::sqrt(sq[1] / std::max(1.0, n))},
                           {"yaw_rate", std::sqrt(sq[2] / std::max(1.0, n))}};
    summary["qp_ms_mean"] = mean_ms;
    summary["qp_ms_p95"] =
        times.empty() ? 0.0 : times[static_cast<std::size_t>(0.95 * (n - 1))];
    summary["np"] = mc.np;
    summary["nc"] = mc.nc;
    write_json(summary, dir + "/mpc_summary.json");
    return 0;
}

}  // namespace koopveh::experiment

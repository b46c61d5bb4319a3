#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "koopveh/experiment.hpp"

using namespace koopveh;
using namespace koopveh::experiment;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("model type string round trip") {
    for (ModelType t :
         {ModelType::edmd, ModelType::elm_edmd, ModelType::deep_edmd, ModelType::mlp})
        CHECK(model_type_from_string(to_string(t)) == t);
    CHECK_THROWS_AS(model_type_from_string("transformer"), std::invalid_argument);
}

TEST_CASE("config save and load round trip") {
    ExperimentConfig c;
    c.episodes = 12;
    c.episode_length = 321;
    c.dt = 0.02;
    c.model = ModelType::mlp;
    c.train.p = 9;
    c.train.batch_size = 32;
    c.train.random_layer.enabled = true;
    c.train.random_layer.sigma = 0.2;
    c.loss.a3 = 0.7;
    c.mlp.b2 = 1e-6;
    c.mpc.np = 20;
    c.mpc.nc = 12;
    c.excitation.throttle_max = 0.3;
    c.edmd_centers = 14;
    c.mpc_steps = 77;
    c.eval_horizon = 21;

    const auto path = (fs::temp_directory_path() / "koopveh_cfg_test.cfg").string();
    save_config(c, path);
    ExperimentConfig d = load_config(path);
    CHECK(d.episodes == c.episodes);
    CHECK(d.episode_length == c.episode_length);
    CHECK(d.dt == c.dt);
    CHECK(d.model == c.model);
    CHECK(d.train.p == c.train.p);
    CHECK(d.train.batch_size == c.train.batch_size);
    CHECK(d.train.random_layer.enabled == c.train.random_layer.enabled);
    CHECK(d.train.random_layer.sigma == c.train.random_layer.sigma);
    CHECK(d.loss.a3 == c.loss.a3);
    CHECK(d.mlp.b2 == c.mlp.b2);
    CHECK(d.mpc.np == c.mpc.np);
    CHECK(d.mpc.nc == c.mpc.nc);
    CHECK(d.excitation.throttle_max == c.excitation.throttle_max);
    CHECK(d.edmd_centers == c.edmd_centers);
    CHECK(d.mpc_steps == c.mpc_steps);
    CHECK(d.eval_horizon == c.eval_horizon);
    fs::remove(path);
}

TEST_CASE("config parser rejects unknown keys and bad values") {
    const auto dir = fs::temp_directory_path();
    const auto bad_key = dir / "koopveh_badkey.cfg";
    std::ofstream(bad_key.string()) << "episodes = 5\nwarp_speed = 9\n";
    CHECK_THROWS_AS(load_config(bad_key.string()), std::runtime_error);
    fs::remove(bad_key);

    const auto bad_val = dir / "koopveh_badval.cfg";
    std::ofstream(bad_val.string()) << "episodes = banana\n";
    CHECK_THROWS_AS(load_config(bad_val.string()), std::runtime_error);
    fs::remove(bad_val);

    CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), std::runtime_error);
}

TEST_CASE("config validation") {
    ExperimentConfig c;
    c.validate();
    ExperimentConfig bad = c;
    bad.episodes = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.episode_length = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.dt = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("presets override the loaded config") {
    ExperimentConfig c;
    apply_preset(c, "desk");
    CHECK(c.episodes == 5);
    CHECK(c.episode_length == 2000);
    CHECK(c.train.p == 10);
    CHECK(c.train.max_batches == 30000);

    ExperimentConfig p;
    apply_preset(p, "paper");
    CHECK(p.episodes == 40);
    CHECK(p.episode_length == 10000);
    CHECK(p.train.p == 41);
    CHECK(p.train.max_epochs == 50);

    CHECK_THROWS_AS(apply_preset(c, "nightly"), std::invalid_argument);
}

TEST_CASE("simulate: smoke run produces valid CSV episodes and a manifest") {
    ExperimentConfig c;
    c.episodes = 1;
    c.episode_length = 10;
    RunContext ctx;
    ctx.config = c;
    ctx.seed = 3;
    ctx.out_dir = fresh_dir("koopveh_sim_smoke").string();
    CHECK(cmd_simulate(ctx) == 0);

    const fs::path ep = fs::path(ctx.out_dir) / "episode_000.csv";
    REQUIRE(fs::exists(ep));
    plant::Episode back = dataset::read_csv(ep.string());
    CHECK(back.length() == 10);

    const fs::path manifest = fs::path(ctx.out_dir) / "manifest.json";
    REQUIRE(fs::exists(manifest));
    nlohmann::json j;
    std::ifstream(manifest.string()) >> j;
    CHECK(j.at("episodes") == 1);
    CHECK(j.at("files").size() == 1);
    CHECK(j.contains("corpus_hash"));
    fs::remove_all(ctx.out_dir);
}

TEST_CASE("simulate: identical config and seed reproduce the corpus hash") {
    ExperimentConfig c;
    c.episodes = 2;
    c.episode_length = 50;
    RunContext a;
    a.config = c;
    a.seed = 11;
    a.out_dir = fresh_dir("koopveh_sim_a").string();
    RunContext b = a;
    b.out_dir = fresh_dir("koopveh_sim_b").string();
    CHECK(cmd_simulate(a) == 0);
    CHECK(cmd_simulate(b) == 0);
    nlohmann::json ja, jb;
    std::ifstream((fs::path(a.out_dir) / "manifest.json").string()) >> ja;
    std::ifstream((fs::path(b.out_dir) / "manifest.json").string()) >> jb;
    CHECK(ja.at("corpus_hash") == jb.at("corpus_hash"));

    RunContext other = a;
    other.seed = 12;
    other.out_dir = fresh_dir("koopveh_sim_c").string();
    CHECK(cmd_simulate(other) == 0);
    nlohmann::json jc;
    std::ifstream((fs::path(other.out_dir) / "manifest.json").string()) >> jc;
    CHECK(ja.at("corpus_hash") != jc.at("corpus_hash"));
    fs::remove_all(a.out_dir);
    fs::remove_all(b.out_dir);
    fs::remove_all(other.out_dir);
}

TEST_CASE("prepare: split sizes and stats from the training split only") {
    ExperimentConfig c;
    c.episodes = 6;
    c.episode_length = 120;
    PreparedData d = prepare(c, 5);
    CHECK(d.data.train.size() == 4);
    CHECK(d.data.validation.size() == 1);
    CHECK(d.test.size() == 1);
    d.data.stats.validate();
}

TEST_CASE("multistep_rmse: perfect linear model scores zero") {
    ExperimentConfig c;
    c.episodes = 5;
    c.episode_length = 100;
    PreparedData d = prepare(c, 9);

    // Model that predicts x_next = x exactly on constant windows.
    koopman::LinearLiftedModel model;
    model.a = numkit::Matrix::identity(3);
    model.b = numkit::Matrix(3, 2);
    model.c = numkit::Matrix::identity(3);
    model.lift = [](const std::vector<double>& v) { return v; };

    dataset::Window w;
    w.x0 = {0.25, 0.5, 0.75};
    for (int i = 0; i < 4; ++i) {
        w.u_seq.push_back({0.0, 0.0});
        w.x_seq.push_back(w.x0);  // constant trajectory
    }
    RmseReport r = multistep_rmse(model, {w}, 4);
    CHECK(r.overall == doctest::Approx(0.0).epsilon(1e-20));
    for (double ch : r.channel) CHECK(ch == doctest::Approx(0.0).epsilon(1e-20));

    // A constant-offset model scores exactly that offset.
    koopman::LinearLiftedModel off = model;
    off.c = numkit::Matrix::identity(3);
    off.lift = [](const std::vector<double>& v) {
        std::vector<double> o = v;
        for (double& x : o) x += 0.1;
        return o;
    };
    RmseReport ro = multistep_rmse(off, {w}, 4);
    for (double ch : ro.channel) CHECK(ch == doctest::Approx(0.1).epsilon(1e-10));
}

TEST_CASE("fit_edmd_baseline produces the requested dictionary size") {
    ExperimentConfig c;
    c.episodes = 5;
    c.episode_length = 150;
    c.edmd_centers = 7;
    PreparedData d = prepare(c, 4);
    koopman::LinearLiftedModel m = fit_edmd_baseline(d, c, 4);
    CHECK(m.a.rows() == 3 + 7);  // raw state plus centers
    CHECK(m.b.cols() == 2);
    CHECK(m.c.rows() == 3);
    REQUIRE(m.lift);
    CHECK(m.lift({0.1, 0.2, 0.3}).size() == 10);
}

TEST_CASE("redraw_random_layer only touches the second-to-last layer") {
    nn::NetSpec spec = nn::make_spec({4, 5, 6, 3}, nn::Activation::linear, false);
    nn::MlpParams p = nn::init_uniform(spec, 8);
    nn::MlpParams before = p;
    numkit::Rng rng(3);
    redraw_random_layer(p, 0.1, rng);
    const std::size_t target = p.weights.size() - 2;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        bool same = true;
        for (std::size_t i = 0; i < p.weights[l].size(); ++i)
            same = same && p.weights[l].data()[i] == before.weights[l].data()[i];
        if (l == target)
            CHECK(!same);
        else
            CHECK(same);
    }
}

TEST_CASE("file_hash is content-stable") {
    const auto dir = fs::temp_directory_path();
    const auto f1 = dir / "koopveh_hash_a.txt";
    const auto f2 = dir / "koopveh_hash_b.txt";
    std::ofstream(f1.string()) << "same bytes";
    std::ofstream(f2.string()) << "same bytes";
    CHECK(file_hash(f1.string()) == file_hash(f2.string()));
    std::ofstream(f2.string()) << "different";
    CHECK(file_hash(f1.string()) != file_hash(f2.string()));
    fs::remove(f1);
    fs::remove(f2);
    CHECK_THROWS_AS(file_hash("/nonexistent/file"), std::runtime_error);
}

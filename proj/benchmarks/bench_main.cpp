#include <benchmark/benchmark.h>

#include <vector>

#include "koopveh/dempc.hpp"
#include "koopveh/koopman.hpp"
#include "koopveh/nn.hpp"
#include "koopveh/plant.hpp"
#include "koopveh/qp.hpp"

using namespace koopveh;
using numkit::Matrix;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, numkit::Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
    return m;
}

koopman::DeepKoopmanModel paper_scale_model() {
    koopman::DeepKoopmanModel model;
    model.state_dim = 6;
    model.encoder_spec = nn::make_spec({6, 32, 64, 10}, nn::Activation::linear, false);
    model.decoder_spec = nn::make_spec({16, 128, 64, 32, 6}, nn::Activation::sigmoid, true);
    model.encoder = nn::init_uniform(model.encoder_spec, 1);
    model.decoder = nn::init_uniform(model.decoder_spec, 2);
    numkit::Rng rng(3);
    model.a = random_matrix(16, 16, rng, 0.2);
    model.b = random_matrix(16, 2, rng, 0.2);
    model.stats.min = {0.0, -2.0, -1.0, -450.0, -9.1};
    model.stats.max = {30.0, 2.0, 1.0, 450.0, 0.2};
    return model;
}

std::vector<dataset::Window> make_batch(std::size_t count, std::size_t p) {
    numkit::Rng rng(7);
    std::vector<dataset::Window> out(count);
    for (auto& w : out) {
        w.x0.assign(6, 0.0);
        for (double& v : w.x0) v = rng.uniform(0.0, 1.0);
        w.u_seq.assign(p, std::vector<double>(2));
        w.x_seq.assign(p, std::vector<double>(6));
        for (auto& u : w.u_seq)
            for (double& v : u) v = rng.uniform(0.0, 1.0);
        for (auto& x : w.x_seq)
            for (double& v : x) v = rng.uniform(0.0, 1.0);
    }
    return out;
}

void bench_deep_loss_batch(benchmark::State& state) {
    const koopman::DeepKoopmanModel model = paper_scale_model();
    const auto batch = make_batch(64, static_cast<std::size_t>(state.range(0)));
    const koopman::LossWeights weights;
    for (auto _ : state) {
        koopman::DeepGradients grads;
        benchmark::DoNotOptimize(koopman::deep_losses(model, batch, weights, &grads));
    }
}
BENCHMARK(bench_deep_loss_batch)->Arg(5)->Arg(41);

void bench_mpc_step(benchmark::State& state) {
    const koopman::DeepKoopmanModel model = paper_scale_model();
    dempc::MpcConfig cfg;
    cfg.np = static_cast<std::size_t>(state.range(0));
    cfg.nc = static_cast<std::size_t>(state.range(1));
    cfg.raw_dim = 6;
    dempc::MpcController ctrl(model, cfg);
    const plant::VehicleState x{12.0, 0.05, 0.01};
    const std::vector<plant::VehicleState> ref(cfg.np, plant::VehicleState{15.0, 0.0, 0.0});
    for (auto _ : state) {
        ctrl.reset();
        benchmark::DoNotOptimize(ctrl.step(x, ref));
    }
}
BENCHMARK(bench_mpc_step)->Args({10, 7})->Args({60, 50});

void bench_qp_solve(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    numkit::Rng rng(11);
    Matrix a = random_matrix(d, d, rng);
    numkit::QpProblem p;
    p.hessian = Matrix(d + 1, d + 1);
    p.hessian.set_block(0, 0, numkit::matmul(numkit::transpose(a), a) + Matrix::identity(d));
    p.hessian(d, d) = 10.0;
    p.linear.assign(d + 1, 0.0);
    for (std::size_t i = 0; i < d; ++i) p.linear[i] = rng.uniform(-2.0, 2.0);
    p.lower.assign(d, -0.5);
    p.upper.assign(d, 0.5);
    p.slack_widens = true;
    for (auto _ : state) benchmark::DoNotOptimize(numkit::qp_solve(p));
}
BENCHMARK(bench_qp_solve)->Arg(14)->Arg(100);

void bench_plant_step(benchmark::State& state) {
    plant::VehicleParams vp;
    plant::VehicleState x{15.0, 0.1, 0.02};
    plant::ControlInput u{30.0, 0.1};
    for (auto _ : state) {
        x = plant::step(x, u, vp, 0.01);
        benchmark::DoNotOptimize(x);
    }
}
BENCHMARK(bench_plant_step);

}  // namespace

BENCHMARK_MAIN();

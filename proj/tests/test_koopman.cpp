#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "koopveh/koopman.hpp"

using namespace koopveh;
using namespace koopveh::koopman;
using numkit::Matrix;

namespace {

lifting::TpsDictionary identity_dict() {
    lifting::TpsDictionary d;
    d.includes_state = true;  // no centers: lift(x) = x
    return d;
}

Matrix random_matrix(std::size_t r, std::size_t c, numkit::Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
    return m;
}

koopman::TrainingData tiny_training_data(std::size_t episodes, std::size_t len,
                                         std::uint64_t seed) {
    plant::VehicleParams vp;
    plant::ExcitationPolicy pol;
    koopman::TrainingData data;
    for (std::size_t e = 0; e < episodes; ++e)
        data.train.push_back(plant::generate_episode(pol, len, seed + e, vp, 0.01));
    data.validation.push_back(plant::generate_episode(pol, len, seed + 100, vp, 0.01));
    data.stats = dataset::compute_stats(data.train);
    return data;
}

DeepKoopmanModel tiny_deep_model(std::uint64_t seed) {
    DeepKoopmanModel model;
    model.state_dim = 4;
    model.encoder_spec = nn::make_spec({4, 5, 2}, nn::Activation::linear, false);
    model.decoder_spec = nn::make_spec({6, 5, 4}, nn::Activation::sigmoid, true);
    model.encoder = nn::init_uniform(model.encoder_spec, seed);
    model.decoder = nn::init_uniform(model.decoder_spec, seed + 1);
    numkit::Rng rng(seed + 2);
    model.a = random_matrix(6, 6, rng, 0.3);
    model.b = random_matrix(6, 2, rng, 0.3);
    return model;
}

std::vector<dataset::Window> random_windows(std::size_t count, std::size_t n, std::size_t m,
                                            std::size_t p, std::uint64_t seed) {
    numkit::Rng rng(seed);
    std::vector<dataset::Window> out(count);
    for (auto& w : out) {
        w.x0.resize(n);
        for (double& v : w.x0) v = rng.uniform(0.0, 1.0);
        w.u_seq.assign(p, std::vector<double>(m));
        w.x_seq.assign(p, std::vector<double>(n));
        for (auto& u : w.u_seq)
            for (double& v : u) v = rng.uniform(0.0, 1.0);
        for (auto& x : w.x_seq)
            for (double& v : x) v = rng.uniform(0.0, 1.0);
    }
    return out;
}

}  // namespace

TEST_CASE("edmd_fit recovers a linear system through the identity dictionary") {
    numkit::Rng rng(1);
    const std::size_t n = 3, m = 2, snaps = 60;
    const Matrix a0 = random_matrix(n, n, rng, 0.5);
    const Matrix b0 = random_matrix(n, m, rng, 0.5);
    Matrix x(n, snaps), y(n, snaps), u(m, snaps);
    for (std::size_t k = 0; k < snaps; ++k) {
        std::vector<double> xk(n), uk(m);
        for (double& v : xk) v = rng.uniform(-1.0, 1.0);
        for (double& v : uk) v = rng.uniform(-1.0, 1.0);
        std::vector<double> yk = numkit::matvec(a0, xk);
        const auto bu = numkit::matvec(b0, uk);
        for (std::size_t i = 0; i < n; ++i) yk[i] += bu[i];
        x.set_column(k, xk);
        y.set_column(k, yk);
        u.set_column(k, uk);
    }
    const LinearLiftedModel fit = edmd_fit(x, y, u, identity_dict());
    CHECK((fit.a - a0).max_abs() < 1e-8);
    CHECK((fit.b - b0).max_abs() < 1e-8);
    CHECK((fit.c - Matrix::identity(n)).max_abs() < 1e-8);
    CHECK(fit.residual_ab < 1e-8);
    CHECK(fit.residual_c < 1e-10);
}

TEST_CASE("fit_lifted single snapshot matches explicit pseudoinverse") {
    Matrix phi_x(2, 1, {1.0, 2.0});
    Matrix phi_y(2, 1, {3.0, -1.0});
    Matrix u(1, 1, {0.5});
    Matrix x(2, 1, {1.0, 2.0});
    const LinearLiftedModel fit = fit_lifted(phi_x, phi_y, u, x);

    Matrix w(3, 1, {1.0, 2.0, 0.5});
    const Matrix ab =
        numkit::matmul(numkit::matmul(phi_y, numkit::transpose(w)),
                       numkit::pinv(numkit::matmul(w, numkit::transpose(w))));
    CHECK((fit.a - ab.block(0, 0, 2, 2)).max_abs() < 1e-12);
    CHECK((fit.b - ab.block(0, 2, 2, 1)).max_abs() < 1e-12);
}

TEST_CASE("fit_lifted is invariant to snapshot column permutation") {
    numkit::Rng rng(9);
    const std::size_t l = 4, m = 2, snaps = 25;
    Matrix phi_x = random_matrix(l, snaps, rng);
    Matrix phi_y = random_matrix(l, snaps, rng);
    Matrix u = random_matrix(m, snaps, rng);
    Matrix x = random_matrix(3, snaps, rng);

    Matrix px(l, snaps), py(l, snaps), pu(m, snaps), pxx(3, snaps);
    for (std::size_t k = 0; k < snaps; ++k) {
        const std::size_t j = (k * 7 + 3) % snaps;  // a fixed permutation
        px.set_column(k, phi_x.column(j));
        py.set_column(k, phi_y.column(j));
        pu.set_column(k, u.column(j));
        pxx.set_column(k, x.column(j));
    }
    const LinearLiftedModel f1 = fit_lifted(phi_x, phi_y, u, x);
    const LinearLiftedModel f2 = fit_lifted(px, py, pu, pxx);
    CHECK((f1.a - f2.a).max_abs() < 1e-10);
    CHECK((f1.b - f2.b).max_abs() < 1e-10);
    CHECK((f1.c - f2.c).max_abs() < 1e-10);
}

TEST_CASE("fit_lifted residual is locally optimal") {
    numkit::Rng rng(31);
    const std::size_t l = 3, m = 1, snaps = 20;
    Matrix phi_x = random_matrix(l, snaps, rng);
    Matrix phi_y = random_matrix(l, snaps, rng);
    Matrix u = random_matrix(m, snaps, rng);
    Matrix x = random_matrix(2, snaps, rng);
    const LinearLiftedModel fit = fit_lifted(phi_x, phi_y, u, x);

    Matrix w(l + m, snaps);
    w.set_block(0, 0, phi_x);
    w.set_block(l, 0, u);
    Matrix ab(l, l + m);
    ab.set_block(0, 0, fit.a);
    ab.set_block(0, l, fit.b);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix pert = ab;
        for (std::size_t i = 0; i < pert.size(); ++i)
            pert.data()[i] += rng.uniform(-1e-3, 1e-3);
        const double r = (phi_y - numkit::matmul(pert, w)).frobenius_norm();
        CHECK(fit.residual_ab <= r + 1e-12);
    }
}

TEST_CASE("fit_lifted rejects mismatched snapshot counts") {
    CHECK_THROWS_AS(fit_lifted(Matrix(2, 3), Matrix(2, 4), Matrix(1, 3), Matrix(2, 3)),
                    std::invalid_argument);
}

TEST_CASE("rollout_lifted: base case and telescoping identity") {
    numkit::Rng rng(4);
    const Matrix a = random_matrix(3, 3, rng);
    const Matrix b = random_matrix(3, 2, rng);
    std::vector<double> phi0{0.1, -0.2, 0.3};
    std::vector<double> u0{0.5, -0.4};
    auto one = rollout_lifted(a, b, phi0, {u0});
    REQUIRE(one.size() == 1);
    auto want = numkit::matvec(a, phi0);
    const auto bu = numkit::matvec(b, u0);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(one[0][i] == doctest::Approx(want[i] + bu[i]).epsilon(1e-14));

    // A = I, B = I: phi_p = phi_0 + sum of controls.
    const Matrix id = Matrix::identity(3);
    std::vector<std::vector<double>> us;
    std::vector<double> acc = phi0;
    for (int k = 0; k < 6; ++k) {
        std::vector<double> u(3);
        for (double& v : u) v = rng.uniform(-1.0, 1.0);
        for (std::size_t i = 0; i < 3; ++i) acc[i] += u[i];
        us.push_back(u);
    }
    auto tel = rollout_lifted(id, id, phi0, us);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(tel.back()[i] == doctest::Approx(acc[i]).epsilon(1e-12));

    CHECK_THROWS_AS(rollout_lifted(Matrix(2, 3), b, phi0, us), std::invalid_argument);
}

TEST_CASE("rollout_lifted matches the closed-form power series") {
    numkit::Rng rng(8);
    const std::size_t l = 4, m = 2, p = 7;
    const Matrix a = random_matrix(l, l, rng, 0.6);
    const Matrix b = random_matrix(l, m, rng);
    std::vector<double> phi0(l);
    for (double& v : phi0) v = rng.uniform(-1.0, 1.0);
    std::vector<std::vector<double>> us(p, std::vector<double>(m));
    for (auto& u : us)
        for (double& v : u) v = rng.uniform(-1.0, 1.0);

    auto got = rollout_lifted(a, b, phi0, us);
    REQUIRE(got.size() == p);

    // phi_i = A^i phi_0 + sum_j A^{i-1-j} B u_j via explicit matrix powers.
    std::vector<Matrix> pow{Matrix::identity(l)};
    for (std::size_t i = 0; i < p; ++i) pow.push_back(numkit::matmul(a, pow.back()));
    for (std::size_t i = 1; i <= p; ++i) {
        std::vector<double> want = numkit::matvec(pow[i], phi0);
        for (std::size_t j = 0; j < i; ++j) {
            const auto term = numkit::matvec(numkit::matmul(pow[i - 1 - j], b), us[j]);
            for (std::size_t r = 0; r < l; ++r) want[r] += term[r];
        }
        for (std::size_t r = 0; r < l; ++r)
            CHECK(got[i - 1][r] == doctest::Approx(want[r]).epsilon(1e-10));
    }
}

TEST_CASE("deep_losses: inf-norm weight enters linearly") {
    DeepKoopmanModel model = tiny_deep_model(3);
    auto batch = random_windows(5, 4, 2, 3, 17);
    LossWeights w1;
    w1.a4 = 0.0;
    LossWeights w2 = w1;
    w2.a4 = 0.25;
    const LossValues l1 = deep_losses(model, batch, w1);
    const LossValues l2 = deep_losses(model, batch, w2);
    CHECK(l1.inf_norm == l2.inf_norm);  // stored unweighted
    CHECK(l2.total - l1.total == doctest::Approx(0.25 * l1.inf_norm).epsilon(1e-12));
    CHECK(l1.recon == l2.recon);
    CHECK(l1.pred == l2.pred);
    CHECK(l1.lifted == l2.lifted);
}

TEST_CASE("deep_losses gradients match finite differences") {
    for (std::size_t p : {1u, 3u, 5u}) {
        DeepKoopmanModel model = tiny_deep_model(40 + p);
        auto batch = random_windows(4, 4, 2, p, 23 + p);
        LossWeights w;
        w.a3 = 0.3;
        w.a4 = 0.0;  // keep the objective smooth for differencing
        w.a5 = 1e-4;
        w.a6 = 1e-4;
        DeepGradients dg;
        deep_losses(model, batch, w, &dg);

        std::vector<double> gflat;
        dg.encoder.flatten_into(gflat);
        dg.decoder.flatten_into(gflat);
        gflat.insert(gflat.end(), dg.a.data(), dg.a.data() + dg.a.size());
        gflat.insert(gflat.end(), dg.b.data(), dg.b.data() + dg.b.size());

        const std::size_t enc_count = model.encoder.count();
        const std::size_t dec_count = model.decoder.count();
        auto loss_at = [&](DeepKoopmanModel& m2) {
            return deep_losses(m2, batch, w).total;
        };
        const double h = 1e-6;
        for (std::size_t k = 0; k < gflat.size(); k += 11) {
            DeepKoopmanModel m2 = model;
            auto poke = [&](double delta) {
                std::vector<double> flat;
                m2.encoder.flatten_into(flat);
                m2.decoder.flatten_into(flat);
                flat.insert(flat.end(), m2.a.data(), m2.a.data() + m2.a.size());
                flat.insert(flat.end(), m2.b.data(), m2.b.data() + m2.b.size());
                flat[k] += delta;
                const double* ptr = flat.data();
                m2.encoder.unflatten_from(ptr);
                ptr += enc_count;
                m2.decoder.unflatten_from(ptr);
                ptr += dec_count;
                std::copy(ptr, ptr + m2.a.size(), m2.a.data());
                ptr += m2.a.size();
                std::copy(ptr, ptr + m2.b.size(), m2.b.data());
            };
            poke(h);
            const double lp = loss_at(m2);
            poke(-2.0 * h);
            const double lm = loss_at(m2);
            poke(h);  // restore
            const double fd = (lp - lm) / (2.0 * h);
            const double scale = std::max({std::abs(fd), std::abs(gflat[k]), 1e-4});
            CHECK(std::abs(fd - gflat[k]) / scale < 1e-4);
        }
    }
}

TEST_CASE("deep_losses rejects empty and ragged batches") {
    DeepKoopmanModel model = tiny_deep_model(6);
    CHECK_THROWS_AS(deep_losses(model, {}, LossWeights{}), std::invalid_argument);
    auto batch = random_windows(2, 4, 2, 3, 5);
    batch[1].u_seq.pop_back();
    CHECK_THROWS_AS(deep_losses(model, batch, LossWeights{}), std::invalid_argument);
}

TEST_CASE("train_deep: infinite stop tolerance returns the initial model") {
    auto data = tiny_training_data(1, 80, 60);
    TrainConfig cfg;
    cfg.p = 3;
    cfg.tau = 2;
    cfg.feature_dim = 4;
    cfg.batch_size = 8;
    cfg.max_epochs = 5;
    cfg.stop_tolerance = std::numeric_limits<double>::infinity();
    const TrainResult r = train_deep(data, cfg, LossWeights{}, 2);
    CHECK(r.batches == 0);
    // Parameters must equal the seeded initialization: A = I, B = 0.
    CHECK((r.model.a - Matrix::identity(r.model.lifted_dim())).max_abs() == 0.0);
    CHECK(r.model.b.max_abs() == 0.0);
    std::vector<double> got, want;
    r.model.encoder.flatten_into(got);
    nn::init_uniform(r.model.encoder_spec, 2).flatten_into(want);
    CHECK(got == want);
    REQUIRE(!r.history.empty());
    CHECK(r.history.front().batch == 0);
}

TEST_CASE("train_deep: deterministic under a fixed seed, zero epochs allowed") {
    auto data = tiny_training_data(1, 120, 61);
    TrainConfig cfg;
    cfg.p = 3;
    cfg.tau = 2;
    cfg.feature_dim = 4;
    cfg.batch_size = 16;
    cfg.max_epochs = 1;
    cfg.max_batches = 4;
    cfg.log_every = 2;
    const TrainResult r1 = train_deep(data, cfg, LossWeights{}, 5);
    const TrainResult r2 = train_deep(data, cfg, LossWeights{}, 5);
    CHECK(r1.batches == r2.batches);
    CHECK(r1.final_loss == r2.final_loss);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].batch == r2.history[i].batch);
        CHECK(r1.history[i].train_recon == r2.history[i].train_recon);
        CHECK(r1.history[i].val_recon == r2.history[i].val_recon);
    }
    CHECK((r1.model.a - r2.model.a).max_abs() == 0.0);

    TrainConfig zero = cfg;
    zero.max_epochs = 0;
    const TrainResult r0 = train_deep(data, zero, LossWeights{}, 5);
    CHECK(r0.batches == 0);

    TrainConfig bad = cfg;
    bad.p = 0;
    CHECK_THROWS_AS(train_deep(data, bad, LossWeights{}, 5), std::invalid_argument);
}

TEST_CASE("elm_edmd_fit equals fit_lifted on pre-lifted snapshots") {
    numkit::Rng rng(3);
    const std::size_t n = 3, m = 2, snaps = 30;
    Matrix x = random_matrix(n, snaps, rng);
    Matrix y = random_matrix(n, snaps, rng);
    Matrix u = random_matrix(m, snaps, rng);
    auto map = lifting::make_elm_map(n, {5, 4}, 77);

    const LinearLiftedModel direct = elm_edmd_fit(x, y, u, map);

    const std::size_t l = map.output_dim();
    Matrix phi_x(l, snaps), phi_y(l, snaps);
    for (std::size_t k = 0; k < snaps; ++k) {
        phi_x.set_column(k, lifting::elm_lift(x.column(k), map));
        phi_y.set_column(k, lifting::elm_lift(y.column(k), map));
    }
    const LinearLiftedModel manual = fit_lifted(phi_x, phi_y, u, x);
    CHECK((direct.a - manual.a).max_abs() < 1e-12);
    CHECK((direct.b - manual.b).max_abs() < 1e-12);
    CHECK((direct.c - manual.c).max_abs() < 1e-12);
}

TEST_CASE("spectrum: stability flag and characteristic values") {
    auto half = spectrum(0.5 * Matrix::identity(3));
    CHECK(half.stable);
    CHECK(half.spectral_radius == doctest::Approx(0.5).epsilon(1e-10));

    auto bad = spectrum(Matrix::diag({1.2, 0.1}));
    CHECK(!bad.stable);
    CHECK(bad.spectral_radius == doctest::Approx(1.2).epsilon(1e-10));
    // Sorted by modulus, descending.
    CHECK(std::abs(bad.eigenvalues[0]) >= std::abs(bad.eigenvalues[1]));

    // Companion matrix of z^2 - z - 1: eigenvalues are the golden ratios.
    Matrix comp{{1.0, 1.0}, {1.0, 0.0}};
    auto fib = spectrum(comp);
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    CHECK(fib.spectral_radius == doctest::Approx(golden).epsilon(1e-10));
    CHECK(fib.eigenvalues[1].real() == doctest::Approx(1.0 - golden).epsilon(1e-8));
}

TEST_CASE("predict_multistep on a linear model equals direct simulation") {
    numkit::Rng rng(14);
    const std::size_t n = 3, m = 2, p = 10;
    LinearLiftedModel model;
    model.a = random_matrix(n, n, rng, 0.5);
    model.b = random_matrix(n, m, rng, 0.5);
    model.c = Matrix::identity(n);
    model.lift = [](const std::vector<double>& v) { return v; };

    std::vector<double> x0{0.2, -0.1, 0.4};
    std::vector<std::vector<double>> us(p, std::vector<double>(m));
    for (auto& u : us)
        for (double& v : u) v = rng.uniform(-1.0, 1.0);

    auto got = predict_multistep(model, x0, us);
    REQUIRE(got.size() == p + 1);
    for (std::size_t i = 0; i < n; ++i) CHECK(got[0][i] == x0[i]);
    std::vector<double> x = x0;
    for (std::size_t k = 0; k < p; ++k) {
        auto nx = numkit::matvec(model.a, x);
        const auto bu = numkit::matvec(model.b, us[k]);
        for (std::size_t i = 0; i < n; ++i) nx[i] += bu[i];
        x = nx;
        for (std::size_t i = 0; i < n; ++i)
            CHECK(got[k + 1][i] == doctest::Approx(x[i]).epsilon(1e-12));
    }

    LinearLiftedModel unlifted = model;
    unlifted.lift = nullptr;
    CHECK_THROWS_AS(predict_multistep(unlifted, x0, us), std::invalid_argument);
}

TEST_CASE("deep model checkpoint round trip") {
    DeepKoopmanModel model = tiny_deep_model(91);
    model.stats.min = {0.0, -2.0, -1.0, -400.0, -9.0};
    model.stats.max = {30.0, 2.0, 1.0, 400.0, 0.2};
    const auto path =
        (std::filesystem::temp_directory_path() / "koopveh_deep_ckpt").string();
    save_checkpoint(model, path);
    DeepKoopmanModel back = load_checkpoint(path);
    CHECK(back.state_dim == model.state_dim);
    CHECK((back.a - model.a).max_abs() == 0.0);
    CHECK((back.b - model.b).max_abs() == 0.0);
    for (std::size_t c = 0; c < 5; ++c) {
        CHECK(back.stats.min[c] == model.stats.min[c]);
        CHECK(back.stats.max[c] == model.stats.max[c]);
    }
    std::vector<double> x{0.1, 0.2, 0.3, 0.4};
    CHECK(model.encode(x) == back.encode(x));
    CHECK(model.decode(model.encode(x)) == back.decode(back.encode(x)));
    for (const char* ext : {".json", ".enc.bin", ".enc.bin.json", ".dec.bin", ".dec.bin.json"})
        std::filesystem::remove(path + ext);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/model"), std::runtime_error);
}

TEST_CASE("history CSV has one row per entry") {
    std::vector<HistoryRow> h{{0, 0.5, 0.6}, {1000, 0.2, 0.25}};
    const auto path =
        (std::filesystem::temp_directory_path() / "koopveh_hist.csv").string();
    save_history_csv(h, path);
    std::ifstream in(path);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == h.size() + 1);  // header included
    std::filesystem::remove(path);
}

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "koopveh/lifting.hpp"

using namespace koopveh;
using namespace koopveh::lifting;

TEST_CASE("tps_rbf: exact values") {
    std::vector<double> c{1.0, 2.0, 3.0};
    CHECK(tps_rbf(c, c) == 0.0);  // r = 0 limit
    // r = 1: r^2 log r = 0.
    CHECK(tps_rbf({2.0, 2.0, 3.0}, c) == doctest::Approx(0.0).epsilon(1e-15));
    // r = e: r^2 log r = e^2.
    const double e = std::exp(1.0);
    CHECK(tps_rbf({1.0 + e, 2.0, 3.0}, c) == doctest::Approx(e * e).epsilon(1e-12));
    CHECK_THROWS_AS(tps_rbf({1.0, 2.0}, c), std::invalid_argument);
}

TEST_CASE("tps_rbf: continuity at the origin") {
    std::vector<double> c{0.0, 0.0};
    const double h = 1e-4;
    CHECK(std::abs(tps_rbf({h, 0.0}, c)) < 1e-6);
    CHECK(std::abs(tps_rbf({h / std::sqrt(2.0), h / std::sqrt(2.0)}, c)) < 1e-6);
}

TEST_CASE("sample_centers: validation, determinism, statistics") {
    std::vector<double> mean{0.5, -1.0};
    std::vector<double> std{0.2, 0.3};
    CHECK_THROWS_AS(sample_centers(mean, std, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_centers(mean, {0.2, 0.0}, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_centers(mean, {0.2}, 3, 1), std::invalid_argument);

    auto a = sample_centers(mean, std, 8, 99);
    auto b = sample_centers(mean, std, 8, 99);
    CHECK(a.centers == b.centers);
    auto c = sample_centers(mean, std, 8, 100);
    CHECK(a.centers != c.centers);

    // Empirical mean of many draws stays within 3 sigma / sqrt(N).
    const std::size_t n = 100000;
    auto big = sample_centers(mean, std, n, 12345);
    for (std::size_t j = 0; j < mean.size(); ++j) {
        double sum = 0.0;
        for (const auto& ctr : big.centers) sum += ctr[j];
        const double emp = sum / static_cast<double>(n);
        CHECK(std::abs(emp - mean[j]) < 3.0 * std[j] / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("lift and assemble_psi dimensions and content") {
    auto dict = sample_centers({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, 5, 7);
    std::vector<double> x{0.1, -0.2, 0.3};
    auto phi = lift(x, dict);
    REQUIRE(phi.size() == dict.output_dim(3));
    CHECK(phi.size() == 8);
    // Raw state leads the feature vector so a linear decode can read it back.
    CHECK(phi[0] == x[0]);
    CHECK(phi[1] == x[1]);
    CHECK(phi[2] == x[2]);
    for (std::size_t k = 0; k < dict.centers.size(); ++k)
        CHECK(phi[3 + k] == tps_rbf(x, dict.centers[k]));

    dict.includes_state = false;
    CHECK(lift(x, dict).size() == 5);

    auto psi = assemble_psi(phi, {0.4, 0.5});
    REQUIRE(psi.size() == phi.size() + 2);
    CHECK(psi[phi.size()] == 0.4);
    CHECK(psi[phi.size() + 1] == 0.5);
}

TEST_CASE("elm map: zero weights give zero features") {
    ElmFeatureMap map = make_elm_map(3, {4, 6}, 1, false);
    for (auto& w : map.weights)
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = 0.0;
    for (auto& b : map.biases)
        for (double& v : b) v = 0.0;
    auto h = elm_lift({1.0, -2.0, 3.0}, map);
    REQUIRE(h.size() == 6);
    for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("elm map: frozen determinism and hand-rolled forward oracle") {
    auto a = make_elm_map(3, {4, 5}, 17);
    auto b = make_elm_map(3, {4, 5}, 17);
    std::vector<double> x{0.2, -0.1, 0.4};
    CHECK(elm_lift(x, a) == elm_lift(x, b));

    // Independent forward pass: ReLU hidden, linear last, state prefix.
    std::vector<double> h = x;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        std::vector<double> z(a.weights[l].rows(), 0.0);
        for (std::size_t i = 0; i < a.weights[l].rows(); ++i) {
            double acc = a.biases[l][i];
            for (std::size_t j = 0; j < a.weights[l].cols(); ++j)
                acc += a.weights[l](i, j) * h[j];
            z[i] = (l + 1 < a.weights.size()) ? std::max(acc, 0.0) : acc;
        }
        h = z;
    }
    std::vector<double> want = x;
    want.insert(want.end(), h.begin(), h.end());
    auto got = elm_lift(x, a);
    REQUIRE(got.size() == want.size());
    CHECK(got.size() == a.output_dim());
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));

    CHECK_THROWS_AS(elm_lift({1.0, 2.0}, a), std::invalid_argument);
}

TEST_CASE("dictionary and ELM map JSON round trips") {
    const auto dir = std::filesystem::temp_directory_path();

    auto dict = sample_centers({0.1, 0.2}, {1.0, 2.0}, 4, 3, false);
    const auto dpath = dir / "koopveh_dict_test.json";
    save_dictionary(dict, dpath.string());
    auto dict2 = load_dictionary(dpath.string());
    CHECK(dict2.includes_state == dict.includes_state);
    CHECK(dict2.centers == dict.centers);
    std::filesystem::remove(dpath);

    auto map = make_elm_map(3, {4, 5}, 31);
    const auto epath = dir / "koopveh_elm_test.json";
    save_elm_map(map, epath.string());
    auto map2 = load_elm_map(epath.string());
    std::vector<double> x{0.3, 0.1, -0.2};
    CHECK(elm_lift(x, map) == elm_lift(x, map2));
    std::filesystem::remove(epath);

    CHECK_THROWS_AS(load_dictionary("/nonexistent/dict.json"), std::runtime_error);
    CHECK_THROWS_AS(load_elm_map("/nonexistent/elm.json"), std::runtime_error);
}

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "koopveh/matrix.hpp"
#include "koopveh/plant.hpp"

using namespace koopveh::plant;

namespace {

// Independent transcription of the longitudinal magic formula used as an oracle.
double magic_formula(double slip, const VehicleParams& p) {
    const double cs = p.pacejka_c * slip;
    const double inner = cs - p.pacejka_d * (cs - std::atan(cs));
    return p.pacejka_a * std::sin(p.pacejka_b * std::atan(inner));
}

}  // namespace

TEST_CASE("tire forces: zero state, zero input") {
    VehicleParams p;
    auto [fx, fy] = tire_and_body_forces(VehicleState{}, ControlInput{}, p);
    CHECK(fx == 0.0);
    CHECK(fy == 0.0);
}

TEST_CASE("tire forces: small-slip Taylor expansion") {
    VehicleParams p;
    p.drag_group = 0.0;  // isolate the tire term
    for (double s : {1e-6, 1e-5, 1e-4}) {
        VehicleState x;
        ControlInput u;
        u.engine = s / p.throttle_slip;
        auto [fx, fy] = tire_and_body_forces(x, u, p);
        (void)fy;
        // F ~ A * B * C * s + O(s^3): the D term is cubic in the slip.
        const double lin = p.pacejka_a * p.pacejka_b * p.pacejka_c * s;
        CHECK(fx == doctest::Approx(lin).epsilon(1e-4));
    }
}

TEST_CASE("tire forces: independent magic-formula evaluation at moderate slip") {
    VehicleParams p;
    VehicleState x;
    x.v_x = 12.0;
    x.v_y = 0.4;
    ControlInput u;
    u.engine = 0.05 / p.throttle_slip;  // slip = 0.05
    auto [fx, fy] = tire_and_body_forces(x, u, p);
    (void)fy;
    const double v2 = x.v_x * x.v_x + x.v_y * x.v_y;
    const double want = magic_formula(0.05, p) - p.drag_group * v2 * p.c_fx;
    CHECK(fx == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("tire forces: brake channel uses brake slip scale") {
    VehicleParams p;
    p.drag_group = 0.0;
    VehicleState x;
    ControlInput u;
    u.engine = -2.0;  // 2 MPa brake demand
    auto [fx, fy] = tire_and_body_forces(x, u, p);
    (void)fy;
    CHECK(fx == doctest::Approx(magic_formula(p.brake_slip * -2.0, p)).epsilon(1e-12));
    CHECK(fx < 0.0);
}

TEST_CASE("derivatives: steer-only terms at rest") {
    VehicleParams p;
    VehicleState x;  // v_y = yaw_rate = 0, v_x = 0 (frozen to v_eps)
    ControlInput u;
    u.steer = 34.0;  // degrees at the wheel
    const double delta = (u.steer / p.steering_ratio) * M_PI / 180.0;
    Derivatives d = derivatives(x, u, p);
    CHECK(d.dv_y == doctest::Approx(p.c_alpha_f * delta / p.mass).epsilon(1e-12));
    CHECK(d.dyaw_rate == doctest::Approx(p.a1 * p.c_alpha_f * delta / p.yaw_inertia).epsilon(1e-12));
    CHECK(d.dv_y > 0.0);
    CHECK(d.dyaw_rate > 0.0);
}

TEST_CASE("derivatives: term-by-term oracle on random states") {
    VehicleParams p;
    koopveh::numkit::Rng rng(91);
    for (int trial = 0; trial < 50; ++trial) {
        VehicleState x;
        x.v_x = rng.uniform(0.0, 30.0);
        x.v_y = rng.uniform(-2.0, 2.0);
        x.yaw_rate = rng.uniform(-0.5, 0.5);
        ControlInput u;
        u.steer = rng.uniform(-200.0, 200.0);
        u.engine = rng.uniform(-5.0, 0.2);

        const double slip =
            u.engine >= 0.0 ? p.throttle_slip * u.engine : p.brake_slip * u.engine;
        const double v2 = x.v_x * x.v_x + x.v_y * x.v_y;
        const double fx = magic_formula(slip, p) - p.drag_group * v2 * p.c_fx;
        const double vx = std::max(x.v_x, p.v_eps);
        const double delta = (u.steer / p.steering_ratio) * M_PI / 180.0;

        const double dvx = fx / p.mass + x.yaw_rate * x.v_y;
        const double dvy =
            (-p.a1 * p.c_alpha_f + p.a2 * p.c_alpha_r) / (p.mass * vx) * x.yaw_rate +
            p.c_alpha_f * delta / p.mass - x.yaw_rate * x.v_x -
            (p.c_alpha_f + p.c_alpha_r) / (p.mass * vx) * x.v_y;
        const double dyr =
            (-p.a1 * p.a1 * p.c_alpha_f - p.a2 * p.a2 * p.c_alpha_r) / (p.yaw_inertia * vx) *
                x.yaw_rate +
            p.a1 * p.c_alpha_f * delta / p.yaw_inertia -
            (p.a1 * p.c_alpha_f - p.a2 * p.c_alpha_r) / (p.yaw_inertia * vx) * x.v_y;

        Derivatives d = derivatives(x, u, p);
        CHECK(d.dv_x == doctest::Approx(dvx).epsilon(1e-12));
        CHECK(d.dv_y == doctest::Approx(dvy).epsilon(1e-12));
        CHECK(d.dyaw_rate == doctest::Approx(dyr).epsilon(1e-12));
    }
}

TEST_CASE("step: equilibrium stays exactly at rest") {
    VehicleParams p;
    VehicleState x;
    VehicleState y = step(x, ControlInput{}, p, 0.01);
    CHECK(y.v_x == 0.0);
    CHECK(y.v_y == 0.0);
    CHECK(y.yaw_rate == 0.0);
}

TEST_CASE("step: rejects non-positive dt") {
    VehicleParams p;
    CHECK_THROWS_AS(step(VehicleState{}, ControlInput{}, p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(step(VehicleState{}, ControlInput{}, p, -0.01), std::invalid_argument);
}

TEST_CASE("step: constant throttle matches a fine Euler oracle") {
    VehicleParams p;
    ControlInput u;
    u.engine = 0.1;
    const double dt = 0.01;
    const int steps = 100;

    VehicleState rk;
    double prev_vx = 0.0;
    for (int k = 0; k < steps; ++k) {
        rk = step(rk, u, p, dt);
        CHECK(rk.v_x > prev_vx);  // pure throttle from rest accelerates monotonically
        prev_vx = rk.v_x;
    }
    CHECK(rk.v_y == 0.0);
    CHECK(rk.yaw_rate == 0.0);

    // Euler with dt/100 as an independent integrator.
    VehicleState eu;
    const double h = dt / 100.0;
    for (int k = 0; k < steps * 100; ++k) {
        Derivatives d = derivatives(eu, u, p);
        eu.v_x += h * d.dv_x;
        eu.v_y += h * d.dv_y;
        eu.yaw_rate += h * d.dyaw_rate;
    }
    CHECK(rk.v_x == doctest::Approx(eu.v_x).epsilon(1e-4));
}

TEST_CASE("step: fourth-order convergence") {
    VehicleParams p;
    ControlInput u;
    u.steer = 60.0;
    u.engine = 0.15;
    VehicleState x0;
    x0.v_x = 10.0;
    x0.v_y = 0.2;
    x0.yaw_rate = 0.05;

    auto integrate = [&](double dt, int n) {
        VehicleState s = x0;
        for (int k = 0; k < n; ++k) s = step(s, u, p, dt);
        return s;
    };
    const double T = 0.08;
    const VehicleState ref = integrate(T / 1000.0, 1000);
    auto err = [&](const VehicleState& s) {
        return std::sqrt(std::pow(s.v_x - ref.v_x, 2) + std::pow(s.v_y - ref.v_y, 2) +
                         std::pow(s.yaw_rate - ref.yaw_rate, 2));
    };
    const double e1 = err(integrate(T / 2.0, 2));
    const double e2 = err(integrate(T / 4.0, 4));
    CHECK(e1 > 0.0);
    CHECK(e1 / e2 >= 8.0);  // halved dt must cut the error by ~2^4
}

TEST_CASE("generate_episode: determinism and shape") {
    VehicleParams p;
    ExcitationPolicy pol;
    Episode a = generate_episode(pol, 500, 42, p, 0.01);
    Episode b = generate_episode(pol, 500, 42, p, 0.01);
    REQUIRE(a.length() == 500);
    REQUIRE(a.controls.size() == 500);
    for (std::size_t k = 0; k < a.length(); ++k) {
        CHECK(a.states[k].v_x == b.states[k].v_x);
        CHECK(a.states[k].v_y == b.states[k].v_y);
        CHECK(a.states[k].yaw_rate == b.states[k].yaw_rate);
        CHECK(a.controls[k].steer == b.controls[k].steer);
        CHECK(a.controls[k].engine == b.controls[k].engine);
    }
    Episode c = generate_episode(pol, 500, 43, p, 0.01);
    bool differs = false;
    for (std::size_t k = 0; k < c.length() && !differs; ++k)
        differs = c.controls[k].steer != a.controls[k].steer;
    CHECK(differs);
}

TEST_CASE("generate_episode: minimum length and bounds") {
    VehicleParams p;
    ExcitationPolicy pol;
    CHECK_THROWS_AS(generate_episode(pol, 1, 1, p, 0.01), std::invalid_argument);
    Episode tiny = generate_episode(pol, 2, 1, p, 0.01);
    CHECK(tiny.states[0].v_x == 0.0);
    CHECK(tiny.states[0].v_y == 0.0);
    CHECK(tiny.states[0].yaw_rate == 0.0);

    Episode ep = generate_episode(pol, 10000, 7, p, 0.01);
    for (std::size_t k = 0; k < ep.length(); ++k) {
        const auto& s = ep.states[k];
        const auto& u = ep.controls[k];
        CHECK(std::isfinite(s.v_x));
        CHECK(std::isfinite(s.v_y));
        CHECK(std::isfinite(s.yaw_rate));
        CHECK(s.v_x >= 0.0);
        CHECK(s.v_x <= 70.0);
        CHECK(std::abs(s.v_y) < s.v_x + 5.0);
        CHECK(std::abs(u.steer) <= pol.steer_limit_deg);
        // One channel at a time: engine is either throttle in [0, max] or brake demand.
        if (u.engine >= 0.0)
            CHECK(u.engine <= pol.throttle_max);
        else
            CHECK(-u.engine <= pol.brake_max_mpa);
    }
}

TEST_CASE("vehicle parameter file round trip") {
    VehicleParams p;
    p.mass = 1234.5;
    p.pacejka_d = 0.91;
    p.v_eps = 0.75;
    const auto path = std::filesystem::temp_directory_path() / "koopveh_params_test.txt";
    save_params(p, path.string());
    VehicleParams q = load_params(path.string());
    CHECK(q.mass == p.mass);
    CHECK(q.yaw_inertia == p.yaw_inertia);
    CHECK(q.a1 == p.a1);
    CHECK(q.a2 == p.a2);
    CHECK(q.c_alpha_f == p.c_alpha_f);
    CHECK(q.c_alpha_r == p.c_alpha_r);
    CHECK(q.pacejka_a == p.pacejka_a);
    CHECK(q.pacejka_b == p.pacejka_b);
    CHECK(q.pacejka_c == p.pacejka_c);
    CHECK(q.pacejka_d == p.pacejka_d);
    CHECK(q.drag_group == p.drag_group);
    CHECK(q.c_fx == p.c_fx);
    CHECK(q.c_fy == p.c_fy);
    CHECK(q.steering_ratio == p.steering_ratio);
    CHECK(q.throttle_slip == p.throttle_slip);
    CHECK(q.brake_slip == p.brake_slip);
    CHECK(q.v_eps == p.v_eps);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_params("/nonexistent/params.txt"), std::runtime_error);
}

#include "koopveh/plant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "koopveh/matrix.hpp"

namespace koopveh::plant {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double VehicleParams::road_wheel_angle(double steer_deg) const {
    return (steer_deg / steering_ratio) * kPi / 180.0;
}

double VehicleParams::longitudinal_slip(double engine) const {
    // engine >= 0: throttle fraction; engine < 0: brake pressure in MPa.
    return engine >= 0.0 ? throttle_slip * engine : brake_slip * engine;
}

std::pair<double, double> tire_and_body_forces(const VehicleState& s, const ControlInput& u,
                                               const VehicleParams& p) {
    const double slip = p.longitudinal_slip(u.engine);
    const double cs = p.pacejka_c * slip;
    const double fx_tire =
        p.pacejka_a * std::sin(p.pacejka_b * std::atan(cs - p.pacejka_d * (cs - std::atan(cs))));
    const double v2 = s.v_x * s.v_x + s.v_y * s.v_y;
    const double fx = fx_tire - p.drag_group * v2 * p.c_fx;

    const double vx = std::max(s.v_x, p.v_eps);
    const double delta = p.road_wheel_angle(u.steer);
    const double alpha_f = delta - (s.v_y + p.a1 * s.yaw_rate) / vx;
    const double alpha_r = -(s.v_y - p.a2 * s.yaw_rate) / vx;
    const double fy = p.c_alpha_f * alpha_f + p.c_alpha_r * alpha_r -
                      p.drag_group * v2 * p.c_fy;
    return {fx, fy};
}

Derivatives derivatives(const VehicleState& s, const ControlInput& u, const VehicleParams& p) {
    const auto [fx, fy] = tire_and_body_forces(s, u, p);
    (void)fy;
    const double delta = p.road_wheel_angle(u.steer);
    const double vx = std::max(s.v_x, p.v_eps);  // freezes the 1/v_x singularity

    Derivatives d;
    d.dv_x = fx / p.mass + s.yaw_rate * s.v_y;
    d.dv_y = (-p.a1 * p.c_alpha_f + p.a2 * p.c_alpha_r) / (p.mass * vx) * s.yaw_rate +
             p.c_alpha_f * delta / p.mass - s.yaw_rate * s.v_x -
             (p.c_alpha_f + p.c_alpha_r) / (p.mass * vx) * s.v_y;
    d.dyaw_rate =
        (-p.a1 * p.a1 * p.c_alpha_f - p.a2 * p.a2 * p.c_alpha_r) / (p.yaw_inertia * vx) *
            s.yaw_rate +
        p.a1 * p.c_alpha_f * delta / p.yaw_inertia -
        (p.a1 * p.c_alpha_f - p.a2 * p.c_alpha_r) / (p.yaw_inertia * vx) * s.v_y;
    return d;
}

VehicleState step(const VehicleState& s, const ControlInput& u, const VehicleParams& p,
                  double dt) {
    if (dt <= 0.0) throw std::invalid_argument("step: dt must be positive");
    auto add = [](const VehicleState& x, const Derivatives& k, double h) {
        VehicleState y;
        y.v_x = x.v_x + h * k.dv_x;
        y.v_y = x.v_y + h * k.dv_y;
        y.yaw_rate = x.yaw_rate + h * k.dyaw_rate;
        return y;
    };
    const Derivatives k1 = derivatives(s, u, p);
    const Derivatives k2 = derivatives(add(s, k1, dt / 2.0), u, p);
    const Derivatives k3 = derivatives(add(s, k2, dt / 2.0), u, p);
    const Derivatives k4 = derivatives(add(s, k3, dt), u, p);
    VehicleState out;
    out.v_x = s.v_x + dt / 6.0 * (k1.dv_x + 2.0 * k2.dv_x + 2.0 * k3.dv_x + k4.dv_x);
    out.v_y = s.v_y + dt / 6.0 * (k1.dv_y + 2.0 * k2.dv_y + 2.0 * k3.dv_y + k4.dv_y);
    out.yaw_rate =
        s.yaw_rate + dt / 6.0 * (k1.dyaw_rate + 2.0 * k2.dyaw_rate + 2.0 * k3.dyaw_rate +
                                 k4.dyaw_rate);
    out.v_x = std::max(out.v_x, 0.0);  // forward driving only
    return out;
}

Episode generate_episode(const ExcitationPolicy& policy, std::size_t length,
                         std::uint64_t seed, const VehicleParams& p, double dt) {
    if (length < 2) throw std::invalid_argument("generate_episode: length must be >= 2");
    numkit::Rng rng(seed);
    Episode ep;
    ep.dt = dt;
    ep.states.reserve(length);
    ep.controls.reserve(length);

    VehicleState s;  // initial state zero
    double steer = 0.0;
    double engine = 0.0;
    std::size_t hold_left = 0;
    const std::size_t hold_steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(policy.hold_seconds / dt));

    for (std::size_t k = 0; k < length; ++k) {
        // Low-pass-filtered noise steering within the wheel-angle limit.
        const double target = policy.steer_noise_deg * rng.gauss();
        steer += policy.steer_filter * (target - steer);
        steer = std::clamp(steer, -policy.steer_limit_deg, policy.steer_limit_deg);

        // Piecewise-constant throttle/brake, only one active at a time.
        if (hold_left == 0) {
            hold_left = hold_steps;
            if (rng.uniform() < policy.brake_probability && s.v_x > 1.0)
                engine = -rng.uniform(0.0, policy.brake_max_mpa);
            else
                engine = rng.uniform(0.0, policy.throttle_max);
        }
        --hold_left;

        ControlInput u{steer, engine};
        ep.states.push_back(s);
        ep.controls.push_back(u);
        s = step(s, u, p, dt);
    }
    return ep;
}

VehicleParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_params: cannot open " + path);
    std::map<std::string, double> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
        if (key.empty()) continue;
        kv[key] = std::stod(line.substr(eq + 1));
    }
    VehicleParams p;
    auto get = [&](const std::string& k, double& field) {
        if (auto it = kv.find(k); it != kv.end()) field = it->second;
    };
    get("mass", p.mass);
    get("yaw_inertia", p.yaw_inertia);
    get("a1", p.a1);
    get("a2", p.a2);
    get("c_alpha_f", p.c_alpha_f);
    get("c_alpha_r", p.c_alpha_r);
    get("pacejka_a", p.pacejka_a);
    get("pacejka_b", p.pacejka_b);
    get("pacejka_c", p.pacejka_c);
    get("pacejka_d", p.pacejka_d);
    get("drag_group", p.drag_group);
    get("c_fx", p.c_fx);
    get("c_fy", p.c_fy);
    get("steering_ratio", p.steering_ratio);
    get("throttle_slip", p.throttle_slip);
    get("brake_slip", p.brake_slip);
    get("v_eps", p.v_eps);
    return p;
}

void save_params(const VehicleParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_params: cannot open " + path);
    out.precision(17);
    out << "# plant configuration\n";
    out << "mass = " << p.mass << "\n";
    out << "yaw_inertia = " << p.yaw_inertia << "\n";
    out << "a1 = " << p.a1 << "\n";
    out << "a2 = " << p.a2 << "\n";
    out << "c_alpha_f = " << p.c_alpha_f << "\n";
    out << "c_alpha_r = " << p.c_alpha_r << "\n";
    out << "pacejka_a = " << p.pacejka_a << "\n";
    out << "pacejka_b = " << p.pacejka_b << "\n";
    out << "pacejka_c = " << p.pacejka_c << "\n";
    out << "pacejka_d = " << p.pacejka_d << "\n";
    out << "drag_group = " << p.drag_group << "\n";
    out << "c_fx = " << p.c_fx << "\n";
    out << "c_fy = " << p.c_fy << "\n";
    out << "steering_ratio = " << p.steering_ratio << "\n";
    out << "throttle_slip = " << p.throttle_slip << "\n";
    out << "brake_slip = " << p.brake_slip << "\n";
    out << "v_eps = " << p.v_eps << "\n";
}

}  // namespace koopveh::plant

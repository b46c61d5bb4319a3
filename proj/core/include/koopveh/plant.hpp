#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace koopveh::plant {

struct VehicleState {
    double v_x = 0.0;      // longitudinal velocity, m/s
    double v_y = 0.0;      // lateral velocity, m/s
    double yaw_rate = 0.0; // rad/s
};

/// steer is the steering-wheel angle in degrees; engine is throttle
/// fraction when >= 0 and brake demand (MPa, stored negative) otherwise.
struct ControlInput {
    double steer = 0.0;
    double engine = 0.0;
};

struct VehicleParams {
    double mass = 1500.0;           // kg
    double yaw_inertia = 2500.0;    // kg m^2
    double a1 = 1.2;                // front axle to CoG, m
    double a2 = 1.4;                // rear axle to CoG, m
    double c_alpha_f = 60000.0;     // front cornering stiffness (both tires), N/rad
    double c_alpha_r = 80000.0;     // rear cornering stiffness, N/rad
    // Magic-formula factors F = A sin{B atan[C s - D (C s - atan(C s))]}.
    double pacejka_a = 13243.5;     // peak force A = friction * F_z, N
    double pacejka_b = 1.9;
    double pacejka_c = 10.0;
    double pacejka_d = 0.97;
    double drag_group = 1.5;        // (1/2) rho A_f
    double c_fx = 1.6;
    double c_fy = 0.0;
    double steering_ratio = 17.0;   // road-wheel angle = wheel angle / ratio
    double throttle_slip = 0.15;    // slip per unit throttle
    double brake_slip = 0.012;      // slip per MPa of brake pressure
    double v_eps = 0.5;             // low-speed freeze for 1/v_x terms, m/s

    /// Road-wheel steer angle in radians from the wheel angle in degrees.
    double road_wheel_angle(double steer_deg) const;
    /// Longitudinal slip demanded by the engine channel.
    double longitudinal_slip(double engine) const;
};

struct Episode {
    double dt = 0.01;
    std::vector<VehicleState> states;
    std::vector<ControlInput> controls;

    std::size_t length() const { return states.size(); }
};

struct Derivatives {
    double dv_x = 0.0;
    double dv_y = 0.0;
    double dyaw_rate = 0.0;
};

/// Longitudinal tire force from the magic formula minus body drag, and the
/// lateral force from linear cornering stiffness.
std::pair<double, double> tire_and_body_forces(const VehicleState& s, const ControlInput& u,
                                               const VehicleParams& p);

Derivatives derivatives(const VehicleState& s, const ControlInput& u, const VehicleParams& p);

/// Classical RK4 step with the control held constant over dt.
VehicleState step(const VehicleState& s, const ControlInput& u, const VehicleParams& p,
                  double dt);

/// Smoothed-random steering plus piecewise-constant throttle/brake; one of
/// throttle or brake active at a time, initial state zero.
struct ExcitationPolicy {
    double steer_noise_deg = 80.0;   // driving noise amplitude before filtering
    double steer_filter = 0.02;      // low-pass coefficient per step
    double steer_limit_deg = 450.0;
    double throttle_max = 0.2;
    double brake_max_mpa = 9.1;
    double hold_seconds = 1.5;       // throttle/brake segment duration
    double brake_probability = 0.3;
};

Episode generate_episode(const ExcitationPolicy& policy, std::size_t length,
                         std::uint64_t seed, const VehicleParams& p, double dt);

/// Key-value vehicle parameter file, one `name = value` per line.
VehicleParams load_params(const std::string& path);
void save_params(const VehicleParams& p, const std::string& path);

}  // namespace koopveh::plant

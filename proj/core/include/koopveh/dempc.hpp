#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "koopveh/dataset.hpp"
#include "koopveh/koopman.hpp"
#include "koopveh/matrix.hpp"
#include "koopveh/plant.hpp"
#include "koopveh/qp.hpp"

namespace koopveh::dempc {

/// Lifted dynamics with the previous control folded into the state, so the
/// decision variable becomes the control increment.
struct AugmentedModel {
    numkit::Matrix a_bar;  // (L+m) x (L+m) = [[A, B], [0, I]]
    numkit::Matrix b_bar;  // (L+m) x m    = [[B], [I]]
    numkit::Matrix c;      // L x (L+m)    = [I, 0]
    std::size_t lifted_dim = 0;
    std::size_t control_dim = 0;
};

AugmentedModel augment(const numkit::Matrix& a, const numkit::Matrix& b);

struct MpcConfig {
    std::size_t np = 10;  // prediction horizon
    std::size_t nc = 7;   // control horizon, < np
    double q = 1000.0;    // output weight
    double r = 5.0;       // increment weight
    double rho = 10.0;    // slack penalty
    bool q_raw_only = true;   // weight only the raw-state rows of the lifted output
    std::size_t raw_dim = 6;
    // Physical actuator limits.
    double steer_limit_deg = 450.0;
    double throttle_max = 0.2;
    double brake_max_mpa = 9.1;
    // Per-step increment limits; the engine limit switches between the
    // throttle and brake rate with the sign of the previous command.
    double steer_rate_deg = 2.25;
    double throttle_rate = 0.004;
    double brake_rate_mpa = 0.18;
    double dt = 0.01;

    void validate() const;  // throws std::invalid_argument
};

/// Stacked prediction of the lifted outputs: Y = Gamma xi + Theta dU.
struct Prediction {
    numkit::Matrix gamma;  // (L*np) x (L+m)
    numkit::Matrix theta;  // (L*np) x (m*nc)
};

Prediction build_prediction(const AugmentedModel& aug, std::size_t np, std::size_t nc);

/// Increment and absolute bounds in normalized control units, ordered as
/// the control channels repeat over the horizon.
struct IncrementBounds {
    std::vector<double> du_lower;  // length m
    std::vector<double> du_upper;
    std::vector<double> u_lower;   // absolute, length m
    std::vector<double> u_upper;
};

/// Time-invariant part of the condensed cost: diag{Theta^T Q Theta + R, rho}.
numkit::Matrix condensed_hessian(const Prediction& pred, const MpcConfig& cfg);

/// Condensed QP in z = [dU; eps] for one step. xi = [chi; u_prev], y_ref
/// stacks np encoded references. Pass the cached hessian to skip rebuilding.
numkit::QpProblem condense(const Prediction& pred, const MpcConfig& cfg,
                           const std::vector<double>& xi, const std::vector<double>& y_ref,
                           const std::vector<double>& u_prev, const IncrementBounds& bounds,
                           const numkit::Matrix* hessian_cache = nullptr);

struct StepLog {
    double t = 0.0;
    plant::VehicleState state;
    plant::VehicleState reference;
    plant::ControlInput control;
    double qp_ms = 0.0;
    double slack = 0.0;
    bool fault = false;
};

/// Receding-horizon controller. Holds u_{t-1}; everything internal runs in
/// normalized units, step() speaks physical ones.
class MpcController {
public:
    using LiftFn = std::function<std::vector<double>(const std::vector<double>&)>;

    /// Generic: `lift` maps a normalized tau-concatenated state to the
    /// lifted vector of length a.rows().
    MpcController(const numkit::Matrix& a, const numkit::Matrix& b, LiftFn lift,
                  std::size_t tau, dataset::NormalizationStats stats, MpcConfig cfg);
    MpcController(const koopman::DeepKoopmanModel& model, MpcConfig cfg);
    MpcController(const koopman::LinearLiftedModel& model, dataset::NormalizationStats stats,
                  MpcConfig cfg);

    void reset(const plant::ControlInput& u_prev = {});

    /// One receding-horizon step; reference holds the next states (>= np
    /// entries, shorter windows repeat the last entry).
    plant::ControlInput step(const plant::VehicleState& x,
                             const std::vector<plant::VehicleState>& reference,
                             StepLog* log = nullptr);

    const MpcConfig& config() const { return cfg_; }
    const plant::ControlInput& previous_control() const { return u_prev_; }

private:
    std::vector<double> lift_state(const plant::VehicleState& x) const;

    LiftFn lift_;
    std::size_t tau_;
    dataset::NormalizationStats stats_;
    MpcConfig cfg_;
    AugmentedModel aug_;
    Prediction pred_;
    numkit::Matrix hessian_;
    plant::ControlInput u_prev_{};
};

struct TrackingLog {
    std::vector<StepLog> rows;
    std::size_t qp_faults = 0;
    bool aborted = false;
};

/// Algorithm: from rest, track the reference episode's states against the
/// plant for `steps` steps (capped by the episode length).
TrackingLog run_closed_loop(const plant::VehicleParams& params, MpcController& controller,
                            const plant::Episode& reference, std::size_t steps);

/// Columns: t, v_x, v_y, yaw_rate, ref_v_x, ref_v_y, ref_yaw_rate, steer,
/// engine, qp_ms, slack.
void save_tracking_csv(const TrackingLog& log, const std::string& path);

}  // namespace koopveh::dempc

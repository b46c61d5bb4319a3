#include "koopveh/dempc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace koopveh::dempc {

using numkit::Matrix;

AugmentedModel augment(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols() || b.rows() != a.rows())
        throw std::invalid_argument("augment: dimension mismatch");
    const std::size_t big_l = a.rows();
    const std::size_t m = b.cols();
    AugmentedModel aug;
    aug.lifted_dim = big_l;
    aug.control_dim = m;
    aug.a_bar = Matrix(big_l + m, big_l + m);
    aug.a_bar.set_block(0, 0, a);
    aug.a_bar.set_block(0, big_l, b);
    aug.a_bar.set_block(big_l, big_l, Matrix::identity(m));
    aug.b_bar = Matrix(big_l + m, m);
    aug.b_bar.set_block(0, 0, b);
    aug.b_bar.set_block(big_l, 0, Matrix::identity(m));
    aug.c = Matrix(big_l, big_l + m);
    aug.c.set_block(0, 0, Matrix::identity(big_l));
    return aug;
}

void MpcConfig::validate() const {
    if (nc < 1 || np <= nc) throw std::invalid_argument("MpcConfig: need np > nc >= 1");
    if (!(q > 0.0) || !(r > 0.0) || !(rho > 0.0))
        throw std::invalid_argument("MpcConfig: weights must be positive");
    if (!(steer_limit_deg > 0.0) || !(throttle_max > 0.0) || !(brake_max_mpa > 0.0))
        throw std::invalid_argument("MpcConfig: actuator limits must be positive");
    if (!(steer_rate_deg > 0.0) || !(throttle_rate > 0.0) || !(brake_rate_mpa > 0.0))
        throw std::invalid_argument("MpcConfig: increment limits must be positive");
    if (raw_dim < 1) throw std::invalid_argument("MpcConfig: raw_dim must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("MpcConfig: dt must be positive");
}

Prediction build_prediction(const AugmentedModel& aug, std::size_t np, std::size_t nc) {
    if (np < nc || nc < 1) throw std::invalid_argument("build_prediction: need np >= nc >= 1");
    const std::size_t big_l = aug.lifted_dim;
    const std::size_t m = aug.control_dim;

    Prediction pred;
    pred.gamma = Matrix(big_l * np, big_l + m);
    pred.theta = Matrix(big_l * np, m * nc);

    // Row block i-1 of Gamma is C A_bar^i; Theta block (i-1, j-1) is
    // C A_bar^{i-j} B_bar for j <= min(i, nc).
    std::vector<Matrix> impulse(np);  // impulse[k] = C A_bar^k B_bar
    Matrix power = Matrix::identity(big_l + m);
    for (std::size_t k = 0; k < np; ++k) {
        impulse[k] = numkit::matmul(aug.c, numkit::matmul(power, aug.b_bar));
        power = numkit::matmul(aug.a_bar, power);  // power = A_bar^{k+1}
        pred.gamma.set_block(k * big_l, 0, numkit::matmul(aug.c, power));
    }
    for (std::size_t i = 1; i <= np; ++i)
        for (std::size_t j = 1; j <= std::min(i, nc); ++j)
            pred.theta.set_block((i - 1) * big_l, (j - 1) * m, impulse[i - j]);
    return pred;
}

namespace {

std::vector<double> output_weights(const Prediction& pred, const MpcConfig& cfg) {
    const std::size_t rows = pred.gamma.rows();
    const std::size_t big_l = rows / cfg.np;
    std::vector<double> qdiag(rows, cfg.q);
    if (cfg.q_raw_only)
        for (std::size_t i = 0; i < rows; ++i)
            if (i % big_l >= cfg.raw_dim) qdiag[i] = 0.0;
    return qdiag;
}

}  // namespace

Matrix condensed_hessian(const Prediction& pred, const MpcConfig& cfg) {
    cfg.validate();
    const std::size_t d = pred.theta.cols();
    const std::vector<double> qdiag = output_weights(pred, cfg);

    Matrix q_theta = pred.theta;
    for (std::size_t i = 0; i < q_theta.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) q_theta(i, j) *= qdiag[i];
    Matrix block = numkit::matmul(numkit::transpose(pred.theta), q_theta);
    for (std::size_t i = 0; i < d; ++i) block(i, i) += cfg.r;
    // Symmetrize away dgemm round-off.
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            const double s = 0.5 * (block(i, j) + block(j, i));
            block(i, j) = s;
            block(j, i) = s;
        }

    Matrix h(d + 1, d + 1);
    h.set_block(0, 0, block);
    h(d, d) = cfg.rho;
    return h;
}

numkit::QpProblem condense(const Prediction& pred, const MpcConfig& cfg,
                           const std::vector<double>& xi, const std::vector<double>& y_ref,
                           const std::vector<double>& u_prev, const IncrementBounds& bounds,
                           const Matrix* hessian_cache) {
    cfg.validate();
    const std::size_t d = pred.theta.cols();
    const std::size_t m = u_prev.size();
    if (xi.size() != pred.gamma.cols() || y_ref.size() != pred.gamma.rows())
        throw std::invalid_argument("condense: dimension mismatch");
    if (d % m != 0 || bounds.du_lower.size() != m || bounds.du_upper.size() != m ||
        bounds.u_lower.size() != m || bounds.u_upper.size() != m)
        throw std::invalid_argument("condense: bound dimension mismatch");

    numkit::QpProblem problem;
    problem.hessian = hessian_cache ? *hessian_cache : condensed_hessian(pred, cfg);

    // E = Gamma xi - Y_ref; linear term 2 Theta^T Q E.
    std::vector<double> e = numkit::matvec(pred.gamma, xi);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] -= y_ref[i];
    const std::vector<double> qdiag = output_weights(pred, cfg);
    std::vector<double> qe(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) qe[i] = qdiag[i] * e[i];
    std::vector<double> g = numkit::matvec_t(pred.theta, qe);
    for (double& v : g) v *= 2.0;
    g.push_back(0.0);  // slack has no linear term
    problem.linear = std::move(g);

    problem.lower.resize(d);
    problem.upper.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        problem.lower[i] = bounds.du_lower[i % m];
        problem.upper[i] = bounds.du_upper[i % m];
    }
    problem.slack_widens = true;

    numkit::CumulativeBoundMap cum;
    cum.channels = m;
    cum.base = u_prev;
    cum.abs_lower = bounds.u_lower;
    cum.abs_upper = bounds.u_upper;
    problem.cumulative = cum;
    problem.validate();
    return problem;
}

MpcController::MpcController(const Matrix& a, const Matrix& b, LiftFn lift, std::size_t tau,
                             dataset::NormalizationStats stats, MpcConfig cfg)
    : lift_(std::move(lift)), tau_(tau), stats_(stats), cfg_(cfg) {
    cfg_.validate();
    stats_.validate();
    if (tau_ < 1) throw std::invalid_argument("MpcController: tau must be >= 1");
    aug_ = augment(a, b);
    pred_ = build_prediction(aug_, cfg_.np, cfg_.nc);
    hessian_ = condensed_hessian(pred_, cfg_);
}

MpcController::MpcController(const koopman::DeepKoopmanModel& model, MpcConfig cfg)
    : MpcController(
          model.a, model.b,
          [model](const std::vector<double>& x) { return model.encode(x); },
          model.state_dim / dataset::kStateDim, model.stats, cfg) {}

MpcController::MpcController(const koopman::LinearLiftedModel& model,
                             dataset::NormalizationStats stats, MpcConfig cfg)
    : MpcController(model.a, model.b, model.lift, 1, stats, cfg) {
    if (!model.lift)
        throw std::invalid_argument("MpcController: linear model has no lifting map");
}

void MpcController::reset(const plant::ControlInput& u_prev) { u_prev_ = u_prev; }

std::vector<double> MpcController::lift_state(const plant::VehicleState& x) const {
    const std::vector<double> xn = dataset::normalize_state(x, stats_);
    std::vector<double> concat;
    concat.reserve(xn.size() * tau_);
    for (std::size_t i = 0; i < tau_; ++i) concat.insert(concat.end(), xn.begin(), xn.end());
    return lift_(concat);
}

plant::ControlInput MpcController::step(const plant::VehicleState& x,
                                        const std::vector<plant::VehicleState>& reference,
                                        StepLog* log) {
    if (reference.empty()) throw std::invalid_argument("mpc_step: empty reference window");
    const std::size_t m = aug_.control_dim;
    const std::size_t big_l = aug_.lifted_dim;

    std::vector<double> xi = lift_state(x);
    const plant::ControlInput u_prev = u_prev_;
    const std::vector<double> u_prev_n = dataset::normalize_control(u_prev, stats_);
    xi.insert(xi.end(), u_prev_n.begin(), u_prev_n.end());

    std::vector<double> y_ref;
    y_ref.reserve(big_l * cfg_.np);
    for (std::size_t i = 0; i < cfg_.np; ++i) {
        const auto& r = reference[std::min(i, reference.size() - 1)];
        const std::vector<double> chi_r = lift_state(r);
        y_ref.insert(y_ref.end(), chi_r.begin(), chi_r.end());
    }

    // Channel widths convert physical bounds to normalized increments.
    const double w_steer =
        stats_.max[dataset::kStateDim] - stats_.min[dataset::kStateDim];
    const double w_eng =
        stats_.max[dataset::kStateDim + 1] - stats_.min[dataset::kStateDim + 1];
    double eng_rate_lo, eng_rate_hi;
    if (u_prev.engine > 0.0) {
        eng_rate_lo = -cfg_.throttle_rate;
        eng_rate_hi = cfg_.throttle_rate;
    } else if (u_prev.engine < 0.0) {
        eng_rate_lo = -cfg_.brake_rate_mpa;
        eng_rate_hi = cfg_.brake_rate_mpa;
    } else {
        eng_rate_lo = -cfg_.brake_rate_mpa;
        eng_rate_hi = cfg_.throttle_rate;
    }
    IncrementBounds bounds;
    bounds.du_lower = {-cfg_.steer_rate_deg / w_steer, eng_rate_lo / w_eng};
    bounds.du_upper = {cfg_.steer_rate_deg / w_steer, eng_rate_hi / w_eng};
    plant::ControlInput u_abs_lo{-cfg_.steer_limit_deg, -cfg_.brake_max_mpa};
    plant::ControlInput u_abs_hi{cfg_.steer_limit_deg, cfg_.throttle_max};
    bounds.u_lower = dataset::normalize_control(u_abs_lo, stats_);
    bounds.u_upper = dataset::normalize_control(u_abs_hi, stats_);

    const numkit::QpProblem problem =
        condense(pred_, cfg_, xi, y_ref, u_prev_n, bounds, &hessian_);

    bool fault = false;
    double slack = 0.0;
    std::vector<double> du_n(m, 0.0);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        // Iteration budget grows with the horizon: the active set can touch
        // a constraint per variable several times before settling.
        const int max_iter = 200 + 20 * static_cast<int>(problem.decisions());
        const numkit::QpSolution sol = numkit::qp_solve(problem, max_iter);
        for (std::size_t j = 0; j < m; ++j) du_n[j] = sol.decision[j];
        slack = sol.slack;
    } catch (const std::runtime_error&) {
        fault = true;  // keep the previous control
    }
    const auto t1 = std::chrono::steady_clock::now();

    // First increment only, then hard physical clamps on the increment and
    // on the absolute command.
    double d_steer = std::clamp(du_n[0] * w_steer, -cfg_.steer_rate_deg, cfg_.steer_rate_deg);
    double d_eng = std::clamp(du_n[1] * w_eng, eng_rate_lo, eng_rate_hi);
    plant::ControlInput u;
    u.steer = std::clamp(u_prev.steer + d_steer, -cfg_.steer_limit_deg, cfg_.steer_limit_deg);
    u.engine = std::clamp(u_prev.engine + d_eng, -cfg_.brake_max_mpa, cfg_.throttle_max);
    u_prev_ = u;

    if (log) {
        log->state = x;
        log->control = u;
        log->qp_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        log->slack = slack;
        log->fault = fault;
    }
    return u;
}

TrackingLog run_closed_loop(const plant::VehicleParams& params, MpcController& controller,
                            const plant::Episode& reference, std::size_t steps) {
    if (reference.length() == 0)
        throw std::invalid_argument("run_closed_loop: empty reference");
    steps = std::min(steps, reference.length());
    const double dt = reference.dt;

    TrackingLog log;
    log.rows.reserve(steps);
    plant::VehicleState x{};
    controller.reset();
    for (std::size_t t = 0; t < steps; ++t) {
        std::vector<plant::VehicleState> window;
        window.reserve(controller.config().np);
        for (std::size_t i = 0; i < controller.config().np; ++i)
            window.push_back(
                reference.states[std::min(t + 1 + i, reference.length() - 1)]);

        StepLog row;
        const plant::ControlInput u = controller.step(x, window, &row);
        row.t = static_cast<double>(t) * dt;
        row.reference = window.front();
        log.rows.push_back(row);
        if (row.fault) ++log.qp_faults;

        x = plant::step(x, u, params, dt);
        if (!std::isfinite(x.v_x) || !std::isfinite(x.v_y) || !std::isfinite(x.yaw_rate) ||
            std::abs(x.v_x) > 1e3 || std::abs(x.v_y) > 1e3 || std::abs(x.yaw_rate) > 1e3) {
            log.aborted = true;
            break;
        }
    }
    return log;
}

void save_tracking_csv(const TrackingLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_tracking_csv: cannot open " + path);
    out.precision(17);
    out << "t,v_x,v_y,yaw_rate,ref_v_x,ref_v_y,ref_yaw_rate,steer,engine,qp_ms,slack\n";
    for (const auto& r : log.rows)
        out << r.t << ',' << r.state.v_x << ',' << r.state.v_y << ',' << r.state.yaw_rate
            << ',' << r.reference.v_x << ',' << r.reference.v_y << ',' << r.reference.yaw_rate
            << ',' << r.control.steer << ',' << r.control.engine << ',' << r.qp_ms << ','
            << r.slack << '\n';
}

}  // namespace koopveh::dempc

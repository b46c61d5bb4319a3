#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "koopveh/matrix.hpp"

namespace koopveh::numkit {

/// Maps decision increments to absolute bounds: decision i belongs to
/// channel i % channels, and the running sum of a channel's increments,
/// offset by base, must stay in [abs_lower, abs_upper].
struct CumulativeBoundMap {
    std::size_t channels = 0;
    std::vector<double> base;
    std::vector<double> abs_lower;
    std::vector<double> abs_upper;
};

/// Convex QP in z = [decisions; slack]: minimize z^T H z + g^T z subject to
/// box bounds on the decisions (widened by the slack when slack_widens),
/// optional cumulative absolute bounds, and slack >= 0.
struct QpProblem {
    Matrix hessian;               // (d+1) x (d+1), symmetric PSD
    std::vector<double> linear;   // length d+1
    std::vector<double> lower;    // length d
    std::vector<double> upper;    // length d
    bool slack_widens = true;
    std::optional<CumulativeBoundMap> cumulative;

    std::size_t decisions() const { return lower.size(); }
    void validate() const;
};

struct QpSolution {
    std::vector<double> decision;
    double slack = 0.0;
    double objective = 0.0;
    int iterations = 0;
};

struct QpConvergenceError : std::runtime_error {
    QpConvergenceError(std::string msg, QpSolution it)
        : std::runtime_error(std::move(msg)), last_iterate(std::move(it)) {}
    QpSolution last_iterate;
};

struct QpInfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Primal active-set solver. Deterministic: ties in pivot selection break
/// toward the lowest constraint index.
QpSolution qp_solve(const QpProblem& p, int max_iter = 200, double tol = 1e-10);

}  // namespace koopveh::numkit

#include "koopveh/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace koopveh::numkit {

namespace {

// One linear inequality a . z <= b over z = [decisions; slack].
struct Row {
    std::vector<double> a;
    double b = 0.0;
};

double row_dot(const Row& r, const std::vector<double>& z) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.a.size(); ++i) s += r.a[i] * z[i];
    return s;
}

}  // namespace

void QpProblem::validate() const {
    const std::size_t d = lower.size();
    if (upper.size() != d) throw std::invalid_argument("QpProblem: bound lengths differ");
    if (hessian.rows() != d + 1 || hessian.cols() != d + 1)
        throw std::invalid_argument("QpProblem: hessian must be (d+1)x(d+1)");
    if (linear.size() != d + 1)
        throw std::invalid_argument("QpProblem: linear term must have length d+1");
    if (!hessian.all_finite()) throw std::invalid_argument("QpProblem: non-finite hessian");
    for (std::size_t i = 0; i < d + 1; ++i)
        for (std::size_t j = i + 1; j < d + 1; ++j)
            if (std::abs(hessian(i, j) - hessian(j, i)) > 1e-12)
                throw std::invalid_argument("QpProblem: hessian not symmetric");
    for (std::size_t i = 0; i < d; ++i)
        if (lower[i] > upper[i]) throw std::invalid_argument("QpProblem: lower > upper");
    if (cumulative) {
        const auto& c = *cumulative;
        if (c.channels == 0 || d % c.channels != 0)
            throw std::invalid_argument("QpProblem: cumulative channels must divide d");
        if (c.base.size() != c.channels || c.abs_lower.size() != c.channels ||
            c.abs_upper.size() != c.channels)
            throw std::invalid_argument("QpProblem: cumulative map lengths");
    }
}

QpSolution qp_solve(const QpProblem& p, int max_iter, double tol) {
    p.validate();
    if (max_iter <= 0 || tol <= 0.0) throw std::invalid_argument("qp_solve: bad max_iter/tol");
    const std::size_t d = p.decisions();
    const std::size_t nz = d + 1;  // slack is the last variable

    std::vector<Row> rows;
    // Box bounds, slack-widened:  z_i - eps <= upper_i,  -z_i - eps <= -lower_i.
    const double widen = p.slack_widens ? 1.0 : 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        Row up;
        up.a.assign(nz, 0.0);
        up.a[i] = 1.0;
        up.a[d] = -widen;
        up.b = p.upper[i];
        rows.push_back(std::move(up));
        Row lo;
        lo.a.assign(nz, 0.0);
        lo.a[i] = -1.0;
        lo.a[d] = -widen;
        lo.b = -p.lower[i];
        rows.push_back(std::move(lo));
    }
    // Cumulative absolute bounds (not slack-relaxed).
    if (p.cumulative) {
        const auto& c = *p.cumulative;
        const std::size_t blocks = d / c.channels;
        for (std::size_t ch = 0; ch < c.channels; ++ch) {
            if (c.base[ch] < c.abs_lower[ch] - 1e-12 || c.base[ch] > c.abs_upper[ch] + 1e-12)
                throw QpInfeasibleError("qp_solve: base control violates absolute bounds");
            for (std::size_t t = 0; t < blocks; ++t) {
                Row up;
                up.a.assign(nz, 0.0);
                for (std::size_t s = 0; s <= t; ++s) up.a[s * c.channels + ch] = 1.0;
                up.b = c.abs_upper[ch] - c.base[ch];
                rows.push_back(up);
                Row lo = up;
                for (double& x : lo.a) x = -x;
                lo.b = c.base[ch] - c.abs_lower[ch];
                rows.push_back(std::move(lo));
            }
        }
    }
    // Slack nonnegativity.
    {
        Row s;
        s.a.assign(nz, 0.0);
        s.a[d] = -1.0;
        s.b = 0.0;
        rows.push_back(std::move(s));
    }

    // Initial feasible point: clamp zero into the box, zero slack.
    std::vector<double> z(nz, 0.0);
    for (std::size_t i = 0; i < d; ++i) z[i] = std::clamp(0.0, p.lower[i], p.upper[i]);
    for (const Row& r : rows)
        if (row_dot(r, z) > r.b + 1e-9)
            throw QpInfeasibleError("qp_solve: no feasible starting point");

    auto objective = [&](const std::vector<double>& zz) {
        double s = 0.0;
        for (std::size_t i = 0; i < nz; ++i) {
            double hz = 0.0;
            for (std::size_t j = 0; j < nz; ++j) hz += p.hessian(i, j) * zz[j];
            s += zz[i] * (hz + p.linear[i]);
        }
        return s;
    };

    std::vector<std::size_t> active;
    for (int iter = 0; iter < max_iter; ++iter) {
        // Gradient of z^T H z + g^T z is 2 H z + g.
        std::vector<double> grad(nz);
        for (std::size_t i = 0; i < nz; ++i) {
            double hz = 0.0;
            for (std::size_t j = 0; j < nz; ++j) hz += p.hessian(i, j) * z[j];
            grad[i] = 2.0 * hz + p.linear[i];
        }

        // KKT system for the step p and multipliers on the working set.
        const std::size_t na = active.size();
        Matrix kkt(nz + na, nz + na);
        std::vector<double> rhs(nz + na, 0.0);
        for (std::size_t i = 0; i < nz; ++i) {
            for (std::size_t j = 0; j < nz; ++j) kkt(i, j) = 2.0 * p.hessian(i, j);
            kkt(i, i) += 1e-12;  // keeps PSD instances solvable
            rhs[i] = -grad[i];
        }
        for (std::size_t k = 0; k < na; ++k) {
            const Row& r = rows[active[k]];
            for (std::size_t j = 0; j < nz; ++j) {
                kkt(nz + k, j) = r.a[j];
                kkt(j, nz + k) = r.a[j];
            }
        }
        std::vector<double> sol;
        try {
            sol = solve_linear(kkt, rhs);
        } catch (const std::runtime_error&) {
            // Degenerate working set: drop its newest member and retry.
            if (active.empty()) throw;
            active.pop_back();
            continue;
        }
        std::vector<double> step(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(nz));
        std::vector<double> lambda(sol.begin() + static_cast<std::ptrdiff_t>(nz), sol.end());

        double step_norm = 0.0;
        for (double x : step) step_norm = std::max(step_norm, std::abs(x));
        if (step_norm <= tol) {
            // Stationary on the working set; check multipliers.
            double worst = -tol;
            std::size_t worst_k = na;
            for (std::size_t k = 0; k < na; ++k)
                if (lambda[k] < worst) {
                    worst = lambda[k];
                    worst_k = k;
                }
            if (worst_k == na) {
                QpSolution out;
                out.decision.assign(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(d));
                out.slack = z[d];
                out.objective = objective(z);
                out.iterations = iter;
                return out;
            }
            // Among equally negative multipliers the lowest row index leaves.
            std::size_t leave = worst_k;
            for (std::size_t k = 0; k < na; ++k)
                if (lambda[k] <= worst + 1e-14 && active[k] < active[leave]) leave = k;
            active.erase(active.begin() + static_cast<std::ptrdiff_t>(leave));
            continue;
        }

        // Longest feasible step along the direction; blocking row becomes active.
        double alpha = 1.0;
        std::size_t blocking = rows.size();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (std::find(active.begin(), active.end(), i) != active.end()) continue;
            const double ap = row_dot(rows[i], step);
            if (ap <= 1e-14) continue;
            const double room = rows[i].b - row_dot(rows[i], z);
            const double ai = std::max(room, 0.0) / ap;
            if (ai < alpha - 1e-14 || (ai < alpha + 1e-14 && i < blocking)) {
                alpha = std::min(ai, alpha);
                blocking = i;
            }
        }
        for (std::size_t i = 0; i < nz; ++i) z[i] += alpha * step[i];
        if (blocking < rows.size() && alpha < 1.0 - 1e-14) active.push_back(blocking);
    }

    QpSolution last;
    last.decision.assign(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(d));
    last.slack = z[d];
    last.objective = objective(z);
    last.iterations = max_iter;
    throw QpConvergenceError("qp_solve: iteration limit reached", last);
}

}  // namespace koopveh::numkit

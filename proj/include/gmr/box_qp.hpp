#pragma once

// Primal active-set solver for strictly convex box-constrained QPs:
//
//   minimize 0.5 x'Hx + g'x   subject to   lower <= x <= upper
//
// Bounds may be +/- infinity. H must be symmetric positive definite. Each
// iteration solves the equality-constrained subproblem on the free set with a
// Cholesky factorization, steps to the first blocking bound, and releases the
// bound with the most negative multiplier once the subspace optimum is
// reached. Terminates finitely for SPD H; the iteration cap only guards
// against round-off cycling.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace gmr {

struct BoxQpResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double kkt_residual = 0.0;  // infinity norm of the projected gradient step
    bool converged = false;
};

struct BoxQpOptions {
    int max_iterations = 0;  // 0 selects 10 n + 100
    double kkt_tolerance = 1e-9;
};

/// || x - clamp(x - (Hx + g), lower, upper) ||_inf, zero exactly at a KKT point.
inline double box_qp_kkt_residual(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper, const Eigen::VectorXd& x) {
    const Eigen::VectorXd grad = H * x + g;
    const Eigen::VectorXd proj = (x - grad).cwiseMax(lower).cwiseMin(upper);
    return (x - proj).cwiseAbs().maxCoeff();
}

inline BoxQpResult solve_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, const BoxQpOptions& options = {}) {
    enum class State : unsigned char { Free, AtLower, AtUpper };
    const Eigen::Index n = g.size();
    BoxQpResult result;
    result.x = Eigen::VectorXd::Zero(n).cwiseMax(lower).cwiseMin(upper);
    if (n == 0) {
        result.converged = true;
        return result;
    }
    Eigen::VectorXd& x = result.x;

    std::vector<State> state(static_cast<std::size_t>(n), State::Free);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (x(i) == lower(i)) state[i] = State::AtLower;
        else if (x(i) == upper(i)) state[i] = State::AtUpper;
    }

    const double scale = std::max({1.0, g.cwiseAbs().maxCoeff(), H.cwiseAbs().maxCoeff()});
    const double release_tol = 1e-13 * scale;
    const int max_iter = options.max_iterations > 0 ? options.max_iterations : static_cast<int>(10 * n + 100);

    std::vector<Eigen::Index> free;
    Eigen::MatrixXd hff;
    Eigen::VectorXd rhs;
    bool subspace_optimal = false;
    while (result.iterations < max_iter) {
        ++result.iterations;
        if (!subspace_optimal) {
            free.clear();
            for (Eigen::Index i = 0; i < n; ++i) {
                if (state[i] == State::Free) free.push_back(i);
            }
            const auto nf = static_cast<Eigen::Index>(free.size());
            if (nf > 0) {
                hff.resize(nf, nf);
                rhs.resize(nf);
                for (Eigen::Index a = 0; a < nf; ++a) {
                    double r = -g(free[a]);
                    for (Eigen::Index k = 0; k < n; ++k) {
                        if (state[k] != State::Free) r -= H(free[a], k) * x(k);
                    }
                    rhs(a) = r;
                    for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = H(free[a], free[b]);
                }
                const Eigen::VectorXd y = hff.llt().solve(rhs);

                double alpha = 1.0;
                Eigen::Index blocking = -1;
                State block_state = State::Free;
                for (Eigen::Index a = 0; a < nf; ++a) {
                    const Eigen::Index i = free[a];
                    const double p = y(a) - x(i);
                    if (p < 0.0 && std::isfinite(lower(i))) {
                        const double t = (lower(i) - x(i)) / p;
                        if (t < alpha) {
                            alpha = t;
                            blocking = i;
                            block_state = State::AtLower;
                        }
                    } else if (p > 0.0 && std::isfinite(upper(i))) {
                        const double t = (upper(i) - x(i)) / p;
                        if (t < alpha) {
                            alpha = t;
                            blocking = i;
                            block_state = State::AtUpper;
                        }
                    }
                }
                if (blocking < 0) {
                    for (Eigen::Index a = 0; a < nf; ++a) x(free[a]) = y(a);
                } else {
                    alpha = std::max(alpha, 0.0);
                    for (Eigen::Index a = 0; a < nf; ++a) {
                        const Eigen::Index i = free[a];
                        x(i) = std::clamp(x(i) + alpha * (y(a) - x(i)), lower(i), upper(i));
                    }
                    x(blocking) = block_state == State::AtLower ? lower(blocking) : upper(blocking);
                    state[blocking] = block_state;
                    continue;
                }
            }
            subspace_optimal = true;
        }

        // Multipliers of the active bounds: dual feasibility needs grad >= 0 at
        // a lower bound and grad <= 0 at an upper bound.
        const Eigen::VectorXd grad = H * x + g;
        Eigen::Index worst = -1;
        double worst_violation = release_tol;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (lower(i) == upper(i)) continue;
            double v = 0.0;
            if (state[i] == State::AtLower) v = -grad(i);
            else if (state[i] == State::AtUpper) v = grad(i);
            if (v > worst_violation) {
                worst_violation = v;
                worst = i;
            }
        }
        if (worst < 0) break;
        state[worst] = State::Free;
        subspace_optimal = false;
    }

    result.kkt_residual = box_qp_kkt_residual(H, g, lower, upper, x);
    result.converged = result.kkt_residual <= options.kkt_tolerance * scale;
    return result;
}

}  // namespace gmr

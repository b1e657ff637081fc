#pragma once

#include <avatar/common/geometry.hpp>

#include <string_view>
#include <vector>

namespace avatar::locomotion {

/// Dense convex QP
///
///     minimize    1/2 x' H x + g' x
///     subject to  A_eq x  = b_eq
///                 C x    <= d
///                 lb <= x <= ub          (optional, empty vectors disable)
struct QpProblem
{
    MatX H;
    VecX g;
    MatX A_eq;
    VecX b_eq;
    MatX C;
    VecX d;
    VecX lb;
    VecX ub;

    Eigen::Index variables() const { return H.rows(); }
    double objective(const VecX& x) const { return 0.5 * x.dot(H * x) + g.dot(x); }
};

enum class QpStatus
{
    Optimal,
    Infeasible,
    MaxIterations,
    Malformed,
};

std::string_view to_string(QpStatus s);

struct QpOptions
{
    int max_iterations{0}; // 0 selects 10 * (n + m) + 100
    double feasibility_tol{1e-10};
};

struct QpResult
{
    QpStatus status{QpStatus::Malformed};
    VecX x;
    double objective{0.0};
    /// Multipliers with H x + g + A_eq' lambda_eq + C_all' mu = 0, where C_all
    /// stacks C, then -I (lower bounds), then I (upper bounds).
    VecX lambda_eq;
    VecX mu;
    /// Indices into the stacked inequality list that are active at x.
    std::vector<int> active;
    int iterations{0};

    bool ok() const { return status == QpStatus::Optimal; }
};

struct KktReport
{
    double stationarity{0.0};
    double primal{0.0};
    double dual{0.0};
    double complementarity{0.0};

    double max() const;
};

/// Stacked inequality rows C_all x <= d_all (general rows, lower, upper bounds).
void stacked_inequalities(const QpProblem& qp, MatX& C_all, VecX& d_all);

KktReport kkt_report(const QpProblem& qp, const QpResult& r);

/// Dual active-set solver for strictly convex problems. A positive
/// semidefinite H is handled by proximal-point iterations on top of it.
QpResult solve_qp(const QpProblem& qp, const QpOptions& options = {});

} // namespace avatar::locomotion

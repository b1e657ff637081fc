#pragma once

// Independent reference for small QPs: enumerate every subset of the
// inequality rows, treat it as equalities, solve the KKT system directly and
// keep the best primal-feasible point. Exponential in the number of
// inequalities, so only for tests.

#include <avatar/locomotion/qp.hpp>

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <random>

namespace avatar::testing {

struct OracleResult
{
    Eigen::VectorXd x;
    double objective{std::numeric_limits<double>::infinity()};
};

inline std::optional<OracleResult> brute_force_qp(const locomotion::QpProblem& qp)
{
    using Eigen::Index;
    using Eigen::MatrixXd;
    using Eigen::VectorXd;

    MatrixXd C;
    VectorXd d;
    locomotion::stacked_inequalities(qp, C, d);
    const Index n = qp.H.rows();
    const Index p = qp.A_eq.rows();
    const Index m = C.rows();

    std::optional<OracleResult> best;
    for (unsigned mask = 0; mask < (1u << m); ++mask)
    {
        std::vector<Index> rows;
        for (Index i = 0; i < m; ++i)
            if (mask & (1u << i))
                rows.push_back(i);
        const Index q = p + static_cast<Index>(rows.size());
        if (q > n)
            continue;
        MatrixXd A(q, n);
        VectorXd b(q);
        if (p > 0)
        {
            A.topRows(p) = qp.A_eq;
            b.head(p) = qp.b_eq;
        }
        for (std::size_t k = 0; k < rows.size(); ++k)
        {
            A.row(p + static_cast<Index>(k)) = C.row(rows[k]);
            b(p + static_cast<Index>(k)) = d(rows[k]);
        }
        MatrixXd K = MatrixXd::Zero(n + q, n + q);
        K.topLeftCorner(n, n) = qp.H;
        K.topRightCorner(n, q) = A.transpose();
        K.bottomLeftCorner(q, n) = A;
        VectorXd rhs(n + q);
        rhs.head(n) = -qp.g;
        rhs.tail(q) = b;
        Eigen::FullPivLU<MatrixXd> lu(K);
        if (lu.rank() < n + q)
            continue;
        const VectorXd sol = lu.solve(rhs);
        const VectorXd x = sol.head(n);
        bool feasible = true;
        if (p > 0 && (qp.A_eq * x - qp.b_eq).cwiseAbs().maxCoeff() > 1e-9)
            feasible = false;
        if (m > 0 && (C * x - d).maxCoeff() > 1e-9)
            feasible = false;
        if (!feasible)
            continue;
        const double f = qp.objective(x);
        if (!best || f < best->objective)
            best = OracleResult{x, f};
    }
    return best;
}

/// Random strictly convex QP with n <= max_n variables, at most max_m
/// inequality rows and fewer equalities than variables. Feasible by
/// construction around a random interior point.
inline locomotion::QpProblem random_qp(std::mt19937_64& rng, int max_n = 8, int max_m = 4)
{
    std::uniform_int_distribution<int> nd(1, max_n);
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const int n = nd(rng);
    const int m = std::uniform_int_distribution<int>(0, max_m)(rng);
    const int p = std::uniform_int_distribution<int>(0, std::min(2, n - 1))(rng);

    locomotion::QpProblem qp;
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            M(i, j) = N(rng);
    qp.H = M.transpose() * M + 0.1 * Eigen::MatrixXd::Identity(n, n);
    qp.g.resize(n);
    for (int i = 0; i < n; ++i)
        qp.g(i) = 3.0 * N(rng);

    Eigen::VectorXd x0(n);
    for (int i = 0; i < n; ++i)
        x0(i) = N(rng);
    qp.A_eq.resize(p, n);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < n; ++j)
            qp.A_eq(i, j) = N(rng);
    qp.b_eq = qp.A_eq * x0;
    qp.C.resize(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            qp.C(i, j) = N(rng);
    qp.d = qp.C * x0;
    for (int i = 0; i < m; ++i)
        qp.d(i) += U(rng) < 0.3 ? 0.0 : U(rng);
    return qp;
}

} // namespace avatar::testing

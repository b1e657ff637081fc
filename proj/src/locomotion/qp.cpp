#include <avatar/locomotion/qp.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace avatar::locomotion {

std::string_view to_string(QpStatus s)
{
    switch (s)
    {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIterations: return "max_iterations";
    case QpStatus::Malformed: return "malformed";
    }
    return "unknown";
}

double KktReport::max() const
{
    return std::max({stationarity, primal, dual, complementarity});
}

void stacked_inequalities(const QpProblem& qp, MatX& C_all, VecX& d_all)
{
    const Eigen::Index n = qp.variables();
    const Eigen::Index m = qp.C.rows();
    const Eigen::Index nl = qp.lb.size();
    const Eigen::Index nu = qp.ub.size();
    C_all = MatX::Zero(m + nl + nu, n);
    d_all = VecX::Zero(m + nl + nu);
    if (m > 0)
    {
        C_all.topRows(m) = qp.C;
        d_all.head(m) = qp.d;
    }
    for (Eigen::Index i = 0; i < nl; ++i)
    {
        C_all(m + i, i) = -1.0;
        d_all(m + i) = -qp.lb(i);
    }
    for (Eigen::Index i = 0; i < nu; ++i)
    {
        C_all(m + nl + i, i) = 1.0;
        d_all(m + nl + i) = qp.ub(i);
    }
}

KktReport kkt_report(const QpProblem& qp, const QpResult& r)
{
    KktReport k;
    if (r.x.size() != qp.variables())
        return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 0.0, 0.0};
    MatX C;
    VecX d;
    stacked_inequalities(qp, C, d);
    VecX grad = qp.H * r.x + qp.g;
    if (qp.A_eq.rows() > 0)
        grad += qp.A_eq.transpose() * r.lambda_eq;
    if (C.rows() > 0)
        grad += C.transpose() * r.mu;
    k.stationarity = grad.cwiseAbs().maxCoeff();
    if (qp.A_eq.rows() > 0)
        k.primal = (qp.A_eq * r.x - qp.b_eq).cwiseAbs().maxCoeff();
    if (C.rows() > 0)
    {
        const VecX slack = C * r.x - d;
        k.primal = std::max(k.primal, std::max(0.0, slack.maxCoeff()));
        k.dual = std::max(0.0, (-r.mu).maxCoeff());
        k.complementarity = r.mu.cwiseProduct(slack).cwiseAbs().maxCoeff();
    }
    return k;
}

namespace {

/// Constraints in the form s_i(x) = n_i' x + e_i, with s_i = 0 for the first
/// `neq` entries and s_i >= 0 for the rest.
struct ConstraintSet
{
    MatX normals; // n x total
    VecX offsets;
    Eigen::Index neq{0};

    Eigen::Index total() const { return normals.cols(); }
    double slack(Eigen::Index i, const VecX& x) const { return normals.col(i).dot(x) + offsets(i); }
};

/// Goldfarb-Idnani dual method in the variables y = L' x (H = L L'), where
/// the Hessian is the identity and step directions come from a QR
/// factorisation of the active normals.
class DualActiveSet
{
public:
    DualActiveSet(const MatX& H, const VecX& g, const ConstraintSet& cs, const QpOptions& opt)
        : m_H(H)
        , m_g(g)
        , m_cs(cs)
        , m_opt(opt)
    {
        const Eigen::Index n = H.rows();
        const Eigen::LLT<MatX> llt(H);
        m_L = llt.matrixL();
        m_normals = m_L.triangularView<Eigen::Lower>().solve(cs.normals);
        m_gy = m_L.triangularView<Eigen::Lower>().solve(g);
        m_max_iter = opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(10 * (n + cs.total()) + 100);
        m_sign = VecX::Ones(cs.total());
    }

    QpStatus run()
    {
        const QpStatus status = iterate();
        m_x = m_L.transpose().triangularView<Eigen::Upper>().solve(m_y);
        if (status == QpStatus::Optimal)
            refine();
        return status;
    }

    const VecX& x() const { return m_x; }
    const std::vector<Eigen::Index>& active() const { return m_active; }
    const std::vector<double>& multipliers() const { return m_u; }
    double sign(Eigen::Index i) const { return m_sign(i); }
    int iterations() const { return m_iterations; }

private:
    QpStatus iterate()
    {
        m_y = -m_gy;
        for (Eigen::Index e = 0; e < m_cs.neq; ++e)
        {
            if (slack_raw(e) > 0.0)
                m_sign(e) = -1.0;
            if (!add(e))
                return QpStatus::Infeasible;
        }
        while (true)
        {
            if (++m_iterations > m_max_iter)
                return QpStatus::MaxIterations;
            Eigen::Index worst = -1;
            double worst_slack = 0.0;
            for (Eigen::Index i = m_cs.neq; i < m_cs.total(); ++i)
            {
                if (is_active(i))
                    continue;
                const double s = slack_raw(i);
                const double tol = m_opt.feasibility_tol * (1.0 + std::abs(m_cs.offsets(i)));
                if (s < -tol && s < worst_slack)
                {
                    worst_slack = s;
                    worst = i;
                }
            }
            if (worst < 0)
                break;
            if (!add(worst))
                return QpStatus::Infeasible;
        }
        return QpStatus::Optimal;
    }

    VecX normal(Eigen::Index i) const { return m_sign(i) * m_normals.col(i); }
    double offset(Eigen::Index i) const { return m_sign(i) * m_cs.offsets(i); }
    double slack_raw(Eigen::Index i) const { return m_normals.col(i).dot(m_y) + m_cs.offsets(i); }
    double slack(Eigen::Index i) const { return m_sign(i) * slack_raw(i); }

    bool is_active(Eigen::Index i) const { return std::find(m_active.begin(), m_active.end(), i) != m_active.end(); }

    MatX active_normals() const
    {
        MatX N(m_y.size(), static_cast<Eigen::Index>(m_active.size()));
        for (std::size_t j = 0; j < m_active.size(); ++j)
            N.col(static_cast<Eigen::Index>(j)) = normal(m_active[j]);
        return N;
    }

    void drop(std::size_t k)
    {
        m_active.erase(m_active.begin() + static_cast<std::ptrdiff_t>(k));
        m_u.erase(m_u.begin() + static_cast<std::ptrdiff_t>(k));
    }

    bool add(Eigen::Index p)
    {
        const VecX np = normal(p);
        double up = 0.0;
        const double scale = 1.0 + np.norm();
        for (int guard = 0; guard < m_max_iter; ++guard)
        {
            const std::size_t q = m_active.size();
            VecX z = np;
            VecX r;
            if (q > 0)
            {
                const MatX N = active_normals();
                const Eigen::HouseholderQR<MatX> qr(N);
                const auto qn = static_cast<Eigen::Index>(q);
                const MatX Q = qr.householderQ() * MatX::Identity(N.rows(), qn);
                const VecX d = Q.transpose() * np;
                r = qr.matrixQR().topLeftCorner(qn, qn).triangularView<Eigen::Upper>().solve(d);
                z = np - Q * d;
            }

            double t1 = std::numeric_limits<double>::infinity();
            std::size_t k = q;
            for (std::size_t j = 0; j < q; ++j)
            {
                if (m_active[j] < m_cs.neq)
                    continue;
                const double rj = r(static_cast<Eigen::Index>(j));
                if (rj > 1e-14 * scale)
                {
                    const double ratio = m_u[j] / rj;
                    if (ratio < t1)
                    {
                        t1 = ratio;
                        k = j;
                    }
                }
            }

            const double zn = z.dot(np);
            if (z.norm() <= 1e-12 * scale || zn <= 1e-16)
            {
                // np is a combination of the active normals.
                if (k == q)
                    return false;
                for (std::size_t j = 0; j < q; ++j)
                    m_u[j] -= t1 * r(static_cast<Eigen::Index>(j));
                up += t1;
                drop(k);
                continue;
            }

            const double t2 = -slack(p) / zn;
            const double t = std::min(t1, t2);
            m_y += t * z;
            for (std::size_t j = 0; j < q; ++j)
                m_u[j] -= t * r(static_cast<Eigen::Index>(j));
            up += t;
            if (t2 <= t1)
            {
                m_active.push_back(p);
                m_u.push_back(up);
                return true;
            }
            drop(k);
        }
        return false;
    }

    /// Re-solves the KKT system of the final active set for accuracy.
    void refine()
    {
        const Eigen::Index n = m_x.size();
        const Eigen::Index q = static_cast<Eigen::Index>(m_active.size());
        MatX N(n, q);
        for (Eigen::Index j = 0; j < q; ++j)
        {
            const Eigen::Index i = m_active[static_cast<std::size_t>(j)];
            N.col(j) = m_sign(i) * m_cs.normals.col(i);
        }
        MatX K = MatX::Zero(n + q, n + q);
        K.topLeftCorner(n, n) = m_H;
        K.topRightCorner(n, q) = -N;
        K.bottomLeftCorner(q, n) = N.transpose();
        VecX rhs(n + q);
        rhs.head(n) = -m_g;
        for (Eigen::Index j = 0; j < q; ++j)
            rhs(n + j) = -offset(m_active[static_cast<std::size_t>(j)]);
        Eigen::FullPivLU<MatX> lu(K);
        if (lu.rank() < n + q)
            return;
        const VecX sol = lu.solve(rhs);
        if (!sol.allFinite())
            return;
        const VecX x = sol.head(n);
        for (Eigen::Index i = m_cs.neq; i < m_cs.total(); ++i)
            if (m_cs.normals.col(i).dot(x) + m_cs.offsets(i) < -1e-9 * (1.0 + std::abs(m_cs.offsets(i))))
                return;
        for (Eigen::Index j = 0; j < q; ++j)
            if (m_active[static_cast<std::size_t>(j)] >= m_cs.neq && sol(n + j) < -1e-9)
                return;
        m_x = x;
        for (Eigen::Index j = 0; j < q; ++j)
            m_u[static_cast<std::size_t>(j)] = m_active[static_cast<std::size_t>(j)] >= m_cs.neq
                                                   ? std::max(0.0, sol(n + j))
                                                   : sol(n + j);
    }

    const MatX& m_H;
    const VecX& m_g;
    const ConstraintSet& m_cs;
    QpOptions m_opt;
    MatX m_L;
    MatX m_normals;
    VecX m_gy;
    VecX m_y;
    VecX m_x;
    VecX m_sign;
    std::vector<Eigen::Index> m_active;
    std::vector<double> m_u;
    int m_iterations{0};
    int m_max_iter{0};
};

bool well_formed(const QpProblem& qp)
{
    const Eigen::Index n = qp.H.rows();
    if (n == 0 || qp.H.cols() != n || qp.g.size() != n)
        return false;
    if (qp.A_eq.rows() != qp.b_eq.size() || (qp.A_eq.rows() > 0 && qp.A_eq.cols() != n))
        return false;
    if (qp.A_eq.rows() > n)
        return false;
    if (qp.C.rows() != qp.d.size() || (qp.C.rows() > 0 && qp.C.cols() != n))
        return false;
    if ((qp.lb.size() != 0 && qp.lb.size() != n) || (qp.ub.size() != 0 && qp.ub.size() != n))
        return false;
    if (!qp.H.allFinite() || !qp.g.allFinite())
        return false;
    return (qp.H - qp.H.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + qp.H.cwiseAbs().maxCoeff());
}

QpResult solve_strict(const QpProblem& qp, const MatX& H, const VecX& g, const QpOptions& opt)
{
    MatX C;
    VecX d;
    stacked_inequalities(qp, C, d);
    const Eigen::Index n = qp.variables();
    const Eigen::Index p = qp.A_eq.rows();
    const Eigen::Index m = C.rows();

    ConstraintSet cs;
    cs.neq = p;
    cs.normals.resize(n, p + m);
    cs.offsets.resize(p + m);
    if (p > 0)
    {
        cs.normals.leftCols(p) = qp.A_eq.transpose();
        cs.offsets.head(p) = -qp.b_eq;
    }
    if (m > 0)
    {
        cs.normals.rightCols(m) = -C.transpose();
        cs.offsets.tail(m) = d;
    }

    DualActiveSet solver(H, g, cs, opt);
    QpResult out;
    out.status = solver.run();
    out.iterations = solver.iterations();
    out.x = solver.x();
    out.lambda_eq = VecX::Zero(p);
    out.mu = VecX::Zero(m);
    const auto& active = solver.active();
    const auto& u = solver.multipliers();
    for (std::size_t j = 0; j < active.size(); ++j)
    {
        const Eigen::Index i = active[j];
        if (i < p)
            out.lambda_eq(i) = -u[j] * solver.sign(i);
        else
        {
            out.mu(i - p) = u[j];
            out.active.push_back(static_cast<int>(i - p));
        }
    }
    std::sort(out.active.begin(), out.active.end());
    out.objective = qp.objective(out.x);
    return out;
}

} // namespace

QpResult solve_qp(const QpProblem& qp, const QpOptions& options)
{
    if (!well_formed(qp))
        return QpResult{};

    Eigen::LLT<MatX> llt(qp.H);
    const double scale = std::max(1.0, qp.H.diagonal().cwiseAbs().maxCoeff());
    bool strict = llt.info() == Eigen::Success;
    if (strict)
    {
        // Reject numerically singular factors; they go through the proximal path.
        const VecX diag = MatX(llt.matrixL()).diagonal();
        strict = diag.minCoeff() > 1e-7 * std::sqrt(scale);
    }
    if (strict)
        return solve_strict(qp, qp.H, qp.g, options);

    // Proximal point: x_{k+1} = argmin f(x) + rho/2 |x - x_k|^2 over the
    // feasible set. Each subproblem is strictly convex.
    const double rho = 1e-3 * scale;
    const Eigen::Index n = qp.variables();
    const MatX Hp = qp.H + rho * MatX::Identity(n, n);
    VecX xk = VecX::Zero(n);
    QpResult r;
    int total_iterations = 0;
    for (int outer = 0; outer < 20000; ++outer)
    {
        r = solve_strict(qp, Hp, qp.g - rho * xk, options);
        total_iterations += r.iterations;
        if (!r.ok())
        {
            r.iterations = total_iterations;
            return r;
        }
        const double step = (r.x - xk).cwiseAbs().maxCoeff();
        xk = r.x;
        if (step <= 1e-13 * (1.0 + xk.cwiseAbs().maxCoeff()))
            break;
        if (!xk.allFinite() || xk.cwiseAbs().maxCoeff() > 1e12)
        {
            r.status = QpStatus::MaxIterations;
            break;
        }
    }
    r.iterations = total_iterations;
    r.objective = qp.objective(r.x);
    return r;
}

} // namespace avatar::locomotion

#include <avatar/locomotion/whole_body.hpp>

#include <algorithm>

namespace avatar::locomotion {

using model::JointGroup;

Vec6 pose_error(const Pose& from, const Pose& to)
{
    Vec6 e;
    e.head<3>() = to.translation() - from.translation();
    e.tail<3>() = log_so3(to.linear() * from.linear().transpose());
    return e;
}

WholeBodyController::WholeBodyController(const model::RobotModel& model, WholeBodyParams params)
    : m_model(&model)
    , m_params(params)
{
    std::vector<double> scale;
    auto add_group = [&](JointGroup g, double s) {
        const std::size_t off = model::group_offset(g);
        for (std::size_t i = 0; i < model::group_size(g); ++i)
        {
            m_joints.push_back(off + i);
            scale.push_back(s);
        }
    };
    add_group(JointGroup::Torso, params.posture_scale_torso);
    add_group(JointGroup::LeftLeg, params.posture_scale_legs);
    add_group(JointGroup::RightLeg, params.posture_scale_legs);
    add_group(JointGroup::LeftArm, params.posture_scale_arms);
    add_group(JointGroup::RightArm, params.posture_scale_arms);
    m_posture_scale = Eigen::Map<VecX>(scale.data(), static_cast<Eigen::Index>(scale.size()));

    m_left_sole = model.tree.link_index("l_sole");
    m_right_sole = model.tree.link_index("r_sole");
    m_chest = model.tree.link_index("chest");
}

Vec3 WholeBodyController::com(const RobotState& state) const
{
    return m_model->tree.com(m_model->tree.forward(state.base, state.q));
}

Pose WholeBodyController::sole(const RobotState& state, model::Side side) const
{
    const auto ts = m_model->tree.forward(state.base, state.q);
    return ts.links[static_cast<std::size_t>(side == model::Side::Left ? m_left_sole : m_right_sole)];
}

Mat3 WholeBodyController::chest_orientation(const RobotState& state) const
{
    const auto ts = m_model->tree.forward(state.base, state.q);
    return ts.links[static_cast<std::size_t>(m_chest)].linear();
}

TaskStack WholeBodyController::hold_stack(const RobotState& state) const
{
    const auto ts = m_model->tree.forward(state.base, state.q);
    TaskStack s;
    s.com = m_model->tree.com(ts);
    s.left_foot.pose = ts.links[static_cast<std::size_t>(m_left_sole)];
    s.right_foot.pose = ts.links[static_cast<std::size_t>(m_right_sole)];
    s.root_height = state.base.translation().z();
    s.torso_orientation = ts.links[static_cast<std::size_t>(m_chest)].linear();
    s.w_torso = m_params.w_torso;
    s.w_posture = m_params.w_posture;
    s.posture_ref = state.q;
    return s;
}

QpProblem WholeBodyController::assemble(const TaskStack& stack, const RobotState& state) const
{
    const auto& tree = m_model->tree;
    const auto ts = tree.forward(state.base, state.q);
    const Eigen::Index n = variables();
    const auto nj = static_cast<Eigen::Index>(m_joints.size());

    auto select = [&](const MatX& full) {
        MatX out(full.rows(), n);
        out.leftCols<6>() = full.leftCols<6>();
        for (Eigen::Index j = 0; j < nj; ++j)
            out.col(6 + j) = full.col(6 + static_cast<Eigen::Index>(m_joints[static_cast<std::size_t>(j)]));
        return out;
    };

    QpProblem qp;
    qp.A_eq = MatX::Zero(m_rows.count, n);
    qp.b_eq = VecX::Zero(m_rows.count);

    const Vec3 c = tree.com(ts);
    qp.A_eq.middleRows<2>(m_rows.com) = select(tree.com_jacobian(ts)).topRows<2>();
    qp.b_eq.segment<2>(m_rows.com) = (stack.com_velocity + m_params.k_com * (stack.com - c)).head<2>();

    auto foot_rows = [&](int link, const FootTask& task, Eigen::Index row) {
        const Pose& T = ts.links[static_cast<std::size_t>(link)];
        qp.A_eq.middleRows<6>(row) = select(tree.frame_jacobian(ts, link, T.translation()));
        qp.b_eq.segment<6>(row) = task.velocity + m_params.k_foot * pose_error(T, task.pose);
    };
    foot_rows(m_left_sole, stack.left_foot, m_rows.left_foot);
    foot_rows(m_right_sole, stack.right_foot, m_rows.right_foot);

    if (stack.root_height_active)
    {
        qp.A_eq(m_rows.root_height, 2) = 1.0;
        qp.b_eq(m_rows.root_height) = m_params.k_root * (stack.root_height - state.base.translation().z());
    }
    else
    {
        // Drop the row.
        MatX A = qp.A_eq.topRows(m_rows.root_height);
        VecX b = qp.b_eq.head(m_rows.root_height);
        qp.A_eq = std::move(A);
        qp.b_eq = std::move(b);
    }

    // Torso orientation.
    const Pose& chest = ts.links[static_cast<std::size_t>(m_chest)];
    const MatX Jt = select(tree.frame_jacobian(ts, m_chest, chest.translation())).bottomRows<3>();
    const Vec3 w_ref = m_params.k_torso * log_so3(stack.torso_orientation * chest.linear().transpose());

    qp.H = stack.w_torso * Jt.transpose() * Jt;
    qp.g = -stack.w_torso * Jt.transpose() * w_ref;

    // Posture regularisation on the controlled joints.
    const model::JointVector& ref = stack.posture_ref ? *stack.posture_ref : state.q;
    for (Eigen::Index j = 0; j < nj; ++j)
    {
        const std::size_t gj = m_joints[static_cast<std::size_t>(j)];
        const double w = stack.w_posture * m_posture_scale(j);
        const double qd_ref = m_params.k_posture * (ref[gj] - state.q[gj]);
        qp.H(6 + j, 6 + j) += w;
        qp.g(6 + j) -= w * qd_ref;
    }
    qp.H += m_params.regularization * MatX::Identity(n, n);

    // Joint position and velocity limits over one tick.
    qp.lb = VecX::Constant(n, -m_params.base_velocity_bound);
    qp.ub = VecX::Constant(n, m_params.base_velocity_bound);
    for (Eigen::Index j = 0; j < nj; ++j)
    {
        const auto& info = m_model->layout.joints[m_joints[static_cast<std::size_t>(j)]];
        const double q = state.q[m_joints[static_cast<std::size_t>(j)]];
        double lo = std::max(-info.max_velocity, (info.min - q) / m_params.dt);
        double hi = std::min(info.max_velocity, (info.max - q) / m_params.dt);
        if (lo > hi)
            lo = hi = std::clamp(0.0, lo, hi);
        qp.lb(6 + j) = lo;
        qp.ub(6 + j) = hi;
    }
    return qp;
}

WholeBodySolution WholeBodyController::solve(const TaskStack& stack, const RobotState& state) const
{
    WholeBodySolution out;
    out.reference = state;
    const QpProblem qp = assemble(stack, state);
    const QpResult r = solve_qp(qp);
    out.status = r.status;
    out.iterations = r.iterations;
    if (!r.ok())
        return out;

    out.ok = true;
    out.velocity = r.x;
    out.kkt = kkt_report(qp, r);
    out.high_residual = (qp.A_eq * r.x - qp.b_eq).norm();

    const double dt = m_params.dt;
    Pose base = state.base;
    base.translation() += dt * r.x.head<3>();
    base.linear() = exp_so3(dt * r.x.segment<3>(3)) * state.base.linear();
    out.reference.base = base;
    for (std::size_t j = 0; j < m_joints.size(); ++j)
        out.reference.q[m_joints[j]] += dt * r.x(6 + static_cast<Eigen::Index>(j));

    // Low-priority residuals, for diagnostics.
    const auto ts = m_model->tree.forward(state.base, state.q);
    const Pose& chest = ts.links[static_cast<std::size_t>(m_chest)];
    out.torso_residual = log_so3(stack.torso_orientation * chest.linear().transpose()).norm();
    if (stack.posture_ref)
    {
        double sq = 0.0;
        for (std::size_t j = 0; j < m_joints.size(); ++j)
            sq += std::pow((*stack.posture_ref)[m_joints[j]] - out.reference.q[m_joints[j]], 2);
        out.posture_residual = std::sqrt(sq);
    }
    return out;
}

} // namespace avatar::locomotion

#include <avatar/locomotion/pipeline.hpp>
#include <avatar/lowlevel/servo.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>

namespace avatar::locomotion {

using model::JointGroup;

namespace {

std::string_view stance_name(model::Stance s)
{
    switch (s)
    {
    case model::Stance::Left: return "left";
    case model::Stance::Right: return "right";
    case model::Stance::Double: return "double";
    case model::Stance::None: return "none";
    }
    return "?";
}

Pose ground_pose(const Pose2& p) { return make_pose(Vec3(p.x, p.y, 0.0), rot_z(p.yaw)); }

Pose swing_pose(const Pose2& from, const Pose2& to, double s, double height)
{
    const double m = lowlevel::min_jerk_eval({0.0, 1.0, 1.0, 0.0}, s).position;
    const Vec2 xy = from.position() + m * (to.position() - from.position());
    const double yaw = from.yaw + m * wrap_angle(to.yaw - from.yaw);
    const double z = height * 64.0 * std::pow(s * (1.0 - s), 3);
    return make_pose(Vec3(xy.x(), xy.y(), z), rot_z(yaw));
}

void set(model::JointVector& q, const model::RobotModel& model, std::string_view name, double v)
{
    q[model.layout.index_of(name)] = v;
}

} // namespace

model::JointVector nominal_posture(const model::RobotModel& model)
{
    model::JointVector q;
    for (const char* p : {"l_", "r_"})
    {
        const std::string s = p;
        set(q, model, s + "hip_pitch", -0.35);
        set(q, model, s + "knee", 0.7);
        set(q, model, s + "ankle_pitch", -0.35);
        set(q, model, s + "shoulder_roll", 0.15);
        set(q, model, s + "elbow", 0.3);
    }
    set(q, model, "eyelids", 1.2);
    return q;
}

std::string PipelineDiagnostics::to_record() const
{
    nlohmann::ordered_json j;
    j["t"] = t;
    j["zmp_ref"] = {zmp_ref.x(), zmp_ref.y()};
    j["zmp_cmd"] = {zmp_cmd.x(), zmp_cmd.y()};
    if (zmp_meas)
        j["zmp_meas"] = {zmp_meas->x(), zmp_meas->y()};
    else
        j["zmp_meas"] = nullptr;
    j["zmp_error"] = zmp_error;
    j["dcm"] = {dcm.x(), dcm.y()};
    j["dcm_ref"] = {dcm_ref.x(), dcm_ref.y()};
    j["com_ref"] = {com_ref.x(), com_ref.y(), com_ref.z()};
    j["zmp_margin"] = zmp_margin;
    j["stance"] = stance_name(stance);
    j["qp_status"] = to_string(qp_status);
    j["qp_iterations"] = qp_iterations;
    j["high_residual"] = high_residual;
    j["torso_residual"] = torso_residual;
    j["posture_residual"] = posture_residual;
    j["step"] = step;
    j["replanned"] = replanned;
    return j.dump();
}

ControlPipeline::ControlPipeline(const model::RobotModel& model, PipelineParams params)
    : m_model(&model)
    , m_params(params)
    , m_wb(model, params.whole_body)
    , m_gen(params.lipm, params.planner, model.geometry)
    , m_nominal(nominal_posture(model))
{
}

std::pair<Pose, Pose> ControlPipeline::foot_targets(double t) const
{
    const PlanPhase ph = plan_phase(plan(), t);
    Pose left = ground_pose(ph.left);
    Pose right = ground_pose(ph.right);
    if (ph.swinging)
    {
        const Pose p = swing_pose(ph.swing_from, ph.swing_to, ph.swing_progress, m_params.swing_height);
        (ph.swing_foot == Foot::Left ? left : right) = p;
    }
    return {left, right};
}

RobotState ControlPipeline::initialize(const Pose2& left, const Pose2& right, double t0)
{
    const double dt = m_params.whole_body.dt;
    const Pose2 mid = stance_midpoint(left, right);

    RobotState s;
    s.q = m_nominal;
    for (const char* p : {"l_", "r_"})
    {
        const std::string side = p;
        set(s.q, *m_model, side + "hip_pitch", -0.2);
        set(s.q, *m_model, side + "knee", 0.4);
        set(s.q, *m_model, side + "ankle_pitch", -0.2);
    }
    s.base = make_pose(Vec3::Zero(), rot_z(mid.yaw));
    {
        const Vec3 soles = 0.5 * (m_wb.sole(s, model::Side::Left).translation() +
                                  m_wb.sole(s, model::Side::Right).translation());
        s.base.translation() = Vec3(mid.x, mid.y, 0.0) - soles;
    }

    TaskStack stack;
    stack.left_foot.pose = ground_pose(left);
    stack.right_foot.pose = ground_pose(right);
    stack.torso_orientation = rot_z(mid.yaw);
    stack.w_torso = m_params.whole_body.w_torso;
    stack.w_posture = m_params.whole_body.w_posture;
    stack.posture_ref = m_nominal;

    // CoM over the stance centre, lowered to the walking height through the
    // root link.
    const Vec3 c0 = m_wb.com(s);
    const double z0 = s.base.translation().z();
    const double z1 = z0 - (c0.z() - m_params.lipm.com_height);
    const int n = static_cast<int>(std::lround(m_params.homing_time / dt));
    auto blend = [&](int i) {
        return lowlevel::min_jerk_eval({0.0, 1.0, 1.0, 0.0}, std::min(1.0, double(i) / n)).position;
    };
    for (int i = 0; i < n; ++i)
    {
        const Vec2 xy = c0.head<2>() + blend(i) * (mid.position() - c0.head<2>());
        const Vec2 xy_next = c0.head<2>() + blend(i + 1) * (mid.position() - c0.head<2>());
        stack.com.head<2>() = xy;
        stack.com_velocity.head<2>() = (xy_next - xy) / dt;
        stack.root_height = z0 + blend(i) * (z1 - z0);
        const WholeBodySolution sol = m_wb.solve(stack, s);
        if (!sol.ok)
            throw LocomotionError(LocomotionErrc::NotInitialized,
                                  std::string("homing QP failed: ") + std::string(to_string(sol.status)));
        s = sol.reference;
    }
    stack.com_velocity.setZero();
    stack.com.head<2>() = mid.position();
    for (int i = 0; i < 200; ++i)
    {
        stack.root_height = s.base.translation().z() + (m_params.lipm.com_height - m_wb.com(s).z());
        const WholeBodySolution sol = m_wb.solve(stack, s);
        if (!sol.ok)
            throw LocomotionError(LocomotionErrc::NotInitialized,
                                  std::string("homing QP failed: ") + std::string(to_string(sol.status)));
        s = sol.reference;
    }

    m_state = s;
    m_root_height = s.base.translation().z();
    // Regularise the legs towards the homed posture from now on.
    for (JointGroup g : {JointGroup::LeftLeg, JointGroup::RightLeg})
    {
        const std::size_t off = model::group_offset(g);
        for (std::size_t i = 0; i < model::group_size(g); ++i)
            m_nominal[off + i] = s.q[off + i];
    }
    m_t = t0;
    m_active = {};
    m_pending = {};
    m_replans = 0;

    const Vec3 c = m_wb.com(s);
    m_gen.reset({c.head<2>(), Vec2::Zero()});
    FootstepPlan standing;
    standing.start = {left, right, Foot::Left};
    standing.t_start = t0;
    standing.from_rest = true;
    standing.t_end = t0 + m_params.planner.initial_double_support;
    m_gen.set_plan(standing, c.head<2>());
    m_last_sample = {};
    m_last_sample.t = t0;
    m_last_sample.com = c.head<2>();
    m_last_stack = stack;
    m_initialized = true;
    return m_state;
}

double ControlPipeline::next_boundary() const
{
    const FootstepPlan& p = plan();
    return p.steps.empty() ? std::numeric_limits<double>::infinity() : p.steps.front().t_touchdown;
}

void ControlPipeline::replan(double t_start, bool from_rest, std::vector<FaultEvent>& faults)
{
    const FootstepPlan& old = plan();
    const PlanPhase ph = plan_phase(old, t_start);
    StanceState st{ph.left, ph.right, old.steps.empty() ? old.start.next_swing : other(old.steps.front().foot)};
    const Vec2 zmp_start = m_gen.reference().zmp(t_start);
    try
    {
        FootstepPlan next = plan_footsteps(m_pending, st, m_params.horizon, t_start, from_rest, m_params.planner);
        m_gen.set_plan(next, zmp_start);
        m_active = m_pending;
        ++m_replans;
    }
    catch (const LocomotionError& e)
    {
        faults.push_back({m_t, "planner", e.what()});
        m_pending = m_active;
    }
}

PipelineOutput ControlPipeline::tick(const std::optional<WalkingCommand>& cmd,
                                     const std::optional<model::JointVector>& posture_ref,
                                     const PipelineMeasurements& measurements)
{
    if (!m_initialized)
        throw LocomotionError(LocomotionErrc::NotInitialized, "pipeline not initialized");

    PipelineOutput out;
    const double dt = m_params.whole_body.dt;
    const double t = m_t;
    if (cmd)
        m_pending = {wrap_angle(cmd->heading), cmd->speed};

    // Planner: re-plan at step boundaries, or at once when standing.
    const std::uint64_t before = m_replans;
    const double boundary = next_boundary();
    if (t + 1e-9 >= boundary)
        replan(boundary, false, out.faults);
    else if (plan().steps.empty() && !(m_pending == m_active))
        replan(t, true, out.faults);
    out.diag.replanned = m_replans != before;

    // Simplified model.
    std::optional<Vec2> zmp_meas;
    if (!measurements.wrenches.empty())
    {
        try
        {
            zmp_meas = measured_zmp(measurements.wrenches, m_params.min_normal_force);
        }
        catch (const LocomotionError&)
        {
        }
    }
    const CentroidalSample sample = m_gen.step(t, zmp_meas);

    // Whole-body QP.
    const double h = m_params.lipm.com_height;
    TaskStack stack;
    stack.com = Vec3(m_last_sample.com.x(), m_last_sample.com.y(), h);
    stack.com_velocity.head<2>() = (sample.com - m_last_sample.com) / dt;
    const auto [l0, r0] = foot_targets(t);
    const auto [l1, r1] = foot_targets(t + dt);
    stack.left_foot = {l0, pose_error(l0, l1) / dt};
    stack.right_foot = {r0, pose_error(r0, r1) / dt};
    stack.root_height = m_root_height;
    stack.torso_orientation =
        rot_z(stance_midpoint({0, 0, yaw_of(l0.linear())}, {0, 0, yaw_of(r0.linear())}).yaw);
    stack.w_torso = m_params.whole_body.w_torso;
    stack.w_posture = m_params.whole_body.w_posture;
    model::JointVector posture = m_nominal;
    if (posture_ref)
    {
        for (JointGroup g : {JointGroup::Torso, JointGroup::LeftArm, JointGroup::RightArm})
        {
            const std::size_t off = model::group_offset(g);
            for (std::size_t i = 0; i < model::group_size(g); ++i)
                posture[off + i] = (*posture_ref)[off + i];
        }
    }
    stack.posture_ref = posture;

    const WholeBodySolution sol = m_wb.solve(stack, m_state);
    if (sol.ok)
        m_state = sol.reference;
    else
        out.faults.push_back({t, "whole_body_qp", std::string(to_string(sol.status))});

    auto& d = out.diag;
    d.t = t;
    d.zmp_ref = sample.zmp_ref;
    d.zmp_cmd = sample.zmp_cmd;
    d.zmp_meas = zmp_meas;
    d.zmp_error = zmp_meas ? (sample.zmp_ref - *zmp_meas).norm() : 0.0;
    d.dcm = sample.dcm;
    d.dcm_ref = sample.dcm_ref;
    d.com_ref = Vec3(sample.com.x(), sample.com.y(), h);
    d.zmp_margin = sample.zmp_margin;
    d.stance = sample.stance;
    d.qp_status = sol.status;
    d.qp_iterations = sol.iterations;
    d.high_residual = sol.high_residual;
    d.torso_residual = sol.torso_residual;
    d.posture_residual = sol.posture_residual;
    d.step = plan_phase(plan(), t).step;

    m_last_sample = sample;
    m_last_stack = stack;
    m_t = t + dt;
    out.reference = m_state;
    return out;
}

} // namespace avatar::locomotion

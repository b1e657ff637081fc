#include <avatar/retargeting/retarget.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace avatar::retargeting {

using model::Chain;
using model::JointGroup;
using model::JointLayout;
using model::JointVector;
using model::Side;

namespace {

Quat mean_orientation(const std::vector<Quat>& qs)
{
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    for (const Quat& q : qs)
    {
        const Eigen::Vector4d c = q.coeffs();
        acc += c.dot(qs.front().coeffs()) < 0.0 ? -c : c;
    }
    Quat m;
    m.coeffs() = acc.normalized();
    return m;
}

double rms_deviation(const std::vector<Quat>& qs, const Quat& mean)
{
    double sq = 0.0;
    for (const Quat& q : qs)
        sq += std::pow(mean.angularDistance(q), 2);
    return std::sqrt(sq / static_cast<double>(qs.size()));
}

double clamp_joint(const model::RobotModel& model, std::size_t j, double v, bool& clamped)
{
    const auto& info = model.layout.joints[j];
    const double c = std::clamp(v, info.min, info.max);
    clamped |= c != v;
    return c;
}

} // namespace

bool Calibration::operator==(const Calibration& o) const
{
    for (std::size_t i = 0; i < kNodes; ++i)
        if (reference[i].coeffs() != o.reference[i].coeffs() || alignment[i] != o.alignment[i])
            return false;
    return chest_alignment == o.chest_alignment && head_alignment == o.head_alignment && deviation == o.deviation;
}

Calibration identity_calibration(const model::RobotModel& model)
{
    Calibration cal;
    for (auto& q : cal.reference)
        q = Quat::Identity();
    for (Side side : {Side::Left, Side::Right})
    {
        const auto [upper, fore] = ArmIk(model, side).forward({});
        cal.alignment[static_cast<std::size_t>(side == Side::Left ? Node::LeftUpperArm : Node::RightUpperArm)] = upper;
        cal.alignment[static_cast<std::size_t>(side == Side::Left ? Node::LeftForearm : Node::RightForearm)] = fore;
    }
    cal.alignment[static_cast<std::size_t>(Node::Chest)] = Mat3::Identity();
    return cal;
}

Calibration calibrate(const std::vector<OperatorFrame>& frames, const model::RobotModel& model,
                      const CalibrationParams& params)
{
    if (frames.empty())
        throw RetargetError(RetargetErrc::InsufficientFrames, "no frames");
    const double span = frames.back().timestamp - frames.front().timestamp;
    if (span < params.min_duration - 1e-9)
        throw RetargetError(RetargetErrc::InsufficientFrames,
                            "calibration window of " + std::to_string(span) + " s is too short");
    for (const auto& f : frames)
        f.validate();

    Calibration cal = identity_calibration(model);
    std::vector<Quat> samples(frames.size());
    double worst = 0.0;
    for (std::size_t n = 0; n < kNodes; ++n)
    {
        for (std::size_t i = 0; i < frames.size(); ++i)
            samples[i] = frames[i].nodes[n];
        cal.reference[n] = mean_orientation(samples);
        worst = std::max(worst, rms_deviation(samples, cal.reference[n]));
    }
    for (std::size_t i = 0; i < frames.size(); ++i)
        samples[i] = Quat(frames[i].head_pose.linear());
    const Quat head = mean_orientation(samples);
    worst = std::max(worst, rms_deviation(samples, head));

    cal.deviation = worst;
    if (worst >= params.max_deviation)
        throw RetargetError(RetargetErrc::OperatorMoving,
                            "orientation deviation " + std::to_string(worst) + " rad over the window");

    const Mat3 chest = cal.reference[static_cast<std::size_t>(Node::Chest)].toRotationMatrix();
    cal.chest_alignment = chest.transpose();
    cal.head_alignment = (chest.transpose() * head.toRotationMatrix()).transpose();
    for (Node n : {Node::LeftUpperArm, Node::LeftForearm, Node::RightUpperArm, Node::RightForearm})
    {
        const auto i = static_cast<std::size_t>(n);
        const Mat3 rel = chest.transpose() * cal.reference[i].toRotationMatrix();
        // cal.alignment currently holds R0 from identity_calibration.
        cal.alignment[i] = rel.transpose() * cal.alignment[i];
    }
    return cal;
}

// ---------------------------------------------------------------------------

ArmIk::ArmIk(const model::RobotModel& model, Side side, ArmIkParams params)
    : m_model(&model)
    , m_params(params)
{
    const Chain chain = side == Side::Left ? Chain::LeftArm : Chain::RightArm;
    m_joints = model.tree.chain_joints(chain);
    if (m_joints.size() != 7)
        throw std::logic_error("arm chain must have 7 joints");
    const std::string p = side == Side::Left ? "l_" : "r_";
    m_chest = model.tree.link_index("chest");
    m_upper = model.tree.link_index(p + "upper_arm");
    m_fore = model.tree.link_index(p + "forearm");
    m_sign = side == Side::Left ? 1.0 : -1.0;
    m_zero = forward({});
}

std::pair<Mat3, Mat3> ArmIk::forward(const std::array<double, 7>& q) const
{
    JointVector full;
    for (std::size_t i = 0; i < 7; ++i)
        full[m_joints[i]] = q[i];
    const auto ts = m_model->tree.forward(Pose::Identity(), full);
    const Mat3 Rc = ts.links[static_cast<std::size_t>(m_chest)].linear();
    return {Rc.transpose() * ts.links[static_cast<std::size_t>(m_upper)].linear(),
            Rc.transpose() * ts.links[static_cast<std::size_t>(m_fore)].linear()};
}

ArmIkResult ArmIk::solve(const Mat3& upper_arm, const Mat3& forearm, const std::array<double, 7>& seed) const
{
    ArmIkResult best = refine(upper_arm, forearm, seed);
    if (best.converged)
        return best;
    // Far from the seed: restart from the closed-form decomposition.
    const ArmIkResult alt = refine(upper_arm, forearm, analytic_seed(upper_arm, forearm));
    return alt.error < best.error ? alt : best;
}

std::array<double, 7> ArmIk::analytic_seed(const Mat3& upper_arm, const Mat3& forearm) const
{
    // Upper arm = Ry(q0) Rx(s q1) Rz(s q2) R0u, forearm relative to it Ry(-q3) Rz(s q4).
    const Mat3 U = upper_arm * m_zero.first.transpose();
    const Mat3 F = forearm * m_zero.second.transpose();
    const auto& layout = m_model->layout;
    auto violation = [&](const std::array<double, 3>& v) {
        double out = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
        {
            const auto& info = layout.joints[m_joints[i]];
            out += std::max(0.0, info.min - v[i]) + std::max(0.0, v[i] - info.max);
        }
        return out;
    };
    const auto [a, b, c] = pitch_roll_yaw(U);
    std::array<double, 3> s1{a, m_sign * b, m_sign * c};
    std::array<double, 3> s2{wrap_angle(a + std::numbers::pi), m_sign * wrap_angle(std::numbers::pi - b),
                             m_sign * wrap_angle(c + std::numbers::pi)};
    const auto& sh = violation(s2) < violation(s1) ? s2 : s1;
    const Mat3 rel = (rot_y(sh[0]) * rot_x(m_sign * sh[1]) * rot_z(m_sign * sh[2])).transpose() * F;
    const auto [ea, eb, ec] = pitch_roll_yaw(rel);
    (void)eb;
    std::array<double, 7> q{sh[0], sh[1], sh[2], -ea, m_sign * ec, 0.0, 0.0};
    for (std::size_t i = 0; i < 7; ++i)
    {
        const auto& info = layout.joints[m_joints[i]];
        q[i] = std::clamp(q[i], info.min, info.max);
    }
    return q;
}

ArmIkResult ArmIk::refine(const Mat3& upper_arm, const Mat3& forearm, const std::array<double, 7>& seed) const
{
    using Vec7 = Eigen::Matrix<double, 7, 1>;
    using Mat67 = Eigen::Matrix<double, 6, 7>;
    using Vec6 = Eigen::Matrix<double, 6, 1>;

    const auto& layout = m_model->layout;
    Vec7 q, lo, hi, center;
    for (std::size_t i = 0; i < 7; ++i)
    {
        const auto& info = layout.joints[m_joints[i]];
        lo(static_cast<Eigen::Index>(i)) = info.min;
        hi(static_cast<Eigen::Index>(i)) = info.max;
        center(static_cast<Eigen::Index>(i)) = 0.5 * (info.min + info.max);
        q(static_cast<Eigen::Index>(i)) = seed[i];
    }
    q = q.cwiseMax(lo).cwiseMin(hi);

    JointVector full;
    auto evaluate = [&](const Vec7& qq, Vec6& e, Mat67* J) {
        for (std::size_t i = 0; i < 7; ++i)
            full[m_joints[i]] = qq(static_cast<Eigen::Index>(i));
        const auto ts = m_model->tree.forward(Pose::Identity(), full);
        const Mat3 Rc = ts.links[static_cast<std::size_t>(m_chest)].linear();
        const Pose& U = ts.links[static_cast<std::size_t>(m_upper)];
        const Pose& F = ts.links[static_cast<std::size_t>(m_fore)];
        e.head<3>() = log_so3(Rc * upper_arm * U.linear().transpose());
        e.tail<3>() = log_so3(Rc * forearm * F.linear().transpose());
        if (J)
        {
            const MatX Ju = m_model->tree.frame_jacobian(ts, m_upper, U.translation());
            const MatX Jf = m_model->tree.frame_jacobian(ts, m_fore, F.translation());
            for (std::size_t i = 0; i < 7; ++i)
            {
                const auto col = static_cast<Eigen::Index>(6 + m_joints[i]);
                J->block<3, 1>(0, static_cast<Eigen::Index>(i)) = Ju.block<3, 1>(3, col);
                J->block<3, 1>(3, static_cast<Eigen::Index>(i)) = Jf.block<3, 1>(3, col);
            }
        }
    };

    ArmIkResult out;
    const double lambda2 = m_params.damping * m_params.damping;
    Vec6 e;
    Mat67 J;
    bool clamped_step = false;
    for (out.iterations = 0; out.iterations < m_params.max_iterations; ++out.iterations)
    {
        evaluate(q, e, &J);
        const Eigen::Matrix<double, 6, 6> JJt = J * J.transpose() + lambda2 * Eigen::Matrix<double, 6, 6>::Identity();
        Vec7 dq = J.transpose() * JJt.ldlt().solve(e);
        const Eigen::CompleteOrthogonalDecomposition<Mat67> cod(J);
        const Eigen::Matrix<double, 7, 7> N = Eigen::Matrix<double, 7, 7>::Identity() - cod.pseudoInverse() * J;
        dq += N * (m_params.null_gain * (center - q));

        const Vec7 raw = q + dq;
        const Vec7 next = raw.cwiseMax(lo).cwiseMin(hi);
        clamped_step = (next - raw).cwiseAbs().maxCoeff() > 1e-12;
        const double step = (next - q).norm();
        q = next;
        if (step < 1e-13)
            break;
    }
    evaluate(q, e, nullptr);
    out.error = e.norm();
    out.converged = out.error < m_params.tolerance;
    out.clamped = clamped_step && !out.converged;
    for (std::size_t i = 0; i < 7; ++i)
        out.q[i] = q(static_cast<Eigen::Index>(i));
    return out;
}

ArmTargets arm_targets(const OperatorFrame& frame, const Calibration& cal, Side side)
{
    const Mat3 chest_inv = frame.node(Node::Chest).toRotationMatrix().transpose();
    const Node up = side == Side::Left ? Node::LeftUpperArm : Node::RightUpperArm;
    const Node fo = side == Side::Left ? Node::LeftForearm : Node::RightForearm;
    ArmTargets t;
    t.upper_arm = chest_inv * frame.node(up).toRotationMatrix() * cal.alignment[static_cast<std::size_t>(up)];
    t.forearm = chest_inv * frame.node(fo).toRotationMatrix() * cal.alignment[static_cast<std::size_t>(fo)];
    return t;
}

std::array<double, 3> pitch_roll_yaw(const Mat3& R)
{
    const double roll = std::asin(std::clamp(-R(1, 2), -1.0, 1.0));
    const double pitch = std::atan2(R(0, 2), R(2, 2));
    const double yaw = std::atan2(R(1, 0), R(1, 1));
    return {pitch, roll, yaw};
}

ArmRetarget geometric_retarget_arms(const OperatorFrame& frame, const Calibration& cal,
                                    const model::RobotModel& model, const ArmIkParams& params,
                                    const std::optional<JointVector>& seed)
{
    frame.validate();
    ArmRetarget out;
    for (Side side : {Side::Left, Side::Right})
    {
        const ArmIk ik(model, side, params);
        std::array<double, 7> s{};
        if (seed)
            for (std::size_t i = 0; i < 7; ++i)
                s[i] = (*seed)[ik.joints()[i]];
        const ArmTargets t = arm_targets(frame, cal, side);
        const ArmIkResult r = ik.solve(t.upper_arm, t.forearm, s);
        out.arms[side == Side::Left ? 0 : 1] = r;
        out.clamped |= r.clamped;
        for (std::size_t i = 0; i < 7; ++i)
            out.q[ik.joints()[i]] = r.q[i];
    }

    // Torso from the chest tilt; the heading is left to locomotion.
    const Mat3 chest = frame.node(Node::Chest).toRotationMatrix() * cal.chest_alignment;
    const Vec3 x = chest.col(0);
    const Mat3 level = rot_z(-std::atan2(x.y(), x.x())) * chest;
    const auto [pitch, roll, yaw] = pitch_roll_yaw(level);
    (void)yaw;
    const std::size_t t0 = model::group_offset(JointGroup::Torso);
    out.q[t0 + 0] = clamp_joint(model, t0 + 0, pitch, out.clamped);
    out.q[t0 + 1] = clamp_joint(model, t0 + 1, roll, out.clamped);
    out.q[t0 + 2] = 0.0;
    return out;
}

HeadRef retarget_head(const OperatorFrame& frame, const model::RobotModel& model, const Calibration* cal)
{
    const Mat3 chest = frame.node(Node::Chest).toRotationMatrix();
    Mat3 neck = chest.transpose() * frame.head_pose.linear();
    if (cal)
        neck = neck * cal->head_alignment;
    const auto [pitch, roll, yaw] = pitch_roll_yaw(neck);

    const auto& layout = model.layout;
    HeadRef h;
    h.neck_pitch = clamp_joint(model, layout.index_of("neck_pitch"), pitch, h.clamped);
    h.neck_roll = clamp_joint(model, layout.index_of("neck_roll"), roll, h.clamped);
    h.neck_yaw = clamp_joint(model, layout.index_of("neck_yaw"), yaw, h.clamped);
    h.eyes.version = clamp_joint(model, layout.index_of("eyes_version"), frame.gaze.version, h.clamped);
    h.eyes.vergence = clamp_joint(model, layout.index_of("eyes_vergence"), frame.gaze.vergence, h.clamped);
    h.eyes.tilt = clamp_joint(model, layout.index_of("eyes_tilt"), frame.gaze.tilt, h.clamped);
    const auto& lid = layout.at(model.sensors.eyelid_joint);
    h.eyelids = lid.min + std::clamp(frame.eye_openness, 0.0, 1.0) * (lid.max - lid.min);
    return h;
}

FingerMotors retarget_fingers(const HandFlexion& flexion)
{
    HandFlexion f = flexion;
    for (double& v : f)
        v = std::clamp(v, 0.0, 1.0);
    const double ring_pinkie = 0.5 * (f[3] + f[4]);
    return {f[0], f[0], f[0], f[1], f[1], f[2], f[2], ring_pinkie, ring_pinkie};
}

void apply_finger_motors(const model::RobotModel& model, Side side, const FingerMotors& m, JointVector& q)
{
    const JointGroup g = side == Side::Left ? JointGroup::LeftHand : JointGroup::RightHand;
    const std::size_t off = model::group_offset(g);
    for (std::size_t i = 0; i < m.size(); ++i)
    {
        const auto& info = model.layout.joints[off + i];
        q[off + i] = info.min + std::clamp(m[i], 0.0, 1.0) * (info.max - info.min);
    }
}

locomotion::WalkingCommand LocomotionFilter::update(const Treadmill& t, double time)
{
    double u = t.speed < m_params.deadzone ? 0.0 : std::min(t.speed, m_params.max_speed);
    if (m_last_time && time > *m_last_time)
    {
        const double a = 1.0 - std::exp(-(time - *m_last_time) / m_params.tau);
        m_speed += a * (m_input - m_speed);
    }
    m_last_time = time;
    m_input = u;
    // Settle to an exact stop so the planner can stand.
    if (m_input == 0.0 && m_speed < 0.1 * m_params.deadzone)
        m_speed = 0.0;
    return {wrap_angle(t.ring_heading), m_speed};
}

int retarget_face(Expression e) { return static_cast<int>(e); }

int retarget_face(std::string_view label) { return retarget_face(expression_from_name(label)); }

// ---------------------------------------------------------------------------

Retargeter::Retargeter(const model::RobotModel& model, RetargetParams params)
    : m_model(&model)
    , m_params(params)
    , m_filter(params.locomotion)
{
}

void Retargeter::reset()
{
    m_filter.reset();
    m_seed.reset();
}

RetargetedRefs Retargeter::process(const OperatorFrame& in)
{
    if (!m_cal)
        throw RetargetError(RetargetErrc::NotCalibrated);
    in.validate();
    OperatorFrame frame = in;
    frame.clamp_ranges();

    RetargetedRefs out;
    out.t = frame.timestamp;
    const ArmRetarget arms = geometric_retarget_arms(frame, *m_cal, *m_model, m_params.ik, m_seed);
    out.posture_ref = arms.q;
    out.arms = arms.arms;
    out.clamped = arms.clamped;

    out.head = retarget_head(frame, *m_model, &*m_cal);
    out.clamped |= out.head.clamped;
    const auto& layout = m_model->layout;
    out.posture_ref[layout.index_of("neck_pitch")] = out.head.neck_pitch;
    out.posture_ref[layout.index_of("neck_roll")] = out.head.neck_roll;
    out.posture_ref[layout.index_of("neck_yaw")] = out.head.neck_yaw;
    out.posture_ref[layout.index_of("eyes_version")] = out.head.eyes.version;
    out.posture_ref[layout.index_of("eyes_vergence")] = out.head.eyes.vergence;
    out.posture_ref[layout.index_of("eyes_tilt")] = out.head.eyes.tilt;
    out.posture_ref[layout.index_of(m_model->sensors.eyelid_joint)] = out.head.eyelids;

    for (Side side : {Side::Left, Side::Right})
    {
        auto& motors = out.fingers[side == Side::Left ? 0 : 1];
        motors = retarget_fingers(frame.fingers[side == Side::Left ? 0 : 1]);
        apply_finger_motors(*m_model, side, motors, out.posture_ref);
    }
    out.clamped |= layout.clamp(out.posture_ref);

    out.walking = m_filter.update(frame.treadmill, frame.timestamp);
    out.face = retarget_face(frame.expression);

    if (!layout.within_limits(out.posture_ref))
        throw std::logic_error("retargeting emitted an out-of-limit reference");
    m_seed = out.posture_ref;
    return out;
}

} // namespace avatar::retargeting

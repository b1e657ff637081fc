#pragma once

#include <avatar/locomotion/qp.hpp>
#include <avatar/model/robot_model.hpp>

#include <optional>
#include <vector>

namespace avatar::locomotion {

using Vec6 = Eigen::Matrix<double, 6, 1>;

struct WholeBodyParams
{
    double dt{0.01};
    /// Task error gains, 1/s.
    double k_com{10.0};
    double k_foot{10.0};
    double k_root{10.0};
    double k_torso{5.0};
    double k_posture{10.0};
    /// Default low-priority weights.
    double w_torso{10.0};
    double w_posture{1.0};
    /// Posture weight multipliers per joint group.
    double posture_scale_arms{1.0};
    double posture_scale_torso{1.0};
    double posture_scale_legs{0.01};
    /// Tikhonov term keeping the Hessian positive definite.
    double regularization{1e-6};
    /// Magnitude used for the (inactive) bounds of base velocities.
    double base_velocity_bound{1e3};
};

/// Reference for a foot sole frame with its feedforward twist.
struct FootTask
{
    Pose pose{Pose::Identity()};
    Vec6 velocity{Vec6::Zero()};
};

struct TaskStack
{
    // High priority: equality constraints.
    Vec3 com{Vec3::Zero()};
    Vec3 com_velocity{Vec3::Zero()};
    FootTask left_foot;
    FootTask right_foot;
    double root_height{0.0};
    bool root_height_active{true};

    // Low priority: weighted costs.
    Mat3 torso_orientation{Mat3::Identity()};
    double w_torso{10.0};
    double w_posture{1.0};
    std::optional<model::JointVector> posture_ref;
};

struct RobotState
{
    Pose base{Pose::Identity()};
    model::JointVector q;
};

/// Where each row block of the assembled problem comes from.
/// The CoM rows constrain the horizontal CoM; its height is held through the
/// root link.
struct TaskRows
{
    Eigen::Index com{0};
    Eigen::Index left_foot{2};
    Eigen::Index right_foot{8};
    Eigen::Index root_height{14};
    Eigen::Index count{15};
};

struct WholeBodySolution
{
    QpStatus status{QpStatus::Malformed};
    bool ok{false};
    RobotState reference;
    /// Base twist then controlled joint rates, in variable order.
    VecX velocity;
    /// Norm of A_eq x - b_eq.
    double high_residual{0.0};
    double torso_residual{0.0};
    double posture_residual{0.0};
    KktReport kkt;
    int iterations{0};
};

/// Velocity-level stack of tasks. Decision variables are the base twist and
/// the torso, leg and arm joint rates; neck, eyes and hands are not part of
/// the problem.
class WholeBodyController
{
public:
    WholeBodyController(const model::RobotModel& model, WholeBodyParams params = {});

    const std::vector<std::size_t>& controlled_joints() const { return m_joints; }
    Eigen::Index variables() const { return 6 + static_cast<Eigen::Index>(m_joints.size()); }
    const TaskRows& rows() const { return m_rows; }
    const WholeBodyParams& params() const { return m_params; }

    QpProblem assemble(const TaskStack& stack, const RobotState& state) const;
    /// Solves and integrates one tick. On failure the returned reference is
    /// the input state and ok is false.
    WholeBodySolution solve(const TaskStack& stack, const RobotState& state) const;

    /// Task stack whose references all equal the current state.
    TaskStack hold_stack(const RobotState& state) const;

    Vec3 com(const RobotState& state) const;
    Pose sole(const RobotState& state, model::Side side) const;
    Mat3 chest_orientation(const RobotState& state) const;

private:
    const model::RobotModel* m_model;
    WholeBodyParams m_params;
    std::vector<std::size_t> m_joints;
    VecX m_posture_scale;
    TaskRows m_rows;
    int m_left_sole{0};
    int m_right_sole{0};
    int m_chest{0};
};

/// Twist that moves `from` onto `to` in one second (position error, then
/// rotation vector of the orientation error), both in the world frame.
Vec6 pose_error(const Pose& from, const Pose& to);

} // namespace avatar::locomotion

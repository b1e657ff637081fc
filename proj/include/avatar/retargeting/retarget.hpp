#pragma once

#include <avatar/locomotion/walking.hpp>
#include <avatar/model/robot_model.hpp>
#include <avatar/retargeting/operator_frame.hpp>

#include <array>
#include <optional>
#include <vector>

namespace avatar::retargeting {

struct CalibrationParams
{
    /// Minimum span of the N-pose recording, s.
    double min_duration{1.0};
    /// RMS angular deviation allowed for any node, rad.
    double max_deviation{0.05};
};

/// Alignment captured in the N-pose, which maps to the robot zero posture.
/// Every tracked orientation o is turned into a robot-side orientation as
/// o * alignment (mounting offsets sit on the right).
struct Calibration
{
    /// Mean world orientation of each node during calibration.
    std::array<Quat, kNodes> reference{};
    /// Per arm node, indexed by Node (the chest entry is unused):
    /// rel_cal^-1 * R0 with rel the node seen from the chest node and R0 the
    /// robot link orientation at zero posture.
    std::array<Mat3, kNodes> alignment{};
    /// Chest node: reference^-1.
    Mat3 chest_alignment{Mat3::Identity()};
    /// Head seen from the chest, inverse of its calibration value.
    Mat3 head_alignment{Mat3::Identity()};
    /// Largest RMS deviation measured over the window, rad.
    double deviation{0.0};

    bool operator==(const Calibration& o) const;
};

/// Throws InsufficientFrames (empty or shorter than min_duration) and
/// OperatorMoving.
Calibration calibrate(const std::vector<OperatorFrame>& frames, const model::RobotModel& model,
                      const CalibrationParams& params = {});

/// Identity alignment: tracked orientations are used as they come.
Calibration identity_calibration(const model::RobotModel& model);

struct ArmIkParams
{
    double damping{0.05};
    /// Orientation error under which a solve counts as converged, rad.
    double tolerance{1e-3};
    int max_iterations{50};
    /// Pull of the joints the targets leave free towards their limit centre.
    double null_gain{0.5};
};

struct ArmIkResult
{
    std::array<double, 7> q{};
    bool converged{false};
    bool clamped{false};
    /// Norm of the stacked upper arm / forearm orientation errors, rad.
    double error{0.0};
    int iterations{0};
};

/// Orientation-only damped least squares on one arm. Targets are the upper
/// arm and forearm link orientations in the chest frame. The wrist pitch and
/// yaw joints do not move either link; they sit in the null space and are
/// pinned to their limit centre. A solve that does not converge from the
/// seed is retried from the closed-form decomposition of the chain.
class ArmIk
{
public:
    ArmIk(const model::RobotModel& model, model::Side side, ArmIkParams params = {});

    ArmIkResult solve(const Mat3& upper_arm, const Mat3& forearm, const std::array<double, 7>& seed) const;
    /// Upper arm and forearm orientations in the chest frame.
    std::pair<Mat3, Mat3> forward(const std::array<double, 7>& q) const;

    const std::vector<std::size_t>& joints() const { return m_joints; }
    /// Local indices moved by neither target.
    static constexpr std::array<std::size_t, 2> kNullJoints{5, 6};
    const ArmIkParams& params() const { return m_params; }

    /// Closed-form joints from the chain structure, clamped; wrist joints zero.
    std::array<double, 7> analytic_seed(const Mat3& upper_arm, const Mat3& forearm) const;

private:
    ArmIkResult refine(const Mat3& upper_arm, const Mat3& forearm, const std::array<double, 7>& seed) const;

    const model::RobotModel* m_model;
    ArmIkParams m_params;
    std::vector<std::size_t> m_joints;
    double m_sign{1.0};
    std::pair<Mat3, Mat3> m_zero;
    int m_chest{0};
    int m_upper{0};
    int m_fore{0};
};

struct ArmTargets
{
    Mat3 upper_arm{Mat3::Identity()};
    Mat3 forearm{Mat3::Identity()};
};

/// Robot-side link targets of one arm from a frame.
ArmTargets arm_targets(const OperatorFrame& frame, const Calibration& cal, model::Side side);

struct ArmRetarget
{
    /// Arm and torso groups populated, every other joint zero.
    model::JointVector q;
    std::array<ArmIkResult, 2> arms;
    bool clamped{false};
};

ArmRetarget geometric_retarget_arms(const OperatorFrame& frame, const Calibration& cal, const model::RobotModel& model,
                                    const ArmIkParams& params = {},
                                    const std::optional<model::JointVector>& seed = std::nullopt);

struct HeadRef
{
    double neck_pitch{0.0};
    double neck_roll{0.0};
    double neck_yaw{0.0};
    Gaze eyes;
    /// Eyelid actuator position, rad (closed limit when the eyes are shut).
    double eyelids{0.0};
    bool clamped{false};
};

/// Decomposes R = Ry(pitch) Rx(roll) Rz(yaw), the neck joint order.
std::array<double, 3> pitch_roll_yaw(const Mat3& R);

HeadRef retarget_head(const OperatorFrame& frame, const model::RobotModel& model,
                      const Calibration* cal = nullptr);

/// Motor order: thumb oppose, proximal, distal; index proximal, distal;
/// middle proximal, distal; ring+pinkie proximal, distal. Values in [0, 1].
using FingerMotors = std::array<double, 9>;
FingerMotors retarget_fingers(const HandFlexion& flexion);

struct LocomotionFilterParams
{
    double deadzone{0.05};
    double max_speed{0.25};
    double tau{0.3};
};

/// Treadmill to walking command: dead zone, clamp, first-order low-pass.
class LocomotionFilter
{
public:
    explicit LocomotionFilter(LocomotionFilterParams p = {})
        : m_params(p)
    {
    }

    locomotion::WalkingCommand update(const Treadmill& t, double time);
    void reset()
    {
        m_last_time.reset();
        m_speed = 0.0;
        m_input = 0.0;
    }
    const LocomotionFilterParams& params() const { return m_params; }

private:
    LocomotionFilterParams m_params;
    std::optional<double> m_last_time;
    double m_speed{0.0};
    /// Input held since the previous update.
    double m_input{0.0};
};

/// LED pattern id of an expression.
int retarget_face(Expression e);
/// Throws UnknownExpression.
int retarget_face(std::string_view label);

struct RetargetedRefs
{
    double t{0.0};
    /// Arms and torso from the suit, head and hands from their interfaces,
    /// legs zero.
    model::JointVector posture_ref;
    HeadRef head;
    std::array<FingerMotors, 2> fingers{};
    locomotion::WalkingCommand walking;
    int face{0};
    bool clamped{false};
    std::array<ArmIkResult, 2> arms;
};

struct RetargetParams
{
    ArmIkParams ik;
    LocomotionFilterParams locomotion;
};

/// Per-frame operator pipeline. State: calibration, the locomotion filter and
/// the previous arm solution used as IK seed.
class Retargeter
{
public:
    Retargeter(const model::RobotModel& model, RetargetParams params = {});

    void set_calibration(const Calibration& cal) { m_cal = cal; }
    const std::optional<Calibration>& calibration() const { return m_cal; }
    void reset();

    /// Throws NotCalibrated and InvalidFrame.
    RetargetedRefs process(const OperatorFrame& frame);

private:
    const model::RobotModel* m_model;
    RetargetParams m_params;
    std::optional<Calibration> m_cal;
    LocomotionFilter m_filter;
    std::optional<model::JointVector> m_seed;
};

/// Fills hand joints of q from motor values.
void apply_finger_motors(const model::RobotModel& model, model::Side side, const FingerMotors& m, model::JointVector& q);

} // namespace avatar::retargeting

#pragma once

#include <avatar/common/error.hpp>
#include <avatar/model/robot_model.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avatar::lowlevel {

enum class LowlevelErrc
{
    NonpositiveDuration,
    ModeMismatch,
    UnknownJoint,
    BadGains,
};

constexpr std::string_view to_string(LowlevelErrc c)
{
    switch (c)
    {
    case LowlevelErrc::NonpositiveDuration: return "NonpositiveDuration";
    case LowlevelErrc::ModeMismatch: return "ModeMismatch";
    case LowlevelErrc::UnknownJoint: return "UnknownJoint";
    case LowlevelErrc::BadGains: return "BadGains";
    }
    return "LowlevelError";
}

using LowlevelError = Error<LowlevelErrc>;

/// Board control loop period.
inline constexpr double kBoardDt = 1e-3;

enum class ControlMode
{
    Position,
    PositionDirect,
    Velocity,
    Torque,
    Current,
    Pwm,
};

std::string_view mode_name(ControlMode m);
std::optional<ControlMode> mode_from_name(std::string_view name);
/// Torque, Current and Pwm are only available on brushless (EMS/2FOC) joints.
bool requires_brushless(ControlMode m);

struct PidGains
{
    double kp{0.0};
    double ki{0.0};
    double kd{0.0};
    double output_limit{1.0};
    double integral_limit{1.0};

    void validate() const;
};

// ---------------------------------------------------------------------------
// Minimum jerk

struct MinJerkRef
{
    double q0{0.0};
    double qf{0.0};
    double duration{1.0}; // seconds
    double t0{0.0};
};

struct MinJerkSample
{
    double position{0.0};
    double velocity{0.0};
    double acceleration{0.0};
};

/// Rest-to-rest quintic: s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5 with
/// tau = clamp((t - t0) / T, 0, 1). Holds the end points outside [t0, t0+T].
MinJerkSample min_jerk_eval(const MinJerkRef& ref, double t);

// ---------------------------------------------------------------------------
// Friction

struct FrictionParams
{
    double coulomb{0.0}; // N m
    double viscous{0.0}; // N m s / rad
};

/// Coulomb plus viscous friction, with sign(0) = 0.
double friction_feedforward(const FrictionParams& params, double velocity);

// ---------------------------------------------------------------------------
// Joint servo

struct Measured
{
    double position{0.0};
    double velocity{0.0};
    double torque{0.0};
    double current{0.0};
};

struct ServoConfig
{
    PidGains position{10.0, 1.0, 0.05, 100.0, 10.0};
    PidGains torque{1.0, 0.5, 0.0, 100.0, 10.0};
    PidGains current{0.5, 20.0, 0.0, 1.0, 0.05};
    FrictionParams friction{};
    bool brushless{false};
    /// Duration of the minimum jerk trajectory generated in Position mode.
    double trajectory_time{0.5};
};

struct ServoReference
{
    ControlMode mode{ControlMode::Position};
    double value{0.0};
    /// Torque mode only.
    double feedforward{0.0};
};

struct ActuatorCommand
{
    double value{0.0};
    bool saturated{false};
};

struct JointServoState
{
    ControlMode mode{ControlMode::Position};
    double setpoint{0.0};
    double reference{0.0};
    double integrator{0.0};
    double last_error{0.0};
    Measured measured{};
    std::optional<MinJerkRef> trajectory;
};

class JointServo
{
public:
    explicit JointServo(ServoConfig config = {});

    void set_mode(ControlMode mode, const Measured& measured, double now);
    /// Installs a new reference; its mode must match the active mode.
    void set_reference(const ServoReference& ref, double now);
    /// Runs one board period. `now` is the board time at the start of the tick.
    ActuatorCommand tick(const Measured& measured, double now);

    ControlMode mode() const { return m_state.mode; }
    /// Position the loop is currently tracking (position-type modes).
    double position_setpoint() const { return m_state.setpoint; }
    const JointServoState& state() const { return m_state; }
    const ServoConfig& config() const { return m_config; }

private:
    ActuatorCommand pid(const PidGains& gains, double error, double measurement, double extra);

    ServoConfig m_config;
    JointServoState m_state;
    double m_last_measurement{0.0};
    bool m_has_last{false};
    double m_feedforward_pending{0.0};
};

// ---------------------------------------------------------------------------
// Board

struct BoardJointCommand
{
    std::size_t local{0};
    ServoReference ref{};
};

/// A motor control board: a set of joint servos ticked together at 1 kHz.
class ControlBoard
{
public:
    ControlBoard(int id, std::vector<std::size_t> joints, const model::RobotModel& model, const ServoConfig& base);

    int id() const { return m_id; }
    const std::vector<std::size_t>& joints() const { return m_joints; }
    std::size_t size() const { return m_joints.size(); }

    void set_mode(std::size_t local, ControlMode mode, const Measured& measured);
    void command(const BoardJointCommand& cmd);
    /// One 1 ms period. `measured` is indexed like joints().
    std::vector<ActuatorCommand> tick(const std::vector<Measured>& measured);

    JointServo& servo(std::size_t local) { return m_servos.at(local); }
    const JointServo& servo(std::size_t local) const { return m_servos.at(local); }
    double friction_feedforward(std::string_view joint, double velocity) const;
    double time() const { return m_time; }
    std::uint64_t ticks() const { return m_ticks; }

private:
    int m_id;
    std::vector<std::size_t> m_joints;
    std::vector<std::string> m_names;
    std::vector<JointServo> m_servos;
    double m_time{0.0};
    std::uint64_t m_ticks{0};
};

} // namespace avatar::lowlevel

#include <avatar/lowlevel/servo.hpp>

#include <algorithm>
#include <cmath>

namespace avatar::lowlevel {

std::string_view mode_name(ControlMode m)
{
    switch (m)
    {
    case ControlMode::Position: return "position";
    case ControlMode::PositionDirect: return "position_direct";
    case ControlMode::Velocity: return "velocity";
    case ControlMode::Torque: return "torque";
    case ControlMode::Current: return "current";
    case ControlMode::Pwm: return "pwm";
    }
    return "unknown";
}

std::optional<ControlMode> mode_from_name(std::string_view name)
{
    for (auto m : {ControlMode::Position, ControlMode::PositionDirect, ControlMode::Velocity, ControlMode::Torque,
                   ControlMode::Current, ControlMode::Pwm})
        if (mode_name(m) == name)
            return m;
    return std::nullopt;
}

bool requires_brushless(ControlMode m)
{
    return m == ControlMode::Torque || m == ControlMode::Current || m == ControlMode::Pwm;
}

void PidGains::validate() const
{
    if (kp < 0.0 || ki < 0.0 || kd < 0.0 || output_limit <= 0.0 || integral_limit <= 0.0)
        throw LowlevelError(LowlevelErrc::BadGains);
}

MinJerkSample min_jerk_eval(const MinJerkRef& ref, double t)
{
    if (!(ref.duration > 0.0))
        throw LowlevelError(LowlevelErrc::NonpositiveDuration, std::to_string(ref.duration));

    const double T = ref.duration;
    const double tau = (t - ref.t0) / T;
    const double dq = ref.qf - ref.q0;
    // Endpoints compare against the times themselves so that t == t0 + T
    // hits qf exactly even when the division rounds below 1.
    if (t <= ref.t0 || tau <= 0.0)
        return {ref.q0, 0.0, 0.0};
    if (t >= ref.t0 + T || tau >= 1.0)
        return {ref.qf, 0.0, 0.0};

    const double t2 = tau * tau;
    const double t3 = t2 * tau;
    const double s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
    const double ds = 30.0 * t2 * (1.0 - 2.0 * tau + t2);
    const double dds = 60.0 * tau * (1.0 - 3.0 * tau + 2.0 * t2);
    return {ref.q0 + dq * s, dq * ds / T, dq * dds / (T * T)};
}

double friction_feedforward(const FrictionParams& params, double velocity)
{
    const double sign = velocity > 0.0 ? 1.0 : (velocity < 0.0 ? -1.0 : 0.0);
    return params.coulomb * sign + params.viscous * velocity;
}

JointServo::JointServo(ServoConfig config)
    : m_config(config)
{
    m_config.position.validate();
    m_config.torque.validate();
    m_config.current.validate();
    if (!(m_config.trajectory_time > 0.0))
        throw LowlevelError(LowlevelErrc::NonpositiveDuration, "trajectory_time");
}

void JointServo::set_mode(ControlMode mode, const Measured& measured, double now)
{
    if (requires_brushless(mode) && !m_config.brushless)
        throw LowlevelError(LowlevelErrc::ModeMismatch, std::string(mode_name(mode)) + " needs a brushless joint");

    m_state.mode = mode;
    m_state.measured = measured;
    m_state.integrator = 0.0;
    m_state.last_error = 0.0;
    m_state.trajectory.reset();
    // Re-seed from the measurement so position-type loops start with zero error.
    m_state.setpoint = measured.position;
    switch (mode)
    {
    case ControlMode::Position:
        m_state.reference = measured.position;
        m_state.trajectory = MinJerkRef{measured.position, measured.position, m_config.trajectory_time, now};
        break;
    case ControlMode::PositionDirect:
    case ControlMode::Velocity: m_state.reference = measured.position; break;
    default: m_state.reference = 0.0; break;
    }
    m_last_measurement = measured.position;
    m_has_last = false;
}

void JointServo::set_reference(const ServoReference& ref, double now)
{
    if (ref.mode != m_state.mode)
        throw LowlevelError(LowlevelErrc::ModeMismatch,
                            std::string(mode_name(ref.mode)) + " reference in " + std::string(mode_name(m_state.mode)) +
                                " mode");
    switch (ref.mode)
    {
    case ControlMode::Position:
        if (ref.value != m_state.reference)
        {
            m_state.trajectory = MinJerkRef{m_state.setpoint, ref.value, m_config.trajectory_time, now};
            m_state.reference = ref.value;
        }
        break;
    case ControlMode::PositionDirect:
        m_state.reference = ref.value;
        m_state.setpoint = ref.value;
        break;
    case ControlMode::Velocity:
    case ControlMode::Torque:
    case ControlMode::Current:
    case ControlMode::Pwm: m_state.reference = ref.value; break;
    }
    m_feedforward_pending = ref.feedforward;
}

ActuatorCommand JointServo::pid(const PidGains& g, double error, double measurement, double extra)
{
    m_state.integrator = std::clamp(m_state.integrator + error * kBoardDt, -g.integral_limit, g.integral_limit);
    // Derivative on measurement avoids a kick on setpoint steps.
    const double d = m_has_last ? (measurement - m_last_measurement) / kBoardDt : 0.0;
    m_last_measurement = measurement;
    m_has_last = true;
    m_state.last_error = error;

    const double raw = g.kp * error + g.ki * m_state.integrator - g.kd * d + extra;
    const double out = std::clamp(raw, -g.output_limit, g.output_limit);
    return {out, out != raw};
}

ActuatorCommand JointServo::tick(const Measured& measured, double now)
{
    m_state.measured = measured;
    switch (m_state.mode)
    {
    case ControlMode::Position:
        if (m_state.trajectory)
            m_state.setpoint = min_jerk_eval(*m_state.trajectory, now).position;
        return pid(m_config.position, m_state.setpoint - measured.position, measured.position, 0.0);
    case ControlMode::PositionDirect:
        return pid(m_config.position, m_state.setpoint - measured.position, measured.position, 0.0);
    case ControlMode::Velocity:
        m_state.setpoint += m_state.reference * kBoardDt;
        return pid(m_config.position, m_state.setpoint - measured.position, measured.position, 0.0);
    case ControlMode::Torque:
    {
        const double extra = m_feedforward_pending + friction_feedforward(m_config.friction, measured.velocity);
        return pid(m_config.torque, m_state.reference - measured.torque, measured.torque, extra);
    }
    case ControlMode::Current:
    {
        // PI only; duty cycle in [-1, 1].
        PidGains g = m_config.current;
        g.kd = 0.0;
        g.output_limit = std::min(g.output_limit, 1.0);
        return pid(g, m_state.reference - measured.current, measured.current, 0.0);
    }
    case ControlMode::Pwm:
    {
        const double out = std::clamp(m_state.reference, -1.0, 1.0);
        return {out, out != m_state.reference};
    }
    }
    return {};
}

// ---------------------------------------------------------------------------

ControlBoard::ControlBoard(int id, std::vector<std::size_t> joints, const model::RobotModel& model,
                           const ServoConfig& base)
    : m_id(id)
    , m_joints(std::move(joints))
{
    for (std::size_t j : m_joints)
    {
        if (j >= model.dofs())
            throw LowlevelError(LowlevelErrc::UnknownJoint, "index " + std::to_string(j));
        ServoConfig cfg = base;
        cfg.brushless = model.torque_capable(j);
        m_servos.emplace_back(cfg);
        m_names.push_back(model.layout.joints[j].name);
    }
}

void ControlBoard::set_mode(std::size_t local, ControlMode mode, const Measured& measured)
{
    if (local >= m_servos.size())
        throw LowlevelError(LowlevelErrc::UnknownJoint, "local " + std::to_string(local));
    m_servos[local].set_mode(mode, measured, m_time);
}

void ControlBoard::command(const BoardJointCommand& cmd)
{
    if (cmd.local >= m_servos.size())
        throw LowlevelError(LowlevelErrc::UnknownJoint, "local " + std::to_string(cmd.local));
    m_servos[cmd.local].set_reference(cmd.ref, m_time);
}

std::vector<ActuatorCommand> ControlBoard::tick(const std::vector<Measured>& measured)
{
    std::vector<ActuatorCommand> out(m_servos.size());
    for (std::size_t i = 0; i < m_servos.size(); ++i)
        out[i] = m_servos[i].tick(measured.at(i), m_time);
    ++m_ticks;
    m_time = static_cast<double>(m_ticks) * kBoardDt;
    return out;
}

double ControlBoard::friction_feedforward(std::string_view joint, double velocity) const
{
    for (std::size_t i = 0; i < m_names.size(); ++i)
    {
        if (m_names[i] == joint)
        {
            if (!m_servos[i].config().brushless)
                throw LowlevelError(LowlevelErrc::ModeMismatch, std::string(joint) + " is not torque capable");
            return lowlevel::friction_feedforward(m_servos[i].config().friction, velocity);
        }
    }
    throw LowlevelError(LowlevelErrc::UnknownJoint, std::string(joint));
}

} // namespace avatar::lowlevel

#pragma once

#include <avatar/common/error.hpp>
#include <avatar/locomotion/walking.hpp>
#include <avatar/model/robot_model.hpp>
#include <avatar/retargeting/operator_frame.hpp>

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>

namespace avatar::sim {
class AvatarStack;
}

namespace avatar::gateway {

/// Schema version carried in every message as "v".
inline constexpr int kProtocolVersion = 1;

enum class GatewayErrc
{
    PortInUse,
    BadRole,
    BadMessage,
    Rejected,
};

constexpr std::string_view to_string(GatewayErrc c)
{
    switch (c)
    {
    case GatewayErrc::PortInUse: return "PortInUse";
    case GatewayErrc::BadRole: return "BadRole";
    case GatewayErrc::BadMessage: return "BadMessage";
    case GatewayErrc::Rejected: return "Rejected";
    }
    return "?";
}

using GatewayError = Error<GatewayErrc>;

enum class Role
{
    Operator,
    Recipient,
    Observer,
};

std::string_view role_name(Role r);
std::optional<Role> role_from_name(std::string_view name);

enum class CommandKind
{
    Walk,
    ArmPose,
    Fingers,
    Face,
    Eyelids,
    Head,
    InjectTouch,
};

std::string_view command_kind_name(CommandKind k);
std::optional<CommandKind> command_kind_from_name(std::string_view name);

/// Observers send nothing, recipients only touch, operators everything else.
bool role_allows(Role role, CommandKind kind);

/// A validated console command, ready to publish.
struct ConsoleCommand
{
    CommandKind kind{CommandKind::Walk};
    locomotion::WalkingCommand walk;
    /// ArmPose: the complete arm and torso posture after applying the
    /// preset or the deltas.
    model::JointVector posture;
    /// Fingers: one hand, or both when empty.
    std::optional<model::Side> side;
    retargeting::HandFlexion flexion{};
    retargeting::Expression expression{retargeting::Expression::Neutral};
    /// Eyelids: 0 closed, 1 open.
    double openness{1.0};
    double yaw{0.0};
    double pitch{0.0};
    model::SkinPatch patch{model::SkinPatch::LeftUpperArm};
    double intensity{0.0};
};

/// Parses console "cmd" messages and checks them against the model limits.
/// Arm deltas accumulate on the last accepted posture, so the validator
/// holds state and one instance serves all clients.
class CommandValidator
{
public:
    CommandValidator(const model::RobotModel& model, double max_speed);

    /// Throws BadRole when the role may not send this kind, BadMessage when
    /// fields are missing or mistyped and Rejected when a value is outside
    /// its limits. A rejected command leaves the state unchanged.
    ConsoleCommand parse(const nlohmann::json& msg, Role role);

    const model::JointVector& posture() const { return m_posture; }
    double max_speed() const { return m_max_speed; }

private:
    ConsoleCommand parse_body(const nlohmann::json& msg, CommandKind kind) const;

    const model::RobotModel* m_model;
    double m_max_speed;
    model::JointVector m_posture;
};

/// Publishes the command through the operator side of the stack.
void apply_command(sim::AvatarStack& stack, const ConsoleCommand& cmd);

} // namespace avatar::gateway

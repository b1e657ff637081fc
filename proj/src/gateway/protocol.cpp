#include <avatar/gateway/protocol.hpp>

#include <avatar/retargeting/retarget.hpp>
#include <avatar/sim/stack.hpp>

#include <array>
#include <cmath>
#include <numbers>

namespace avatar::gateway {

namespace {

using nlohmann::json;

constexpr std::array<std::pair<Role, std::string_view>, 3> kRoles = {{
    {Role::Operator, "operator"},
    {Role::Recipient, "recipient"},
    {Role::Observer, "observer"},
}};

constexpr std::array<std::pair<CommandKind, std::string_view>, 7> kKinds = {{
    {CommandKind::Walk, "walk"},
    {CommandKind::ArmPose, "arm_pose"},
    {CommandKind::Fingers, "fingers"},
    {CommandKind::Face, "face"},
    {CommandKind::Eyelids, "eyelids"},
    {CommandKind::Head, "head"},
    {CommandKind::InjectTouch, "inject_touch"},
}};

[[noreturn]] void bad(const std::string& what) { throw GatewayError(GatewayErrc::BadMessage, what); }
[[noreturn]] void reject(const std::string& what) { throw GatewayError(GatewayErrc::Rejected, what); }

const json& field(const json& msg, const char* key)
{
    const auto it = msg.find(key);
    if (it == msg.end())
        bad(std::string("missing field ") + key);
    return *it;
}

double number(const json& msg, const char* key)
{
    const json& v = field(msg, key);
    if (!v.is_number())
        bad(std::string(key) + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
        reject(std::string(key) + " is not finite");
    return d;
}

std::string text(const json& msg, const char* key)
{
    const json& v = field(msg, key);
    if (!v.is_string())
        bad(std::string(key) + " must be a string");
    return v.get<std::string>();
}

void in_range(double v, double lo, double hi, const std::string& what)
{
    if (!(v >= lo && v <= hi))
        reject(what + " = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

bool arm_or_torso(model::JointGroup g)
{
    return g == model::JointGroup::LeftArm || g == model::JointGroup::RightArm || g == model::JointGroup::Torso;
}

} // namespace

std::string_view role_name(Role r)
{
    for (const auto& [role, name] : kRoles)
        if (role == r)
            return name;
    return "?";
}

std::optional<Role> role_from_name(std::string_view name)
{
    for (const auto& [role, n] : kRoles)
        if (n == name)
            return role;
    return std::nullopt;
}

std::string_view command_kind_name(CommandKind k)
{
    for (const auto& [kind, name] : kKinds)
        if (kind == k)
            return name;
    return "?";
}

std::optional<CommandKind> command_kind_from_name(std::string_view name)
{
    for (const auto& [kind, n] : kKinds)
        if (n == name)
            return kind;
    return std::nullopt;
}

bool role_allows(Role role, CommandKind kind)
{
    switch (role)
    {
    case Role::Operator: return kind != CommandKind::InjectTouch;
    case Role::Recipient: return kind == CommandKind::InjectTouch;
    case Role::Observer: return false;
    }
    return false;
}

CommandValidator::CommandValidator(const model::RobotModel& model, double max_speed)
    : m_model(&model)
    , m_max_speed(max_speed)
    , m_posture(sim::pose_preset(model, "rest"))
{
}

ConsoleCommand CommandValidator::parse(const json& msg, Role role)
{
    if (!msg.is_object())
        bad("message must be an object");
    const std::string kind_name = text(msg, "kind");
    const auto kind = command_kind_from_name(kind_name);
    if (!kind)
        bad("unknown command kind " + kind_name);
    if (!role_allows(role, *kind))
        throw GatewayError(GatewayErrc::BadRole,
                           std::string(role_name(role)) + " may not send " + std::string(kind_name));
    ConsoleCommand cmd = parse_body(msg, *kind);
    if (cmd.kind == CommandKind::ArmPose)
        m_posture = cmd.posture;
    return cmd;
}

ConsoleCommand CommandValidator::parse_body(const json& msg, CommandKind kind) const
{
    const auto& layout = m_model->layout;
    ConsoleCommand cmd;
    cmd.kind = kind;
    switch (kind)
    {
    case CommandKind::Walk: {
        cmd.walk.heading = number(msg, "heading");
        cmd.walk.speed = number(msg, "speed");
        in_range(cmd.walk.heading, -std::numbers::pi, std::numbers::pi, "heading");
        in_range(cmd.walk.speed, 0.0, m_max_speed, "speed");
        break;
    }
    case CommandKind::ArmPose: {
        const bool has_preset = msg.contains("preset");
        const bool has_deltas = msg.contains("deltas");
        if (has_preset == has_deltas)
            bad("arm_pose needs exactly one of preset, deltas");
        if (has_preset)
        {
            const std::string name = text(msg, "preset");
            try
            {
                cmd.posture = sim::pose_preset(*m_model, name);
            }
            catch (const std::invalid_argument&)
            {
                reject("unknown preset " + name);
            }
            break;
        }
        const json& deltas = msg["deltas"];
        if (!deltas.is_object() || deltas.empty())
            bad("deltas must be a non-empty object of joint name to radians");
        cmd.posture = m_posture;
        for (const auto& [name, value] : deltas.items())
        {
            const auto idx = layout.find(name);
            if (!idx)
                reject("unknown joint " + name);
            const auto& info = layout.joints[*idx];
            if (!arm_or_torso(info.group))
                reject(name + " is not an arm or torso joint");
            if (!value.is_number())
                bad("delta of " + name + " must be a number");
            const double d = value.get<double>();
            if (!std::isfinite(d))
                reject("delta of " + name + " is not finite");
            cmd.posture[*idx] += d;
            in_range(cmd.posture[*idx], info.min, info.max, name);
        }
        break;
    }
    case CommandKind::Fingers: {
        const std::string side = msg.contains("side") ? text(msg, "side") : "both";
        if (side == "left")
            cmd.side = model::Side::Left;
        else if (side == "right")
            cmd.side = model::Side::Right;
        else if (side != "both")
            reject("side must be left, right or both");
        const json& f = field(msg, "flexion");
        if (f.is_number())
            cmd.flexion.fill(f.get<double>());
        else if (f.is_array() && f.size() == cmd.flexion.size())
        {
            for (std::size_t i = 0; i < cmd.flexion.size(); ++i)
            {
                if (!f[i].is_number())
                    bad("flexion entries must be numbers");
                cmd.flexion[i] = f[i].get<double>();
            }
        }
        else
            bad("flexion must be a number or an array of 5");
        for (double v : cmd.flexion)
            in_range(v, 0.0, 1.0, "flexion");
        break;
    }
    case CommandKind::Face: {
        const std::string label = text(msg, "expression");
        bool found = false;
        for (auto e : retargeting::kExpressions)
            if (retargeting::expression_name(e) == label)
            {
                cmd.expression = e;
                found = true;
            }
        if (!found)
            reject("unknown expression " + label);
        break;
    }
    case CommandKind::Eyelids: {
        cmd.openness = number(msg, "openness");
        in_range(cmd.openness, 0.0, 1.0, "openness");
        break;
    }
    case CommandKind::Head: {
        cmd.yaw = number(msg, "yaw");
        cmd.pitch = number(msg, "pitch");
        const auto& y = layout.at("neck_yaw");
        const auto& p = layout.at("neck_pitch");
        in_range(cmd.yaw, y.min, y.max, "yaw");
        in_range(cmd.pitch, p.min, p.max, "pitch");
        break;
    }
    case CommandKind::InjectTouch: {
        const std::string name = text(msg, "patch");
        const auto patch = model::skin_patch_from_name(name);
        if (!patch)
            reject("unknown skin patch " + name);
        cmd.patch = *patch;
        cmd.intensity = number(msg, "intensity");
        if (!(cmd.intensity > 0.0 && cmd.intensity <= 1.0))
            reject("intensity must be in (0, 1]");
        break;
    }
    }
    return cmd;
}

void apply_command(sim::AvatarStack& stack, const ConsoleCommand& cmd)
{
    switch (cmd.kind)
    {
    case CommandKind::Walk: stack.send_walk(cmd.walk); break;
    case CommandKind::ArmPose: stack.send_posture(cmd.posture); break;
    case CommandKind::Fingers: {
        const auto motors = retargeting::retarget_fingers(cmd.flexion);
        if (!cmd.side || *cmd.side == model::Side::Left)
            stack.send_fingers(model::Side::Left, motors);
        if (!cmd.side || *cmd.side == model::Side::Right)
            stack.send_fingers(model::Side::Right, motors);
        break;
    }
    case CommandKind::Face: stack.send_face(retargeting::retarget_face(cmd.expression)); break;
    case CommandKind::Eyelids: stack.set_eyelids(cmd.openness); break;
    case CommandKind::Head: stack.set_head(cmd.yaw, cmd.pitch); break;
    case CommandKind::InjectTouch: {
        sim::TouchRequest r;
        r.patch = cmd.patch;
        r.intensity = cmd.intensity;
        stack.request_touch(r);
        break;
    }
    }
}

} // namespace avatar::gateway

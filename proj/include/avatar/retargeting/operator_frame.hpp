#pragma once

#include <avatar/common/error.hpp>
#include <avatar/common/geometry.hpp>

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avatar::retargeting {

enum class RetargetErrc
{
    OperatorMoving,
    InsufficientFrames,
    InvalidFrame,
    NotCalibrated,
    UnknownExpression,
    MalformedSession,
};

constexpr std::string_view to_string(RetargetErrc c)
{
    switch (c)
    {
    case RetargetErrc::OperatorMoving: return "OperatorMoving";
    case RetargetErrc::InsufficientFrames: return "InsufficientFrames";
    case RetargetErrc::InvalidFrame: return "InvalidFrame";
    case RetargetErrc::NotCalibrated: return "NotCalibrated";
    case RetargetErrc::UnknownExpression: return "UnknownExpression";
    case RetargetErrc::MalformedSession: return "MalformedSession";
    }
    return "RetargetError";
}

using RetargetError = Error<RetargetErrc>;

/// Wearable orientation nodes.
enum class Node
{
    Chest,
    LeftUpperArm,
    LeftForearm,
    RightUpperArm,
    RightForearm,
};

inline constexpr std::size_t kNodes = 5;
std::string_view node_name(Node n);

enum class Expression
{
    Neutral,
    Smile,
    Frown,
    Surprise,
    EyesClosed,
};

inline constexpr std::array<Expression, 5> kExpressions = {Expression::Neutral, Expression::Smile, Expression::Frown,
                                                           Expression::Surprise, Expression::EyesClosed};
std::string_view expression_name(Expression e);
/// Throws UnknownExpression.
Expression expression_from_name(std::string_view name);

struct Gaze
{
    double version{0.0};
    double vergence{0.0};
    double tilt{0.0};
};

struct Treadmill
{
    /// m/s, >= 0.
    double speed{0.0};
    /// World yaw the operator faces on the ring, rad.
    double ring_heading{0.0};
};

/// Fingers in hand order: thumb, index, middle, ring, pinkie.
using HandFlexion = std::array<double, 5>;

/// One tick of operator input.
struct OperatorFrame
{
    double timestamp{0.0};
    /// World orientation of each node, indexed by Node.
    std::array<Quat, kNodes> nodes{Quat::Identity(), Quat::Identity(), Quat::Identity(), Quat::Identity(),
                                   Quat::Identity()};
    Pose head_pose{Pose::Identity()};
    Gaze gaze;
    double eye_openness{1.0};
    std::array<HandFlexion, 2> fingers{};
    Treadmill treadmill;
    Expression expression{Expression::Neutral};

    const Quat& node(Node n) const { return nodes[static_cast<std::size_t>(n)]; }
    Quat& node(Node n) { return nodes[static_cast<std::size_t>(n)]; }

    /// Throws InvalidFrame on non-unit quaternions, non-finite values or a
    /// negative treadmill speed.
    void validate() const;
    /// Clamps flexions and openness into [0, 1].
    void clamp_ranges();
};

nlohmann::json to_json(const OperatorFrame& f);
OperatorFrame frame_from_json(const nlohmann::json& j);

/// Session recording: one JSON object per line, one frame per line.
std::string to_session_line(const OperatorFrame& f);
OperatorFrame from_session_line(std::string_view line);

void write_session(std::ostream& out, const std::vector<OperatorFrame>& frames);
std::vector<OperatorFrame> read_session(std::istream& in);
std::vector<OperatorFrame> read_session_file(const std::string& path);

/// Exact equality, bit for bit on every number.
bool identical(const OperatorFrame& a, const OperatorFrame& b);

} // namespace avatar::retargeting

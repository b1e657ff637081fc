#pragma once

#include <avatar/bus/envelope.hpp>
#include <avatar/locomotion/walking.hpp>
#include <avatar/model/robot_model.hpp>
#include <avatar/retargeting/retarget.hpp>

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace avatar::sim {

namespace topics {
inline constexpr std::string_view kOperatorFrame = "/operator/frame";
inline constexpr std::string_view kPostureRef = "/avatar/posture/ref";
inline constexpr std::string_view kHeadRef = "/avatar/head/ref";
inline constexpr std::string_view kFingersRef = "/avatar/fingers/ref";
inline constexpr std::string_view kLocomotionCmd = "/avatar/locomotion/cmd";
inline constexpr std::string_view kFaceCmd = "/avatar/face/cmd";
inline constexpr std::string_view kState = "/avatar/state";
inline constexpr std::string_view kFingertipForces = "/avatar/fingertips/forces";
inline constexpr std::string_view kTouchInject = "/sim/touch/inject";
} // namespace topics

namespace tags {
inline constexpr std::string_view kOperatorFrame = "OperatorFrame";
inline constexpr std::string_view kPostureRef = "JointVector";
inline constexpr std::string_view kHeadRef = "HeadRef";
inline constexpr std::string_view kFingerRef = "FingerRef";
inline constexpr std::string_view kWalkingCommand = "WalkingCommand";
inline constexpr std::string_view kFace = "FaceCommand";
inline constexpr std::string_view kState = "RobotState";
inline constexpr std::string_view kFingertipForces = "FingertipForces";
inline constexpr std::string_view kTouch = "TouchRequest";
} // namespace tags

/// Input port name of `reader` listening to `topic`.
std::string reader_port(std::string_view topic, std::string_view reader);

struct PostureRefMsg
{
    double t{0.0};
    model::JointVector q;
};

struct WalkMsg
{
    double t{0.0};
    locomotion::WalkingCommand cmd;
};

struct HeadRefMsg
{
    double t{0.0};
    retargeting::HeadRef head;
};

struct FingerRefMsg
{
    double t{0.0};
    model::Side side{model::Side::Left};
    retargeting::FingerMotors motors{};
};

struct FaceMsg
{
    double t{0.0};
    int pattern{0};
};

struct TouchRequest
{
    double t{0.0};
    model::SkinPatch patch{model::SkinPatch::LeftUpperArm};
    double intensity{0.0};
    std::vector<std::uint16_t> taxels;
};

struct FingertipForcesMsg
{
    double t{0.0};
    model::Side side{model::Side::Left};
    std::array<double, 5> forces{};
};

/// Robot-side state published every control tick.
struct StateMsg
{
    double t{0.0};
    Pose base{Pose::Identity()};
    model::JointVector q;
    Vec3 com{Vec3::Zero()};
    Vec2 zmp_ref{Vec2::Zero()};
    Vec2 zmp_executed{Vec2::Zero()};
    Vec2 dcm{Vec2::Zero()};
    double zmp_margin{0.0};
    model::Stance stance{model::Stance::Double};
    int step{-1};
    std::uint32_t faults{0};
    int face{0};
    locomotion::WalkingCommand walking;
};

bus::Bytes encode(const PostureRefMsg& m);
bus::Bytes encode(const WalkMsg& m);
bus::Bytes encode(const HeadRefMsg& m);
bus::Bytes encode(const FingerRefMsg& m);
bus::Bytes encode(const FaceMsg& m);
bus::Bytes encode(const TouchRequest& m);
bus::Bytes encode(const FingertipForcesMsg& m);
bus::Bytes encode(const StateMsg& m);
bus::Bytes encode_operator_frame(const retargeting::OperatorFrame& f);

/// Decoders throw BusError(MalformedPayload).
PostureRefMsg decode_posture_ref(std::span<const std::uint8_t> b);
WalkMsg decode_walk(std::span<const std::uint8_t> b);
HeadRefMsg decode_head_ref(std::span<const std::uint8_t> b);
FingerRefMsg decode_finger_ref(std::span<const std::uint8_t> b);
FaceMsg decode_face(std::span<const std::uint8_t> b);
TouchRequest decode_touch(std::span<const std::uint8_t> b);
FingertipForcesMsg decode_fingertip_forces(std::span<const std::uint8_t> b);
StateMsg decode_state(std::span<const std::uint8_t> b);
retargeting::OperatorFrame decode_operator_frame(std::span<const std::uint8_t> b);

} // namespace avatar::sim

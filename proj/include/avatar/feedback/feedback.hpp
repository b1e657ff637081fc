#pragma once

#include <avatar/bus/bus.hpp>
#include <avatar/common/error.hpp>
#include <avatar/common/geometry.hpp>
#include <avatar/model/robot_model.hpp>

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace avatar::feedback {

enum class FeedbackErrc
{
    UnmappedPatch,
    InvalidEvent,
    MalformedFrame,
};

constexpr std::string_view to_string(FeedbackErrc c)
{
    switch (c)
    {
    case FeedbackErrc::UnmappedPatch: return "UnmappedPatch";
    case FeedbackErrc::InvalidEvent: return "InvalidEvent";
    case FeedbackErrc::MalformedFrame: return "MalformedFrame";
    }
    return "FeedbackError";
}

using FeedbackError = Error<FeedbackErrc>;

namespace topics {
inline constexpr std::string_view kSkinEvents = "/avatar/skin/events";
inline constexpr std::string_view kHapticCmd = "/operator/haptic/cmd";
inline constexpr std::string_view kGloveFeedback = "/operator/glove/feedback";
inline constexpr std::string_view kCameraFrames = "/avatar/camera/frames";
inline constexpr std::string_view kLatency = "/operator/latency";
} // namespace topics

struct SkinEvent
{
    model::SkinPatch patch{model::SkinPatch::LeftUpperArm};
    /// Active taxel indices, sorted, unique.
    std::vector<std::uint16_t> taxels;
    double intensity{0.0};
    double timestamp{0.0};

    /// Throws InvalidEvent unless intensity is in [0, 1] and positive exactly
    /// when taxels are active.
    void validate() const;
    bool operator==(const SkinEvent&) const = default;
};

struct HapticCommand
{
    std::string node;
    double amplitude{0.0};
    double duration_ms{100.0};
    /// Timestamp of the skin event that caused it.
    double source_time{0.0};
    bool operator==(const HapticCommand&) const = default;
};

/// Skin patch to operator haptic node.
class HapticMapping
{
public:
    /// Left/right arm patches to the matching arm nodes, hands to hand nodes.
    static HapticMapping identity();
    /// {"left_upper_arm": "left_arm", ...}; throws InvalidEvent on unknown patches.
    static HapticMapping from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    void set(model::SkinPatch patch, std::string node) { m_nodes[patch] = std::move(node); }
    void erase(model::SkinPatch patch) { m_nodes.erase(patch); }
    std::optional<std::string> node(model::SkinPatch patch) const;
    bool covers_all() const { return m_nodes.size() == 4; }

private:
    std::map<model::SkinPatch, std::string> m_nodes;
};

struct RoutingParams
{
    /// Vibration length per command; the invariant floor is 50 ms.
    double duration_ms{100.0};
};

inline constexpr double kMinHapticDurationMs = 50.0;

/// nullopt for a zero-intensity event. Throws UnmappedPatch.
std::optional<HapticCommand> route_skin_to_haptics(const SkinEvent& event, const HapticMapping& mapping,
                                                   const RoutingParams& params = {});

inline constexpr double kMaxBrakeForce = 20.0;
inline constexpr double kVibrationSaturationForce = 5.0;

struct FingerCue
{
    double brake_force{0.0};
    double vibration{0.0};
};

/// Per finger, hand order thumb..pinkie.
struct FingerFeedback
{
    std::array<FingerCue, 5> fingers{};
};

/// Forces in N, one per fingertip. Negative or non-finite forces read as 0.
FingerFeedback compute_finger_feedback(const std::array<double, 5>& forces);

// ---------------------------------------------------------------------------
// Camera stream

struct FramePose
{
    Vec3 position{Vec3::Zero()};
    Quat orientation{Quat::Identity()};
};

struct SceneObject
{
    std::uint32_t id{0};
    FramePose pose;
};

/// Rendered scene description: the camera pose and the objects it sees.
/// Wire layout (little-endian): camera pose as 7 f32 (px py pz qw qx qy qz),
/// u16 object count, then per object u32 id and 7 f32.
struct FrameDescriptor
{
    FramePose camera;
    std::vector<SceneObject> objects;

    bus::Bytes encode() const;
    /// Throws MalformedFrame.
    static FrameDescriptor decode(std::span<const std::uint8_t> bytes);
};

/// One frame on the camera topic: f64 timestamp, u16 width, u16 height,
/// then the descriptor.
struct CameraFrame
{
    double timestamp{0.0};
    std::uint16_t width{1024};
    std::uint16_t height{768};
    FrameDescriptor scene;

    bus::Bytes encode() const;
    static CameraFrame decode(std::span<const std::uint8_t> bytes);
};

/// Rate limiter deciding at arrival: a frame passes when at least
/// (1 - slack) / fps has elapsed since the last delivered one, otherwise it
/// is dropped. Nothing is ever queued, so the delivered frame is always the
/// newest available.
class FramePacer
{
public:
    explicit FramePacer(double fps = 15.0, double slack = 0.05);

    bool offer(double timestamp);
    double min_interval() const { return m_min_interval; }
    std::uint64_t delivered() const { return m_delivered; }
    std::uint64_t dropped() const { return m_dropped; }
    void reset();

private:
    double m_min_interval;
    std::optional<double> m_last;
    std::uint64_t m_delivered{0};
    std::uint64_t m_dropped{0};
};

// ---------------------------------------------------------------------------
// Latency display

inline constexpr double kLatencyAlarmMs = 25.0;

struct LatencyReadout
{
    bool has_data{false};
    double mean_ms{0.0};
    double p95_ms{0.0};
    bool alarm{false};
    /// Operator display line, "no data" without samples.
    std::string text;
};

LatencyReadout latency_readout(const bus::LatencyStats& stats);

// ---------------------------------------------------------------------------
// Payload codecs

bus::Bytes encode(const SkinEvent& e);
SkinEvent decode_skin_event(std::span<const std::uint8_t> b);
bus::Bytes encode(const HapticCommand& c);
HapticCommand decode_haptic_command(std::span<const std::uint8_t> b);
bus::Bytes encode(const FingerFeedback& f, int hand);
std::pair<int, FingerFeedback> decode_finger_feedback(std::span<const std::uint8_t> b);
bus::Bytes encode(const LatencyReadout& r);
LatencyReadout decode_latency_readout(std::span<const std::uint8_t> b);

namespace tags {
inline constexpr std::string_view kSkinEvent = "SkinEvent";
inline constexpr std::string_view kHapticCommand = "HapticCommand";
inline constexpr std::string_view kFingerFeedback = "FingerFeedback";
inline constexpr std::string_view kCameraFrame = "CameraFrame";
inline constexpr std::string_view kLatencyReadout = "LatencyReadout";
} // namespace tags

} // namespace avatar::feedback

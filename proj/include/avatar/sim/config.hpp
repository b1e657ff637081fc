#pragma once

#include <avatar/bus/bus.hpp>
#include <avatar/feedback/feedback.hpp>
#include <avatar/locomotion/pipeline.hpp>
#include <avatar/retargeting/retarget.hpp>
#include <avatar/sim/world.hpp>

#include <nlohmann/json.hpp>

#include <string>

namespace avatar::sim {

struct LinkConfig
{
    /// Operator to avatar (commands, references).
    bus::LinkProfile uplink{10.0, 0.0, 0.0, 1};
    /// Avatar to operator (measurements, frames).
    bus::LinkProfile downlink{10.0, 0.0, 0.0, 2};
    std::string relay{"relay:1194"};
    std::string operator_subnet{"operator"};
    std::string avatar_subnet{"avatar"};
    /// Carrier of the walking command, references and feedback topics.
    bus::Carrier command_carrier{bus::Carrier::Datagram};
    bus::Carrier reference_carrier{bus::Carrier::Datagram};
    bus::Carrier feedback_carrier{bus::Carrier::Reliable};
};

struct FeedbackConfig
{
    feedback::RoutingParams routing;
    feedback::HapticMapping mapping{feedback::HapticMapping::identity()};
    double frame_fps{15.0};
    double frame_slack{0.05};
    /// Rate the simulator renders scene descriptors at, Hz.
    double render_hz{60.0};
    /// Rate fingertip forces are published at, Hz.
    double fingertip_hz{50.0};
};

struct MonitorConfig
{
    /// Background latency probes on the command connection.
    double probe_interval_s{0.1};
    /// Sliding window of the latency readout.
    double window_s{5.0};
    double readout_hz{1.0};
};

struct GatewayConfig
{
    double telemetry_hz{30.0};
    int port{8765};
};

/// Every tunable constant of the stack.
struct SimConfig
{
    WorldParams world;
    locomotion::PipelineParams locomotion;
    retargeting::RetargetParams retargeting;
    retargeting::CalibrationParams calibration;
    LinkConfig links;
    FeedbackConfig feedback;
    MonitorConfig monitor;
    GatewayConfig gateway;
    /// Operator frame rate of synthetic input, Hz.
    double operator_rate{100.0};

    nlohmann::ordered_json to_json() const;
    /// Missing keys keep their defaults; unknown keys and bad values throw
    /// MalformedConfig.
    static SimConfig from_json(const nlohmann::json& j);
    static SimConfig load(const std::string& path);
};

} // namespace avatar::sim

#pragma once

#include <avatar/bus/bus.hpp>
#include <avatar/feedback/feedback.hpp>
#include <avatar/locomotion/pipeline.hpp>
#include <avatar/retargeting/operator_frame.hpp>
#include <avatar/retargeting/retarget.hpp>
#include <avatar/sim/config.hpp>
#include <avatar/sim/messages.hpp>
#include <avatar/sim/scenario.hpp>
#include <avatar/sim/world.hpp>

#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace avatar::sim {

struct HapticArrival
{
    feedback::HapticCommand command;
    /// Operator-side arrival, s.
    double arrival{0.0};

    double latency_ms() const { return 1e3 * (arrival - command.source_time); }
};

struct EventOutcome
{
    int line{0};
    double t{0.0};
    std::string kind;
    bool ok{true};
    std::string detail;
};

struct CheckResult
{
    std::string condition;
    std::string observed;
    bool ok{false};
};

struct CheckpointResult
{
    std::string name;
    double t{0.0};
    std::vector<CheckResult> checks;

    bool passed() const;
};

struct ScenarioReport
{
    std::string scenario;
    double duration{0.0};
    std::uint64_t ticks{0};
    std::vector<EventOutcome> events;
    std::vector<CheckpointResult> checkpoints;
    std::vector<locomotion::FaultEvent> faults;
    /// Background probes on the command connection over the whole run.
    bus::LatencyStats latency;
    /// Smallest support polygon margin of the reference and of the executed
    /// ZMP, m; +inf without ticks.
    double min_zmp_margin_ref{std::numeric_limits<double>::infinity()};
    double min_zmp_margin_executed{std::numeric_limits<double>::infinity()};
    std::size_t haptic_commands{0};
    double haptic_latency_max_ms{0.0};
    std::uint64_t frames_delivered{0};

    bool empty() const { return events.empty() && ticks == 0; }
    /// No faults, every event applied and every checkpoint met.
    bool passed() const;
    nlohmann::ordered_json to_json() const;
};

/// Observation hooks, called on the simulation thread.
struct StackListener
{
    std::function<void(const StateMsg&)> state;
    std::function<void(const feedback::SkinEvent&)> skin;
    std::function<void(const HapticArrival&)> haptic;
    std::function<void(const feedback::LatencyReadout&)> latency;
    std::function<void(const feedback::CameraFrame&)> frame;
    std::function<void(const locomotion::FaultEvent&)> fault;
    /// Avatar side: a walking command arrived (arrival time, command).
    std::function<void(double, const locomotion::WalkingCommand&)> robot_walk;
};

/// Arm and torso posture of a named preset: rest, zero, grasp, wave.
/// Throws std::invalid_argument.
model::JointVector pose_preset(const model::RobotModel& model, std::string_view name);

/// The whole telexistence loop in one process: operator side and avatar
/// side on their own subnets, joined through a relay tunnel, running on
/// virtual time in 10 ms ticks. Every command crosses the bus.
class AvatarStack
{
public:
    AvatarStack(const model::RobotModel& model, SimConfig config, std::uint64_t seed = 0);
    ~AvatarStack();
    AvatarStack(const AvatarStack&) = delete;
    AvatarStack& operator=(const AvatarStack&) = delete;

    double time() const;
    std::uint64_t ticks() const { return m_tick; }
    double dt() const { return m_config.world.dt; }

    /// One control period: bus deliveries, robot tick, operator tick.
    /// Throws ScenarioAbort when the world diverges.
    void step();
    void run_for(double seconds);
    void run_until(double t);

    /// Plays a scenario from the current time. Throws ScenarioAbort (with
    /// the world dump) on divergence.
    ScenarioReport run_scenario(const Scenario& scenario);

    // Operator side. Each call publishes on the bus at the current time.
    void send_walk(const locomotion::WalkingCommand& cmd);
    void send_posture(const model::JointVector& q);
    void send_head(const retargeting::HeadRef& head);
    void send_fingers(model::Side side, const retargeting::FingerMotors& motors);
    void send_face(int pattern);
    /// Neck yaw and pitch, keeping the eyes and eyelids as last sent.
    /// Throws std::invalid_argument outside the neck limits.
    void set_head(double yaw, double pitch);
    /// Openness in [0, 1]; throws std::invalid_argument outside.
    void set_eyelids(double openness);
    /// Frames are consumed by timestamp, relative to the first one, at the
    /// operator rate. The first second of the session calibrates when it
    /// is a still N-pose; otherwise the identity alignment is used.
    void start_replay(std::vector<retargeting::OperatorFrame> frames);
    bool replaying() const { return m_replay_pos < m_replay.size(); }
    /// Recipient touch; travels over the command link to the avatar.
    void request_touch(const TouchRequest& request);

    // Environment.
    /// Position in the avatar base frame at the time of the call.
    void spawn_object(std::uint32_t id, const Vec3& base_relative);
    /// Applies the same profile to both directions of every link crossing
    /// the tunnel, or only to the connection carrying `topic`.
    void set_link(const bus::LinkProfile& profile, const std::string& topic = {});

    void set_listener(StackListener listener) { m_listener = std::move(listener); }
    /// Writes the reference trace, diagnostics and haptic log under `dir`.
    void record_to(const std::string& dir);
    void keep_reference_trace(bool on) { m_keep_trace = on; }

    const World& world() const { return m_world; }
    const locomotion::ControlPipeline& pipeline() const { return m_pipeline; }
    bus::Bus& bus() { return m_bus; }
    const SimConfig& config() const { return m_config; }
    const model::RobotModel& model() const { return *m_model; }

    const std::vector<HapticArrival>& haptics() const { return m_haptics; }
    const std::vector<locomotion::FaultEvent>& faults() const { return m_faults; }
    const std::vector<model::JointVector>& reference_trace() const { return m_trace; }
    const std::optional<StateMsg>& operator_state() const { return m_op_state; }
    const feedback::LatencyReadout& latency_readout() const { return m_readout; }
    bus::LatencyStats latency_all() const;
    const std::vector<double>& touch_request_times() const { return m_touch_requests; }
    /// Walking commands as received avatar-side: (arrival, command).
    const std::vector<std::pair<double, locomotion::WalkingCommand>>& robot_walk_log() const { return m_walk_log; }
    std::uint64_t frames_delivered() const { return m_frames_delivered; }
    const std::vector<feedback::FingerFeedback>& glove() const { return m_glove; }
    int face() const { return m_face; }
    double min_zmp_margin_ref() const { return m_min_margin_ref; }
    double min_zmp_margin_executed() const { return m_min_margin_exec; }
    const StateMsg& last_state() const { return m_state_msg; }
    bus::ConnectionId connection_of(const std::string& topic) const;

private:
    struct Publisher
    {
        bus::PortHandle port;
        std::string_view tag;
    };

    void wire();
    Publisher output(std::string_view topic, std::string_view tag, const std::string& subnet);
    bus::PortHandle input(std::string_view topic, std::string_view reader, const std::string& subnet);
    void link(std::string_view topic, std::string_view reader, bus::Carrier carrier, bool uplink);
    void publish(const Publisher& p, bus::Bytes payload);

    void robot_tick();
    void operator_tick();
    void on_touch(const TouchRequest& r);
    void fault(const std::string& source, const std::string& what);
    void apply_event(const ScenarioEvent& e, ScenarioReport& report);
    CheckpointResult checkpoint(const ScenarioEvent& e) const;

    const model::RobotModel* m_model;
    SimConfig m_config;
    std::uint64_t m_seed;
    std::shared_ptr<bus::ManualClock> m_clock;
    bus::Bus m_bus;
    locomotion::ControlPipeline m_pipeline;
    World m_world;
    retargeting::Retargeter m_retargeter;
    StackListener m_listener;

    std::uint64_t m_tick{0};
    Micros m_dt_us{10000};
    Vec2 m_start_xy{Vec2::Zero()};

    // Avatar side.
    std::optional<locomotion::WalkingCommand> m_new_walk;
    std::optional<model::JointVector> m_posture;
    /// Head then neck group, as commanded.
    std::array<double, 7> m_head_q{};
    model::JointVector m_hands;
    int m_face{0};
    feedback::FramePacer m_pacer;
    double m_next_render{0.0};
    double m_next_fingertip{0.0};
    StateMsg m_state_msg;
    std::vector<std::pair<double, locomotion::WalkingCommand>> m_walk_log;

    // Operator side.
    locomotion::WalkingCommand m_walk_cmd;
    retargeting::HeadRef m_head_sent;
    double m_next_keepalive{0.0};
    double m_next_operator{0.0};
    double m_next_probe{0.0};
    double m_next_readout{0.0};
    std::uint64_t m_probe_session{0};
    std::deque<std::pair<double, double>> m_probe_window;
    std::vector<double> m_probe_all;
    feedback::LatencyReadout m_readout;
    std::vector<retargeting::OperatorFrame> m_replay;
    std::size_t m_replay_pos{0};
    double m_replay_origin{0.0};
    std::string m_replay_base;
    std::optional<StateMsg> m_op_state;
    std::vector<HapticArrival> m_haptics;
    std::vector<double> m_touch_requests;
    std::uint64_t m_frames_delivered{0};
    std::vector<feedback::FingerFeedback> m_glove;

    std::vector<locomotion::FaultEvent> m_faults;
    double m_min_margin_ref{std::numeric_limits<double>::infinity()};
    double m_min_margin_exec{std::numeric_limits<double>::infinity()};
    bool m_keep_trace{false};
    std::vector<model::JointVector> m_trace;

    std::map<std::string, Publisher> m_out;
    std::map<std::string, bus::ConnectionId> m_conns;
    std::vector<bus::ConnectionId> m_uplinks;
    std::vector<bus::ConnectionId> m_downlinks;

    struct Recorder;
    std::unique_ptr<Recorder> m_recorder;
};

} // namespace avatar::sim

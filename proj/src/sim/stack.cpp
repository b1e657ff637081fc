#include <avatar/sim/stack.hpp>

#include <avatar/bus/codec.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

namespace avatar::sim {

using bus::Carrier;

using locomotion::WalkingCommand;
using model::JointGroup;
using model::Side;
namespace fb = feedback;
namespace rt = retargeting;

namespace {

constexpr std::string_view kRobot = "robot";
constexpr std::string_view kOperator = "operator";
constexpr std::string_view kDevice = "device";
constexpr std::string_view kDisplay = "display";

// Port names are unique per process; outputs take the topic name.
constexpr std::string_view kTouchRequestTopic = topics::kTouchInject;

void set(model::JointVector& q, const model::RobotModel& m, const std::string& name, double v)
{
    q[m.layout.index_of(name)] = v;
}

Pose2 to_pose2(const Pose& p) { return {p.translation().x(), p.translation().y(), yaw_of(p.linear())}; }

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

} // namespace

model::JointVector pose_preset(const model::RobotModel& model, std::string_view name)
{
    model::JointVector q = locomotion::nominal_posture(model);
    auto arm = [&](const char* p, std::array<double, 7> v) {
        const std::array<const char*, 7> joints{"shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow",
                                                "wrist_prosup",   "wrist_pitch",   "wrist_yaw"};
        for (std::size_t i = 0; i < 7; ++i)
            set(q, model, std::string(p) + joints[i], v[i]);
    };
    if (name == "rest")
        return q;
    if (name == "zero")
    {
        arm("l_", {});
        arm("r_", {});
        return q;
    }
    if (name == "grasp")
    {
        // Both forearms forward at waist height, palms facing.
        arm("l_", {-0.8, 0.25, 0.0, 1.0, 0.0, 0.0, 0.0});
        arm("r_", {-0.8, 0.25, 0.0, 1.0, 0.0, 0.0, 0.0});
        return q;
    }
    if (name == "wave")
    {
        arm("r_", {-1.6, 0.6, 0.3, 1.4, 0.0, 0.0, 0.0});
        return q;
    }
    throw std::invalid_argument("unknown pose preset " + std::string(name));
}

// ---------------------------------------------------------------------------

bool CheckpointResult::passed() const
{
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.ok; });
}

bool ScenarioReport::passed() const
{
    return faults.empty() && std::all_of(events.begin(), events.end(), [](const EventOutcome& e) { return e.ok; }) &&
           std::all_of(checkpoints.begin(), checkpoints.end(), [](const CheckpointResult& c) { return c.passed(); });
}

nlohmann::ordered_json ScenarioReport::to_json() const
{
    using nlohmann::ordered_json;
    auto finite_or_null = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
    ordered_json j;
    j["scenario"] = scenario;
    j["passed"] = passed();
    j["duration"] = duration;
    j["ticks"] = ticks;
    j["events"] = ordered_json::array();
    for (const auto& e : events)
        j["events"].push_back({{"line", e.line}, {"t", e.t}, {"kind", e.kind}, {"ok", e.ok}, {"detail", e.detail}});
    j["checkpoints"] = ordered_json::array();
    for (const auto& c : checkpoints)
    {
        ordered_json cj{{"name", c.name}, {"t", c.t}, {"passed", c.passed()}, {"checks", ordered_json::array()}};
        for (const auto& k : c.checks)
            cj["checks"].push_back({{"condition", k.condition}, {"observed", k.observed}, {"ok", k.ok}});
        j["checkpoints"].push_back(cj);
    }
    j["faults"] = ordered_json::array();
    for (const auto& f : faults)
        j["faults"].push_back({{"t", f.t}, {"source", f.source}, {"what", f.what}});
    j["latency"] = {{"samples", latency.samples}, {"mean_ms", latency.mean_ms}, {"p95_ms", latency.p95_ms},
                    {"max_ms", latency.max_ms}};
    j["zmp"] = {{"min_margin_reference", finite_or_null(min_zmp_margin_ref)},
                {"min_margin_executed", finite_or_null(min_zmp_margin_executed)}};
    j["haptics"] = {{"commands", haptic_commands}, {"max_latency_ms", haptic_latency_max_ms}};
    j["frames_delivered"] = frames_delivered;
    return j;
}

// ---------------------------------------------------------------------------

struct AvatarStack::Recorder
{
    std::ofstream trace;
    std::ofstream diagnostics;
    std::ofstream haptics;
    std::ofstream faults;
};

AvatarStack::AvatarStack(const model::RobotModel& model, SimConfig config, std::uint64_t seed)
    : m_model(&model)
    , m_config(std::move(config))
    , m_seed(seed)
    , m_clock(std::make_shared<bus::ManualClock>(0))
    , m_bus(m_clock)
    , m_pipeline(model, m_config.locomotion)
    , m_world(model, [&] {
        WorldParams w = m_config.world;
        w.seed += seed;
        return w;
    }())
    , m_retargeter(model, m_config.retargeting)
    , m_pacer(m_config.feedback.frame_fps, m_config.feedback.frame_slack)
{
    m_dt_us = avatar::from_seconds(m_config.world.dt);
    wire();

    const double half = 0.5 * m_config.locomotion.planner.step_width;
    const Pose2 left{0.0, half, 0.0};
    const Pose2 right{0.0, -half, 0.0};
    const locomotion::RobotState initial = m_pipeline.initialize(left, right, 0.0);
    m_world.reset(initial, Contact{model::Stance::Double, left, right}, 0.0);
    m_start_xy = initial.base.translation().head<2>();

    const model::JointVector nominal = locomotion::nominal_posture(model);
    for (std::size_t i = 0; i < m_head_q.size(); ++i)
        m_head_q[i] = nominal[i];
    m_hands = nominal;
    m_head_sent.eyes = {m_head_q[1], m_head_q[2], m_head_q[0]};
    m_head_sent.eyelids = m_head_q[3];
    m_probe_session = m_bus.open_probe_session();
}

AvatarStack::~AvatarStack() = default;

double AvatarStack::time() const { return avatar::to_seconds(m_clock->now()); }

AvatarStack::Publisher AvatarStack::output(std::string_view topic, std::string_view tag, const std::string& subnet)
{
    Publisher p{m_bus.register_port(topic, bus::Direction::Output, subnet), tag};
    m_out[std::string(topic)] = p;
    return p;
}

bus::PortHandle AvatarStack::input(std::string_view topic, std::string_view reader, const std::string& subnet)
{
    return m_bus.register_port(reader_port(topic, reader), bus::Direction::Input, subnet);
}

void AvatarStack::link(std::string_view topic, std::string_view reader, Carrier carrier, bool uplink)
{
    const auto id = m_bus.connect(topic, reader_port(topic, reader), carrier);
    m_conns[std::string(topic)] = id;
    (uplink ? m_uplinks : m_downlinks).push_back(id);
}

void AvatarStack::publish(const Publisher& p, bus::Bytes payload) { m_bus.publish(p.port, p.tag, std::move(payload)); }

bus::ConnectionId AvatarStack::connection_of(const std::string& topic) const
{
    const auto it = m_conns.find(topic);
    if (it == m_conns.end())
        throw std::invalid_argument("no cross link carries " + topic);
    return it->second;
}

void AvatarStack::wire()
{
    const auto& L = m_config.links;
    const std::string& op = L.operator_subnet;
    const std::string& av = L.avatar_subnet;
    m_bus.add_relay(L.relay);
    m_bus.create_tunnel({L.relay, op}, {L.relay, av});

    // Operator to avatar.
    struct Up
    {
        std::string_view topic;
        std::string_view tag;
        Carrier carrier;
    };
    const std::array<Up, 6> ups{{{topics::kLocomotionCmd, tags::kWalkingCommand, L.command_carrier},
                                 {topics::kPostureRef, tags::kPostureRef, L.reference_carrier},
                                 {topics::kHeadRef, tags::kHeadRef, L.reference_carrier},
                                 {topics::kFingersRef, tags::kFingerRef, L.reference_carrier},
                                 {topics::kFaceCmd, tags::kFace, L.command_carrier},
                                 {kTouchRequestTopic, tags::kTouch, L.command_carrier}}};
    for (const auto& u : ups)
    {
        output(u.topic, u.tag, op);
        const auto in = input(u.topic, kRobot, av);
        link(u.topic, kRobot, u.carrier, true);
        const std::string topic(u.topic);
        m_bus.subscribe(in, [this, topic](const bus::Envelope& e) {
            try
            {
                const double now = time();
                if (topic == topics::kLocomotionCmd)
                {
                    const auto m = decode_walk(e.payload);
                    m_new_walk = m.cmd;
                    m_walk_log.emplace_back(now, m.cmd);
                    if (m_listener.robot_walk)
                        m_listener.robot_walk(now, m.cmd);
                }
                else if (topic == topics::kPostureRef)
                    m_posture = decode_posture_ref(e.payload).q;
                else if (topic == topics::kHeadRef)
                {
                    const auto h = decode_head_ref(e.payload).head;
                    const std::array<double, 7> v{h.eyes.tilt, h.eyes.version, h.eyes.vergence, h.eyelids,
                                                  h.neck_pitch, h.neck_roll,  h.neck_yaw};
                    for (std::size_t i = 0; i < 7; ++i)
                    {
                        const auto& info = m_model->layout.joints[i];
                        m_head_q[i] = std::clamp(v[i], info.min, info.max);
                    }
                }
                else if (topic == topics::kFingersRef)
                {
                    const auto f = decode_finger_ref(e.payload);
                    rt::apply_finger_motors(*m_model, f.side, f.motors, m_hands);
                }
                else if (topic == topics::kFaceCmd)
                    m_face = decode_face(e.payload).pattern;
                else if (topic == kTouchRequestTopic)
                    on_touch(decode_touch(e.payload));
            }
            catch (const std::exception& ex)
            {
                fault("bus", topic + ": " + ex.what());
            }
        });
    }

    // Avatar to operator.
    output(topics::kState, tags::kState, av);
    output(fb::topics::kSkinEvents, fb::tags::kSkinEvent, av);
    output(fb::topics::kCameraFrames, fb::tags::kCameraFrame, av);
    output(topics::kFingertipForces, tags::kFingertipForces, av);

    const auto state_in = input(topics::kState, kOperator, op);
    link(topics::kState, kOperator, L.reference_carrier, false);
    m_bus.subscribe(state_in, [this](const bus::Envelope& e) {
        m_op_state = decode_state(e.payload);
        if (m_listener.state)
            m_listener.state(*m_op_state);
    });

    const auto skin_in = input(fb::topics::kSkinEvents, kOperator, op);
    link(fb::topics::kSkinEvents, kOperator, L.feedback_carrier, false);
    m_bus.subscribe(skin_in, [this](const bus::Envelope& e) {
        try
        {
            const auto ev = fb::decode_skin_event(e.payload);
            if (m_listener.skin)
                m_listener.skin(ev);
            if (auto cmd = fb::route_skin_to_haptics(ev, m_config.feedback.mapping, m_config.feedback.routing))
                publish(m_out.at(std::string(fb::topics::kHapticCmd)), fb::encode(*cmd));
        }
        catch (const std::exception& ex)
        {
            fault("feedback", ex.what());
        }
    });

    const auto frame_in = input(fb::topics::kCameraFrames, kOperator, op);
    link(fb::topics::kCameraFrames, kOperator, L.feedback_carrier, false);
    m_bus.subscribe(frame_in, [this](const bus::Envelope& e) {
        ++m_frames_delivered;
        if (m_listener.frame)
            m_listener.frame(fb::CameraFrame::decode(e.payload));
    });

    const auto tips_in = input(topics::kFingertipForces, kOperator, op);
    link(topics::kFingertipForces, kOperator, L.feedback_carrier, false);
    m_bus.subscribe(tips_in, [this](const bus::Envelope& e) {
        const auto m = decode_fingertip_forces(e.payload);
        const auto cues = fb::compute_finger_feedback(m.forces);
        if (m_glove.size() < 2)
            m_glove.resize(2);
        m_glove[static_cast<std::size_t>(m.side)] = cues;
        publish(m_out.at(std::string(fb::topics::kGloveFeedback)), fb::encode(cues, static_cast<int>(m.side)));
    });

    // Operator-local devices.
    output(fb::topics::kHapticCmd, fb::tags::kHapticCommand, op);
    const auto haptic_in = input(fb::topics::kHapticCmd, kDevice, op);
    m_bus.connect(fb::topics::kHapticCmd, reader_port(fb::topics::kHapticCmd, kDevice), Carrier::InProcess);
    m_bus.subscribe(haptic_in, [this](const bus::Envelope& e) {
        HapticArrival a{fb::decode_haptic_command(e.payload), time()};
        m_haptics.push_back(a);
        if (m_recorder)
            m_recorder->haptics << nlohmann::json{{"arrival", a.arrival},     {"node", a.command.node},
                                                  {"amplitude", a.command.amplitude},
                                                  {"source_time", a.command.source_time}}
                                       .dump()
                                << '\n';
        if (m_listener.haptic)
            m_listener.haptic(a);
    });

    output(fb::topics::kGloveFeedback, fb::tags::kFingerFeedback, op);
    input(fb::topics::kGloveFeedback, kDevice, op);
    m_bus.connect(fb::topics::kGloveFeedback, reader_port(fb::topics::kGloveFeedback, kDevice), Carrier::InProcess);

    output(fb::topics::kLatency, fb::tags::kLatencyReadout, op);
    input(fb::topics::kLatency, kDisplay, op);
    m_bus.connect(fb::topics::kLatency, reader_port(fb::topics::kLatency, kDisplay), Carrier::InProcess);

    // Every input is consumed through callbacks.
    m_bus.set_inbox_capacity(16);

    std::uint64_t n = 0;
    for (auto id : m_uplinks)
    {
        bus::LinkProfile fwd = L.uplink, rev = L.downlink;
        fwd.seed += m_seed * 1000003 + 2 * n;
        rev.seed += m_seed * 1000003 + 2 * n + 1;
        m_bus.set_link_profile(id, fwd, rev);
        ++n;
    }
    for (auto id : m_downlinks)
    {
        bus::LinkProfile fwd = L.downlink, rev = L.uplink;
        fwd.seed += m_seed * 1000003 + 2 * n;
        rev.seed += m_seed * 1000003 + 2 * n + 1;
        m_bus.set_link_profile(id, fwd, rev);
        ++n;
    }
}

void AvatarStack::set_link(const bus::LinkProfile& profile, const std::string& topic)
{
    profile.validate();
    std::vector<bus::ConnectionId> ids;
    if (topic.empty())
    {
        ids = m_uplinks;
        ids.insert(ids.end(), m_downlinks.begin(), m_downlinks.end());
    }
    else
        ids.push_back(connection_of(topic));
    for (auto id : ids)
    {
        bus::LinkProfile fwd = profile, rev = profile;
        fwd.seed = m_bus.link_profile(id).seed;
        rev.seed = fwd.seed + 1;
        m_bus.set_link_profile(id, fwd, rev);
    }
}

void AvatarStack::record_to(const std::string& dir)
{
    std::filesystem::create_directories(dir);
    m_recorder = std::make_unique<Recorder>();
    const std::filesystem::path d(dir);
    m_recorder->trace.open(d / "reference.trace");
    m_recorder->diagnostics.open(d / "diagnostics.ndjson");
    m_recorder->haptics.open(d / "haptics.ndjson");
    m_recorder->faults.open(d / "faults.ndjson");
    if (!m_recorder->trace || !m_recorder->diagnostics || !m_recorder->haptics || !m_recorder->faults)
        throw std::runtime_error("cannot write recording under " + dir);
}

void AvatarStack::fault(const std::string& source, const std::string& what)
{
    locomotion::FaultEvent f{time(), source, what};
    m_faults.push_back(f);
    if (m_recorder)
        m_recorder->faults << nlohmann::json{{"t", f.t}, {"source", f.source}, {"what", f.what}}.dump() << '\n';
    if (m_listener.fault)
        m_listener.fault(f);
}

// ---------------------------------------------------------------------------
// Operator side

void AvatarStack::send_walk(const WalkingCommand& cmd)
{
    m_walk_cmd = cmd;
    m_next_keepalive = time() + 0.1;
    publish(m_out.at(std::string(topics::kLocomotionCmd)), encode(WalkMsg{time(), cmd}));
}

void AvatarStack::send_posture(const model::JointVector& q)
{
    publish(m_out.at(std::string(topics::kPostureRef)), encode(PostureRefMsg{time(), q}));
}

void AvatarStack::send_head(const rt::HeadRef& head)
{
    m_head_sent = head;
    publish(m_out.at(std::string(topics::kHeadRef)), encode(HeadRefMsg{time(), head}));
}

void AvatarStack::send_fingers(Side side, const rt::FingerMotors& motors)
{
    publish(m_out.at(std::string(topics::kFingersRef)), encode(FingerRefMsg{time(), side, motors}));
}

void AvatarStack::send_face(int pattern)
{
    publish(m_out.at(std::string(topics::kFaceCmd)), encode(FaceMsg{time(), pattern}));
}

void AvatarStack::set_head(double yaw, double pitch)
{
    const auto& y = m_model->layout.at("neck_yaw");
    const auto& p = m_model->layout.at("neck_pitch");
    if (!(yaw >= y.min && yaw <= y.max && pitch >= p.min && pitch <= p.max))
        throw std::invalid_argument("head angles outside the neck limits");
    rt::HeadRef h = m_head_sent;
    h.neck_yaw = yaw;
    h.neck_pitch = pitch;
    send_head(h);
}

void AvatarStack::set_eyelids(double openness)
{
    if (!(openness >= 0.0 && openness <= 1.0))
        throw std::invalid_argument("openness outside [0, 1]");
    const auto& lid = m_model->layout.at("eyelids");
    rt::HeadRef h = m_head_sent;
    h.eyelids = lid.min + openness * (lid.max - lid.min);
    send_head(h);
}

void AvatarStack::request_touch(const TouchRequest& request)
{
    TouchRequest r = request;
    r.t = time();
    m_touch_requests.push_back(r.t);
    publish(m_out.at(std::string(kTouchRequestTopic)), encode(r));
}

void AvatarStack::start_replay(std::vector<rt::OperatorFrame> frames)
{
    m_replay = std::move(frames);
    m_replay_pos = 0;
    m_replay_origin = time();
    m_retargeter.reset();
    if (m_replay.empty())
        return;
    const double t0 = m_replay.front().timestamp;
    std::vector<rt::OperatorFrame> window;
    for (const auto& f : m_replay)
        if (f.timestamp - t0 <= m_config.calibration.min_duration + 1e-9)
            window.push_back(f);
    try
    {
        m_retargeter.set_calibration(rt::calibrate(window, *m_model, m_config.calibration));
    }
    catch (const rt::RetargetError&)
    {
        m_retargeter.set_calibration(rt::identity_calibration(*m_model));
    }
}

void AvatarStack::operator_tick()
{
    const double now = time();
    if (!m_replay.empty() && m_replay_pos < m_replay.size())
    {
        const double t0 = m_replay.front().timestamp;
        std::optional<rt::RetargetedRefs> refs;
        while (m_replay_pos < m_replay.size() && m_replay[m_replay_pos].timestamp - t0 <= now - m_replay_origin + 1e-9)
        {
            try
            {
                refs = m_retargeter.process(m_replay[m_replay_pos]);
            }
            catch (const rt::RetargetError& e)
            {
                fault("retargeting", e.what());
            }
            ++m_replay_pos;
        }
        if (refs)
        {
            send_posture(refs->posture_ref);
            send_head(refs->head);
            send_fingers(Side::Left, refs->fingers[0]);
            send_fingers(Side::Right, refs->fingers[1]);
            if (!(refs->walking == m_walk_cmd))
                send_walk(refs->walking);
            if (refs->face != m_face)
                send_face(refs->face);
        }
    }
    if (now + 1e-9 >= m_next_keepalive)
        send_walk(m_walk_cmd);

    // Latency monitoring on the command connection.
    const auto cmd_conn = connection_of(std::string(topics::kLocomotionCmd));
    if (now + 1e-9 >= m_next_probe)
    {
        m_bus.send_probe(cmd_conn, m_probe_session);
        m_next_probe += m_config.monitor.probe_interval_s;
    }
    for (double s : m_bus.drain_probe_samples(m_probe_session))
    {
        m_probe_window.emplace_back(now, s);
        m_probe_all.push_back(s);
    }
    while (!m_probe_window.empty() && m_probe_window.front().first < now - m_config.monitor.window_s)
        m_probe_window.pop_front();
    if (now + 1e-9 >= m_next_readout)
    {
        std::vector<double> samples;
        for (const auto& [t, s] : m_probe_window)
            samples.push_back(s);
        m_readout = fb::latency_readout(bus::LatencyStats::from_samples(samples, m_config.monitor.window_s));
        publish(m_out.at(std::string(fb::topics::kLatency)), fb::encode(m_readout));
        if (m_listener.latency)
            m_listener.latency(m_readout);
        m_next_readout += 1.0 / m_config.monitor.readout_hz;
    }
}

bus::LatencyStats AvatarStack::latency_all() const { return bus::LatencyStats::from_samples(m_probe_all, time()); }

// ---------------------------------------------------------------------------
// Avatar side

void AvatarStack::on_touch(const TouchRequest& r)
{
    try
    {
        auto ev = m_world.inject_touch(model::skin_patch_name(r.patch), r.intensity, r.taxels);
        if (!ev)
            return;
        ev->timestamp = time();
        publish(m_out.at(std::string(fb::topics::kSkinEvents)), fb::encode(*ev));
    }
    catch (const SimError& e)
    {
        fault("skin", e.what());
    }
}

void AvatarStack::spawn_object(std::uint32_t id, const Vec3& base_relative)
{
    m_world.spawn_object(id, m_world.state().base * base_relative);
}

void AvatarStack::robot_tick()
{
    locomotion::PipelineMeasurements meas{m_world.foot_wrenches()};
    const locomotion::PipelineOutput out = m_pipeline.tick(m_new_walk, m_posture, meas);
    m_new_walk.reset();
    for (const auto& f : out.faults)
    {
        m_faults.push_back(f);
        if (m_recorder)
            m_recorder->faults << nlohmann::json{{"t", f.t}, {"source", f.source}, {"what", f.what}}.dump() << '\n';
        if (m_listener.fault)
            m_listener.fault(f);
    }

    model::JointVector q = out.reference.q;
    for (std::size_t i = 0; i < m_head_q.size(); ++i)
        q[i] = m_head_q[i];
    for (JointGroup g : {JointGroup::LeftHand, JointGroup::RightHand})
        for (std::size_t i = model::group_offset(g); i < model::group_offset(g) + model::group_size(g); ++i)
            q[i] = m_hands[i];

    const auto [lf, rf] = m_pipeline.foot_targets(out.diag.t);
    const Contact contact{out.diag.stance, to_pose2(lf), to_pose2(rf)};
    const WorldState* ws = nullptr;
    try
    {
        const Vec3 com_ref =
            m_model->tree.com(m_model->tree.forward(out.reference.base, out.reference.q));
        ws = &m_world.step(q, out.reference.base, contact, com_ref);
    }
    catch (const SimError& e)
    {
        fault("simulator", e.what());
        throw SimError(SimErrc::ScenarioAbort, e.what());
    }

    m_min_margin_ref = std::min(m_min_margin_ref, out.diag.zmp_margin);
    Vec2 zmp_exec = out.diag.zmp_ref;
    if (ws->zmp_executed && contact.stance != model::Stance::None)
    {
        zmp_exec = *ws->zmp_executed;
        const auto poly = model::support_polygon(m_model->geometry, contact.stance, contact.left, contact.right);
        m_min_margin_exec = std::min(m_min_margin_exec, model::polygon_margin(poly, zmp_exec));
    }

    if (m_keep_trace)
        m_trace.push_back(q);
    if (m_recorder)
    {
        m_recorder->trace << std::hexfloat << out.diag.t;
        for (std::size_t i = 0; i < model::kDofs; ++i)
            m_recorder->trace << ' ' << q[i];
        m_recorder->trace << std::defaultfloat << '\n';
        m_recorder->diagnostics << out.diag.to_record() << '\n';
    }

    StateMsg& s = m_state_msg;
    s.t = ws->t;
    s.base = ws->base;
    s.q = ws->q;
    s.com = ws->com;
    s.zmp_ref = out.diag.zmp_ref;
    s.zmp_executed = zmp_exec;
    s.dcm = out.diag.dcm;
    s.zmp_margin = out.diag.zmp_margin;
    s.stance = out.diag.stance;
    s.step = out.diag.step;
    s.faults = static_cast<std::uint32_t>(m_faults.size());
    s.face = m_face;
    s.walking = m_pipeline.active_command();
    publish(m_out.at(std::string(topics::kState)), encode(s));

    const double now = ws->t;
    if (now + 1e-9 >= m_next_render)
    {
        m_next_render += 1.0 / m_config.feedback.render_hz;
        if (m_pacer.offer(now))
            publish(m_out.at(std::string(fb::topics::kCameraFrames)), m_world.render_camera().encode());
    }
    if (now + 1e-9 >= m_next_fingertip)
    {
        m_next_fingertip += 1.0 / m_config.feedback.fingertip_hz;
        for (Side side : {Side::Left, Side::Right})
            publish(m_out.at(std::string(topics::kFingertipForces)),
                    encode(FingertipForcesMsg{now, side, m_world.fingertip_forces(side)}));
    }
}

void AvatarStack::step()
{
    const Micros next = static_cast<Micros>(m_tick + 1) * m_dt_us;
    m_bus.run_until(next);
    m_clock->set(next);
    robot_tick();
    ++m_tick;
    m_bus.pump();
    operator_tick();
    m_bus.pump();
}

void AvatarStack::run_for(double seconds) { run_until(time() + seconds); }

void AvatarStack::run_until(double t)
{
    while (time() + 1e-9 < t)
        step();
}

// ---------------------------------------------------------------------------
// Scenarios

void AvatarStack::apply_event(const ScenarioEvent& e, ScenarioReport& report)
{
    EventOutcome o{e.line, time(), std::string(event_kind_name(e.kind)), true, {}};
    try
    {
        switch (e.kind)
        {
        case EventKind::Walk: {
            const double vmax = m_config.locomotion.planner.max_speed;
            if (e.num[1] < 0.0 || e.num[1] > vmax + 1e-12)
                throw std::invalid_argument("speed outside [0, " + fmt(vmax) + "]");
            send_walk({wrap_angle(e.num[0]), e.num[1]});
            break;
        }
        case EventKind::Stop: send_walk({m_walk_cmd.heading, 0.0}); break;
        case EventKind::Expression: send_face(rt::retarget_face(e.text)); break;
        case EventKind::Pose: send_posture(pose_preset(*m_model, e.text)); break;
        case EventKind::Fingers: {
            if (e.num[0] < 0.0 || e.num[0] > 1.0)
                throw std::invalid_argument("flexion outside [0, 1]");
            const rt::HandFlexion flex{e.num[0], e.num[0], e.num[0], e.num[0], e.num[0]};
            const auto motors = rt::retarget_fingers(flex);
            if (e.text != "right")
                send_fingers(Side::Left, motors);
            if (e.text != "left")
                send_fingers(Side::Right, motors);
            break;
        }
        case EventKind::Eyelids: set_eyelids(e.num[0]); break;
        case EventKind::Head: set_head(e.num[0], e.num[1]); break;
        case EventKind::Touch: {
            const auto patch = model::skin_patch_from_name(e.text);
            if (!patch)
                throw SimError(SimErrc::UnknownPatch, e.text);
            // Validate against the skin layout before the request leaves.
            (void)m_world.inject_touch(e.text, e.num[0], e.taxels);
            request_touch(TouchRequest{time(), *patch, e.num[0], e.taxels});
            break;
        }
        case EventKind::Link: {
            bus::LinkProfile p{e.num[0], e.num[1], e.num[2], 0};
            set_link(p, e.text);
            break;
        }
        case EventKind::Spawn:
            if (e.num[0] < 0.0 || e.num[0] != std::floor(e.num[0]) || e.num[0] > 0xffffffffu)
                throw std::invalid_argument("object id must be a non-negative integer");
            spawn_object(static_cast<std::uint32_t>(e.num[0]), Vec3(e.num[1], e.num[2], e.num[3]));
            break;
        case EventKind::Replay: {
            std::filesystem::path p(e.text);
            if (p.is_relative() && !e.text.empty())
                p = std::filesystem::path(m_replay_base) / p;
            start_replay(rt::read_session_file(p.string()));
            o.detail = std::to_string(m_replay.size()) + " frames";
            break;
        }
        case EventKind::Checkpoint: {
            auto c = checkpoint(e);
            o.ok = c.passed();
            if (!o.ok)
                o.detail = "checkpoint not met";
            report.checkpoints.push_back(std::move(c));
            break;
        }
        case EventKind::End: break;
        }
    }
    catch (const std::exception& ex)
    {
        o.ok = false;
        o.detail = ex.what();
    }
    report.events.push_back(std::move(o));
}

CheckpointResult AvatarStack::checkpoint(const ScenarioEvent& e) const
{
    CheckpointResult r{e.text, time(), {}};
    for (const auto& x : e.expect)
    {
        CheckResult c{x.text(), {}, false};
        std::optional<double> value;
        if (x.quantity == "face")
        {
            const auto label = rt::expression_name(rt::kExpressions.at(static_cast<std::size_t>(m_face)));
            c.observed = std::string(label);
            c.ok = x.op == "=" && label == x.value;
            r.checks.push_back(c);
            continue;
        }
        if (x.quantity == "moved")
            value = (m_world.state().base.translation().head<2>() - m_start_xy).norm();
        else if (x.quantity == "haptics")
            value = static_cast<double>(m_haptics.size());
        else if (x.quantity == "grip")
        {
            double g = 0.0;
            for (Side s : {Side::Left, Side::Right})
                for (double f : m_world.fingertip_forces(s))
                    g = std::max(g, f);
            value = g;
        }
        else if (x.quantity == "faults")
            value = static_cast<double>(m_faults.size());
        else if (x.quantity == "speed")
            value = m_pipeline.active_command().speed;
        else if (x.quantity == "frames")
            value = static_cast<double>(m_frames_delivered);
        else if (x.quantity == "zmp_margin")
            value = m_min_margin_exec;
        else if (x.quantity == "latency_p95")
            value = latency_all().p95_ms;
        if (!value)
        {
            c.observed = "unknown quantity";
            r.checks.push_back(c);
            continue;
        }
        c.observed = fmt(*value);
        double want = 0.0;
        try
        {
            want = std::stod(x.value);
        }
        catch (const std::exception&)
        {
            c.observed += " (bad threshold)";
            r.checks.push_back(c);
            continue;
        }
        const double v = *value;
        if (x.op == ">=")
            c.ok = v >= want;
        else if (x.op == "<=")
            c.ok = v <= want;
        else if (x.op == ">")
            c.ok = v > want;
        else if (x.op == "<")
            c.ok = v < want;
        else
            c.ok = v == want;
        r.checks.push_back(c);
    }
    return r;
}

ScenarioReport AvatarStack::run_scenario(const Scenario& scenario)
{
    ScenarioReport report;
    report.scenario = scenario.name;
    if (scenario.empty())
        return report;

    m_replay_base = scenario.base_dir;
    const double origin = time();
    const std::uint64_t tick0 = m_tick;
    const std::size_t faults0 = m_faults.size();
    const std::size_t haptics0 = m_haptics.size();
    const std::uint64_t frames0 = m_frames_delivered;
    const std::size_t probes0 = m_probe_all.size();
    m_min_margin_ref = std::numeric_limits<double>::infinity();
    m_min_margin_exec = std::numeric_limits<double>::infinity();

    for (const auto& e : scenario.events)
    {
        run_until(origin + e.t);
        apply_event(e, report);
        if (e.kind == EventKind::End)
            break;
    }

    report.duration = time() - origin;
    report.ticks = m_tick - tick0;
    report.faults.assign(m_faults.begin() + static_cast<std::ptrdiff_t>(faults0), m_faults.end());
    report.latency = bus::LatencyStats::from_samples(
        std::vector<double>(m_probe_all.begin() + static_cast<std::ptrdiff_t>(probes0), m_probe_all.end()),
        report.duration);
    report.min_zmp_margin_ref = m_min_margin_ref;
    report.min_zmp_margin_executed = m_min_margin_exec;
    report.haptic_commands = m_haptics.size() - haptics0;
    for (std::size_t i = haptics0; i < m_haptics.size(); ++i)
        report.haptic_latency_max_ms = std::max(report.haptic_latency_max_ms, m_haptics[i].latency_ms());
    report.frames_delivered = m_frames_delivered - frames0;
    return report;
}

} // namespace avatar::sim

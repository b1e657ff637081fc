#include <avatar/gateway/protocol.hpp>
#include <avatar/gateway/snapshot.hpp>

#include <cmath>

namespace avatar::gateway {

namespace {

using nlohmann::ordered_json;

std::string_view stance_name(model::Stance s)
{
    switch (s)
    {
    case model::Stance::Left: return "left";
    case model::Stance::Right: return "right";
    case model::Stance::Double: return "double";
    case model::Stance::None: return "none";
    }
    return "?";
}

ordered_json vec(const Vec2& v) { return ordered_json::array({v.x(), v.y()}); }
ordered_json vec(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }
ordered_json quat(const Quat& q) { return ordered_json::array({q.w(), q.x(), q.y(), q.z()}); }

ordered_json frame_pose(const feedback::FramePose& p)
{
    return {{"position", vec(p.position)}, {"orientation", quat(p.orientation)}};
}

} // namespace

SnapshotAssembler::SnapshotAssembler(SnapshotParams params)
    : m_params(params)
{
}

double SnapshotAssembler::age(const Field& f, double now) const
{
    const double since = f.updated ? *f.updated : m_epoch.value_or(now);
    return std::max(0.0, now - since);
}

void SnapshotAssembler::set_time(double now)
{
    std::lock_guard lock(m_mutex);
    if (!m_epoch)
        m_epoch = now;
    m_now = std::max(m_now, now);
}

void SnapshotAssembler::on_state(const sim::StateMsg& m, double now)
{
    set_time(now);
    std::lock_guard lock(m_mutex);
    m_state = m;
    m_state_field.updated = now;
}

void SnapshotAssembler::on_skin(const feedback::SkinEvent& e, double now)
{
    set_time(now);
    std::lock_guard lock(m_mutex);
    m_skin.emplace_back(now, e);
    m_skin_field.updated = now;
}

void SnapshotAssembler::on_haptic(const sim::HapticArrival& h)
{
    set_time(h.arrival);
    std::lock_guard lock(m_mutex);
    m_haptics.push_back(h);
}

void SnapshotAssembler::on_latency(const feedback::LatencyReadout& r, double now)
{
    set_time(now);
    std::lock_guard lock(m_mutex);
    m_latency = r;
    m_latency_field.updated = now;
}

void SnapshotAssembler::on_frame(const feedback::CameraFrame& f, double now)
{
    set_time(now);
    std::lock_guard lock(m_mutex);
    m_frame = f;
    m_frame_field.updated = now;
}

void SnapshotAssembler::on_fault(const locomotion::FaultEvent& f)
{
    std::lock_guard lock(m_mutex);
    m_faults.push_back(f);
    ++m_fault_count;
    while (m_faults.size() > m_params.max_faults)
        m_faults.pop_front();
}

sim::StackListener SnapshotAssembler::listener(const sim::AvatarStack& stack, sim::StackListener next)
{
    sim::StackListener l;
    l.state = [this, &stack, next](const sim::StateMsg& m) {
        on_state(m, stack.time());
        if (next.state)
            next.state(m);
    };
    l.skin = [this, &stack, next](const feedback::SkinEvent& e) {
        on_skin(e, stack.time());
        if (next.skin)
            next.skin(e);
    };
    l.haptic = [this, next](const sim::HapticArrival& h) {
        on_haptic(h);
        if (next.haptic)
            next.haptic(h);
    };
    l.latency = [this, &stack, next](const feedback::LatencyReadout& r) {
        on_latency(r, stack.time());
        if (next.latency)
            next.latency(r);
    };
    l.frame = [this, &stack, next](const feedback::CameraFrame& f) {
        on_frame(f, stack.time());
        if (next.frame)
            next.frame(f);
    };
    l.fault = [this, next](const locomotion::FaultEvent& f) {
        on_fault(f);
        if (next.fault)
            next.fault(f);
    };
    l.robot_walk = next.robot_walk;
    return l;
}

std::uint64_t SnapshotAssembler::assembled() const
{
    std::lock_guard lock(m_mutex);
    return m_count;
}

ordered_json SnapshotAssembler::assemble()
{
    std::lock_guard lock(m_mutex);
    const double now = m_now;
    double t = now;
    if (!(t > m_last_snapshot))
        t = std::nextafter(m_last_snapshot, std::numeric_limits<double>::infinity());
    m_last_snapshot = t;
    ++m_count;

    while (!m_skin.empty() && now - m_skin.front().first > m_params.skin_hold)
        m_skin.pop_front();
    while (!m_haptics.empty() && now - m_haptics.front().arrival > m_params.haptic_hold)
        m_haptics.pop_front();

    ordered_json j;
    j["v"] = kProtocolVersion;
    j["type"] = "telemetry";
    j["seq"] = m_count;
    j["snapshot_time"] = t;

    // Everything below "state" comes from one robot tick.
    if (m_state)
    {
        const auto& s = *m_state;
        j["tick_time"] = s.t;
        j["joint_positions"] = s.q.to_std();
        j["base_pose"] = {{"position", vec(Vec3(s.base.translation()))},
                          {"orientation", quat(Quat(s.base.rotation()))}};
        j["walking"] = {
            {"zmp_ref", vec(s.zmp_ref)},
            {"zmp", vec(s.zmp_executed)},
            {"dcm", vec(s.dcm)},
            {"com", vec(s.com)},
            {"zmp_margin", s.zmp_margin},
            {"stance", stance_name(s.stance)},
            {"step", s.step},
            {"command", {{"heading", s.walking.heading}, {"speed", s.walking.speed}}},
        };
        j["face"] = {{"pattern", s.face},
                     {"expression", s.face >= 0 && s.face < static_cast<int>(retargeting::kExpressions.size())
                                        ? retargeting::expression_name(retargeting::kExpressions[s.face])
                                        : "unknown"}};
    }
    else
    {
        j["tick_time"] = nullptr;
        j["joint_positions"] = nullptr;
        j["base_pose"] = nullptr;
        j["walking"] = nullptr;
        j["face"] = nullptr;
    }

    ordered_json skin = ordered_json::array();
    for (const auto& [arrival, e] : m_skin)
        skin.push_back({{"patch", model::skin_patch_name(e.patch)},
                        {"intensity", e.intensity},
                        {"taxels", e.taxels},
                        {"timestamp", e.timestamp},
                        {"arrival", arrival}});
    j["skin"] = std::move(skin);

    ordered_json haptics = ordered_json::array();
    for (const auto& h : m_haptics)
        haptics.push_back({{"node", h.command.node},
                           {"amplitude", h.command.amplitude},
                           {"duration_ms", h.command.duration_ms},
                           {"source_time", h.command.source_time},
                           {"arrival", h.arrival},
                           {"latency_ms", h.latency_ms()}});
    j["haptics"] = std::move(haptics);

    j["latency"] = {{"has_data", m_latency.has_data},
                    {"mean_ms", m_latency.mean_ms},
                    {"p95_ms", m_latency.p95_ms},
                    {"alarm", m_latency.alarm},
                    {"text", m_latency.text}};

    ordered_json faults = ordered_json::array();
    for (const auto& f : m_faults)
        faults.push_back({{"t", f.t}, {"source", f.source}, {"what", f.what}});
    j["faults"] = {{"count", m_fault_count}, {"recent", std::move(faults)}};

    if (m_frame)
    {
        ordered_json objects = ordered_json::array();
        for (const auto& o : m_frame->scene.objects)
            objects.push_back({{"id", o.id}, {"pose", frame_pose(o.pose)}});
        j["frame"] = {{"timestamp", m_frame->timestamp},
                      {"width", m_frame->width},
                      {"height", m_frame->height},
                      {"camera", frame_pose(m_frame->scene.camera)},
                      {"objects", std::move(objects)}};
    }
    else
        j["frame"] = nullptr;

    ordered_json ages = ordered_json::object();
    ordered_json stale = ordered_json::object();
    for (const auto& [name, f] : {std::pair<const char*, const Field*>{"state", &m_state_field},
                                  {"skin", &m_skin_field},
                                  {"latency", &m_latency_field},
                                  {"frame", &m_frame_field}})
    {
        const double a = age(*f, now);
        ages[name] = a;
        if (a > m_params.stale_after)
            stale[name] = a;
    }
    j["ages"] = std::move(ages);
    j["stale"] = std::move(stale);
    return j;
}

} // namespace avatar::gateway

#include <avatar/feedback/feedback.hpp>

#include <avatar/bus/codec.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace avatar::feedback {

using bus::ByteReader;
using bus::ByteWriter;
using bus::Bytes;

void SkinEvent::validate() const
{
    if (!std::isfinite(intensity) || intensity < 0.0 || intensity > 1.0)
        throw FeedbackError(FeedbackErrc::InvalidEvent, "intensity outside [0, 1]");
    if ((intensity > 0.0) != !taxels.empty())
        throw FeedbackError(FeedbackErrc::InvalidEvent, "intensity must be positive exactly when taxels are active");
}

HapticMapping HapticMapping::identity()
{
    HapticMapping m;
    m.set(model::SkinPatch::LeftUpperArm, "left_arm");
    m.set(model::SkinPatch::RightUpperArm, "right_arm");
    m.set(model::SkinPatch::LeftHand, "left_hand");
    m.set(model::SkinPatch::RightHand, "right_hand");
    return m;
}

HapticMapping HapticMapping::from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw FeedbackError(FeedbackErrc::InvalidEvent, "haptic mapping must be an object");
    HapticMapping m;
    for (const auto& [key, value] : j.items())
    {
        const auto patch = model::skin_patch_from_name(key);
        if (!patch || !value.is_string())
            throw FeedbackError(FeedbackErrc::InvalidEvent, "bad mapping entry " + key);
        m.set(*patch, value.get<std::string>());
    }
    return m;
}

nlohmann::json HapticMapping::to_json() const
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [patch, node] : m_nodes)
        j[std::string(model::skin_patch_name(patch))] = node;
    return j;
}

std::optional<std::string> HapticMapping::node(model::SkinPatch patch) const
{
    auto it = m_nodes.find(patch);
    if (it == m_nodes.end())
        return std::nullopt;
    return it->second;
}

std::optional<HapticCommand> route_skin_to_haptics(const SkinEvent& event, const HapticMapping& mapping,
                                                   const RoutingParams& params)
{
    event.validate();
    const auto node = mapping.node(event.patch);
    if (!node)
        throw FeedbackError(FeedbackErrc::UnmappedPatch, std::string(model::skin_patch_name(event.patch)));
    if (event.intensity == 0.0)
        return std::nullopt;
    return HapticCommand{*node, event.intensity, std::max(params.duration_ms, kMinHapticDurationMs), event.timestamp};
}

FingerFeedback compute_finger_feedback(const std::array<double, 5>& forces)
{
    FingerFeedback out;
    for (std::size_t i = 0; i < forces.size(); ++i)
    {
        const double f = std::isfinite(forces[i]) ? std::max(forces[i], 0.0) : 0.0;
        out.fingers[i].brake_force = std::min(f, kMaxBrakeForce);
        out.fingers[i].vibration = std::min(f / kVibrationSaturationForce, 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void put_pose(ByteWriter& w, const FramePose& p)
{
    for (double v : {p.position.x(), p.position.y(), p.position.z(), p.orientation.w(), p.orientation.x(),
                     p.orientation.y(), p.orientation.z()})
        w.f32(static_cast<float>(v));
}

FramePose get_pose(ByteReader& r)
{
    FramePose p;
    const double px = r.f32(), py = r.f32(), pz = r.f32();
    const double qw = r.f32(), qx = r.f32(), qy = r.f32(), qz = r.f32();
    p.position = Vec3(px, py, pz);
    p.orientation = Quat(qw, qx, qy, qz);
    return p;
}

template <typename F>
auto guarded(F&& f)
{
    try
    {
        return f();
    }
    catch (const bus::BusError& e)
    {
        throw FeedbackError(FeedbackErrc::MalformedFrame, e.what());
    }
}

} // namespace

Bytes FrameDescriptor::encode() const
{
    if (objects.size() > 0xffff)
        throw FeedbackError(FeedbackErrc::MalformedFrame, "too many objects");
    Bytes out;
    ByteWriter w(out);
    put_pose(w, camera);
    w.u16(static_cast<std::uint16_t>(objects.size()));
    for (const auto& o : objects)
    {
        w.u32(o.id);
        put_pose(w, o.pose);
    }
    return out;
}

FrameDescriptor FrameDescriptor::decode(std::span<const std::uint8_t> bytes)
{
    return guarded([&] {
        ByteReader r(bytes);
        FrameDescriptor d;
        d.camera = get_pose(r);
        const std::size_t n = r.u16();
        d.objects.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            SceneObject o;
            o.id = r.u32();
            o.pose = get_pose(r);
            d.objects.push_back(o);
        }
        r.finish();
        return d;
    });
}

Bytes CameraFrame::encode() const
{
    Bytes out;
    ByteWriter w(out);
    w.f64(timestamp);
    w.u16(width);
    w.u16(height);
    w.raw(scene.encode());
    return out;
}

CameraFrame CameraFrame::decode(std::span<const std::uint8_t> bytes)
{
    return guarded([&] {
        ByteReader r(bytes);
        CameraFrame f;
        f.timestamp = r.f64();
        f.width = r.u16();
        f.height = r.u16();
        f.scene = FrameDescriptor::decode(r.raw(r.remaining()));
        return f;
    });
}

FramePacer::FramePacer(double fps, double slack)
    : m_min_interval((1.0 - slack) / fps)
{
}

bool FramePacer::offer(double timestamp)
{
    if (m_last && timestamp - *m_last < m_min_interval)
    {
        ++m_dropped;
        return false;
    }
    m_last = timestamp;
    ++m_delivered;
    return true;
}

void FramePacer::reset()
{
    m_last.reset();
    m_delivered = 0;
    m_dropped = 0;
}

LatencyReadout latency_readout(const bus::LatencyStats& stats)
{
    LatencyReadout r;
    if (stats.empty())
    {
        r.text = "no data";
        return r;
    }
    r.has_data = true;
    r.mean_ms = stats.mean_ms;
    r.p95_ms = stats.p95_ms;
    r.alarm = stats.p95_ms > kLatencyAlarmMs;
    char buf[96];
    std::snprintf(buf, sizeof buf, "latency mean %.1f ms, p95 %.1f ms%s", r.mean_ms, r.p95_ms,
                  r.alarm ? " [ALARM]" : "");
    r.text = buf;
    return r;
}

// ---------------------------------------------------------------------------

Bytes encode(const SkinEvent& e)
{
    Bytes out;
    ByteWriter w(out);
    w.u8(static_cast<std::uint8_t>(e.patch));
    w.f64(e.timestamp);
    w.f64(e.intensity);
    w.u16(static_cast<std::uint16_t>(e.taxels.size()));
    for (auto t : e.taxels)
        w.u16(t);
    return out;
}

SkinEvent decode_skin_event(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    SkinEvent e;
    const auto patch = r.u8();
    if (patch > 3)
        throw FeedbackError(FeedbackErrc::InvalidEvent, "unknown patch id");
    e.patch = static_cast<model::SkinPatch>(patch);
    e.timestamp = r.f64();
    e.intensity = r.f64();
    const std::size_t n = r.u16();
    for (std::size_t i = 0; i < n; ++i)
        e.taxels.push_back(r.u16());
    r.finish();
    return e;
}

Bytes encode(const HapticCommand& c)
{
    Bytes out;
    ByteWriter w(out);
    w.str(c.node);
    w.f64(c.amplitude);
    w.f64(c.duration_ms);
    w.f64(c.source_time);
    return out;
}

HapticCommand decode_haptic_command(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    HapticCommand c;
    c.node = r.str();
    c.amplitude = r.f64();
    c.duration_ms = r.f64();
    c.source_time = r.f64();
    r.finish();
    return c;
}

Bytes encode(const FingerFeedback& f, int hand)
{
    Bytes out;
    ByteWriter w(out);
    w.u8(static_cast<std::uint8_t>(hand));
    for (const auto& c : f.fingers)
    {
        w.f64(c.brake_force);
        w.f64(c.vibration);
    }
    return out;
}

std::pair<int, FingerFeedback> decode_finger_feedback(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    const int hand = r.u8();
    FingerFeedback f;
    for (auto& c : f.fingers)
    {
        c.brake_force = r.f64();
        c.vibration = r.f64();
    }
    r.finish();
    return {hand, f};
}

Bytes encode(const LatencyReadout& x)
{
    Bytes out;
    ByteWriter w(out);
    w.u8(x.has_data ? 1 : 0);
    w.f64(x.mean_ms);
    w.f64(x.p95_ms);
    w.u8(x.alarm ? 1 : 0);
    w.str(x.text);
    return out;
}

LatencyReadout decode_latency_readout(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    LatencyReadout x;
    x.has_data = r.u8() != 0;
    x.mean_ms = r.f64();
    x.p95_ms = r.f64();
    x.alarm = r.u8() != 0;
    x.text = r.str();
    r.finish();
    return x;
}

} // namespace avatar::feedback

#include <avatar/sim/messages.hpp>

#include <avatar/bus/codec.hpp>

namespace avatar::sim {

using bus::ByteReader;
using bus::ByteWriter;
using bus::Bytes;

std::string reader_port(std::string_view topic, std::string_view reader)
{
    return std::string(topic) + ":" + std::string(reader);
}

namespace {

void put_q(ByteWriter& w, const model::JointVector& q)
{
    for (std::size_t i = 0; i < model::kDofs; ++i)
        w.f64(q[i]);
}

model::JointVector get_q(ByteReader& r)
{
    model::JointVector q;
    for (std::size_t i = 0; i < model::kDofs; ++i)
        q[i] = r.f64();
    return q;
}

model::Side get_side(ByteReader& r)
{
    const auto v = r.u8();
    if (v > 1)
        throw bus::BusError(bus::BusErrc::MalformedPayload, "side");
    return static_cast<model::Side>(v);
}

template <typename T, typename F>
T read_all(std::span<const std::uint8_t> b, F&& f)
{
    ByteReader r(b);
    T out = f(r);
    r.finish();
    return out;
}

} // namespace

Bytes encode(const PostureRefMsg& m)
{
    Bytes b;
    ByteWriter w(b);
    w.f64(m.t);
    put_q(w, m.q);
    return b;
}

PostureRefMsg decode_posture_ref(std::span<const std::uint8_t> b)
{
    return read_all<PostureRefMsg>(b, [](ByteReader& r) {
        PostureRefMsg m;
        m.t = r.f64();
        m.q = get_q(r);
        return m;
    });
}

Bytes encode(const WalkMsg& m)
{
    Bytes b;
    ByteWriter w(b);
    w.f64(m.t);
    w.f64(m.cmd.heading);
    w.f64(m.cmd.speed);
    return b;
}

WalkMsg decode_walk(std::span<const std::uint8_t> b)
{
    return read_all<WalkMsg>(b, [](ByteReader& r) {
        WalkMsg m;
        m.t = r.f64();
        m.cmd.heading = r.f64();
        m.cmd.speed = r.f64();
        return m;
    });
}

Bytes encode(const HeadRefMsg& m)
{
    Bytes b;
    ByteWriter w(b);
    w.f64(m.t);
    const auto& h = m.head;
    for (double v : {h.neck_pitch, h.neck_roll, h.neck_yaw, h.eyes.version, h.eyes.vergence, h.eyes.tilt, h.eyelids})
        w.f64(v);
    w.u8(h.clamped ? 1 : 0);
    return b;
}

HeadRefMsg decode_head_ref(std::span<const std::uint8_t> b)
{
    return read_all<HeadRefMsg>(b, [](ByteReader& r) {
        HeadRefMsg m;
        m.t = r.f64();
        auto& h = m.head;
        h.neck_pitch = r.f64();
        h.neck_roll = r.f64();
        h.neck_yaw = r.f64();
        h.eyes.version = r.f64();
        h.eyes.vergence = r.f64();
        h.eyes.tilt = r.f64();
        h.eyelids = r.f64();
        h.clamped = r.u8() != 0;
        return m;
    });
}

Bytes encode(const FingerRefMsg& m)
{
    Bytes b;
    ByteWriter w(b);
    w.f64(m.t);
    w.u8(static_cast<std::uint8_t>(m.side));
    for (double v : m.motors)
        w.f64(v);
    return b;
}

FingerRefMsg decode_finger_ref(std::span<const std::uint8_t> b)
{
    return read_all<FingerRefMsg>(b, [](ByteReader& r) {
        FingerRefMsg m;
        m.t = r.f64();
        m.side = get_side(r);
        for (double& v : m.motors)
            v = r.f64();
        return m;
    });
}

Bytes encode(const FaceMsg& m)
{
    Bytes b;
    ByteWriter w(b);
    w.f64(m.t);
    w.u8(static_cast<std::uint8_t>(m.pattern));
    return b;
}

FaceMsg decode_face(std::span<const std::uint8_t> b)
{
    return read_all<FaceMsg>(b, [](ByteReader& r) {
        FaceMsg m;
        m.t = r.f64();
        m.pattern = r.u8();
        return m;
    });
}

Bytes encode(const TouchRequest& m)
{
    Bytes b;
    ByteWriter w(b);
    w.f64(m.t);
    w.u8(static_cast<std::uint8_t>(m.patch));
    w.f64(m.intensity);
    w.u16(static_cast<std::uint16_t>(m.taxels.size()));
    for (auto t : m.taxels)
        w.u16(t);
    return b;
}

TouchRequest decode_touch(std::span<const std::uint8_t> b)
{
    return read_all<TouchRequest>(b, [](ByteReader& r) {
        TouchRequest m;
        m.t = r.f64();
        const auto p = r.u8();
        if (p > 3)
            throw bus::BusError(bus::BusErrc::MalformedPayload, "patch");
        m.patch = static_cast<model::SkinPatch>(p);
        m.intensity = r.f64();
        const std::size_t n = r.u16();
        for (std::size_t i = 0; i < n; ++i)
            m.taxels.push_back(r.u16());
        return m;
    });
}

Bytes encode(const FingertipForcesMsg& m)
{
    Bytes b;
    ByteWriter w(b);
    w.f64(m.t);
    w.u8(static_cast<std::uint8_t>(m.side));
    for (double v : m.forces)
        w.f64(v);
    return b;
}

FingertipForcesMsg decode_fingertip_forces(std::span<const std::uint8_t> b)
{
    return read_all<FingertipForcesMsg>(b, [](ByteReader& r) {
        FingertipForcesMsg m;
        m.t = r.f64();
        m.side = get_side(r);
        for (double& v : m.forces)
            v = r.f64();
        return m;
    });
}

Bytes encode(const StateMsg& m)
{
    Bytes b;
    ByteWriter w(b);
    w.f64(m.t);
    const Vec3 p = m.base.translation();
    const Quat q(m.base.linear());
    for (double v : {p.x(), p.y(), p.z(), q.w(), q.x(), q.y(), q.z()})
        w.f64(v);
    put_q(w, m.q);
    for (double v : {m.com.x(), m.com.y(), m.com.z(), m.zmp_ref.x(), m.zmp_ref.y(), m.zmp_executed.x(),
                     m.zmp_executed.y(), m.dcm.x(), m.dcm.y(), m.zmp_margin})
        w.f64(v);
    w.u8(static_cast<std::uint8_t>(m.stance));
    w.i64(m.step);
    w.u32(m.faults);
    w.u8(static_cast<std::uint8_t>(m.face));
    w.f64(m.walking.heading);
    w.f64(m.walking.speed);
    return b;
}

StateMsg decode_state(std::span<const std::uint8_t> b)
{
    return read_all<StateMsg>(b, [](ByteReader& r) {
        StateMsg m;
        m.t = r.f64();
        const double px = r.f64(), py = r.f64(), pz = r.f64();
        const double qw = r.f64(), qx = r.f64(), qy = r.f64(), qz = r.f64();
        m.base = Pose::Identity();
        m.base.translation() = Vec3(px, py, pz);
        m.base.linear() = Quat(qw, qx, qy, qz).normalized().toRotationMatrix();
        m.q = get_q(r);
        const double cx = r.f64(), cy = r.f64(), cz = r.f64();
        m.com = Vec3(cx, cy, cz);
        const double zx = r.f64(), zy = r.f64();
        m.zmp_ref = Vec2(zx, zy);
        const double ex = r.f64(), ey = r.f64();
        m.zmp_executed = Vec2(ex, ey);
        const double dx = r.f64(), dy = r.f64();
        m.dcm = Vec2(dx, dy);
        m.zmp_margin = r.f64();
        const auto stance = r.u8();
        if (stance > 3)
            throw bus::BusError(bus::BusErrc::MalformedPayload, "stance");
        m.stance = static_cast<model::Stance>(stance);
        m.step = static_cast<int>(r.i64());
        m.faults = r.u32();
        m.face = r.u8();
        m.walking.heading = r.f64();
        m.walking.speed = r.f64();
        return m;
    });
}

Bytes encode_operator_frame(const retargeting::OperatorFrame& f)
{
    const std::string line = retargeting::to_session_line(f);
    return Bytes(line.begin(), line.end());
}

retargeting::OperatorFrame decode_operator_frame(std::span<const std::uint8_t> b)
{
    try
    {
        return retargeting::from_session_line(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
    }
    catch (const retargeting::RetargetError& e)
    {
        throw bus::BusError(bus::BusErrc::MalformedPayload, e.what());
    }
}

} // namespace avatar::sim

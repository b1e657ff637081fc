#include <avatar/bus/codec.hpp>
#include <avatar/bus/envelope.hpp>

namespace avatar::bus {

Bytes encode(const Envelope& e)
{
    if (e.topic.size() > 0xffff || e.type_tag.size() > 0xffff)
        throw BusError(BusErrc::MalformedEnvelope, "topic or tag too long");
    const std::size_t body = 8 + 8 + 2 + e.topic.size() + 2 + e.type_tag.size() + e.payload.size();
    if (body + 4 > kMaxFrame)
        throw BusError(BusErrc::MalformedEnvelope, "frame too large");

    Bytes out;
    out.reserve(body + 4);
    ByteWriter w(out);
    w.u32(static_cast<std::uint32_t>(body));
    w.u64(e.seq);
    w.u64(static_cast<std::uint64_t>(e.send_time));
    w.str(e.topic);
    w.str(e.type_tag);
    w.raw(e.payload);
    return out;
}

std::optional<std::size_t> frame_size(std::span<const std::uint8_t> buffer)
{
    if (buffer.size() < 4)
        return std::nullopt;
    ByteReader r(buffer.first(4));
    const std::size_t n = std::size_t{r.u32()} + 4;
    if (n < kEnvelopeHeader || n > kMaxFrame)
        throw BusError(BusErrc::MalformedEnvelope, "bad length prefix");
    return n;
}

Envelope decode(std::span<const std::uint8_t> frame)
{
    const auto n = frame_size(frame);
    if (!n || *n != frame.size())
        throw BusError(BusErrc::MalformedEnvelope, "length prefix does not match frame");
    try
    {
        ByteReader r(frame.subspan(4));
        Envelope e;
        e.seq = r.u64();
        e.send_time = static_cast<Micros>(r.u64());
        e.topic = r.str();
        e.type_tag = r.str();
        const auto rest = r.raw(r.remaining());
        e.payload.assign(rest.begin(), rest.end());
        return e;
    }
    catch (const BusError&)
    {
        throw BusError(BusErrc::MalformedEnvelope, "truncated field");
    }
}

} // namespace avatar::bus

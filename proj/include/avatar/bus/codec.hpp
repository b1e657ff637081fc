#pragma once

#include <avatar/bus/envelope.hpp>

#include <bit>
#include <cstring>
#include <string_view>

namespace avatar::bus {

/// Little-endian writer for typed payloads.
class ByteWriter
{
public:
    explicit ByteWriter(Bytes& out)
        : m_out(&out)
    {
    }

    void u8(std::uint8_t v) { m_out->push_back(v); }
    void u16(std::uint16_t v) { put(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v)); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }

    /// u16 length then bytes.
    void str(std::string_view s)
    {
        if (s.size() > 0xffff)
            throw BusError(BusErrc::MalformedPayload, "string too long");
        u16(static_cast<std::uint16_t>(s.size()));
        m_out->insert(m_out->end(), s.begin(), s.end());
    }

    void raw(std::span<const std::uint8_t> b) { m_out->insert(m_out->end(), b.begin(), b.end()); }

private:
    template <typename U>
    void put(U v)
    {
        for (std::size_t i = 0; i < sizeof(U); ++i)
            m_out->push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    Bytes* m_out;
};

class ByteReader
{
public:
    explicit ByteReader(std::span<const std::uint8_t> in)
        : m_in(in)
    {
    }

    std::uint8_t u8() { return take<std::uint8_t>(); }
    std::uint16_t u16() { return take<std::uint16_t>(); }
    std::uint32_t u32() { return take<std::uint32_t>(); }
    std::uint64_t u64() { return take<std::uint64_t>(); }
    std::int64_t i64() { return static_cast<std::int64_t>(take<std::uint64_t>()); }
    float f32() { return std::bit_cast<float>(take<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(take<std::uint64_t>()); }

    std::string str()
    {
        const std::size_t n = u16();
        need(n);
        std::string s(reinterpret_cast<const char*>(m_in.data() + m_pos), n);
        m_pos += n;
        return s;
    }

    std::span<const std::uint8_t> raw(std::size_t n)
    {
        need(n);
        auto s = m_in.subspan(m_pos, n);
        m_pos += n;
        return s;
    }

    std::size_t remaining() const { return m_in.size() - m_pos; }
    bool done() const { return m_pos == m_in.size(); }

    /// Throws unless every byte was consumed.
    void finish() const
    {
        if (!done())
            throw BusError(BusErrc::MalformedPayload, "trailing bytes");
    }

private:
    void need(std::size_t n) const
    {
        if (remaining() < n)
            throw BusError(BusErrc::MalformedPayload, "truncated");
    }

    template <typename U>
    U take()
    {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<U>(m_in[m_pos + i]) << (8 * i));
        m_pos += sizeof(U);
        return v;
    }

    std::span<const std::uint8_t> m_in;
    std::size_t m_pos{0};
};

} // namespace avatar::bus

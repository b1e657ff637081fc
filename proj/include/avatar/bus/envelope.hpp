#pragma once

#include <avatar/bus/errors.hpp>
#include <avatar/common/time.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace avatar::bus {

using Bytes = std::vector<std::uint8_t>;

struct Envelope
{
    std::uint64_t seq{0};
    /// Sender monotonic clock.
    Micros send_time{0};
    std::string topic;
    std::string type_tag;
    Bytes payload;

    bool operator==(const Envelope&) const = default;
};

/// Frame layout, all integers little-endian:
///
///   u32 length        bytes that follow this field
///   u64 seq
///   u64 send_time_us
///   u16 topic length, topic bytes
///   u16 tag length,   tag bytes
///   payload           the remainder of the frame
Bytes encode(const Envelope& e);

/// Decodes exactly one frame; `frame` must hold nothing else.
Envelope decode(std::span<const std::uint8_t> frame);

/// Size of the first frame in `buffer` once its length prefix is available.
std::optional<std::size_t> frame_size(std::span<const std::uint8_t> buffer);

inline constexpr std::size_t kEnvelopeHeader = 4 + 8 + 8 + 2 + 2;
/// Frames above this size are rejected by decoders.
inline constexpr std::size_t kMaxFrame = 16u << 20;

} // namespace avatar::bus

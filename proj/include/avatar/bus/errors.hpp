#pragma once

#include <avatar/common/error.hpp>

#include <string_view>

namespace avatar::bus {

enum class BusErrc
{
    MalformedName,
    DuplicateName,
    UnknownPort,
    DirectionMismatch,
    UnknownConnection,
    RelayUnreachable,
    SubnetIdCollision,
    InsufficientProbes,
    MalformedEnvelope,
    MalformedPayload,
    Protocol,
    PortInUse,
    Io,
};

constexpr std::string_view to_string(BusErrc c)
{
    switch (c)
    {
    case BusErrc::MalformedName: return "MalformedName";
    case BusErrc::DuplicateName: return "DuplicateName";
    case BusErrc::UnknownPort: return "UnknownPort";
    case BusErrc::DirectionMismatch: return "DirectionMismatch";
    case BusErrc::UnknownConnection: return "UnknownConnection";
    case BusErrc::RelayUnreachable: return "RelayUnreachable";
    case BusErrc::SubnetIdCollision: return "SubnetIdCollision";
    case BusErrc::InsufficientProbes: return "InsufficientProbes";
    case BusErrc::MalformedEnvelope: return "MalformedEnvelope";
    case BusErrc::MalformedPayload: return "MalformedPayload";
    case BusErrc::Protocol: return "Protocol";
    case BusErrc::PortInUse: return "PortInUse";
    case BusErrc::Io: return "Io";
    }
    return "BusError";
}

using BusError = Error<BusErrc>;

} // namespace avatar::bus

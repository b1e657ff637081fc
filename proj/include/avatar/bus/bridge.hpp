#pragma once

#include <avatar/bus/bus.hpp>
#include <avatar/bus/socket.hpp>

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace avatar::bus {

/// Joins two Bus instances living in different processes over one TCP
/// stream of envelope frames. Exported output ports are forwarded to the
/// peer unmodified; frames from the peer are republished on local output
/// ports of the same name when that name was imported.
class Bridge
{
public:
    Bridge(Bus& bus, Socket socket);
    ~Bridge();
    Bridge(const Bridge&) = delete;
    Bridge& operator=(const Bridge&) = delete;

    /// Forwards a local output port to the peer.
    void export_port(std::string_view output, Carrier carrier = Carrier::Reliable);
    /// Registers a local output port fed by the peer's port of that name.
    PortHandle import_port(std::string_view name, std::string_view subnet = kDefaultSubnet);

    bool connected() const { return m_link->connected; }
    std::uint64_t frames_in() const { return m_in; }
    std::uint64_t frames_out() const { return m_link->out; }
    void close();

private:
    // Shared with the export callbacks, which the bus may keep after the
    // bridge is gone.
    struct Link
    {
        Socket sock;
        std::mutex send_mutex;
        std::atomic<bool> connected{true};
        std::atomic<std::uint64_t> out{0};
    };

    void read_loop();

    Bus* m_bus;
    std::shared_ptr<Link> m_link;
    std::mutex m_map_mutex;
    std::map<std::string, PortHandle, std::less<>> m_imports;
    std::atomic<bool> m_stop{false};
    std::atomic<std::uint64_t> m_in{0};
    std::thread m_reader;
};

std::unique_ptr<Bridge> bridge_accept(Bus& bus, Listener& listener, milliseconds timeout);
std::unique_ptr<Bridge> bridge_connect(Bus& bus, const std::string& host, std::uint16_t port);

} // namespace avatar::bus

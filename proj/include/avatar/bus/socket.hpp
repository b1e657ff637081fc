#pragma once

#include <avatar/bus/errors.hpp>

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace avatar::bus {

using std::chrono::milliseconds;

/// Owning TCP socket descriptor (POSIX).
class Socket
{
public:
    Socket() = default;
    explicit Socket(int fd)
        : m_fd(fd)
    {
    }
    ~Socket() { close(); }
    Socket(Socket&& o) noexcept
        : m_fd(o.m_fd)
    {
        o.m_fd = -1;
    }
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    bool valid() const { return m_fd >= 0; }
    int fd() const { return m_fd; }
    void close();
    /// Stops further reads and writes without releasing the descriptor.
    void shutdown();

    /// Writes everything; throws Io when the peer is gone.
    void send_all(std::span<const std::uint8_t> data);
    void send_all(std::string_view text);
    /// Up to buf.size() bytes; 0 on orderly close, nullopt on timeout.
    std::optional<std::size_t> recv_some(std::span<std::uint8_t> buf, milliseconds timeout);

private:
    int m_fd{-1};
};

Socket tcp_connect(const std::string& host, std::uint16_t port, milliseconds timeout = milliseconds(2000));

class Listener
{
public:
    /// Port 0 picks a free port. Throws PortInUse.
    explicit Listener(std::uint16_t port, const std::string& host = "127.0.0.1");

    std::uint16_t port() const { return m_port; }
    std::optional<Socket> accept(milliseconds timeout);
    void close() { m_sock.close(); }

private:
    Socket m_sock;
    std::uint16_t m_port{0};
};

/// Splits a byte stream into newline-terminated lines.
class LineReader
{
public:
    explicit LineReader(Socket& s, std::size_t max_line = 1 << 20)
        : m_sock(&s)
        , m_max(max_line)
    {
    }

    /// Next line without its terminator. nullopt on timeout; throws Io when
    /// the peer closed before a full line arrived.
    std::optional<std::string> read_line(milliseconds timeout);

private:
    Socket* m_sock;
    std::size_t m_max;
    std::string m_buffer;
};

/// "host:port" or "tcp://host:port".
std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint);

} // namespace avatar::bus

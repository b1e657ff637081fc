#include <avatar/bus/socket.hpp>

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <charconv>

namespace avatar::bus {

namespace {

[[noreturn]] void fail(const char* what)
{
    throw BusError(BusErrc::Io, std::string(what) + ": " + std::strerror(errno));
}

sockaddr_in make_addr(const std::string& host, std::uint16_t port)
{
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(port);
    const std::string h = (host == "localhost" || host.empty()) ? "127.0.0.1" : host;
    if (::inet_pton(AF_INET, h.c_str(), &a.sin_addr) != 1)
        throw BusError(BusErrc::Io, "bad address " + host);
    return a;
}

bool wait_fd(int fd, short events, milliseconds timeout)
{
    pollfd p{fd, events, 0};
    for (;;)
    {
        const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (r < 0 && errno == EINTR)
            continue;
        if (r < 0)
            fail("poll");
        return r > 0;
    }
}

} // namespace

Socket& Socket::operator=(Socket&& o) noexcept
{
    if (this != &o)
    {
        close();
        m_fd = o.m_fd;
        o.m_fd = -1;
    }
    return *this;
}

void Socket::close()
{
    if (m_fd >= 0)
    {
        ::close(m_fd);
        m_fd = -1;
    }
}

void Socket::shutdown()
{
    if (m_fd >= 0)
        ::shutdown(m_fd, SHUT_RDWR);
}

void Socket::send_all(std::span<const std::uint8_t> data)
{
    std::size_t off = 0;
    while (off < data.size())
    {
        const ssize_t n = ::send(m_fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK))
        {
            wait_fd(m_fd, POLLOUT, milliseconds(100));
            continue;
        }
        if (n <= 0)
            fail("send");
        off += static_cast<std::size_t>(n);
    }
}

void Socket::send_all(std::string_view text)
{
    send_all({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::optional<std::size_t> Socket::recv_some(std::span<std::uint8_t> buf, milliseconds timeout)
{
    if (!wait_fd(m_fd, POLLIN, timeout))
        return std::nullopt;
    for (;;)
    {
        const ssize_t n = ::recv(m_fd, buf.data(), buf.size(), 0);
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK))
            return std::nullopt;
        if (n < 0)
            fail("recv");
        return static_cast<std::size_t>(n);
    }
}

Socket tcp_connect(const std::string& host, std::uint16_t port, milliseconds timeout)
{
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid())
        fail("socket");
    const sockaddr_in a = make_addr(host, port);

    const int flags = ::fcntl(s.fd(), F_GETFL, 0);
    ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&a), sizeof a) < 0)
    {
        if (errno != EINPROGRESS)
            fail("connect");
        if (!wait_fd(s.fd(), POLLOUT, timeout))
            throw BusError(BusErrc::Io, "connect: timeout");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0)
        {
            errno = err;
            fail("connect");
        }
    }
    ::fcntl(s.fd(), F_SETFL, flags);
    const int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

Listener::Listener(std::uint16_t port, const std::string& host)
    : m_sock(::socket(AF_INET, SOCK_STREAM, 0))
{
    if (!m_sock.valid())
        fail("socket");
    const int one = 1;
    ::setsockopt(m_sock.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in a = make_addr(host, port);
    if (::bind(m_sock.fd(), reinterpret_cast<const sockaddr*>(&a), sizeof a) < 0)
    {
        if (errno == EADDRINUSE)
            throw BusError(BusErrc::PortInUse, std::to_string(port));
        fail("bind");
    }
    if (::listen(m_sock.fd(), 16) < 0)
        fail("listen");
    socklen_t len = sizeof a;
    ::getsockname(m_sock.fd(), reinterpret_cast<sockaddr*>(&a), &len);
    m_port = ntohs(a.sin_port);
}

std::optional<Socket> Listener::accept(milliseconds timeout)
{
    if (!m_sock.valid() || !wait_fd(m_sock.fd(), POLLIN, timeout))
        return std::nullopt;
    const int fd = ::accept(m_sock.fd(), nullptr, nullptr);
    if (fd < 0)
        return std::nullopt;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(fd);
}

std::optional<std::string> LineReader::read_line(milliseconds timeout)
{
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;)
    {
        const auto nl = m_buffer.find('\n');
        if (nl != std::string::npos)
        {
            std::string line = m_buffer.substr(0, nl);
            m_buffer.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            return line;
        }
        if (m_buffer.size() > m_max)
            throw BusError(BusErrc::Protocol, "line too long");
        const auto left = std::chrono::duration_cast<milliseconds>(deadline - std::chrono::steady_clock::now());
        std::uint8_t buf[4096];
        const auto n = m_sock->recv_some(buf, std::max(left, milliseconds(0)));
        if (!n)
            return std::nullopt;
        if (*n == 0)
            throw BusError(BusErrc::Io, "peer closed");
        m_buffer.append(reinterpret_cast<const char*>(buf), *n);
    }
}

std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint)
{
    if (endpoint.starts_with("tcp://"))
        endpoint.remove_prefix(6);
    const auto colon = endpoint.rfind(':');
    if (colon == std::string_view::npos)
        throw BusError(BusErrc::Protocol, "endpoint without port");
    unsigned port = 0;
    const auto tail = endpoint.substr(colon + 1);
    const auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), port);
    if (ec != std::errc() || p != tail.data() + tail.size() || port > 0xffff)
        throw BusError(BusErrc::Protocol, "bad port in endpoint");
    return {std::string(endpoint.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

} // namespace avatar::bus

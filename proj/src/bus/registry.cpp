#include <avatar/bus/registry.hpp>

#include <algorithm>
#include <cctype>
#include <sstream>

namespace avatar::bus {

bool is_valid_port_name(std::string_view name)
{
    if (name.size() < 2 || name.front() != '/' || name.back() == '/')
        return false;
    if (name.find("//") != std::string_view::npos)
        return false;
    return std::none_of(name.begin(), name.end(), [](char c) {
        return std::isspace(static_cast<unsigned char>(c)) || !std::isprint(static_cast<unsigned char>(c));
    });
}

void validate_port_name(std::string_view name)
{
    if (!is_valid_port_name(name))
        throw BusError(BusErrc::MalformedName, std::string(name));
}

namespace {

std::vector<std::string> split_words(std::string_view line)
{
    std::vector<std::string> out;
    std::istringstream in{std::string(line)};
    for (std::string w; in >> w;)
        out.push_back(w);
    return out;
}

std::string err(BusErrc c) { return "ERR " + std::string(to_string(c)); }

BusErrc code_from_name(std::string_view s)
{
    for (auto c : {BusErrc::MalformedName, BusErrc::DuplicateName, BusErrc::UnknownPort, BusErrc::Protocol})
        if (to_string(c) == s)
            return c;
    return BusErrc::Protocol;
}

} // namespace

std::string NameRegistry::handle(std::string_view line)
{
    const auto w = split_words(line);
    if (w.empty())
        return err(BusErrc::Protocol);

    std::scoped_lock lock(m_mutex);
    if (w[0] == "REG" && w.size() == 3)
    {
        if (!is_valid_port_name(w[1]))
            return err(BusErrc::MalformedName);
        if (!m_names.emplace(w[1], w[2]).second)
            return err(BusErrc::DuplicateName);
        return "ACK " + w[2];
    }
    if (w[0] == "QRY" && w.size() == 2)
    {
        if (!is_valid_port_name(w[1]))
            return err(BusErrc::MalformedName);
        const auto it = m_names.find(w[1]);
        if (it == m_names.end())
            return err(BusErrc::UnknownPort);
        return "ACK " + it->second;
    }
    return err(BusErrc::Protocol);
}

std::size_t NameRegistry::size() const
{
    std::scoped_lock lock(m_mutex);
    return m_names.size();
}

RegistryServer::RegistryServer(std::uint16_t port)
    : m_listener(port)
{
    m_acceptor = std::thread([this] { accept_loop(); });
}

RegistryServer::~RegistryServer() { stop(); }

void RegistryServer::stop()
{
    if (m_stop.exchange(true))
        return;
    if (m_acceptor.joinable())
        m_acceptor.join();
    std::scoped_lock lock(m_clients_mutex);
    for (auto& t : m_clients)
        if (t.joinable())
            t.join();
    m_listener.close();
}

void RegistryServer::accept_loop()
{
    while (!m_stop)
    {
        auto s = m_listener.accept(milliseconds(50));
        if (!s)
            continue;
        std::scoped_lock lock(m_clients_mutex);
        m_clients.emplace_back([this, sock = std::move(*s)]() mutable { serve(std::move(sock)); });
    }
}

void RegistryServer::serve(Socket s)
{
    LineReader reader(s);
    try
    {
        while (!m_stop)
        {
            const auto line = reader.read_line(milliseconds(50));
            if (!line)
                continue;
            s.send_all(m_registry.handle(*line) + "\n");
        }
    }
    catch (const BusError&)
    {
        // Client went away.
    }
}

RegistryClient::RegistryClient(const std::string& host, std::uint16_t port)
    : m_sock(tcp_connect(host, port))
    , m_reader(m_sock)
{
}

std::string RegistryClient::request(const std::string& line)
{
    std::scoped_lock lock(m_mutex);
    m_sock.send_all(line + "\n");
    const auto reply = m_reader.read_line(milliseconds(2000));
    if (!reply)
        throw BusError(BusErrc::Io, "registry timeout");
    return *reply;
}

namespace {

std::string expect_ack(const std::string& reply)
{
    if (reply.starts_with("ACK "))
        return reply.substr(4);
    if (reply.starts_with("ERR "))
        throw BusError(code_from_name(reply.substr(4)), reply);
    throw BusError(BusErrc::Protocol, "unexpected reply: " + reply);
}

} // namespace

void registry_register(RegistryTransport& t, std::string_view name, std::string_view endpoint)
{
    validate_port_name(name);
    if (endpoint.empty() || endpoint.find_first_of(" \t\r\n") != std::string_view::npos)
        throw BusError(BusErrc::Protocol, "bad endpoint");
    expect_ack(t.request("REG " + std::string(name) + " " + std::string(endpoint)));
}

std::optional<std::string> registry_query(RegistryTransport& t, std::string_view name)
{
    validate_port_name(name);
    const std::string reply = t.request("QRY " + std::string(name));
    if (reply == "ERR UnknownPort")
        return std::nullopt;
    return expect_ack(reply);
}

} // namespace avatar::bus

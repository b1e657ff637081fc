#pragma once

#include <avatar/bus/errors.hpp>
#include <avatar/bus/socket.hpp>

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace avatar::bus {

/// Throws MalformedName unless `name` is "/seg/seg/..." with non-empty
/// segments and no whitespace.
void validate_port_name(std::string_view name);
bool is_valid_port_name(std::string_view name);

/// Name table speaking the line protocol
///
///   REG <name> <endpoint>   ->  ACK <endpoint> | ERR <code>
///   QRY <name>              ->  ACK <endpoint> | ERR <code>
///
/// Requests are serialised.
class NameRegistry
{
public:
    /// One request line in, one response line out (no terminators).
    std::string handle(std::string_view line);

    std::size_t size() const;

private:
    mutable std::mutex m_mutex;
    std::map<std::string, std::string, std::less<>> m_names;
};

/// Something that answers registry requests.
class RegistryTransport
{
public:
    virtual ~RegistryTransport() = default;
    virtual std::string request(const std::string& line) = 0;
};

class LocalRegistry final : public RegistryTransport
{
public:
    std::string request(const std::string& line) override { return m_registry.handle(line); }
    NameRegistry& registry() { return m_registry; }

private:
    NameRegistry m_registry;
};

/// Registry served over the Reliable (TCP) carrier.
class RegistryServer
{
public:
    explicit RegistryServer(std::uint16_t port = 0);
    ~RegistryServer();
    RegistryServer(const RegistryServer&) = delete;
    RegistryServer& operator=(const RegistryServer&) = delete;

    std::uint16_t port() const { return m_listener.port(); }
    NameRegistry& registry() { return m_registry; }
    void stop();

private:
    void accept_loop();
    void serve(Socket s);

    NameRegistry m_registry;
    Listener m_listener;
    std::atomic<bool> m_stop{false};
    std::thread m_acceptor;
    std::mutex m_clients_mutex;
    std::vector<std::thread> m_clients;
};

class RegistryClient final : public RegistryTransport
{
public:
    RegistryClient(const std::string& host, std::uint16_t port);
    std::string request(const std::string& line) override;

private:
    std::mutex m_mutex;
    Socket m_sock;
    LineReader m_reader;
};

/// Typed helpers over any transport; failures throw the code named in the
/// ERR response.
void registry_register(RegistryTransport& t, std::string_view name, std::string_view endpoint);
std::optional<std::string> registry_query(RegistryTransport& t, std::string_view name);

} // namespace avatar::bus

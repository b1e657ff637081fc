#pragma once

#include <avatar/bus/socket.hpp>
#include <avatar/gateway/protocol.hpp>
#include <avatar/gateway/snapshot.hpp>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace avatar::gateway {

struct ServerOptions
{
    /// 0 picks a free port.
    std::uint16_t port{0};
    std::string host{"127.0.0.1"};
    double telemetry_hz{30.0};
};

/// NDJSON socket endpoint for console clients. One acceptor thread, one
/// reader thread per client and one broadcaster that assembles each
/// snapshot once and sends it to every client that said hello.
class GatewayServer
{
public:
    /// Called for each accepted command in arrival order, one at a time.
    using CommandSink = std::function<void(const ConsoleCommand&, Role)>;
    using SnapshotSource = std::function<nlohmann::ordered_json()>;

    /// Binds immediately; throws PortInUse.
    GatewayServer(ServerOptions options, CommandValidator& validator, CommandSink sink, SnapshotSource source);
    ~GatewayServer();
    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    /// Extra fields for the welcome message.
    void set_welcome(nlohmann::ordered_json extra) { m_welcome_extra = std::move(extra); }

    void start();
    void stop();
    std::uint16_t port() const { return m_port; }
    /// Clients that completed the handshake and are still connected.
    std::size_t clients() const;
    std::uint64_t broadcasts() const { return m_broadcasts.load(); }

private:
    struct Session;

    void accept_loop();
    void broadcast_loop();
    void serve(const std::shared_ptr<Session>& s);
    void handle(Session& s, const std::string& line);
    void reap(bool all);

    ServerOptions m_options;
    CommandValidator* m_validator;
    CommandSink m_sink;
    SnapshotSource m_source;
    nlohmann::ordered_json m_welcome_extra = nlohmann::ordered_json::object();

    std::unique_ptr<bus::Listener> m_listener;
    std::uint16_t m_port{0};

    std::atomic<bool> m_running{false};
    std::thread m_acceptor;
    std::thread m_broadcaster;
    std::mutex m_stop_mutex;
    std::condition_variable m_stop_cv;
    mutable std::mutex m_sessions_mutex;
    std::vector<std::shared_ptr<Session>> m_sessions;
    /// Serialises validation and forwarding across clients.
    std::mutex m_command_mutex;
    std::atomic<std::uint64_t> m_broadcasts{0};
};

/// Runs an AvatarStack behind a gateway: commands from the server are
/// queued and applied at the start of the next control tick, and the
/// snapshot assembler listens to the stack.
class GatewayService
{
public:
    GatewayService(sim::AvatarStack& stack, ServerOptions options, sim::StackListener extra = {},
                   SnapshotParams snapshot = {});
    ~GatewayService();

    /// Starts the endpoint. The stack advances only through tick() or
    /// run_realtime().
    void start();
    void stop();

    /// Applies queued commands, then steps the stack once.
    void tick();
    /// Steps on a background thread, one tick per dt of wall time.
    void run_realtime();
    /// Exception that stopped the real-time loop, if any.
    std::exception_ptr error() const;

    std::uint16_t port() const { return m_server.port(); }
    GatewayServer& server() { return m_server; }
    SnapshotAssembler& assembler() { return m_assembler; }
    std::uint64_t commands_applied() const { return m_applied.load(); }

private:
    sim::AvatarStack* m_stack;
    SnapshotAssembler m_assembler;
    CommandValidator m_validator;
    std::mutex m_queue_mutex;
    std::deque<ConsoleCommand> m_queue;
    std::atomic<std::uint64_t> m_applied{0};
    GatewayServer m_server;

    std::atomic<bool> m_realtime{false};
    std::thread m_loop;
    mutable std::mutex m_error_mutex;
    std::exception_ptr m_error;
};

} // namespace avatar::gateway

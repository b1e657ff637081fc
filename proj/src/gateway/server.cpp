#include <avatar/gateway/server.hpp>

#include <avatar/sim/stack.hpp>

#include <sys/socket.h>
#include <sys/time.h>

#include <chrono>

namespace avatar::gateway {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

/// A client that stops reading is dropped instead of stalling the broadcaster.
constexpr auto kSendTimeout = std::chrono::seconds(1);
constexpr auto kPoll = std::chrono::milliseconds(50);

ordered_json error_message(GatewayErrc code, const std::string& reason, const json* id)
{
    ordered_json j{{"v", kProtocolVersion}, {"type", "error"}, {"code", to_string(code)}, {"reason", reason}};
    if (id)
        j["id"] = *id;
    return j;
}

} // namespace

struct GatewayServer::Session
{
    explicit Session(bus::Socket s)
        : sock(std::move(s))
    {
    }

    bus::Socket sock;
    std::mutex write;
    /// -1 until the handshake succeeds, then the Role value.
    std::atomic<int> role{-1};
    std::atomic<bool> alive{true};
    std::thread thread;

    void send(const std::string& line)
    {
        std::lock_guard lock(write);
        if (!alive)
            return;
        try
        {
            sock.send_all(line);
        }
        catch (const std::exception&)
        {
            alive = false;
        }
    }
    void send(const ordered_json& j) { send(j.dump() + "\n"); }
};

GatewayServer::GatewayServer(ServerOptions options, CommandValidator& validator, CommandSink sink,
                             SnapshotSource source)
    : m_options(std::move(options))
    , m_validator(&validator)
    , m_sink(std::move(sink))
    , m_source(std::move(source))
{
    if (!(m_options.telemetry_hz > 0.0))
        throw std::invalid_argument("telemetry rate must be positive");
    try
    {
        m_listener = std::make_unique<bus::Listener>(m_options.port, m_options.host);
    }
    catch (const bus::BusError& e)
    {
        if (e.code() == bus::BusErrc::PortInUse)
            throw GatewayError(GatewayErrc::PortInUse, std::to_string(m_options.port));
        throw;
    }
    m_port = m_listener->port();
}

GatewayServer::~GatewayServer()
{
    stop();
}

void GatewayServer::start()
{
    if (m_running.exchange(true))
        return;
    m_acceptor = std::thread([this] { accept_loop(); });
    m_broadcaster = std::thread([this] { broadcast_loop(); });
}

void GatewayServer::stop()
{
    if (!m_running.exchange(false))
        return;
    {
        std::lock_guard lock(m_stop_mutex);
    }
    m_stop_cv.notify_all();
    m_acceptor.join();
    m_broadcaster.join();
    reap(true);
    m_listener->close();
}

std::size_t GatewayServer::clients() const
{
    std::lock_guard lock(m_sessions_mutex);
    std::size_t n = 0;
    for (const auto& s : m_sessions)
        n += s->alive && s->role >= 0;
    return n;
}

void GatewayServer::accept_loop()
{
    while (m_running)
    {
        auto sock = m_listener->accept(kPoll);
        reap(false);
        if (!sock)
            continue;
        const timeval tv{std::chrono::duration_cast<std::chrono::seconds>(kSendTimeout).count(), 0};
        ::setsockopt(sock->fd(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
        auto session = std::make_shared<Session>(std::move(*sock));
        std::lock_guard lock(m_sessions_mutex);
        m_sessions.push_back(session);
        session->thread = std::thread([this, session] { serve(session); });
    }
}

void GatewayServer::reap(bool all)
{
    std::vector<std::shared_ptr<Session>> done;
    {
        std::lock_guard lock(m_sessions_mutex);
        for (auto it = m_sessions.begin(); it != m_sessions.end();)
        {
            if (all || !(*it)->alive)
            {
                done.push_back(*it);
                it = m_sessions.erase(it);
            }
            else
                ++it;
        }
    }
    for (auto& s : done)
    {
        s->alive = false;
        s->sock.shutdown();
        if (s->thread.joinable())
            s->thread.join();
    }
}

void GatewayServer::broadcast_loop()
{
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / m_options.telemetry_hz));
    auto next = Clock::now() + period;
    std::unique_lock lock(m_stop_mutex);
    while (m_running)
    {
        if (m_stop_cv.wait_until(lock, next, [this] { return !m_running; }))
            break;
        lock.unlock();
        const std::string line = m_source().dump() + "\n";
        std::vector<std::shared_ptr<Session>> targets;
        {
            std::lock_guard sl(m_sessions_mutex);
            for (const auto& s : m_sessions)
                if (s->alive && s->role >= 0)
                    targets.push_back(s);
        }
        for (const auto& s : targets)
            s->send(line);
        ++m_broadcasts;
        next += period;
        // After a long stall, restart the schedule instead of bursting.
        if (Clock::now() - next > std::chrono::seconds(1))
            next = Clock::now() + period;
        lock.lock();
    }
}

void GatewayServer::serve(const std::shared_ptr<Session>& s)
{
    bus::LineReader reader(s->sock);
    try
    {
        while (m_running && s->alive)
        {
            const auto line = reader.read_line(kPoll);
            if (line && !line->empty())
                handle(*s, *line);
        }
    }
    catch (const std::exception&)
    {
        // Peer gone or line too long; the session ends either way.
    }
    s->alive = false;
}

void GatewayServer::handle(Session& s, const std::string& line)
{
    json msg = json::parse(line, nullptr, false);
    if (msg.is_discarded() || !msg.is_object())
    {
        s.send(error_message(GatewayErrc::BadMessage, "not a JSON object", nullptr));
        return;
    }
    const json* id = msg.contains("id") ? &msg["id"] : nullptr;
    if (const auto v = msg.find("v"); v != msg.end() && *v != kProtocolVersion)
    {
        s.send(error_message(GatewayErrc::BadMessage, "unsupported version", id));
        return;
    }
    const auto type = msg.find("type");
    if (type == msg.end() || !type->is_string())
    {
        s.send(error_message(GatewayErrc::BadMessage, "missing type", id));
        return;
    }

    if (*type == "hello")
    {
        if (s.role >= 0)
        {
            s.send(error_message(GatewayErrc::BadMessage, "already introduced", id));
            return;
        }
        const auto r = msg.find("role");
        const auto role = r != msg.end() && r->is_string() ? role_from_name(r->get<std::string>()) : std::nullopt;
        if (!role)
        {
            s.send(error_message(GatewayErrc::BadRole, "role must be operator, recipient or observer", id));
            s.alive = false;
            return;
        }
        ordered_json welcome{{"v", kProtocolVersion},
                             {"type", "welcome"},
                             {"role", role_name(*role)},
                             {"telemetry_hz", m_options.telemetry_hz}};
        for (const auto& [k, v] : m_welcome_extra.items())
            welcome[k] = v;
        s.send(welcome);
        s.role = static_cast<int>(*role);
        return;
    }
    if (*type == "cmd")
    {
        if (s.role < 0)
        {
            s.send(error_message(GatewayErrc::BadRole, "send hello first", id));
            return;
        }
        const Role role = static_cast<Role>(s.role.load());
        try
        {
            std::lock_guard lock(m_command_mutex);
            const ConsoleCommand cmd = m_validator->parse(msg, role);
            m_sink(cmd, role);
        }
        catch (const GatewayError& e)
        {
            s.send(error_message(e.code(), e.what(), id));
            return;
        }
        ordered_json ack{{"v", kProtocolVersion}, {"type", "ack"}};
        if (id)
            ack["id"] = *id;
        s.send(ack);
        return;
    }
    s.send(error_message(GatewayErrc::BadMessage, "unknown type " + type->dump(), id));
}

// ---------------------------------------------------------------------------

GatewayService::GatewayService(sim::AvatarStack& stack, ServerOptions options, sim::StackListener extra,
                               SnapshotParams snapshot)
    : m_stack(&stack)
    , m_assembler(snapshot)
    , m_validator(stack.model(), stack.config().locomotion.planner.max_speed)
    , m_server(
          std::move(options), m_validator,
          [this](const ConsoleCommand& cmd, Role) {
              std::lock_guard lock(m_queue_mutex);
              m_queue.push_back(cmd);
          },
          [this] { return m_assembler.assemble(); })
{
    m_stack->set_listener(m_assembler.listener(stack, std::move(extra)));
    m_assembler.set_time(stack.time());

    const auto& model = stack.model();
    ordered_json joints = ordered_json::array();
    for (const auto& j : model.layout.joints)
        joints.push_back({{"name", j.name}, {"min", j.min}, {"max", j.max}});
    ordered_json patches = ordered_json::array();
    for (auto p : {model::SkinPatch::LeftUpperArm, model::SkinPatch::RightUpperArm, model::SkinPatch::LeftHand,
                   model::SkinPatch::RightHand})
        patches.push_back(model::skin_patch_name(p));
    ordered_json expressions = ordered_json::array();
    for (auto e : retargeting::kExpressions)
        expressions.push_back(retargeting::expression_name(e));
    m_server.set_welcome({{"joints", std::move(joints)},
                          {"max_speed", m_validator.max_speed()},
                          {"presets", {"rest", "zero", "grasp", "wave"}},
                          {"patches", std::move(patches)},
                          {"expressions", std::move(expressions)},
                          {"dt", stack.dt()}});
}

GatewayService::~GatewayService()
{
    stop();
}

void GatewayService::start()
{
    m_server.start();
}

void GatewayService::stop()
{
    if (m_realtime.exchange(false))
        m_loop.join();
    m_server.stop();
}

void GatewayService::tick()
{
    std::deque<ConsoleCommand> pending;
    {
        std::lock_guard lock(m_queue_mutex);
        pending.swap(m_queue);
    }
    for (const auto& cmd : pending)
    {
        apply_command(*m_stack, cmd);
        ++m_applied;
    }
    m_stack->step();
    m_assembler.set_time(m_stack->time());
}

void GatewayService::run_realtime()
{
    if (m_realtime.exchange(true))
        return;
    m_loop = std::thread([this] {
        const auto dt = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(m_stack->dt()));
        auto next = Clock::now();
        try
        {
            while (m_realtime)
            {
                tick();
                next += dt;
                std::this_thread::sleep_until(next);
            }
        }
        catch (...)
        {
            std::lock_guard lock(m_error_mutex);
            m_error = std::current_exception();
        }
    });
}

std::exception_ptr GatewayService::error() const
{
    std::lock_guard lock(m_error_mutex);
    return m_error;
}

} // namespace avatar::gateway

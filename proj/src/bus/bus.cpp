#include <avatar/bus/bus.hpp>
#include <avatar/bus/codec.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace avatar::bus {

namespace {

constexpr std::string_view kProbeTag = "bus/probe";

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::pair<std::string, std::string> tunnel_key(const std::string& a, const std::string& b)
{
    return a < b ? std::pair{a, b} : std::pair{b, a};
}

} // namespace

std::string_view carrier_name(Carrier c)
{
    switch (c)
    {
    case Carrier::Reliable: return "reliable";
    case Carrier::Datagram: return "datagram";
    case Carrier::InProcess: return "inprocess";
    }
    return "unknown";
}

std::optional<Carrier> carrier_from_name(std::string_view name)
{
    for (auto c : {Carrier::Reliable, Carrier::Datagram, Carrier::InProcess})
        if (carrier_name(c) == name)
            return c;
    return std::nullopt;
}

void LinkProfile::validate() const
{
    if (!(one_way_delay_ms >= 0.0) || !(jitter_ms >= 0.0))
        throw std::invalid_argument("link delay and jitter must be >= 0");
    if (!(loss >= 0.0 && loss <= 1.0))
        throw std::invalid_argument("link loss must be in [0, 1]");
}

LatencyStats LatencyStats::from_samples(std::vector<double> ms, double window_s)
{
    LatencyStats s;
    s.window_s = window_s;
    if (ms.empty())
        return s;
    std::sort(ms.begin(), ms.end());
    s.samples = static_cast<int>(ms.size());
    s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ms.size())));
    s.max_ms = ms.back();
    s.p95_ms = std::min(s.max_ms, std::max(s.mean_ms, ms[std::max<std::size_t>(rank, 1) - 1]));
    return s;
}

Bus::Bus(std::shared_ptr<Clock> clock)
    : m_clock(clock ? std::move(clock) : std::make_shared<SteadyClock>())
{
}

Bus::~Bus() { stop(); }

Bus::Subnet& Bus::subnet_locked(const std::string& name)
{
    auto it = m_subnets.find(name);
    if (it == m_subnets.end())
        it = m_subnets.emplace(name, Subnet{std::make_shared<LocalRegistry>()}).first;
    return it->second;
}

void Bus::set_registry(const std::string& subnet, std::shared_ptr<RegistryTransport> registry)
{
    std::scoped_lock lock(m_mutex);
    subnet_locked(subnet).registry = std::move(registry);
}

const Bus::Port* Bus::find_port_locked(std::string_view name) const
{
    const auto it = m_port_names.find(name);
    return it == m_port_names.end() ? nullptr : &m_ports[it->second];
}

std::optional<std::string> Bus::tunnel_relay_locked(const std::string& a, const std::string& b) const
{
    const auto it = m_tunnels.find(tunnel_key(a, b));
    if (it == m_tunnels.end())
        return std::nullopt;
    return it->second;
}

PortHandle Bus::register_port(std::string_view name, Direction direction, std::string_view subnet)
{
    validate_port_name(name);
    if (subnet.empty() || subnet.find_first_of(" /\t") != std::string_view::npos)
        throw std::invalid_argument("bad subnet id");

    std::scoped_lock lock(m_mutex);
    if (m_port_names.contains(name))
        throw BusError(BusErrc::DuplicateName, std::string(name));

    PortHandle h;
    h.id = static_cast<std::uint32_t>(m_ports.size());
    h.name = std::string(name);
    h.direction = direction;
    h.subnet = std::string(subnet);
    h.endpoint = "bus://" + h.subnet + "/" + std::to_string(h.id) + (direction == Direction::Input ? "/in" : "/out");

    registry_register(*subnet_locked(h.subnet).registry, h.name, h.endpoint);
    m_ports.push_back(Port{h, {}, {}});
    m_port_names.emplace(h.name, h.id);
    return h;
}

std::optional<PortHandle> Bus::lookup(std::string_view name, std::string_view from_subnet) const
{
    std::scoped_lock lock(m_mutex);
    std::vector<const Subnet*> visible;
    for (const auto& [id, sn] : m_subnets)
        if (id == from_subnet || tunnel_relay_locked(std::string(from_subnet), id))
            visible.push_back(&sn);
    for (const Subnet* sn : visible)
        if (const auto ep = registry_query(*sn->registry, name))
            if (const Port* p = find_port_locked(name); p && p->handle.endpoint == *ep)
                return p->handle;
    return std::nullopt;
}

ConnectionId Bus::connect(std::string_view src, std::string_view dst, Carrier carrier)
{
    validate_port_name(src);
    validate_port_name(dst);
    std::scoped_lock lock(m_mutex);
    const Port* s = find_port_locked(src);
    const Port* d = find_port_locked(dst);
    if (!s || !d)
        throw BusError(BusErrc::UnknownPort, std::string(!s ? src : dst));
    if (s->handle.direction != Direction::Output || d->handle.direction != Direction::Input)
        throw BusError(BusErrc::DirectionMismatch, std::string(src) + " -> " + std::string(dst));

    std::string relay;
    if (s->handle.subnet != d->handle.subnet)
    {
        const auto r = tunnel_relay_locked(s->handle.subnet, d->handle.subnet);
        if (!r)
            throw BusError(BusErrc::UnknownPort, std::string(dst) + " not visible from subnet " + s->handle.subnet);
        if (!m_relays.at(*r).up)
            throw BusError(BusErrc::RelayUnreachable, *r);
        relay = *r;
    }

    Connection c;
    c.info = ConnectionInfo{m_next_conn++, s->handle.name, d->handle.name, carrier, relay};
    c.src = s->handle.id;
    c.dst = d->handle.id;
    c.forward.rng.seed(0);
    c.reverse.rng.seed(0);
    const ConnectionId id = c.info.id;
    m_conns.emplace(id, std::move(c));
    return id;
}

void Bus::disconnect(ConnectionId id)
{
    std::scoped_lock lock(m_mutex);
    if (m_conns.erase(id) == 0)
        throw BusError(BusErrc::UnknownConnection, std::to_string(id));
}

Bus::Connection& Bus::conn_locked(ConnectionId id)
{
    const auto it = m_conns.find(id);
    if (it == m_conns.end())
        throw BusError(BusErrc::UnknownConnection, std::to_string(id));
    return it->second;
}

const Bus::Connection& Bus::conn_locked(ConnectionId id) const
{
    const auto it = m_conns.find(id);
    if (it == m_conns.end())
        throw BusError(BusErrc::UnknownConnection, std::to_string(id));
    return it->second;
}

ConnectionInfo Bus::connection(ConnectionId id) const
{
    std::scoped_lock lock(m_mutex);
    return conn_locked(id).info;
}

std::vector<ConnectionId> Bus::connections() const
{
    std::scoped_lock lock(m_mutex);
    std::vector<ConnectionId> out;
    for (const auto& [id, c] : m_conns)
        out.push_back(id);
    return out;
}

void Bus::set_link_profile(ConnectionId id, const LinkProfile& profile, const std::optional<LinkProfile>& reverse)
{
    profile.validate();
    if (reverse)
        reverse->validate();
    std::scoped_lock lock(m_mutex);
    Connection& c = conn_locked(id);
    c.forward.profile = profile;
    c.forward.rng.seed(profile.seed);
    c.reverse.profile = reverse.value_or(profile);
    // Distinct stream for the echo path even when both share a seed.
    c.reverse.rng.seed(c.reverse.profile.seed ^ 0x9e3779b97f4a7c15ull);
}

LinkProfile Bus::link_profile(ConnectionId id) const
{
    std::scoped_lock lock(m_mutex);
    return conn_locked(id).forward.profile;
}

ConnectionStats Bus::stats(ConnectionId id) const
{
    std::scoped_lock lock(m_mutex);
    return conn_locked(id).stats;
}

void Bus::add_relay(const std::string& address)
{
    std::scoped_lock lock(m_mutex);
    m_relays.try_emplace(address);
}

void Bus::set_relay_up(const std::string& address, bool up)
{
    std::scoped_lock lock(m_mutex);
    const auto it = m_relays.find(address);
    if (it == m_relays.end())
        throw BusError(BusErrc::RelayUnreachable, address);
    it->second.up = up;
}

std::uint64_t Bus::relay_forwarded(const std::string& address) const
{
    std::scoped_lock lock(m_mutex);
    const auto it = m_relays.find(address);
    if (it == m_relays.end())
        throw BusError(BusErrc::RelayUnreachable, address);
    return it->second.forwarded;
}

Tunnel Bus::create_tunnel(const TunnelConfig& a, const TunnelConfig& b)
{
    if (a.subnet_id.empty() || b.subnet_id.empty())
        throw std::invalid_argument("empty subnet id");
    if (a.subnet_id == b.subnet_id)
        throw BusError(BusErrc::SubnetIdCollision, a.subnet_id);
    if (a.relay_address != b.relay_address)
        throw BusError(BusErrc::RelayUnreachable, "sides name different relays");

    std::scoped_lock lock(m_mutex);
    const auto r = m_relays.find(a.relay_address);
    if (r == m_relays.end() || !r->second.up)
        throw BusError(BusErrc::RelayUnreachable, a.relay_address);
    const auto key = tunnel_key(a.subnet_id, b.subnet_id);
    if (const auto it = m_tunnels.find(key); it != m_tunnels.end() && it->second != a.relay_address)
        throw BusError(BusErrc::SubnetIdCollision, "subnets already joined through " + it->second);

    // Both registries must stay collision-free once joined.
    subnet_locked(a.subnet_id);
    subnet_locked(b.subnet_id);
    for (const Port& p : m_ports)
    {
        const std::string& other = p.handle.subnet == a.subnet_id ? b.subnet_id : a.subnet_id;
        if ((p.handle.subnet == a.subnet_id || p.handle.subnet == b.subnet_id) &&
            registry_query(*m_subnets.at(other).registry, p.handle.name))
            throw BusError(BusErrc::DuplicateName, p.handle.name);
    }
    m_tunnels[key] = a.relay_address;
    return Tunnel{a.relay_address, a.subnet_id, b.subnet_id};
}

void Bus::send_locked(Connection& c, Kind kind, std::shared_ptr<const Envelope> e, Path& path)
{
    const Micros now = m_clock->now();
    // Two draws per envelope, whatever the outcome, so the stream stays
    // aligned with the message sequence.
    const double u_loss = unit(path.rng);
    const double u_jitter = unit(path.rng);
    const bool data = kind == Kind::Data;
    if (data)
        ++c.stats.sent;

    if (!c.info.relay.empty())
    {
        Relay& r = m_relays.at(c.info.relay);
        if (!r.up)
        {
            c.stats.dropped += data;
            return;
        }
        ++r.forwarded;
        c.stats.relay_hops += data;
    }

    if (c.info.carrier == Carrier::Datagram && u_loss < path.profile.loss)
    {
        c.stats.dropped += data;
        return;
    }

    const double delay_ms =
        std::max(0.0, path.profile.one_way_delay_ms + path.profile.jitter_ms * (2.0 * u_jitter - 1.0));
    Micros arrival = now + from_millis(delay_ms);
    if (c.info.carrier != Carrier::Datagram)
        arrival = std::max(arrival, path.last_arrival);
    path.last_arrival = std::max(path.last_arrival, arrival);

    Pending p;
    p.arrival = arrival;
    p.order = m_order++;
    p.conn = c.info.id;
    p.kind = kind;
    if (c.info.carrier == Carrier::InProcess)
        p.envelope = std::move(e);
    else
        p.frame = encode(*e);
    m_queue.push(std::move(p));
    m_cv.notify_all();
}

std::size_t Bus::publish(const PortHandle& output, std::string_view type_tag, Bytes payload)
{
    std::scoped_lock lock(m_mutex);
    if (output.id >= m_ports.size() || m_ports[output.id].handle.name != output.name)
        throw BusError(BusErrc::UnknownPort, output.name);
    if (output.direction != Direction::Output)
        throw BusError(BusErrc::DirectionMismatch, "publish on input " + output.name);

    const Micros now = m_clock->now();
    std::size_t n = 0;
    for (auto& [id, c] : m_conns)
    {
        if (c.src != output.id)
            continue;
        auto e = std::make_shared<Envelope>();
        e->seq = c.next_seq++;
        e->send_time = now;
        e->topic = output.name;
        e->type_tag = std::string(type_tag);
        e->payload = payload;
        send_locked(c, Kind::Data, std::move(e), c.forward);
        ++n;
    }
    return n;
}

void Bus::subscribe(const PortHandle& input, Callback cb)
{
    std::scoped_lock lock(m_mutex);
    if (input.id >= m_ports.size() || m_ports[input.id].handle.name != input.name)
        throw BusError(BusErrc::UnknownPort, input.name);
    if (input.direction != Direction::Input)
        throw BusError(BusErrc::DirectionMismatch, "subscribe on output " + input.name);
    m_ports[input.id].callbacks.push_back(std::move(cb));
}

std::vector<Envelope> Bus::read(const PortHandle& input)
{
    std::scoped_lock lock(m_mutex);
    if (input.id >= m_ports.size() || m_ports[input.id].handle.name != input.name)
        throw BusError(BusErrc::UnknownPort, input.name);
    return std::exchange(m_ports[input.id].inbox, {});
}

void Bus::set_inbox_capacity(std::size_t n)
{
    std::scoped_lock lock(m_mutex);
    m_inbox_capacity = std::max<std::size_t>(n, 1);
}

std::optional<Micros> Bus::next_due() const
{
    std::scoped_lock lock(m_mutex);
    if (m_queue.empty())
        return std::nullopt;
    return m_queue.top().arrival;
}

std::size_t Bus::pump()
{
    std::scoped_lock deliver(m_deliver_mutex);
    const Micros now = m_clock->now();
    std::size_t count = 0;
    for (;;)
    {
        std::vector<Callback> callbacks;
        Envelope env;
        {
            std::scoped_lock lock(m_mutex);
            if (m_queue.empty() || m_queue.top().arrival > now)
                break;
            Pending p = m_queue.top();
            m_queue.pop();
            const auto it = m_conns.find(p.conn);
            if (it == m_conns.end())
                continue;
            Connection& c = it->second;
            env = p.envelope ? *p.envelope : decode(p.frame);

            if (p.kind == Kind::Probe)
            {
                send_locked(c, Kind::Echo, p.envelope ? p.envelope : std::make_shared<Envelope>(env), c.reverse);
                continue;
            }
            if (p.kind == Kind::Echo)
            {
                ByteReader r(env.payload);
                const std::uint64_t session = r.u64();
                if (auto s = m_probe_rtts.find(session); s != m_probe_rtts.end())
                    s->second.push_back(0.5 * to_millis(now - env.send_time));
                continue;
            }

            ++c.stats.delivered;
            Port& port = m_ports[c.dst];
            callbacks = port.callbacks;
            if (port.inbox.size() >= m_inbox_capacity)
                port.inbox.erase(port.inbox.begin());
            port.inbox.push_back(env);
        }
        ++count;
        for (const auto& cb : callbacks)
            cb(env);
    }
    return count;
}

void Bus::run_until(Micros t)
{
    auto* manual = dynamic_cast<ManualClock*>(m_clock.get());
    if (!manual)
        throw std::logic_error("run_until needs a manual clock");
    for (;;)
    {
        const auto due = next_due();
        if (!due || *due > t)
            break;
        if (*due > manual->now())
            manual->set(*due);
        pump();
    }
    if (t > manual->now())
        manual->set(t);
    pump();
}

void Bus::start()
{
    if (m_clock->manual())
        throw std::logic_error("the dispatch thread needs a real-time clock");
    std::scoped_lock lock(m_mutex);
    if (m_thread.joinable())
        return;
    m_stop = false;
    m_thread = std::thread([this] { dispatch_loop(); });
}

void Bus::stop()
{
    {
        std::scoped_lock lock(m_mutex);
        m_stop = true;
    }
    m_cv.notify_all();
    if (m_thread.joinable())
        m_thread.join();
}

void Bus::dispatch_loop()
{
    std::unique_lock lock(m_mutex);
    while (!m_stop)
    {
        if (m_queue.empty())
        {
            m_cv.wait(lock);
            continue;
        }
        const Micros wait = m_queue.top().arrival - m_clock->now();
        if (wait > 0)
        {
            m_cv.wait_for(lock, std::chrono::microseconds(wait));
            continue;
        }
        lock.unlock();
        try
        {
            pump();
        }
        catch (const std::exception& e)
        {
            std::fprintf(stderr, "bus: delivery callback failed: %s\n", e.what());
        }
        lock.lock();
    }
}

void Bus::send_probe_locked(Connection& c, std::uint64_t session)
{
    auto e = std::make_shared<Envelope>();
    e->seq = c.next_seq++;
    e->send_time = m_clock->now();
    e->topic = c.info.src;
    e->type_tag = std::string(kProbeTag);
    ByteWriter(e->payload).u64(session);
    send_locked(c, Kind::Probe, std::move(e), c.forward);
}

std::uint64_t Bus::open_probe_session()
{
    std::scoped_lock lock(m_mutex);
    const std::uint64_t session = m_next_session++;
    m_probe_rtts[session];
    return session;
}

void Bus::send_probe(ConnectionId id, std::uint64_t session)
{
    std::scoped_lock lock(m_mutex);
    send_probe_locked(conn_locked(id), session);
}

std::vector<double> Bus::drain_probe_samples(std::uint64_t session)
{
    std::scoped_lock lock(m_mutex);
    auto it = m_probe_rtts.find(session);
    if (it == m_probe_rtts.end())
        return {};
    std::vector<double> out;
    out.swap(it->second);
    return out;
}

void Bus::close_probe_session(std::uint64_t session)
{
    std::scoped_lock lock(m_mutex);
    m_probe_rtts.erase(session);
}

LatencyStats Bus::measure_latency(ConnectionId id, int probes, double window_s)
{
    if (probes < 3)
        throw BusError(BusErrc::InsufficientProbes, "need at least 3 probes");
    if (!(window_s > 0.0))
        throw std::invalid_argument("window must be positive");

    std::uint64_t session = 0;
    Micros grace = 0;
    {
        std::scoped_lock lock(m_mutex);
        const Connection& c = conn_locked(id);
        session = m_next_session++;
        m_probe_rtts[session];
        const auto& f = c.forward.profile;
        const auto& r = c.reverse.profile;
        grace = from_millis(f.one_way_delay_ms + f.jitter_ms + r.one_way_delay_ms + r.jitter_ms + 100.0);
    }

    auto* manual = dynamic_cast<ManualClock*>(m_clock.get());
    const Micros t0 = m_clock->now();
    const Micros interval = from_seconds(window_s / probes);
    const Micros deadline = t0 + interval * (probes - 1) + grace;
    int sent = 0;

    for (;;)
    {
        Micros now = m_clock->now();
        while (sent < probes && t0 + interval * sent <= now)
        {
            std::scoped_lock lock(m_mutex);
            send_probe_locked(conn_locked(id), session);
            ++sent;
        }
        pump();

        std::size_t echoed = 0;
        {
            std::scoped_lock lock(m_mutex);
            echoed = m_probe_rtts[session].size();
        }
        now = m_clock->now();
        if (sent == probes && (echoed == static_cast<std::size_t>(probes) || now >= deadline))
            break;

        Micros wake = deadline;
        if (sent < probes)
            wake = std::min(wake, t0 + interval * sent);
        if (const auto due = next_due())
            wake = std::min(wake, *due);
        if (manual)
            manual->set(std::max(wake, now));
        else if (wake > now)
            std::this_thread::sleep_for(std::chrono::microseconds(std::min<Micros>(wake - now, 1000)));
    }

    std::vector<double> samples;
    {
        std::scoped_lock lock(m_mutex);
        samples = std::move(m_probe_rtts[session]);
        m_probe_rtts.erase(session);
    }
    if (samples.size() < 3)
        throw BusError(BusErrc::InsufficientProbes, std::to_string(samples.size()) + " echoes");
    return LatencyStats::from_samples(std::move(samples), window_s);
}

} // namespace avatar::bus

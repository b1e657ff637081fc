#pragma once

#include <avatar/bus/clock.hpp>
#include <avatar/bus/envelope.hpp>
#include <avatar/bus/registry.hpp>

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace avatar::bus {

enum class Direction
{
    Input,
    Output,
};

enum class Carrier
{
    /// Ordered stream, never drops.
    Reliable,
    /// May drop and reorder under impairment.
    Datagram,
    /// Same process; the envelope object itself is handed over.
    InProcess,
};

std::string_view carrier_name(Carrier c);
std::optional<Carrier> carrier_from_name(std::string_view name);

inline constexpr std::string_view kDefaultSubnet = "local";

struct PortHandle
{
    std::uint32_t id{0};
    std::string name;
    Direction direction{Direction::Output};
    std::string subnet;
    /// What the registry returns for this port.
    std::string endpoint;
};

using ConnectionId = std::uint64_t;

struct LinkProfile
{
    double one_way_delay_ms{0.0};
    /// Half-width of the uniform delay spread.
    double jitter_ms{0.0};
    double loss{0.0};
    std::uint64_t seed{0};

    /// Throws std::invalid_argument on negative delays or loss outside [0,1].
    void validate() const;
    bool identity() const { return one_way_delay_ms == 0.0 && jitter_ms == 0.0 && loss == 0.0; }
};

struct LatencyStats
{
    int samples{0};
    double mean_ms{0.0};
    double p95_ms{0.0};
    double max_ms{0.0};
    double window_s{0.0};

    bool empty() const { return samples == 0; }
    /// p95 is the nearest-rank percentile, never below the mean.
    static LatencyStats from_samples(std::vector<double> one_way_ms, double window_s);
};

struct ConnectionStats
{
    std::uint64_t sent{0};
    std::uint64_t delivered{0};
    std::uint64_t dropped{0};
    std::uint64_t relay_hops{0};
};

struct ConnectionInfo
{
    ConnectionId id{0};
    std::string src;
    std::string dst;
    Carrier carrier{Carrier::Reliable};
    /// Empty unless the connection crosses a tunnel.
    std::string relay;
};

struct TunnelConfig
{
    std::string relay_address;
    std::string subnet_id;
};

struct Tunnel
{
    std::string relay_address;
    std::string subnet_a;
    std::string subnet_b;
};

using Callback = std::function<void(const Envelope&)>;

/// Named-port publish/subscribe network: ports live in subnets, each with
/// its own name registry; tunnels join two subnets through a relay.
/// Connections carry envelopes with optional impairment applied at the
/// receiving queue. Deliveries happen in pump(), called either by the
/// caller (virtual time) or by the dispatch thread started with start().
class Bus
{
public:
    explicit Bus(std::shared_ptr<Clock> clock = nullptr);
    ~Bus();
    Bus(const Bus&) = delete;
    Bus& operator=(const Bus&) = delete;

    Clock& clock() const { return *m_clock; }
    std::shared_ptr<Clock> shared_clock() const { return m_clock; }

    /// Replaces the registry a subnet talks to (e.g. a RegistryClient).
    void set_registry(const std::string& subnet, std::shared_ptr<RegistryTransport> registry);

    PortHandle register_port(std::string_view name, Direction direction,
                             std::string_view subnet = kDefaultSubnet);
    /// Resolves a name as seen from `from_subnet`.
    std::optional<PortHandle> lookup(std::string_view name, std::string_view from_subnet = kDefaultSubnet) const;

    ConnectionId connect(std::string_view src, std::string_view dst, Carrier carrier);
    void disconnect(ConnectionId id);
    ConnectionInfo connection(ConnectionId id) const;
    std::vector<ConnectionId> connections() const;

    /// `reverse` applies to the echo path; the forward profile is reused
    /// when absent.
    void set_link_profile(ConnectionId id, const LinkProfile& profile,
                          const std::optional<LinkProfile>& reverse = std::nullopt);
    LinkProfile link_profile(ConnectionId id) const;
    ConnectionStats stats(ConnectionId id) const;

    void add_relay(const std::string& address);
    void set_relay_up(const std::string& address, bool up);
    std::uint64_t relay_forwarded(const std::string& address) const;
    Tunnel create_tunnel(const TunnelConfig& a, const TunnelConfig& b);

    /// Sends on every connection of an output port; returns their number.
    std::size_t publish(const PortHandle& output, std::string_view type_tag, Bytes payload);

    /// Callbacks run on whichever thread pumps.
    void subscribe(const PortHandle& input, Callback cb);
    /// Envelopes delivered to an input port since the last read, oldest first.
    std::vector<Envelope> read(const PortHandle& input);
    void set_inbox_capacity(std::size_t n);

    /// Delivers everything due at clock().now(); returns the count.
    std::size_t pump();
    std::optional<Micros> next_due() const;
    /// Virtual time only: advances the clock through every due event up to t.
    void run_until(Micros t);

    /// Real-time dispatch thread.
    void start();
    void stop();
    bool running() const { return m_thread.joinable(); }

    /// Sends `probes` echo probes spread over `window_s` and reports the
    /// one-way estimate RTT/2. Throws InsufficientProbes below 3 echoes.
    LatencyStats measure_latency(ConnectionId id, int probes, double window_s);

    /// Non-blocking probing for continuous monitoring: one-way estimates
    /// (RTT/2, ms) of echoes received under a session accumulate until
    /// drained.
    std::uint64_t open_probe_session();
    void send_probe(ConnectionId id, std::uint64_t session);
    std::vector<double> drain_probe_samples(std::uint64_t session);
    void close_probe_session(std::uint64_t session);

private:
    enum class Kind
    {
        Data,
        Probe,
        Echo,
    };

    struct Path
    {
        LinkProfile profile;
        std::mt19937_64 rng;
        Micros last_arrival{0};
    };

    struct Port
    {
        PortHandle handle;
        std::vector<Callback> callbacks;
        std::vector<Envelope> inbox;
    };

    struct Connection
    {
        ConnectionInfo info;
        std::uint32_t src{0};
        std::uint32_t dst{0};
        std::uint64_t next_seq{1};
        Path forward;
        Path reverse;
        ConnectionStats stats;
    };

    struct Pending
    {
        Micros arrival{0};
        std::uint64_t order{0};
        ConnectionId conn{0};
        Kind kind{Kind::Data};
        std::shared_ptr<const Envelope> envelope;
        Bytes frame;
    };

    struct Later
    {
        bool operator()(const Pending& a, const Pending& b) const
        {
            return a.arrival != b.arrival ? a.arrival > b.arrival : a.order > b.order;
        }
    };

    struct Relay
    {
        bool up{true};
        std::uint64_t forwarded{0};
    };

    struct Subnet
    {
        std::shared_ptr<RegistryTransport> registry;
    };

    Subnet& subnet_locked(const std::string& name);
    const Port* find_port_locked(std::string_view name) const;
    std::optional<std::string> tunnel_relay_locked(const std::string& a, const std::string& b) const;
    Connection& conn_locked(ConnectionId id);
    const Connection& conn_locked(ConnectionId id) const;
    void send_locked(Connection& c, Kind kind, std::shared_ptr<const Envelope> e, Path& path);
    void send_probe_locked(Connection& c, std::uint64_t session);
    void dispatch_loop();

    std::shared_ptr<Clock> m_clock;
    mutable std::mutex m_mutex;
    std::recursive_mutex m_deliver_mutex;
    std::condition_variable m_cv;

    std::map<std::string, Subnet, std::less<>> m_subnets;
    std::vector<Port> m_ports;
    std::map<std::string, std::uint32_t, std::less<>> m_port_names;
    std::map<ConnectionId, Connection> m_conns;
    ConnectionId m_next_conn{1};
    std::map<std::string, Relay, std::less<>> m_relays;
    std::map<std::pair<std::string, std::string>, std::string> m_tunnels;
    std::priority_queue<Pending, std::vector<Pending>, Later> m_queue;
    std::uint64_t m_order{0};
    std::size_t m_inbox_capacity{1024};

    std::map<std::uint64_t, std::vector<double>> m_probe_rtts;
    std::uint64_t m_next_session{1};

    std::thread m_thread;
    bool m_stop{false};
};

} // namespace avatar::bus

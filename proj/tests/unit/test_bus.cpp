#include <avatar/bus/bridge.hpp>
#include <avatar/bus/bus.hpp>
#include <avatar/bus/codec.hpp>

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <thread>

using namespace avatar;
using namespace avatar::bus;

namespace {

Bytes payload_of(std::uint64_t i)
{
    Bytes b;
    ByteWriter(b).u64(i);
    return b;
}

std::uint64_t index_of(const Envelope& e)
{
    ByteReader r(e.payload);
    return r.u64();
}

struct Pair
{
    std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>();
    Bus bus{clock};
    PortHandle out;
    PortHandle in;
    ConnectionId conn{0};

    explicit Pair(Carrier carrier, std::string_view sub_out = kDefaultSubnet, std::string_view sub_in = kDefaultSubnet,
                  bool tunnel = false)
    {
        bus.set_inbox_capacity(1 << 20);
        if (tunnel)
        {
            bus.add_relay("relay:1194");
            bus.create_tunnel({"relay:1194", std::string(sub_out)}, {"relay:1194", std::string(sub_in)});
        }
        out = bus.register_port("/a/out", Direction::Output, sub_out);
        in = bus.register_port("/b/in", Direction::Input, sub_in);
        conn = bus.connect("/a/out", "/b/in", carrier);
    }

    // Publishes n envelopes 1 ms apart and drains everything.
    std::vector<Envelope> run(int n)
    {
        for (int i = 0; i < n; ++i)
        {
            bus.publish(out, "test/u64", payload_of(static_cast<std::uint64_t>(i)));
            bus.run_until(clock->now() + 1000);
        }
        bus.run_until(clock->now() + 10'000'000);
        return bus.read(in);
    }
};

// log of the binomial pmf, from lgamma.
double log_binomial_pmf(int n, int k, double p)
{
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
           (n - k) * std::log1p(-p);
}

} // namespace

TEST_CASE("envelope bytes follow the documented layout")
{
    Envelope e{0x0102030405060708ull, 0x1122334455667788ll, "/t", "ab", {0xde, 0xad}};
    const Bytes b = encode(e);
    const Bytes expected = {
        // length = 8 + 8 + 2 + 2 + 2 + 2 + 2
        26, 0, 0, 0,
        0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01,
        0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11,
        2, 0, '/', 't',
        2, 0, 'a', 'b',
        0xde, 0xad,
    };
    CHECK(b == expected);
    CHECK(decode(b) == e);
    CHECK(frame_size(b) == b.size());
}

TEST_CASE("envelope round trip over random content")
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial)
    {
        Envelope e;
        e.seq = rng();
        e.send_time = static_cast<Micros>(rng() >> 1);
        e.topic = "/" + std::string(rng() % 40 + 1, 'x');
        e.type_tag = std::string(rng() % 20, 'y');
        e.payload.resize(rng() % 500);
        for (auto& c : e.payload)
            c = static_cast<std::uint8_t>(rng());
        CHECK(decode(encode(e)) == e);
    }
}

TEST_CASE("malformed frames are rejected")
{
    const Bytes good = encode({1, 2, "/t", "tag", {1, 2, 3}});
    for (std::size_t cut = 0; cut < good.size(); ++cut)
        CHECK_THROWS_AS(decode({good.data(), cut}), BusError);

    Bytes lying = good;
    lying[0] = 200;
    CHECK_THROWS_AS(decode(lying), BusError);

    // Topic length pointing past the end.
    Bytes bad_topic = good;
    bad_topic[20] = 0xff;
    CHECK_THROWS_AS(decode(bad_topic), BusError);

    Bytes tiny = {3, 0, 0, 0, 0, 0, 0};
    CHECK_THROWS_AS(frame_size(tiny), BusError);
    CHECK_FALSE(frame_size(Bytes{1, 0}).has_value());
}

TEST_CASE("streamed frames split cleanly")
{
    Bytes stream;
    std::vector<Envelope> sent;
    for (int i = 0; i < 20; ++i)
    {
        sent.push_back({static_cast<std::uint64_t>(i), i * 10, "/s", "k", payload_of(i)});
        const Bytes f = encode(sent.back());
        stream.insert(stream.end(), f.begin(), f.end());
    }
    std::vector<Envelope> got;
    std::span<const std::uint8_t> rest(stream);
    while (auto n = frame_size(rest))
    {
        got.push_back(decode(rest.first(*n)));
        rest = rest.subspan(*n);
    }
    CHECK(got == sent);
}

TEST_CASE("port names")
{
    CHECK(is_valid_port_name("/avatar/locomotion/cmd"));
    CHECK(is_valid_port_name("/a"));
    CHECK_FALSE(is_valid_port_name(""));
    CHECK_FALSE(is_valid_port_name("/"));
    CHECK_FALSE(is_valid_port_name("no-slash"));
    CHECK_FALSE(is_valid_port_name("/a//b"));
    CHECK_FALSE(is_valid_port_name("/a/"));
    CHECK_FALSE(is_valid_port_name("/a b"));
}

TEST_CASE("register_port and lookup")
{
    Bus bus(std::make_shared<ManualClock>());
    const PortHandle h = bus.register_port("/avatar/joints/state", Direction::Output);
    const auto found = bus.lookup("/avatar/joints/state");
    REQUIRE(found);
    CHECK(found->name == "/avatar/joints/state");
    CHECK(found->endpoint == h.endpoint);
    CHECK_FALSE(bus.lookup("/avatar/nothing"));

    try
    {
        bus.register_port("/avatar/joints/state", Direction::Input);
        FAIL("expected DuplicateName");
    }
    catch (const BusError& e)
    {
        CHECK(e.code() == BusErrc::DuplicateName);
    }
    try
    {
        bus.register_port("no-slash", Direction::Output);
        FAIL("expected MalformedName");
    }
    catch (const BusError& e)
    {
        CHECK(e.code() == BusErrc::MalformedName);
    }
}

TEST_CASE("connect preconditions")
{
    Bus bus(std::make_shared<ManualClock>());
    bus.register_port("/o", Direction::Output);
    bus.register_port("/i", Direction::Input);
    bus.register_port("/i2", Direction::Input);

    auto code = [&](auto&& f) {
        try
        {
            f();
        }
        catch (const BusError& e)
        {
            return e.code();
        }
        return BusErrc::Io;
    };
    CHECK(code([&] { bus.connect("/i", "/i2", Carrier::InProcess); }) == BusErrc::DirectionMismatch);
    CHECK(code([&] { bus.connect("/o", "/missing", Carrier::InProcess); }) == BusErrc::UnknownPort);
    CHECK(code([&] { bus.set_link_profile(999, {}); }) == BusErrc::UnknownConnection);
    CHECK(code([&] { bus.stats(999); }) == BusErrc::UnknownConnection);
    CHECK_NOTHROW(bus.connect("/o", "/i", Carrier::InProcess));
}

TEST_CASE("in-process delivery is complete and ordered")
{
    Pair p(Carrier::InProcess);
    const auto got = p.run(100);
    REQUIRE(got.size() == 100);
    for (std::size_t i = 0; i < got.size(); ++i)
    {
        CHECK(index_of(got[i]) == i);
        CHECK(got[i].seq == i + 1);
        CHECK(got[i].topic == "/a/out");
        CHECK(got[i].type_tag == "test/u64");
    }
}

TEST_CASE("datagram with total loss delivers nothing")
{
    Pair p(Carrier::Datagram);
    p.bus.set_link_profile(p.conn, {0.0, 0.0, 1.0, 3});
    CHECK(p.run(200).empty());
    CHECK(p.bus.stats(p.conn).dropped == 200);
}

TEST_CASE("reliable carrier never drops, reorders or duplicates")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial)
    {
        Pair p(Carrier::Reliable);
        p.bus.set_link_profile(p.conn, {5.0, 4.9, 0.5, rng()});
        const int n = 50 + static_cast<int>(rng() % 200);
        for (int i = 0; i < n; ++i)
        {
            p.bus.publish(p.out, "t", payload_of(static_cast<std::uint64_t>(i)));
            // Bursts and gaps.
            p.bus.run_until(p.clock->now() + static_cast<Micros>(rng() % 3000));
        }
        p.bus.run_until(p.clock->now() + 1'000'000);
        const auto got = p.bus.read(p.in);
        REQUIRE(got.size() == static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
        {
            CHECK(index_of(got[static_cast<std::size_t>(i)]) == static_cast<std::uint64_t>(i));
            if (i > 0)
                CHECK(got[static_cast<std::size_t>(i)].seq > got[static_cast<std::size_t>(i) - 1].seq);
        }
    }
}

TEST_CASE("datagram delivery set is a function of the seed")
{
    auto delivered = [](std::uint64_t seed) {
        Pair p(Carrier::Datagram);
        p.bus.set_link_profile(p.conn, {3.0, 2.0, 0.3, seed});
        std::vector<std::uint64_t> ids;
        for (const auto& e : p.run(500))
            ids.push_back(index_of(e));
        return ids;
    };
    const auto a = delivered(42);
    CHECK(a == delivered(42));
    CHECK(a != delivered(43));
}

TEST_CASE("loss 0.5 over 10000 sends stays inside the binomial bound")
{
    // Tail mass outside [4700, 5300] for Bin(10000, 0.5).
    double tail = 0.0;
    for (int k = 0; k <= 10000; ++k)
        if (k < 4700 || k > 5300)
            tail += std::exp(log_binomial_pmf(10000, k, 0.5));
    CHECK(tail < 1e-8);

    auto count = [](std::uint64_t seed) {
        Pair p(Carrier::Datagram);
        p.bus.set_link_profile(p.conn, {0.0, 0.0, 0.5, seed});
        for (int i = 0; i < 10000; ++i)
            p.bus.publish(p.out, "t", payload_of(static_cast<std::uint64_t>(i)));
        p.bus.run_until(p.clock->now() + 1000);
        return p.bus.read(p.in).size();
    };
    for (std::uint64_t seed : {1ull, 2ull, 2024ull})
    {
        const auto n = count(seed);
        CHECK(n >= 4700);
        CHECK(n <= 5300);
        CHECK(count(seed) == n);
    }
}

TEST_CASE("delay and jitter shape arrival times")
{
    SUBCASE("fixed delay")
    {
        Pair p(Carrier::Reliable);
        p.bus.set_link_profile(p.conn, {10.0, 0.0, 0.0, 1});
        std::vector<Micros> arrivals;
        p.bus.subscribe(p.in, [&](const Envelope& e) { arrivals.push_back(p.clock->now() - e.send_time); });
        p.run(20);
        REQUIRE(arrivals.size() == 20);
        for (Micros a : arrivals)
            CHECK(a == 10'000);
    }
    SUBCASE("jitter stays inside its half-width and may reorder datagrams")
    {
        Pair p(Carrier::Datagram);
        p.bus.set_link_profile(p.conn, {8.0, 4.0, 0.0, 9});
        std::vector<Micros> delays;
        p.bus.subscribe(p.in, [&](const Envelope& e) { delays.push_back(p.clock->now() - e.send_time); });
        const auto got = p.run(400);
        REQUIRE(got.size() == 400);
        bool reordered = false;
        for (std::size_t i = 1; i < got.size(); ++i)
            reordered |= got[i].seq < got[i - 1].seq;
        CHECK(reordered);
        for (Micros d : delays)
        {
            CHECK(d >= 4'000);
            CHECK(d <= 12'000);
        }
    }
    SUBCASE("identity profile is a pass-through")
    {
        Pair a(Carrier::Datagram), b(Carrier::Datagram);
        b.bus.set_link_profile(b.conn, {0.0, 0.0, 0.0, 77});
        CHECK(a.run(100) == b.run(100));
    }
}

TEST_CASE("tunnel routes cross-subnet traffic through the relay")
{
    SUBCASE("cross subnet: one hop per envelope")
    {
        Pair p(Carrier::Reliable, "genoa", "venice", true);
        CHECK(p.bus.connection(p.conn).relay == "relay:1194");
        CHECK(p.run(30).size() == 30);
        CHECK(p.bus.stats(p.conn).relay_hops == 30);
        CHECK(p.bus.relay_forwarded("relay:1194") == 30);
    }
    SUBCASE("intra subnet under an active tunnel: no hops")
    {
        Pair p(Carrier::Reliable, "genoa", "genoa", false);
        p.bus.add_relay("relay:1194");
        p.bus.create_tunnel({"relay:1194", "genoa"}, {"relay:1194", "venice"});
        CHECK(p.run(30).size() == 30);
        CHECK(p.bus.stats(p.conn).relay_hops == 0);
        CHECK(p.bus.relay_forwarded("relay:1194") == 0);
    }
    SUBCASE("names resolve across the tunnel only")
    {
        Bus bus(std::make_shared<ManualClock>());
        bus.register_port("/g/out", Direction::Output, "genoa");
        bus.register_port("/v/in", Direction::Input, "venice");
        CHECK_FALSE(bus.lookup("/v/in", "genoa"));
        CHECK_THROWS_AS(bus.connect("/g/out", "/v/in", Carrier::Reliable), BusError);
        bus.add_relay("r");
        bus.create_tunnel({"r", "genoa"}, {"r", "venice"});
        CHECK(bus.lookup("/v/in", "genoa"));
        CHECK(bus.lookup("/g/out", "venice"));
    }
    SUBCASE("relay down")
    {
        Bus bus(std::make_shared<ManualClock>());
        bus.add_relay("r");
        bus.create_tunnel({"r", "genoa"}, {"r", "venice"});
        bus.register_port("/g/out", Direction::Output, "genoa");
        bus.register_port("/v/in", Direction::Input, "venice");
        bus.set_relay_up("r", false);
        try
        {
            bus.connect("/g/out", "/v/in", Carrier::Reliable);
            FAIL("expected RelayUnreachable");
        }
        catch (const BusError& e)
        {
            CHECK(e.code() == BusErrc::RelayUnreachable);
        }
        CHECK_THROWS_AS(bus.create_tunnel({"elsewhere", "a"}, {"elsewhere", "b"}), BusError);
    }
    SUBCASE("subnet id collision")
    {
        Bus bus(std::make_shared<ManualClock>());
        bus.add_relay("r");
        try
        {
            bus.create_tunnel({"r", "same"}, {"r", "same"});
            FAIL("expected SubnetIdCollision");
        }
        catch (const BusError& e)
        {
            CHECK(e.code() == BusErrc::SubnetIdCollision);
        }
    }
}

TEST_CASE("tunnel transparency: split ports behave like local ones")
{
    for (Carrier c : {Carrier::Reliable, Carrier::Datagram, Carrier::InProcess})
    {
        Pair local(c), split(c, "genoa", "venice", true);
        const LinkProfile prof{2.0, 1.0, 0.2, 17};
        local.bus.set_link_profile(local.conn, prof);
        split.bus.set_link_profile(split.conn, prof);
        const auto a = local.run(300);
        const auto b = split.run(300);
        CHECK(a == b);
    }
}

TEST_CASE("measure_latency reports RTT/2")
{
    SUBCASE("symmetric 10 ms links, virtual time")
    {
        Pair p(Carrier::Reliable);
        p.bus.set_link_profile(p.conn, {10.0, 0.0, 0.0, 1});
        const auto s = p.bus.measure_latency(p.conn, 50, 1.0);
        CHECK(s.samples == 50);
        CHECK(s.mean_ms == doctest::Approx(10.0).epsilon(0.2));
        CHECK(s.max_ms == doctest::Approx(10.0));
    }
    SUBCASE("asymmetric links average")
    {
        Pair p(Carrier::Reliable);
        p.bus.set_link_profile(p.conn, {4.0, 0.0, 0.0, 1}, LinkProfile{16.0, 0.0, 0.0, 2});
        const auto s = p.bus.measure_latency(p.conn, 10, 0.5);
        CHECK(s.mean_ms == doctest::Approx(10.0));
    }
    SUBCASE("long-haul link keeps p95 below 25 ms")
    {
        Pair p(Carrier::Datagram);
        p.bus.set_link_profile(p.conn, {8.0, 4.0, 0.001, 2022});
        const auto s = p.bus.measure_latency(p.conn, 600, 60.0);
        CHECK(s.samples >= 590);
        CHECK(s.p95_ms < 25.0);
        CHECK(s.mean_ms == doctest::Approx(8.0).epsilon(0.1));
    }
    SUBCASE("too few echoes")
    {
        Pair p(Carrier::Datagram);
        p.bus.set_link_profile(p.conn, {1.0, 0.0, 1.0, 1});
        try
        {
            p.bus.measure_latency(p.conn, 20, 0.2);
            FAIL("expected InsufficientProbes");
        }
        catch (const BusError& e)
        {
            CHECK(e.code() == BusErrc::InsufficientProbes);
        }
        CHECK_THROWS_AS(p.bus.measure_latency(p.conn, 2, 0.2), BusError);
    }
    SUBCASE("probes never reach subscribers")
    {
        Pair p(Carrier::InProcess);
        p.bus.measure_latency(p.conn, 5, 0.05);
        CHECK(p.bus.read(p.in).empty());
        CHECK(p.bus.stats(p.conn).delivered == 0);
    }
}

TEST_CASE("background probe sessions accumulate echoes")
{
    Pair p(Carrier::Reliable);
    p.bus.set_link_profile(p.conn, {6.0, 0.0, 0.0, 1});
    const auto session = p.bus.open_probe_session();
    for (int i = 0; i < 5; ++i)
    {
        p.bus.send_probe(p.conn, session);
        p.bus.run_until(p.clock->now() + 5'000);
    }
    p.bus.run_until(p.clock->now() + 20'000);
    const auto samples = p.bus.drain_probe_samples(session);
    REQUIRE(samples.size() == 5);
    for (double s : samples)
        CHECK(s == doctest::Approx(6.0));
    CHECK(p.bus.drain_probe_samples(session).empty());
    p.bus.close_probe_session(session);
    CHECK(p.bus.read(p.in).empty());
}

TEST_CASE("measure_latency in real time")
{
    SUBCASE("in-process loopback is sub-millisecond")
    {
        Bus bus;
        bus.register_port("/o", Direction::Output);
        bus.register_port("/i", Direction::Input);
        const auto c = bus.connect("/o", "/i", Carrier::InProcess);
        const auto s = bus.measure_latency(c, 20, 0.1);
        CHECK(s.mean_ms < 1.0);
    }
    SUBCASE("10 ms links with the dispatch thread running")
    {
        Bus bus;
        bus.register_port("/o", Direction::Output);
        bus.register_port("/i", Direction::Input);
        const auto c = bus.connect("/o", "/i", Carrier::Reliable);
        bus.set_link_profile(c, {10.0, 0.0, 0.0, 1});
        bus.start();
        const auto s = bus.measure_latency(c, 20, 0.4);
        bus.stop();
        CHECK(s.samples == 20);
        CHECK(s.mean_ms == doctest::Approx(10.0).epsilon(0.2));
    }
}

TEST_CASE("latency stats ordering holds for any sample set")
{
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> heavy(0.2);
    for (int trial = 0; trial < 2000; ++trial)
    {
        std::vector<double> v(1 + rng() % 60);
        for (auto& x : v)
            x = (rng() % 10 == 0) ? 1000.0 * heavy(rng) : heavy(rng);
        const auto s = LatencyStats::from_samples(v, 1.0);
        CHECK(s.mean_ms <= s.p95_ms);
        CHECK(s.p95_ms <= s.max_ms);
    }
    CHECK(LatencyStats::from_samples({}, 1.0).empty());
}

TEST_CASE("registry line protocol")
{
    NameRegistry r;
    CHECK(r.handle("REG /a/b tcp://10.0.0.2:10002") == "ACK tcp://10.0.0.2:10002");
    CHECK(r.handle("REG /a/b tcp://10.0.0.3:1") == "ERR DuplicateName");
    CHECK(r.handle("REG bad x") == "ERR MalformedName");
    CHECK(r.handle("QRY /a/b") == "ACK tcp://10.0.0.2:10002");
    CHECK(r.handle("QRY /a/c") == "ERR UnknownPort");
    CHECK(r.handle("HELLO") == "ERR Protocol");
    CHECK(r.handle("REG /a/x") == "ERR Protocol");
    CHECK(r.handle("") == "ERR Protocol");
}

TEST_CASE("registry over TCP")
{
    RegistryServer server;
    RegistryClient client("127.0.0.1", server.port());
    registry_register(client, "/avatar/joints/state", "bus://robot/0/out");
    CHECK(registry_query(client, "/avatar/joints/state") == "bus://robot/0/out");
    CHECK_FALSE(registry_query(client, "/nope"));
    CHECK_THROWS_AS(registry_register(client, "/avatar/joints/state", "x"), BusError);

    // A bus whose subnet registry is remote.
    Bus bus(std::make_shared<ManualClock>());
    bus.set_registry("robot", std::make_shared<RegistryClient>("127.0.0.1", server.port()));
    bus.register_port("/robot/out", Direction::Output, "robot");
    CHECK(server.registry().size() == 2);
    CHECK(bus.lookup("/robot/out", "robot"));
    server.stop();
}

TEST_CASE("listener reports a busy port")
{
    Listener a(0);
    try
    {
        Listener b(a.port());
        FAIL("expected PortInUse");
    }
    catch (const BusError& e)
    {
        CHECK(e.code() == BusErrc::PortInUse);
    }
}

TEST_CASE("concurrent publishers with the dispatch thread")
{
    Bus bus;
    bus.set_inbox_capacity(1 << 20);
    std::vector<PortHandle> outs;
    for (int t = 0; t < 4; ++t)
        outs.push_back(bus.register_port("/pub/" + std::to_string(t), Direction::Output));
    const PortHandle in = bus.register_port("/sink", Direction::Input);
    for (int t = 0; t < 4; ++t)
        bus.connect(outs[static_cast<std::size_t>(t)].name, "/sink", Carrier::Reliable);
    std::atomic<int> delivered{0};
    bus.subscribe(in, [&](const Envelope&) { ++delivered; });
    bus.start();

    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            for (int i = 0; i < 500; ++i)
                bus.publish(outs[static_cast<std::size_t>(t)], "t", payload_of(static_cast<std::uint64_t>(i)));
        });
    for (auto& th : threads)
        th.join();
    for (int spin = 0; spin < 200 && delivered < 2000; ++spin)
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    bus.stop();

    CHECK(delivered == 2000);
    std::map<std::string, std::uint64_t> last;
    for (const auto& e : bus.read(in))
    {
        auto& prev = last[e.topic];
        CHECK(index_of(e) == prev);
        prev = index_of(e) + 1;
    }
}

TEST_CASE("bridge carries a topic between two buses")
{
    Bus robot, op;
    const PortHandle cmd_out = op.register_port("/avatar/locomotion/cmd", Direction::Output);
    Listener listener(0);
    std::unique_ptr<Bridge> robot_side;
    std::thread acceptor([&] { robot_side = bridge_accept(robot, listener, milliseconds(2000)); });
    auto op_side = bridge_connect(op, "127.0.0.1", listener.port());
    acceptor.join();
    REQUIRE(robot_side);

    robot_side->import_port("/avatar/locomotion/cmd");
    robot.register_port("/avatar/locomotion/cmd:i", Direction::Input);
    robot.connect("/avatar/locomotion/cmd", "/avatar/locomotion/cmd:i", Carrier::InProcess);
    const PortHandle cmd_in = *robot.lookup("/avatar/locomotion/cmd:i");
    op_side->export_port("/avatar/locomotion/cmd");

    robot.start();
    op.start();
    for (int i = 0; i < 10; ++i)
        op.publish(cmd_out, "test/u64", payload_of(static_cast<std::uint64_t>(i)));

    std::vector<Envelope> got;
    for (int spin = 0; spin < 400 && got.size() < 10; ++spin)
    {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        for (auto& e : robot.read(cmd_in))
            got.push_back(e);
    }
    op.stop();
    robot.stop();
    REQUIRE(got.size() == 10);
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(index_of(got[i]) == i);
    CHECK(op_side->frames_out() == 10);
    CHECK(robot_side->frames_in() == 10);
}

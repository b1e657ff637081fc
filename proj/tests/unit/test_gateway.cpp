#include <doctest.h>

#include <avatar/gateway/server.hpp>
#include <avatar/sim/stack.hpp>

#include <chrono>
#include <cmath>
#include <random>
#include <thread>

using namespace avatar;
using namespace avatar::gateway;
using nlohmann::json;
using Clock = std::chrono::steady_clock;
using std::chrono::milliseconds;

namespace {

const model::RobotModel& robot()
{
    static const model::RobotModel m = model::build_icub3_model();
    return m;
}

class Client
{
public:
    explicit Client(std::uint16_t port)
        : m_sock(bus::tcp_connect("127.0.0.1", port))
        , m_reader(m_sock)
    {
    }

    void send(const json& j) { m_sock.send_all(j.dump() + "\n"); }
    void send_raw(const std::string& line) { m_sock.send_all(line + "\n"); }

    std::optional<json> next(milliseconds timeout = milliseconds(2000))
    {
        const auto line = m_reader.read_line(timeout);
        if (!line)
            return std::nullopt;
        return json::parse(*line);
    }

    /// Next message that is not telemetry.
    json reply(milliseconds timeout = milliseconds(2000))
    {
        const auto end = Clock::now() + timeout;
        while (Clock::now() < end)
        {
            auto m = next(std::chrono::duration_cast<milliseconds>(end - Clock::now()));
            if (m && (*m)["type"] != "telemetry")
                return *m;
        }
        return json{};
    }

    json hello(std::string_view role)
    {
        send({{"v", 1}, {"type", "hello"}, {"role", role}});
        return reply();
    }

    void close() { m_sock.close(); }

private:
    bus::Socket m_sock;
    bus::LineReader m_reader;
};

json cmd(json body)
{
    body["v"] = 1;
    body["type"] = "cmd";
    return body;
}

sim::SimConfig quiet_config()
{
    sim::SimConfig c;
    c.links.uplink = {10.0, 0.0, 0.0, 1};
    c.links.downlink = {10.0, 0.0, 0.0, 2};
    return c;
}

GatewayErrc code_of(CommandValidator& v, const json& msg, Role role)
{
    try
    {
        v.parse(msg, role);
    }
    catch (const GatewayError& e)
    {
        return e.code();
    }
    FAIL("command was accepted: " << msg.dump());
    return GatewayErrc::BadMessage;
}

} // namespace

TEST_CASE("role gating table")
{
    for (auto k : {CommandKind::Walk, CommandKind::ArmPose, CommandKind::Fingers, CommandKind::Face,
                   CommandKind::Eyelids, CommandKind::Head})
    {
        CHECK(role_allows(Role::Operator, k));
        CHECK_FALSE(role_allows(Role::Recipient, k));
        CHECK_FALSE(role_allows(Role::Observer, k));
    }
    CHECK_FALSE(role_allows(Role::Operator, CommandKind::InjectTouch));
    CHECK(role_allows(Role::Recipient, CommandKind::InjectTouch));
    CHECK_FALSE(role_allows(Role::Observer, CommandKind::InjectTouch));
    CHECK(role_from_name("recipient") == Role::Recipient);
    CHECK_FALSE(role_from_name("admin"));
    CHECK(command_kind_from_name(command_kind_name(CommandKind::ArmPose)) == CommandKind::ArmPose);
}

TEST_CASE("validator accepts in-limit commands and rejects the rest")
{
    CommandValidator v(robot(), 0.25);
    const auto walk = v.parse(cmd({{"kind", "walk"}, {"heading", 0.0}, {"speed", 0.2}}), Role::Operator);
    CHECK(walk.walk.speed == 0.2);

    CHECK(code_of(v, cmd({{"kind", "walk"}, {"heading", 0.0}, {"speed", 0.26}}), Role::Operator) ==
          GatewayErrc::Rejected);
    CHECK(code_of(v, cmd({{"kind", "walk"}, {"heading", 4.0}, {"speed", 0.1}}), Role::Operator) ==
          GatewayErrc::Rejected);
    CHECK(code_of(v, cmd({{"kind", "walk"}, {"speed", 0.1}}), Role::Operator) == GatewayErrc::BadMessage);
    CHECK(code_of(v, cmd({{"kind", "walk"}, {"heading", "north"}, {"speed", 0.1}}), Role::Operator) ==
          GatewayErrc::BadMessage);
    CHECK(code_of(v, cmd({{"kind", "dance"}}), Role::Operator) == GatewayErrc::BadMessage);
    CHECK(code_of(v, cmd({{"kind", "walk"}, {"heading", 0.0}, {"speed", 0.1}}), Role::Observer) ==
          GatewayErrc::BadRole);
    CHECK(code_of(v, cmd({{"kind", "inject_touch"}, {"patch", "left_hand"}, {"intensity", 0.5}}),
                  Role::Operator) == GatewayErrc::BadRole);

    SUBCASE("arm deltas accumulate and a rejected delta changes nothing")
    {
        const auto& layout = robot().layout;
        const std::size_t elbow = layout.index_of("l_elbow");
        const double start = v.posture()[elbow];
        v.parse(cmd({{"kind", "arm_pose"}, {"deltas", {{"l_elbow", 0.2}}}}), Role::Operator);
        v.parse(cmd({{"kind", "arm_pose"}, {"deltas", {{"l_elbow", 0.2}}}}), Role::Operator);
        CHECK(v.posture()[elbow] == doctest::Approx(start + 0.4));
        CHECK(code_of(v, cmd({{"kind", "arm_pose"}, {"deltas", {{"l_elbow", 5.0}}}}), Role::Operator) ==
              GatewayErrc::Rejected);
        CHECK(v.posture()[elbow] == doctest::Approx(start + 0.4));
        CHECK(code_of(v, cmd({{"kind", "arm_pose"}, {"deltas", {{"l_knee", 0.1}}}}), Role::Operator) ==
              GatewayErrc::Rejected);
        CHECK(code_of(v, cmd({{"kind", "arm_pose"}, {"preset", "grasp"}, {"deltas", {{"l_elbow", 0.1}}}}),
                      Role::Operator) == GatewayErrc::BadMessage);
        const auto grasp = v.parse(cmd({{"kind", "arm_pose"}, {"preset", "grasp"}}), Role::Operator);
        CHECK(grasp.posture == sim::pose_preset(robot(), "grasp"));
        CHECK(code_of(v, cmd({{"kind", "arm_pose"}, {"preset", "moonwalk"}}), Role::Operator) ==
              GatewayErrc::Rejected);
    }

    SUBCASE("fingers, face, eyelids, head, touch")
    {
        const auto f = v.parse(cmd({{"kind", "fingers"}, {"side", "left"}, {"flexion", 0.5}}), Role::Operator);
        CHECK(f.side == model::Side::Left);
        CHECK(f.flexion[4] == 0.5);
        const auto g = v.parse(cmd({{"kind", "fingers"}, {"flexion", {0, 0.1, 0.2, 0.3, 1.0}}}), Role::Operator);
        CHECK_FALSE(g.side);
        CHECK(code_of(v, cmd({{"kind", "fingers"}, {"flexion", 1.2}}), Role::Operator) == GatewayErrc::Rejected);
        CHECK(code_of(v, cmd({{"kind", "fingers"}, {"flexion", {0.1, 0.2}}}), Role::Operator) ==
              GatewayErrc::BadMessage);
        CHECK(v.parse(cmd({{"kind", "face"}, {"expression", "smile"}}), Role::Operator).expression ==
              retargeting::Expression::Smile);
        CHECK(code_of(v, cmd({{"kind", "face"}, {"expression", "smirk"}}), Role::Operator) ==
              GatewayErrc::Rejected);
        CHECK(code_of(v, cmd({{"kind", "eyelids"}, {"openness", -0.1}}), Role::Operator) ==
              GatewayErrc::Rejected);
        CHECK(code_of(v, cmd({{"kind", "head"}, {"yaw", 0.0}, {"pitch", 0.7}}), Role::Operator) ==
              GatewayErrc::Rejected);
        CHECK(v.parse(cmd({{"kind", "head"}, {"yaw", 0.9}, {"pitch", -0.6}}), Role::Operator).yaw == 0.9);
        CHECK(code_of(v, cmd({{"kind", "inject_touch"}, {"patch", "nose"}, {"intensity", 0.5}}),
                      Role::Recipient) == GatewayErrc::Rejected);
        CHECK(code_of(v, cmd({{"kind", "inject_touch"}, {"patch", "left_hand"}, {"intensity", 0.0}}),
                      Role::Recipient) == GatewayErrc::Rejected);
    }
}

TEST_CASE("fuzzed console payloads never put an out-of-limit value on the bus")
{
    sim::AvatarStack stack(robot(), quiet_config(), 3);
    CommandValidator v(robot(), stack.config().locomotion.planner.max_speed);
    const auto& layout = robot().layout;
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> wide(-4.0, 4.0);
    std::uniform_int_distribution<int> pick(0, 1000);

    const std::vector<std::string> kinds{"walk", "arm_pose", "fingers", "face", "eyelids", "head", "inject_touch",
                                         "bogus"};
    const std::vector<std::string> joints{"l_elbow", "r_shoulder_pitch", "torso_pitch", "l_wrist_yaw",
                                          "r_shoulder_roll", "neck_yaw", "l_knee"};
    auto value = [&]() -> json {
        switch (pick(rng) % 6)
        {
        case 0: return wide(rng);
        case 1: return wide(rng) * 0.1;
        case 2: return std::abs(wide(rng)) * 0.1;
        case 3: return "x";
        case 4: return nullptr;
        default: return json::array({wide(rng) * 0.3, 0.2, 0.3, 0.4, 0.5});
        }
    };

    int accepted = 0;
    for (int i = 0; i < 3000; ++i)
    {
        json m = cmd({{"kind", kinds[pick(rng) % kinds.size()]}});
        for (const char* key : {"heading", "speed", "flexion", "openness", "yaw", "pitch", "intensity"})
            if (pick(rng) % 4 != 0)
                m[key] = value();
        if (pick(rng) % 2)
            m["side"] = std::vector<std::string>{"left", "right", "both", "up"}[pick(rng) % 4];
        if (pick(rng) % 3 == 0)
            m["preset"] = std::vector<std::string>{"rest", "grasp", "wave", "zero", "flip"}[pick(rng) % 5];
        else if (pick(rng) % 2)
            m["deltas"] = {{joints[pick(rng) % joints.size()], value()}};
        m["expression"] = std::vector<std::string>{"smile", "neutral", "angry"}[pick(rng) % 3];
        m["patch"] = std::vector<std::string>{"left_hand", "right_upper_arm", "tail"}[pick(rng) % 3];
        const Role role = pick(rng) % 5 == 0 ? Role::Recipient : Role::Operator;

        ConsoleCommand c;
        try
        {
            c = v.parse(m, role);
        }
        catch (const GatewayError&)
        {
            continue;
        }
        ++accepted;
        switch (c.kind)
        {
        case CommandKind::Walk: REQUIRE((c.walk.speed >= 0.0 && c.walk.speed <= v.max_speed())); break;
        case CommandKind::ArmPose: REQUIRE(layout.within_limits(c.posture)); break;
        case CommandKind::Fingers:
            for (double f : c.flexion)
                REQUIRE((f >= 0.0 && f <= 1.0));
            break;
        case CommandKind::Eyelids: REQUIRE((c.openness >= 0.0 && c.openness <= 1.0)); break;
        case CommandKind::Head:
            REQUIRE((c.yaw >= layout.at("neck_yaw").min && c.yaw <= layout.at("neck_yaw").max));
            REQUIRE((c.pitch >= layout.at("neck_pitch").min && c.pitch <= layout.at("neck_pitch").max));
            break;
        case CommandKind::InjectTouch: REQUIRE((c.intensity > 0.0 && c.intensity <= 1.0)); break;
        case CommandKind::Face: break;
        }
        apply_command(stack, c);
        stack.step();
        REQUIRE(layout.within_limits(stack.world().state().q, 1e-6));
    }
    CHECK(accepted > 300);
    CHECK(stack.faults().empty());
}

TEST_CASE("snapshot staleness and monotonic time")
{
    SnapshotAssembler a;
    a.set_time(0.0);
    sim::StateMsg s;
    s.t = 0.0;
    s.face = 1;
    feedback::SkinEvent e{model::SkinPatch::LeftHand, {3}, 0.5, 0.0};
    feedback::LatencyReadout r{true, 8.0, 8.0, false, "8.0 ms"};
    a.on_state(s, 0.0);
    a.on_skin(e, 0.0);
    a.on_latency(r, 0.0);
    a.on_frame(feedback::CameraFrame{}, 0.0);

    SUBCASE("all fresh")
    {
        const auto j = a.assemble();
        CHECK(j["stale"].empty());
        CHECK(j["v"] == 1);
        CHECK(j["face"]["expression"] == "smile");
        CHECK(j["skin"].size() == 1);
    }
    SUBCASE("skin silent for 5 s")
    {
        for (int i = 1; i <= 500; ++i)
        {
            const double t = 0.01 * i;
            s.t = t;
            a.on_state(s, t);
            a.on_frame(feedback::CameraFrame{}, t);
            if (i % 100 == 0)
                a.on_latency(r, t);
        }
        const auto j = a.assemble();
        REQUIRE(j["stale"].contains("skin"));
        CHECK(j["stale"]["skin"].get<double>() == doctest::Approx(5.0));
        CHECK(j["stale"].size() == 1);
        CHECK(j["skin"].empty());
    }
    SUBCASE("snapshot_time strictly increases with a frozen clock")
    {
        double last = -1.0;
        for (int i = 0; i < 50; ++i)
        {
            const double t = a.assemble()["snapshot_time"].get<double>();
            CHECK(t > last);
            last = t;
        }
    }
    SUBCASE("state fields come from one tick")
    {
        s.t = 0.37;
        s.q[5] = 0.123;
        s.zmp_ref = Vec2(0.01, 0.02);
        a.on_state(s, 0.38);
        const auto j = a.assemble();
        CHECK(j["tick_time"] == 0.37);
        CHECK(j["joint_positions"][5] == 0.123);
        CHECK(j["walking"]["zmp_ref"][1] == 0.02);
    }
    SUBCASE("missing topics are reported, not waited for")
    {
        SnapshotAssembler empty;
        empty.set_time(0.0);
        empty.set_time(2.0);
        const auto j = empty.assemble();
        CHECK(j["joint_positions"].is_null());
        CHECK(j["stale"]["state"] == 2.0);
        CHECK(j["frame"].is_null());
    }
}

TEST_CASE("server handshake and errors")
{
    CommandValidator v(robot(), 0.25);
    std::vector<ConsoleCommand> received;
    GatewayServer server({0, "127.0.0.1", 30.0}, v, [&](const ConsoleCommand& c, Role) { received.push_back(c); },
                         [] { return nlohmann::ordered_json{{"v", 1}, {"type", "telemetry"}}; });
    server.start();

    SUBCASE("a taken port is PortInUse")
    {
        CHECK_THROWS_AS(GatewayServer({server.port(), "127.0.0.1", 30.0}, v, {}, {}), GatewayError);
        try
        {
            GatewayServer again({server.port(), "127.0.0.1", 30.0}, v, {}, {});
        }
        catch (const GatewayError& e)
        {
            CHECK(e.code() == GatewayErrc::PortInUse);
        }
    }
    SUBCASE("unknown role is BadRole")
    {
        Client c(server.port());
        const auto r = c.hello("admin");
        CHECK(r["type"] == "error");
        CHECK(r["code"] == "BadRole");
    }
    SUBCASE("observer walk is rejected with a role error")
    {
        Client c(server.port());
        CHECK(c.hello("observer")["type"] == "welcome");
        c.send(cmd({{"id", 1}, {"kind", "walk"}, {"heading", 0.0}, {"speed", 0.2}}));
        const auto r = c.reply();
        CHECK(r["type"] == "error");
        CHECK(r["code"] == "BadRole");
        CHECK(r["id"] == 1);
        CHECK(received.empty());
    }
    SUBCASE("commands before hello, garbage and wrong versions")
    {
        Client c(server.port());
        c.send(cmd({{"kind", "walk"}, {"heading", 0.0}, {"speed", 0.2}}));
        CHECK(c.reply()["code"] == "BadRole");
        c.send_raw("{not json");
        CHECK(c.reply()["code"] == "BadMessage");
        c.send({{"v", 2}, {"type", "hello"}, {"role", "operator"}});
        CHECK(c.reply()["code"] == "BadMessage");
        CHECK(c.hello("operator")["role"] == "operator");
        CHECK(c.hello("operator")["code"] == "BadMessage");
        c.send(cmd({{"id", "a"}, {"kind", "walk"}, {"heading", 0.0}, {"speed", 0.2}}));
        const auto ack = c.reply();
        CHECK(ack["type"] == "ack");
        CHECK(ack["id"] == "a");
        CHECK(received.size() == 1);
        c.send(cmd({{"id", "b"}, {"kind", "walk"}, {"heading", 0.0}, {"speed", 2.0}}));
        CHECK(c.reply()["code"] == "Rejected");
        CHECK(received.size() == 1);
    }
    SUBCASE("telemetry only after hello")
    {
        Client c(server.port());
        CHECK_FALSE(c.next(milliseconds(150)));
        c.hello("observer");
        const auto t = c.next();
        REQUIRE(t);
        CHECK((*t)["type"] == "telemetry");
    }
    server.stop();
}

TEST_CASE("live service: walk, touch, cadence")
{
    const auto config = quiet_config();
    sim::AvatarStack stack(robot(), config, 1);
    std::mutex mu;
    std::optional<Clock::time_point> walk_arrived;
    sim::StackListener extra;
    extra.robot_walk = [&](double, const locomotion::WalkingCommand& c) {
        std::lock_guard lock(mu);
        if (c.speed > 0.0 && !walk_arrived)
            walk_arrived = Clock::now();
    };
    GatewayService service(stack, {0, "127.0.0.1", config.gateway.telemetry_hz}, extra);
    service.start();
    service.run_realtime();

    Client op(service.port());
    Client recipient(service.port());
    Client observer(service.port());
    const auto welcome = op.hello("operator");
    CHECK(welcome["type"] == "welcome");
    CHECK(welcome["joints"].size() == model::kDofs);
    CHECK(recipient.hello("recipient")["type"] == "welcome");
    CHECK(observer.hello("observer")["type"] == "welcome");

    SUBCASE("operator walk reaches the avatar within 50 ms")
    {
        const auto sent = Clock::now();
        op.send(cmd({{"kind", "walk"}, {"heading", 0.0}, {"speed", 0.2}}));
        CHECK(op.reply()["type"] == "ack");
        for (int i = 0; i < 100; ++i)
        {
            {
                std::lock_guard lock(mu);
                if (walk_arrived)
                    break;
            }
            std::this_thread::sleep_for(milliseconds(2));
        }
        std::lock_guard lock(mu);
        REQUIRE(walk_arrived);
        const double ms = std::chrono::duration<double, std::milli>(*walk_arrived - sent).count();
        MESSAGE("walk command reached the avatar after " << ms << " ms");
        CHECK(ms < 50.0);
    }
    SUBCASE("recipient touch shows up as a haptic indicator")
    {
        recipient.send(cmd({{"kind", "inject_touch"}, {"patch", "left_upper_arm"}, {"intensity", 0.8}}));
        CHECK(recipient.reply()["type"] == "ack");
        const auto acked = Clock::now();
        bool haptic = false, skin = false;
        double ms = 0.0;
        while (!haptic && Clock::now() - acked < std::chrono::seconds(1))
        {
            const auto t = observer.next();
            REQUIRE(t);
            if ((*t)["type"] != "telemetry")
                continue;
            skin = skin || !(*t)["skin"].empty();
            if (!(*t)["haptics"].empty())
            {
                haptic = true;
                CHECK((*t)["haptics"][0]["node"] == "left_arm");
                ms = std::chrono::duration<double, std::milli>(Clock::now() - acked).count();
            }
        }
        CHECK(haptic);
        CHECK(skin);
        MESSAGE("haptic indicator in telemetry after " << ms << " ms");
        // Two link crossings plus one telemetry period and scheduling slack.
        CHECK(ms < 100.0);
    }
    SUBCASE("30 Hz telemetry, strictly increasing snapshot_time")
    {
        std::vector<Clock::time_point> arrivals;
        double last = -1.0;
        bool monotonic = true;
        const auto start = Clock::now();
        while (Clock::now() - start < std::chrono::milliseconds(10500))
        {
            const auto t = observer.next();
            REQUIRE(t);
            if ((*t)["type"] != "telemetry")
                continue;
            arrivals.push_back(Clock::now());
            const double st = (*t)["snapshot_time"].get<double>();
            monotonic = monotonic && st > last;
            last = st;
        }
        CHECK(monotonic);
        const auto from = start + milliseconds(250);
        const auto to = from + std::chrono::seconds(10);
        const auto n = std::count_if(arrivals.begin(), arrivals.end(),
                                     [&](Clock::time_point p) { return p >= from && p < to; });
        MESSAGE(n << " snapshots in 10 s");
        CHECK(n >= 297);
        CHECK(n <= 303);
    }
    service.stop();
    CHECK_FALSE(service.error());
}

TEST_CASE("clients coming and going leave the control trace untouched")
{
    const auto config = quiet_config();
    auto run = [&](bool with_clients) {
        sim::AvatarStack stack(robot(), config, 5);
        stack.keep_reference_trace(true);
        GatewayService service(stack, {0, "127.0.0.1", 30.0});
        service.start();
        std::atomic<bool> done{false};
        std::thread visitors;
        if (with_clients)
            visitors = std::thread([&] {
                while (!done)
                {
                    Client c(service.port());
                    c.hello("observer");
                    c.next(milliseconds(40));
                    c.send(cmd({{"kind", "walk"}, {"heading", 0.0}, {"speed", 0.1}}));
                    c.send_raw("{\"type\":\"cmd\"");
                    c.close();
                    Client r(service.port());
                    r.hello("recipient");
                    r.send(cmd({{"kind", "walk"}, {"heading", 0.0}, {"speed", 0.1}}));
                }
            });
        stack.send_walk({0.0, 0.15});
        for (int i = 0; i < 400; ++i)
        {
            service.tick();
            if (with_clients)
                std::this_thread::sleep_for(std::chrono::microseconds(500));
        }
        done = true;
        if (visitors.joinable())
            visitors.join();
        service.stop();
        CHECK(service.commands_applied() == 0);
        return stack.reference_trace();
    };
    const auto quiet = run(false);
    const auto busy = run(true);
    REQUIRE(quiet.size() == busy.size());
    REQUIRE(quiet.size() == 400);
    bool identical = true;
    for (std::size_t i = 0; i < quiet.size(); ++i)
        identical = identical && quiet[i] == busy[i];
    CHECK(identical);
}

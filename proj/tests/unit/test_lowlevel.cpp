#include <avatar/lowlevel/servo.hpp>

#include <doctest.h>

#include <random>

using namespace avatar;
using namespace avatar::lowlevel;

TEST_CASE("minimum jerk boundary values")
{
    const MinJerkRef ref{0.3, 1.7, 2.0, 5.0};
    const auto end = min_jerk_eval(ref, 7.0);
    CHECK(end.position == 1.7);
    CHECK(end.velocity == 0.0);
    CHECK(end.acceleration == 0.0);
    const auto start = min_jerk_eval(ref, 5.0);
    CHECK(start.position == 0.3);
    CHECK(start.velocity == 0.0);
    CHECK(start.acceleration == 0.0);
    const auto after = min_jerk_eval(ref, 100.0);
    CHECK(after.position == 1.7);
    CHECK(after.velocity == 0.0);
}

TEST_CASE("minimum jerk midpoint and quarter point")
{
    const MinJerkRef ref{0.0, 1.0, 1.0, 0.0};
    CHECK(min_jerk_eval(ref, 0.5).position == doctest::Approx(0.5).epsilon(1e-15));
    // 10(0.25)^3 - 15(0.25)^4 + 6(0.25)^5
    CHECK(min_jerk_eval(ref, 0.25).position == doctest::Approx(0.103515625).epsilon(1e-15));
}

TEST_CASE("minimum jerk rejects non-positive durations")
{
    CHECK_THROWS_AS(min_jerk_eval({0.0, 1.0, 0.0, 0.0}, 0.1), LowlevelError);
    CHECK_THROWS_AS(min_jerk_eval({0.0, 1.0, -1.0, 0.0}, 0.1), LowlevelError);
}

TEST_CASE("minimum jerk derivatives agree with central differences on a 1 kHz grid")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    std::uniform_real_distribution<double> D(0.2, 3.0);
    for (int trial = 0; trial < 20; ++trial)
    {
        const MinJerkRef ref{U(rng), U(rng), std::round(D(rng) * 1000.0) / 1000.0, 0.0};
        const int steps = static_cast<int>(std::round(ref.duration * 1000.0));
        for (int k = 1; k < steps; ++k)
        {
            const double t = k * 1e-3;
            const auto s = min_jerk_eval(ref, t);
            const auto pos = [&](double tt) { return min_jerk_eval(ref, tt).position; };
            // Richardson-extrapolated central differences of position only.
            const auto d1 = [&](double h) { return (pos(t + h) - pos(t - h)) / (2 * h); };
            const auto d2 = [&](double h) { return (pos(t + h) - 2 * pos(t) + pos(t - h)) / (h * h); };
            const double hv = 1e-4, ha = 4e-4;
            const double v = (4 * d1(hv / 2) - d1(hv)) / 3;
            const double a = (4 * d2(ha / 2) - d2(ha)) / 3;
            CHECK(std::abs(v - s.velocity) <= 1e-6);
            CHECK(std::abs(a - s.acceleration) <= 1e-6);
        }
    }
}

TEST_CASE("friction feedforward")
{
    const FrictionParams p{0.5, 0.1};
    CHECK(friction_feedforward(p, 0.0) == 0.0);
    CHECK(friction_feedforward(p, 2.0) == doctest::Approx(0.7));
    for (double v : {0.01, 0.3, 5.0})
        CHECK(friction_feedforward(p, -v) == -friction_feedforward(p, v));
}

namespace {

ServoConfig pure_p()
{
    ServoConfig cfg;
    cfg.position = {1.0, 0.0, 0.0, 100.0, 1.0};
    cfg.brushless = true;
    return cfg;
}

} // namespace

TEST_CASE("servo modes")
{
    SUBCASE("pwm is open loop")
    {
        JointServo s(pure_p());
        s.set_mode(ControlMode::Pwm, {}, 0.0);
        s.set_reference({ControlMode::Pwm, 0.37, 0.0}, 0.0);
        const auto cmd = s.tick({}, 0.0);
        CHECK(cmd.value == 0.37);
        CHECK_FALSE(cmd.saturated);
    }
    SUBCASE("velocity mode integrates the reference")
    {
        JointServo s(pure_p());
        s.set_mode(ControlMode::Velocity, {}, 0.0);
        s.set_reference({ControlMode::Velocity, 1.0, 0.0}, 0.0);
        for (int i = 0; i < 1000; ++i)
            s.tick({}, i * kBoardDt);
        CHECK(s.position_setpoint() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("position mode, pure proportional")
    {
        JointServo s(pure_p());
        s.set_mode(ControlMode::Position, {0.0}, 0.0);
        const auto cmd = s.tick({-0.2}, 0.0);
        CHECK(cmd.value == doctest::Approx(0.2));
    }
    SUBCASE("position mode follows a minimum jerk trajectory")
    {
        ServoConfig cfg = pure_p();
        cfg.trajectory_time = 1.0;
        JointServo s(cfg);
        s.set_mode(ControlMode::Position, {0.0}, 0.0);
        s.set_reference({ControlMode::Position, 1.0, 0.0}, 0.0);
        s.tick({0.0}, 0.5);
        CHECK(s.position_setpoint() == doctest::Approx(0.5));
        s.tick({0.0}, 1.5);
        CHECK(s.position_setpoint() == 1.0);
    }
    SUBCASE("position direct tracks the raw reference")
    {
        JointServo s(pure_p());
        s.set_mode(ControlMode::PositionDirect, {0.0}, 0.0);
        s.set_reference({ControlMode::PositionDirect, 0.4, 0.0}, 0.0);
        CHECK(s.tick({0.1}, 0.0).value == doctest::Approx(0.3));
    }
    SUBCASE("torque mode adds feedforward and friction")
    {
        ServoConfig cfg = pure_p();
        cfg.torque = {2.0, 0.0, 0.0, 100.0, 1.0};
        cfg.friction = {0.5, 0.1};
        JointServo s(cfg);
        s.set_mode(ControlMode::Torque, {}, 0.0);
        s.set_reference({ControlMode::Torque, 3.0, 1.0}, 0.0);
        Measured m;
        m.torque = 2.0;
        m.velocity = 2.0;
        // 2 * (3 - 2) + 1 + 0.7
        CHECK(s.tick(m, 0.0).value == doctest::Approx(3.7));
    }
    SUBCASE("current mode is a PI producing a duty cycle")
    {
        ServoConfig cfg = pure_p();
        cfg.current = {0.5, 0.0, 0.0, 1.0, 1.0};
        JointServo s(cfg);
        s.set_mode(ControlMode::Current, {}, 0.0);
        s.set_reference({ControlMode::Current, 1.0, 0.0}, 0.0);
        CHECK(s.tick({}, 0.0).value == doctest::Approx(0.5));
        s.set_reference({ControlMode::Current, 10.0, 0.0}, 0.0);
        const auto sat = s.tick({}, 0.0);
        CHECK(sat.value == 1.0);
        CHECK(sat.saturated);
    }
}

TEST_CASE("mode errors")
{
    ServoConfig dc = pure_p();
    dc.brushless = false;
    JointServo s(dc);
    CHECK_THROWS_AS(s.set_mode(ControlMode::Torque, {}, 0.0), LowlevelError);
    CHECK_THROWS_AS(s.set_mode(ControlMode::Pwm, {}, 0.0), LowlevelError);
    s.set_mode(ControlMode::Position, {}, 0.0);
    CHECK_THROWS_AS(s.set_reference({ControlMode::Velocity, 1.0, 0.0}, 0.0), LowlevelError);
}

TEST_CASE("anti-windup keeps the integrator bounded under saturation")
{
    ServoConfig cfg = pure_p();
    cfg.position = {5.0, 50.0, 0.0, 0.5, 0.2};
    JointServo s(cfg);
    s.set_mode(ControlMode::PositionDirect, {0.0}, 0.0);
    s.set_reference({ControlMode::PositionDirect, 10.0, 0.0}, 0.0);
    for (int i = 0; i < 5000; ++i)
    {
        const auto cmd = s.tick({0.0}, i * kBoardDt);
        CHECK(cmd.saturated);
        CHECK(std::abs(s.state().integrator) <= 0.2);
    }
}

TEST_CASE("position and position direct switch bumplessly")
{
    JointServo s(pure_p());
    s.set_mode(ControlMode::Position, {0.0}, 0.0);
    s.set_reference({ControlMode::Position, 1.0, 0.0}, 0.0);
    for (int i = 0; i < 100; ++i)
        s.tick({0.05}, i * kBoardDt);
    s.set_mode(ControlMode::PositionDirect, {0.42}, 0.1);
    CHECK(s.position_setpoint() == 0.42);
    CHECK(s.tick({0.42}, 0.1).value == 0.0);
    s.set_mode(ControlMode::Position, {0.17}, 0.2);
    CHECK(s.tick({0.17}, 0.2).value == 0.0);
}

TEST_CASE("identical input traces give identical command traces")
{
    auto run = [] {
        ServoConfig cfg;
        cfg.brushless = true;
        JointServo s(cfg);
        s.set_mode(ControlMode::Position, {0.0}, 0.0);
        s.set_reference({ControlMode::Position, 0.8, 0.0}, 0.0);
        std::vector<double> out;
        double pos = 0.0;
        for (int i = 0; i < 2000; ++i)
        {
            const auto c = s.tick({pos, 0.0, 0.0, 0.0}, i * kBoardDt);
            pos += 1e-4 * c.value;
            out.push_back(c.value);
        }
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("control board")
{
    const auto model = model::build_icub3_model();
    ControlBoard board(0, {model.layout.index_of("l_knee"), model.layout.index_of("eyelids")}, model, ServoConfig{});
    CHECK(board.servo(0).config().brushless);
    CHECK_FALSE(board.servo(1).config().brushless);
    CHECK_THROWS_AS(board.set_mode(1, ControlMode::Current, {}), LowlevelError);
    CHECK_THROWS_AS(board.friction_feedforward("nope", 1.0), LowlevelError);
    CHECK(board.friction_feedforward("l_knee", 0.0) == 0.0);
    board.set_mode(0, ControlMode::PositionDirect, {0.1});
    board.command({0, {ControlMode::PositionDirect, 0.3, 0.0}});
    const auto out = board.tick({{0.1}, {0.0}});
    CHECK(out.size() == 2);
    CHECK(board.ticks() == 1);
    CHECK(board.time() == doctest::Approx(1e-3));
}

TEST_CASE("minimum jerk endpoints are exact for arbitrary start times")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-100.0, 100.0);
    std::uniform_real_distribution<double> D(0.01, 7.0);
    for (int i = 0; i < 10000; ++i)
    {
        const MinJerkRef ref{U(rng), U(rng), D(rng), U(rng)};
        CHECK(min_jerk_eval(ref, ref.t0).position == ref.q0);
        const auto end = min_jerk_eval(ref, ref.t0 + ref.duration);
        CHECK(end.position == ref.qf);
        CHECK(end.velocity == 0.0);
    }
}

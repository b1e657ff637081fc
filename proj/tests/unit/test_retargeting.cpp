#include <doctest.h>

#include <avatar/retargeting/retarget.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace avatar;
using namespace avatar::retargeting;
using model::Side;

namespace {

const model::RobotModel& icub()
{
    static const model::RobotModel m = model::build_icub3_model();
    return m;
}

Quat random_rotation(std::mt19937_64& rng)
{
    std::normal_distribution<double> n;
    Quat q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q;
}

// Frame whose arm nodes reproduce the given arm joints under cal.
OperatorFrame frame_for_arm(const Calibration& cal, Side side, const std::array<double, 7>& q, const Quat& chest)
{
    const auto [upper, fore] = ArmIk(icub(), side).forward(q);
    const Node up = side == Side::Left ? Node::LeftUpperArm : Node::RightUpperArm;
    const Node fo = side == Side::Left ? Node::LeftForearm : Node::RightForearm;
    OperatorFrame f;
    f.node(Node::Chest) = chest;
    const Mat3 C = chest.toRotationMatrix();
    f.node(up) = Quat(C * upper * cal.alignment[static_cast<std::size_t>(up)].transpose()).normalized();
    f.node(fo) = Quat(C * fore * cal.alignment[static_cast<std::size_t>(fo)].transpose()).normalized();
    f.head_pose.linear() = C;
    return f;
}

std::vector<OperatorFrame> npose(const std::array<Quat, kNodes>& nodes, const Mat3& head, double duration = 1.2,
                                 double noise = 0.0, std::uint64_t seed = 1)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, noise);
    std::vector<OperatorFrame> out;
    for (double t = 0.0; t <= duration + 1e-9; t += 0.01)
    {
        OperatorFrame f;
        f.timestamp = t;
        for (std::size_t i = 0; i < kNodes; ++i)
        {
            const Vec3 w(n(rng), n(rng), n(rng));
            f.nodes[i] = (nodes[i] * Quat(exp_so3(w))).normalized();
        }
        f.head_pose.linear() = head;
        out.push_back(f);
    }
    return out;
}

} // namespace

TEST_CASE("pitch_roll_yaw inverts the neck chain")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int k = 0; k < 200; ++k)
    {
        const double a = u(rng), b = u(rng), c = u(rng);
        const Mat3 R = rot_y(a) * rot_x(b) * rot_z(c);
        const auto [p, r, y] = pitch_roll_yaw(R);
        CHECK(p == doctest::Approx(a).epsilon(1e-12));
        CHECK(r == doctest::Approx(b).epsilon(1e-12));
        CHECK(y == doctest::Approx(c).epsilon(1e-12));
    }
}

TEST_CASE("calibration maps the N-pose to the zero posture")
{
    std::mt19937_64 rng(11);
    std::array<Quat, kNodes> nodes;
    for (auto& q : nodes)
        q = random_rotation(rng);
    const Mat3 head = random_rotation(rng).toRotationMatrix();
    const auto frames = npose(nodes, head, 1.2, 0.0);
    const Calibration cal = calibrate(frames, icub());
    CHECK(cal.deviation < 0.05);

    OperatorFrame f;
    f.nodes = nodes;
    f.head_pose.linear() = head;
    Retargeter rt(icub());
    rt.set_calibration(cal);
    const auto refs = rt.process(f);
    for (Side side : {Side::Left, Side::Right})
    {
        const ArmIk ik(icub(), side);
        for (std::size_t j : ik.joints())
            CHECK(std::abs(refs.posture_ref[j]) < 1e-6);
    }
    const auto t0 = model::group_offset(model::JointGroup::Torso);
    for (std::size_t j = t0; j < t0 + 3; ++j)
        CHECK(std::abs(refs.posture_ref[j]) < 1e-6);
    CHECK(std::abs(refs.head.neck_pitch) < 1e-6);
    CHECK(std::abs(refs.head.neck_roll) < 1e-6);
    CHECK(std::abs(refs.head.neck_yaw) < 1e-6);
    CHECK_FALSE(refs.clamped);
}

TEST_CASE("calibration rejects motion and short windows")
{
    std::array<Quat, kNodes> nodes;
    nodes.fill(Quat::Identity());
    SUBCASE("moving operator")
    {
        const auto frames = npose(nodes, Mat3::Identity(), 1.2, 0.2);
        try
        {
            calibrate(frames, icub());
            FAIL("expected OperatorMoving");
        }
        catch (const RetargetError& e)
        {
            CHECK(e.code() == RetargetErrc::OperatorMoving);
        }
    }
    SUBCASE("short window")
    {
        const auto frames = npose(nodes, Mat3::Identity(), 0.5);
        try
        {
            calibrate(frames, icub());
            FAIL("expected InsufficientFrames");
        }
        catch (const RetargetError& e)
        {
            CHECK(e.code() == RetargetErrc::InsufficientFrames);
        }
        CHECK_THROWS_AS(calibrate({}, icub()), RetargetError);
    }
    SUBCASE("deterministic")
    {
        const auto frames = npose(nodes, Mat3::Identity(), 1.2, 0.01, 5);
        CHECK(calibrate(frames, icub()) == calibrate(frames, icub()));
    }
}

TEST_CASE("elbow at a right angle round-trips")
{
    const Calibration cal = identity_calibration(icub());
    const std::array<double, 7> q{0.0, 0.0, 0.0, std::numbers::pi / 2, 0.0, 0.0, 0.0};
    const auto f = frame_for_arm(cal, Side::Left, q, Quat::Identity());
    const auto r = geometric_retarget_arms(f, cal, icub());
    const auto& left = r.arms[0];
    CHECK(left.converged);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(std::abs(left.q[i] - q[i]) < 1e-3);
}

TEST_CASE("arm IK round trip over random reachable postures")
{
    std::mt19937_64 rng(2024);
    const Calibration cal = identity_calibration(icub());
    int worst_side = -1;
    double worst = 0.0;
    int n = 0;
    for (Side side : {Side::Left, Side::Right})
    {
        const ArmIk ik(icub(), side);
        for (int k = 0; k < 250; ++k, ++n)
        {
            std::array<double, 7> q{};
            for (std::size_t i = 0; i < 5; ++i)
            {
                const auto& info = icub().layout.joints[ik.joints()[i]];
                q[i] = std::uniform_real_distribution<double>(info.min, info.max)(rng);
            }
            const Quat chest = random_rotation(rng);
            const auto f = frame_for_arm(cal, side, q, chest);
            const ArmTargets t = arm_targets(f, cal, side);
            const auto res = ik.solve(t.upper_arm, t.forearm, {});
            double e = 0.0;
            for (std::size_t i = 0; i < 5; ++i)
                e = std::max(e, std::abs(res.q[i] - q[i]));
            if (e > worst)
            {
                worst = e;
                worst_side = static_cast<int>(side);
            }
            CHECK(res.converged);
        }
    }
    INFO("worst joint error " << worst << " on side " << worst_side);
    CHECK(n == 500);
    CHECK(worst < 1e-3);
}

TEST_CASE("twist beyond the limit is clamped and flagged")
{
    // Forearm twisted 2 rad about its own axis, wrist_prosup stops at 1.
    const auto [upper, fore] = ArmIk(icub(), Side::Left).forward({});
    const ArmIk ik(icub(), Side::Left);
    const auto res = ik.solve(upper, fore * rot_z(2.0), {});
    CHECK(res.clamped);
    CHECK_FALSE(res.converged);
    CHECK(res.error > 0.5);
    CHECK(res.q[4] == doctest::Approx(1.0));
}

TEST_CASE("head and eyes")
{
    const auto& layout = icub().layout;
    OperatorFrame f;
    SUBCASE("yaw 30 degrees")
    {
        f.head_pose.linear() = rot_z(std::numbers::pi / 6);
        const auto h = retarget_head(f, icub());
        CHECK(h.neck_yaw == doctest::Approx(std::numbers::pi / 6).epsilon(1e-9));
        CHECK(std::abs(h.neck_pitch) < 1e-12);
        CHECK(std::abs(h.neck_roll) < 1e-12);
    }
    SUBCASE("yaw past the limit")
    {
        f.head_pose.linear() = rot_z(1.3);
        const auto h = retarget_head(f, icub());
        CHECK(h.neck_yaw == doctest::Approx(layout.at("neck_yaw").max));
        CHECK(h.clamped);
    }
    SUBCASE("eyelids")
    {
        f.eye_openness = 0.0;
        CHECK(retarget_head(f, icub()).eyelids == layout.at("eyelids").min);
        f.eye_openness = 1.0;
        CHECK(retarget_head(f, icub()).eyelids == layout.at("eyelids").max);
    }
    SUBCASE("gaze clamped")
    {
        f.gaze = {2.0, 0.3, -0.1};
        const auto h = retarget_head(f, icub());
        CHECK(h.eyes.version == layout.at("eyes_version").max);
        CHECK(h.eyes.vergence == 0.3);
        CHECK(h.eyes.tilt == -0.1);
        CHECK(h.clamped);
    }
}

TEST_CASE("finger flexion to motors")
{
    const auto open = retarget_fingers({0, 0, 0, 0, 0});
    for (double m : open)
        CHECK(m == 0.0);
    const auto fist = retarget_fingers({1, 1, 1, 1, 1});
    for (double m : fist)
        CHECK(m == 1.0);
    const auto mix = retarget_fingers({0.2, 0.4, 0.6, 0.8, 0.2});
    CHECK(mix[0] == 0.2);
    CHECK(mix[3] == 0.4);
    CHECK(mix[5] == 0.6);
    CHECK(mix[7] == doctest::Approx(0.5));
    const auto over = retarget_fingers({1.5, -1, 0, 0, 0});
    CHECK(over[0] == 1.0);
    CHECK(over[3] == 0.0);

    model::JointVector q;
    apply_finger_motors(icub(), Side::Right, fist, q);
    const auto off = model::group_offset(model::JointGroup::RightHand);
    for (std::size_t i = 0; i < 9; ++i)
        CHECK(q[off + i] == icub().layout.joints[off + i].max);
}

TEST_CASE("treadmill filter")
{
    LocomotionFilter lf;
    SUBCASE("dead zone")
    {
        for (int k = 0; k < 200; ++k)
            CHECK(lf.update({0.04, 0.3}, 0.01 * k).speed == 0.0);
    }
    SUBCASE("step response follows the first-order closed form")
    {
        const double tau = lf.params().tau;
        double at3tau = 0.0;
        for (int k = 0; k <= 300; ++k)
        {
            const double t = 0.01 * k;
            const auto cmd = lf.update({0.2, 1.0}, t);
            CHECK(cmd.speed == doctest::Approx(0.2 * (1.0 - std::exp(-t / tau))).epsilon(1e-9));
            CHECK(cmd.heading == doctest::Approx(1.0));
            if (k == 90)
                at3tau = cmd.speed;
        }
        CHECK(std::abs(at3tau - 0.19) < 0.01);
    }
    SUBCASE("clamped to the maximum speed")
    {
        locomotion::WalkingCommand c;
        for (int k = 0; k <= 500; ++k)
            c = lf.update({0.6, 0.0}, 0.01 * k);
        CHECK(c.speed == doctest::Approx(0.25).epsilon(1e-6));
    }
    SUBCASE("settles to an exact stop")
    {
        for (int k = 0; k <= 200; ++k)
            lf.update({0.2, 0.0}, 0.01 * k);
        double last = 1.0;
        for (int k = 201; k <= 600; ++k)
            last = lf.update({0.0, 0.0}, 0.01 * k).speed;
        CHECK(last == 0.0);
    }
}

TEST_CASE("facial expressions")
{
    CHECK(retarget_face(Expression::Neutral) == 0);
    CHECK(retarget_face("smile") == 1);
    CHECK(retarget_face("eyes_closed") == 4);
    try
    {
        retarget_face("wink");
        FAIL("expected UnknownExpression");
    }
    catch (const RetargetError& e)
    {
        CHECK(e.code() == RetargetErrc::UnknownExpression);
    }
}

TEST_CASE("session recording round-trips bit for bit")
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<OperatorFrame> frames;
    for (int k = 0; k < 50; ++k)
    {
        OperatorFrame f;
        f.timestamp = 0.01 * k + 1e-7 * u(rng);
        for (auto& q : f.nodes)
            q = random_rotation(rng);
        f.head_pose.linear() = random_rotation(rng).toRotationMatrix();
        f.head_pose.translation() = Vec3(u(rng), u(rng), 1.5 + u(rng));
        f.gaze = {u(rng) - 0.5, u(rng), u(rng) - 0.5};
        f.eye_openness = u(rng);
        for (auto& h : f.fingers)
            for (double& x : h)
                x = u(rng);
        f.treadmill = {u(rng) * 0.3, u(rng) * 6 - 3};
        f.expression = kExpressions[static_cast<std::size_t>(k) % kExpressions.size()];
        frames.push_back(f);
    }
    std::stringstream ss;
    write_session(ss, frames);
    const auto back = read_session(ss);
    REQUIRE(back.size() == frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i)
        CHECK(identical(frames[i], back[i]));

    std::stringstream bad("{\"t\": 1}\n");
    CHECK_THROWS_AS(read_session(bad), RetargetError);
    std::stringstream order;
    write_session(order, {frames[1], frames[0]});
    CHECK_THROWS_AS(read_session(order), RetargetError);
}

TEST_CASE("retargeter output stays within limits")
{
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-0.5, 1.5);
    Retargeter rt(icub());
    OperatorFrame f;
    CHECK_THROWS_AS(rt.process(f), RetargetError);
    rt.set_calibration(identity_calibration(icub()));
    for (int k = 0; k < 100; ++k)
    {
        f.timestamp = 0.01 * k;
        for (auto& q : f.nodes)
            q = random_rotation(rng);
        f.head_pose.linear() = random_rotation(rng).toRotationMatrix();
        f.gaze = {u(rng), u(rng), u(rng)};
        f.eye_openness = u(rng);
        for (auto& h : f.fingers)
            for (double& x : h)
                x = u(rng);
        const auto refs = rt.process(f);
        CHECK(icub().layout.within_limits(refs.posture_ref));
        const auto l0 = model::group_offset(model::JointGroup::LeftLeg);
        for (std::size_t j = l0; j < l0 + 12; ++j)
            CHECK(refs.posture_ref[j] == 0.0);
    }
    f.nodes[0] = Quat(2.0, 0.0, 0.0, 0.0);
    CHECK_THROWS_AS(rt.process(f), RetargetError);
}

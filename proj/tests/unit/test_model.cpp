#include <avatar/model/robot_model.hpp>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <fstream>

#include <random>

using namespace avatar;
using namespace avatar::model;

namespace {

JointVector random_posture(const RobotModel& m, std::mt19937_64& rng)
{
    JointVector q;
    for (std::size_t i = 0; i < kDofs; ++i)
    {
        std::uniform_real_distribution<double> U(m.layout.joints[i].min, m.layout.joints[i].max);
        q[i] = U(rng);
    }
    return q;
}

// Brute-force hull: a pair (a, b) is a hull edge when every other point lies
// on its left. Returns the hull vertices (unordered).
std::vector<Vec2> brute_force_hull(const std::vector<Vec2>& pts)
{
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        for (std::size_t j = 0; j < pts.size(); ++j)
        {
            if (i == j || (pts[i] - pts[j]).norm() < 1e-12)
                continue;
            bool edge = true;
            for (const auto& p : pts)
            {
                const Vec2 e = pts[j] - pts[i];
                const double c = e.x() * (p.y() - pts[i].y()) - e.y() * (p.x() - pts[i].x());
                if (c < -1e-12)
                {
                    edge = false;
                    break;
                }
            }
            if (edge)
                out.push_back(pts[i]);
        }
    }
    return out;
}

} // namespace

TEST_CASE("joint layout has 54 DoF with the expected group breakdown")
{
    const auto m = build_icub3_model();
    CHECK(m.dofs() == 54);
    const std::vector<std::pair<JointGroup, std::size_t>> expected = {
        {JointGroup::Head, 4},     {JointGroup::Neck, 3},  {JointGroup::LeftArm, 7},
        {JointGroup::RightArm, 7}, {JointGroup::LeftHand, 9}, {JointGroup::RightHand, 9},
        {JointGroup::Torso, 3},    {JointGroup::LeftLeg, 6}, {JointGroup::RightLeg, 6},
    };
    std::size_t total = 0;
    for (auto [g, n] : expected)
    {
        CHECK(group_size(g) == n);
        std::size_t count = 0;
        for (const auto& j : m.layout.joints)
            count += j.group == g;
        CHECK(count == n);
        total += n;
    }
    CHECK(total == 54);
    for (const auto& j : m.layout.joints)
        CHECK(j.min < j.max);
}

TEST_CASE("joint index mapping is a bijection")
{
    for (std::size_t i = 0; i < kDofs; ++i)
    {
        const auto [g, local] = JointLayout::to_local(i);
        CHECK(JointLayout::to_global(g, local) == i);
    }
    CHECK_THROWS_AS(JointLayout::to_local(54), ModelError);
    CHECK_THROWS_AS(JointLayout::to_global(JointGroup::Neck, 3), ModelError);
}

TEST_CASE("mass model")
{
    const auto m = build_icub3_model();
    CHECK(std::abs(m.mass.legs + m.mass.arms + m.mass.torso_and_head - 1.0) <= 1e-12);
    CHECK(m.mass.legs_mass() == doctest::Approx(23.4));
    CHECK(m.tree.total_mass() == doctest::Approx(52.0));
}

TEST_CASE("sensor layout")
{
    const auto m = build_icub3_model();
    REQUIRE(m.sensors.ft_sensors.size() == 6);
    int left = 0, right = 0;
    for (auto s : m.sensors.ft_sensors)
    {
        left += s == FtSite::LeftFootFront || s == FtSite::LeftFootRear;
        right += s == FtSite::RightFootFront || s == FtSite::RightFootRear;
    }
    CHECK(left == 2);
    CHECK(right == 2);
    CHECK(m.sensors.cameras[0].width == 1024);
    CHECK(m.sensors.cameras[0].height == 768);
    CHECK(m.sensors.cameras[0].fps == 15.0);
    CHECK(m.geometry.foot_length == 0.25);
    CHECK(m.geometry.foot_width == 0.10);
}

TEST_CASE("joint torque limits")
{
    const auto m = build_icub3_model();
    CHECK(m.joint_torque_limit("l_knee") == doctest::Approx(43.0));
    CHECK(m.joint_torque_limit("r_shoulder_pitch") == doctest::Approx(18.0));
    CHECK(m.joint_stall_torque("l_knee") == doctest::Approx(48.0));
    const double eyelid = m.joint_torque_limit("eyelids");
    CHECK(std::isfinite(eyelid));
    CHECK(eyelid > 0.0);
    CHECK_THROWS_AS(m.joint_torque_limit("tail"), ModelError);
}

TEST_CASE("zero posture chain lengths")
{
    const auto m = build_icub3_model();
    const JointVector q;
    for (auto c : {Chain::LeftArm, Chain::RightArm})
    {
        const auto poses = m.forward_kinematics(c, q);
        const Vec3 tip = poses.back().translation();
        CHECK(tip.x() == doctest::Approx(0.0));
        CHECK(tip.y() == doctest::Approx(0.0));
        CHECK(tip.z() == doctest::Approx(-0.56));
    }
    for (auto c : {Chain::LeftLeg, Chain::RightLeg})
    {
        const auto poses = m.forward_kinematics(c, q);
        CHECK(poses.back().translation().norm() == doctest::Approx(0.63));
    }
    const auto s = m.tree.forward(Pose::Identity(), q);
    const double top = s.links[static_cast<std::size_t>(m.tree.link_index("head_top"))].translation().z();
    const double sole = s.links[static_cast<std::size_t>(m.tree.link_index("l_sole"))].translation().z();
    CHECK(top - sole == doctest::Approx(1.25));
}

TEST_CASE("single joint rotation and its inverse return the identity tip pose")
{
    const auto m = build_icub3_model();
    JointVector q;
    const std::size_t elbow = m.layout.index_of("l_elbow");
    q[elbow] = 0.7;
    const auto bent = m.forward_kinematics(Chain::LeftArm, q).back();
    // Rotating back by -0.7 in the joint frame.
    const auto link = m.tree.links()[static_cast<std::size_t>(m.tree.link_index("l_elbow_link"))];
    const auto state = m.tree.forward(Pose::Identity(), q);
    const Pose elbow_frame = state.links[static_cast<std::size_t>(m.tree.link_index("l_elbow_link"))];
    const Pose undo = elbow_frame * Pose(Eigen::AngleAxisd(-0.7, link.axis)) * elbow_frame.inverse();
    const auto shoulder = state.links[static_cast<std::size_t>(m.tree.link_index("l_shoulder_pitch_link"))];
    const Pose restored = shoulder.inverse() * undo * shoulder * bent;
    const auto zero = m.forward_kinematics(Chain::LeftArm, JointVector{}).back();
    CHECK((restored.matrix() - zero.matrix()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("forward kinematics rejects out of limit postures")
{
    const auto m = build_icub3_model();
    JointVector q;
    q[m.layout.index_of("l_elbow")] = -0.5;
    CHECK_THROWS_AS(m.forward_kinematics(Chain::LeftArm, q), ModelError);
}

TEST_CASE("chain tips are length bounded for random postures")
{
    const auto m = build_icub3_model();
    std::mt19937_64 rng(42);
    for (int i = 0; i < 1000; ++i)
    {
        const JointVector q = random_posture(m, rng);
        CHECK(m.forward_kinematics(Chain::LeftArm, q).back().translation().norm() <= 0.56 + 1e-12);
        CHECK(m.forward_kinematics(Chain::RightLeg, q).back().translation().norm() <= 0.63 + 1e-12);
        for (const auto& pose : m.forward_kinematics(Chain::NeckHead, q))
            CHECK((pose.linear().transpose() * pose.linear() - Mat3::Identity()).norm() <= 1e-12);
    }
}

TEST_CASE("analytic Jacobians agree with finite differences")
{
    const auto m = build_icub3_model();
    std::mt19937_64 rng(3);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial)
    {
        JointVector q = random_posture(m, rng);
        const Pose base = make_pose(Vec3(0.1, -0.2, 0.6), rot_z(0.3) * rot_y(0.1));
        const auto s = m.tree.forward(base, q);
        const int tip = m.tree.link_index(trial % 2 ? "l_fingertip" : "r_sole");
        const Vec3 p = s.links[static_cast<std::size_t>(tip)].translation();
        const MatX J = m.tree.frame_jacobian(s, tip, p);
        const MatX Jc = m.tree.com_jacobian(s);
        for (std::size_t j = 0; j < kDofs; ++j)
        {
            JointVector qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            const auto sp = m.tree.forward(base, qp);
            const auto sm = m.tree.forward(base, qm);
            const Vec3 dp = (sp.links[static_cast<std::size_t>(tip)].translation() -
                             sm.links[static_cast<std::size_t>(tip)].translation()) /
                            (2 * h);
            const Vec3 dw = log_so3(sp.links[static_cast<std::size_t>(tip)].linear() *
                                    sm.links[static_cast<std::size_t>(tip)].linear().transpose()) /
                            (2 * h);
            const Vec3 dc = (m.tree.com(sp) - m.tree.com(sm)) / (2 * h);
            const auto col = static_cast<Eigen::Index>(6 + j);
            CHECK((J.block<3, 1>(0, col) - dp).norm() <= 1e-4);
            CHECK((J.block<3, 1>(3, col) - dw).norm() <= 1e-4);
            CHECK((Jc.col(col) - dc).norm() <= 1e-4);
        }
        // Base columns.
        for (int k = 0; k < 6; ++k)
        {
            Vec3 delta = Vec3::Zero();
            delta(k % 3) = h;
            Pose bp = base, bm = base;
            if (k < 3)
            {
                bp.translation() += delta;
                bm.translation() -= delta;
            }
            else
            {
                bp.linear() = exp_so3(delta) * base.linear();
                bm.linear() = exp_so3(-delta) * base.linear();
            }
            const auto sp = m.tree.forward(bp, q);
            const auto sm = m.tree.forward(bm, q);
            const Vec3 dp = (sp.links[static_cast<std::size_t>(tip)].translation() -
                             sm.links[static_cast<std::size_t>(tip)].translation()) /
                            (2 * h);
            CHECK((J.block<3, 1>(0, k) - dp).norm() <= 1e-4);
        }
    }
}

TEST_CASE("support polygons")
{
    const auto m = build_icub3_model();
    const Pose2 left{0.0, 0.1, 0.0};
    const Pose2 right{0.0, -0.1, 0.0};

    SUBCASE("single foot")
    {
        const auto poly = support_polygon(m.geometry, Stance::Left, left, right);
        CHECK(poly.size() == 4);
        CHECK(polygon_area(poly) == doctest::Approx(0.25 * 0.10));
        double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
        for (const auto& v : poly)
        {
            xmin = std::min(xmin, v.x());
            xmax = std::max(xmax, v.x());
            ymin = std::min(ymin, v.y());
            ymax = std::max(ymax, v.y());
        }
        CHECK(xmax - xmin == doctest::Approx(0.25));
        CHECK(ymax - ymin == doctest::Approx(0.10));
    }
    SUBCASE("double support matches a brute-force hull")
    {
        const auto poly = support_polygon(m.geometry, Stance::Double, left, right);
        auto pts = foot_section_corners(m.geometry, left);
        const auto r = foot_section_corners(m.geometry, right);
        pts.insert(pts.end(), r.begin(), r.end());
        const auto oracle = brute_force_hull(pts);
        double ymin = 1e9, ymax = -1e9;
        for (const auto& v : oracle)
        {
            ymin = std::min(ymin, v.y());
            ymax = std::max(ymax, v.y());
        }
        CHECK(ymax - ymin == doctest::Approx(0.30));
        CHECK(poly.size() == 4);
        for (const auto& v : poly)
        {
            bool found = false;
            for (const auto& o : oracle)
                found = found || (o - v).norm() < 1e-12;
            CHECK(found);
        }
    }
    SUBCASE("no contact")
    {
        CHECK_THROWS_AS(support_polygon(m.geometry, Stance::None, left, right), ModelError);
    }
    SUBCASE("margin and clamping")
    {
        const auto poly = support_polygon(m.geometry, Stance::Left, left, right);
        CHECK(polygon_margin(poly, Vec2(0.0, 0.1)) == doctest::Approx(0.05));
        CHECK(polygon_margin(poly, Vec2(0.0, 0.2)) == doctest::Approx(-0.05));
        const Vec2 c = clamp_to_polygon(poly, Vec2(0.3, 0.1), 0.01);
        CHECK(c.x() == doctest::Approx(0.115));
        CHECK(polygon_margin(poly, c) == doctest::Approx(0.01));
    }
}

TEST_CASE("model text export carries the declared constants")
{
    const auto m = build_icub3_model();
    const auto j = nlohmann::json::parse(m.to_text());
    CHECK(j["dofs"] == 54);
    CHECK(j["joint_layout"]["joints"].size() == 54);
    CHECK(j["mass_model"]["total"] == 52.0);
    CHECK(j["sensor_layout"]["ft_sensors"].size() == 6);
    for (std::size_t i = 0; i < kDofs; ++i)
    {
        CHECK(j["joint_layout"]["joints"][i]["name"] == m.layout.joints[i].name);
        CHECK(j["joint_layout"]["joints"][i]["min"].get<double>() == m.layout.joints[i].min);
    }
}

TEST_CASE("shipped model file matches the built model")
{
    std::ifstream in(AVATAR_CONFIG_DIR "/icub3.model");
    REQUIRE(in);
    const auto shipped = nlohmann::json::parse(in);
    CHECK(shipped == nlohmann::json::parse(build_icub3_model().to_text()));
}

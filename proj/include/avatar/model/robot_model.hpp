#pragma once

#include <avatar/common/error.hpp>
#include <avatar/common/geometry.hpp>

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avatar::model {

enum class ModelErrc
{
    UnknownJoint,
    LimitViolation,
    NoContact,
    BadVector,
    ParseError,
};

constexpr std::string_view to_string(ModelErrc c)
{
    switch (c)
    {
    case ModelErrc::UnknownJoint: return "UnknownJoint";
    case ModelErrc::LimitViolation: return "LimitViolation";
    case ModelErrc::NoContact: return "NoContact";
    case ModelErrc::BadVector: return "BadVector";
    case ModelErrc::ParseError: return "ParseError";
    }
    return "ModelError";
}

using ModelError = Error<ModelErrc>;

inline constexpr std::size_t kDofs = 54;

enum class JointGroup
{
    Head,
    Neck,
    LeftArm,
    RightArm,
    LeftHand,
    RightHand,
    Torso,
    LeftLeg,
    RightLeg,
};

inline constexpr std::array<JointGroup, 9> kGroupOrder = {
    JointGroup::Head,     JointGroup::Neck,  JointGroup::LeftArm, JointGroup::RightArm, JointGroup::LeftHand,
    JointGroup::RightHand, JointGroup::Torso, JointGroup::LeftLeg, JointGroup::RightLeg,
};

std::string_view group_name(JointGroup g);
std::size_t group_size(JointGroup g);
/// Index of the first joint of the group inside a JointVector.
std::size_t group_offset(JointGroup g);

enum class MotorClass
{
    DC,
    BrushlessSmall,
    BrushlessLarge,
};

std::string_view motor_class_name(MotorClass m);

struct MotorSpec
{
    MotorClass kind{MotorClass::DC};
    double rated_power{0.0};  // W
    double rated_torque{0.0}; // N m, motor side
    double stall_torque{0.0}; // N m, motor side
    double gear_ratio{100.0};
};

const MotorSpec& motor_spec(MotorClass m);

struct JointInfo
{
    std::string name;
    JointGroup group{JointGroup::Head};
    std::size_t local_index{0};
    double min{0.0};
    double max{0.0};
    double max_velocity{0.0}; // rad/s
    MotorClass motor{MotorClass::DC};
};

/// 54 ordered joint values in radians. Ordering is the concatenation of the
/// groups in kGroupOrder.
class JointVector
{
public:
    JointVector() { m_values.setZero(); }
    explicit JointVector(const Eigen::Matrix<double, kDofs, 1>& v)
        : m_values(v)
    {
    }

    static JointVector from(const std::vector<double>& v);

    double& operator[](std::size_t i) { return m_values[static_cast<Eigen::Index>(i)]; }
    double operator[](std::size_t i) const { return m_values[static_cast<Eigen::Index>(i)]; }
    static constexpr std::size_t size() { return kDofs; }

    Eigen::Matrix<double, kDofs, 1>& values() { return m_values; }
    const Eigen::Matrix<double, kDofs, 1>& values() const { return m_values; }

    std::vector<double> to_std() const { return {m_values.data(), m_values.data() + kDofs}; }

    bool operator==(const JointVector& o) const { return m_values == o.m_values; }

private:
    Eigen::Matrix<double, kDofs, 1> m_values;
};

struct JointLayout
{
    std::vector<JointInfo> joints;

    std::size_t index_of(std::string_view name) const;
    std::optional<std::size_t> find(std::string_view name) const;
    const JointInfo& at(std::string_view name) const { return joints[index_of(name)]; }
    /// Global JointVector index of (group, local index).
    static std::size_t to_global(JointGroup g, std::size_t local);
    static std::pair<JointGroup, std::size_t> to_local(std::size_t global);

    bool within_limits(const JointVector& q, double tol = 1e-9) const;
    /// Clamps into limits; returns true if any value was changed.
    bool clamp(JointVector& q) const;
    /// Limit midpoint of every joint.
    JointVector center() const;
};

struct Geometry
{
    double height{1.25};
    double width_arms_down{0.43};
    double leg_length{0.63};
    double arm_length{0.56}; // shoulder to fingertip
    double foot_length{0.25};
    double foot_width{0.10};
    /// Gap between the rear and front sole sections along the foot axis.
    double foot_section_gap{0.01};
    double neck_extension{0.02};

    // Segment split of the stated lengths used by the kinematic tree.
    double upper_arm{0.22};
    double forearm{0.20};
    double hand{0.14};
    double thigh{0.30};
    double shank{0.27};
    double ankle_height{0.06};
    double hip_half_width{0.10};
    double shoulder_half_width{0.175};
    double pelvis_to_chest{0.10};
    double chest_to_shoulder{0.25};
    double chest_to_neck{0.30};
    double neck_to_top{0.22};

    /// Length of one sole section.
    double foot_section_length() const { return 0.5 * (foot_length - foot_section_gap); }
};

struct MassModel
{
    double total{52.0};
    double legs{0.45};
    double arms{0.20};
    double torso_and_head{0.35};

    double legs_mass() const { return legs * total; }
    double arms_mass() const { return arms * total; }
    double torso_and_head_mass() const { return torso_and_head * total; }
};

enum class FtSite
{
    LeftShoulder,
    RightShoulder,
    LeftFootFront,
    LeftFootRear,
    RightFootFront,
    RightFootRear,
};

std::string_view ft_site_name(FtSite s);

enum class SkinPatch
{
    LeftUpperArm,
    RightUpperArm,
    LeftHand,
    RightHand,
};

std::string_view skin_patch_name(SkinPatch p);
std::optional<SkinPatch> skin_patch_from_name(std::string_view name);

struct TaxelGrid
{
    SkinPatch patch{SkinPatch::LeftUpperArm};
    int rows{0};
    int cols{0};
    int count() const { return rows * cols; }
};

struct CameraSpec
{
    int width{1024};
    int height{768};
    double fps{15.0};
};

struct SensorLayout
{
    std::vector<FtSite> ft_sensors;
    std::vector<TaxelGrid> skin;
    std::array<CameraSpec, 2> cameras{};
    /// Both eyelids are driven by one actuator.
    std::string eyelid_joint{"eyelids"};
    int face_led_rows{8};
    int face_led_cols{16};
};

enum class Side
{
    Left,
    Right,
};

enum class Chain
{
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
    NeckHead,
};

std::string_view chain_name(Chain c);

/// One rigid body of the kinematic tree. A link is attached to its parent by
/// a revolute joint (joint >= 0) or rigidly (joint < 0).
struct Link
{
    std::string name;
    int parent{-1};
    int joint{-1}; // global JointVector index
    Vec3 offset{Vec3::Zero()};
    Vec3 axis{Vec3::UnitZ()};
    double mass{0.0};
    Vec3 com{Vec3::Zero()}; // local frame
};

/// World transforms of every link for one configuration.
struct TreeState
{
    std::vector<Pose> links;
};

class RobotModel;

/// Kinematic tree covering base, torso, neck/head, arms and legs. Eye, eyelid
/// and finger joints live in the JointVector but carry no geometry.
class KinematicTree
{
public:
    KinematicTree() = default;
    KinematicTree(const Geometry& geo, const MassModel& mass);

    const std::vector<Link>& links() const { return m_links; }
    int link_index(std::string_view name) const;

    TreeState forward(const Pose& base, const JointVector& q) const;

    /// 6 x (6 + 54) Jacobian of a point rigidly attached to `link`.
    /// Rows: linear velocity, angular velocity. Columns: base linear and
    /// angular velocity (world frame), then joint rates.
    MatX frame_jacobian(const TreeState& state, int link, const Vec3& point_world) const;

    Vec3 com(const TreeState& state) const;
    /// 3 x (6 + 54) centre of mass Jacobian.
    MatX com_jacobian(const TreeState& state) const;
    double total_mass() const;

    /// Chain joints (global indices) ordered root to tip.
    std::vector<std::size_t> chain_joints(Chain c) const;
    int chain_root_link(Chain c) const;
    std::vector<int> chain_links(Chain c) const;

private:
    int add(Link l);

    std::vector<Link> m_links;
};

struct RobotModel
{
    std::string name{"iCub3"};
    JointLayout layout;
    Geometry geometry;
    MassModel mass;
    SensorLayout sensors;
    KinematicTree tree;

    std::size_t dofs() const { return layout.joints.size(); }

    /// Rated and stall joint torques (motor values times gear ratio).
    double joint_torque_limit(std::string_view joint) const;
    double joint_stall_torque(std::string_view joint) const;
    bool torque_capable(std::size_t joint) const;

    /// Link poses of the chain, expressed in the chain root frame (shoulder,
    /// hip or neck base), for the given posture. The last entry is the tip.
    std::vector<Pose> forward_kinematics(Chain chain, const JointVector& q) const;

    /// Serialises to the human readable model file format.
    std::string to_text() const;
};

RobotModel build_icub3_model();

/// Foot sole frame on the ground: position and yaw.
struct FootPlacement
{
    Pose2 pose;
};

enum class Stance
{
    Left,
    Right,
    Double,
    None,
};

using Polygon = std::vector<Vec2>;

/// Corners of the two sole sections of a foot placed at `foot`.
std::vector<Vec2> foot_section_corners(const Geometry& geo, const Pose2& foot);
std::array<Vec2, 2> foot_section_centers(const Geometry& geo, const Pose2& foot);

/// Convex hull of the contacting sole sections (counter-clockwise).
Polygon support_polygon(const Geometry& geo, Stance stance, const Pose2& left, const Pose2& right);

/// Andrew monotone-chain convex hull, counter-clockwise, no repeated points.
Polygon convex_hull(std::vector<Vec2> points);
/// Signed distance from p to the polygon boundary: positive inside.
double polygon_margin(const Polygon& poly, const Vec2& p);
double polygon_area(const Polygon& poly);
/// Closest point of a convex polygon shrunk by `inset` to p (p itself if inside).
Vec2 clamp_to_polygon(const Polygon& poly, const Vec2& p, double inset);

} // namespace avatar::model

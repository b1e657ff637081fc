#include <avatar/model/robot_model.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace avatar::model {

namespace {

struct GroupRow
{
    JointGroup group;
    const char* name;
    std::size_t size;
};

constexpr std::array<GroupRow, 9> kGroups = {{
    {JointGroup::Head, "head", 4},
    {JointGroup::Neck, "neck", 3},
    {JointGroup::LeftArm, "left_arm", 7},
    {JointGroup::RightArm, "right_arm", 7},
    {JointGroup::LeftHand, "left_hand", 9},
    {JointGroup::RightHand, "right_hand", 9},
    {JointGroup::Torso, "torso", 3},
    {JointGroup::LeftLeg, "left_leg", 6},
    {JointGroup::RightLeg, "right_leg", 6},
}};

struct JointRow
{
    const char* name;
    double min;
    double max;
    double max_velocity;
    MotorClass motor;
};

// Joint tables, one per group kind. Arm, hand and leg rows are shared by both
// sides; names get the side prefix.
constexpr std::array<JointRow, 4> kHead = {{
    {"eyes_tilt", -0.6, 0.6, 3.0, MotorClass::DC},
    {"eyes_version", -0.9, 0.9, 3.0, MotorClass::DC},
    {"eyes_vergence", 0.0, 1.0, 3.0, MotorClass::DC},
    {"eyelids", 0.0, 1.2, 3.0, MotorClass::DC},
}};

constexpr std::array<JointRow, 3> kNeck = {{
    {"neck_pitch", -0.6, 0.5, 3.0, MotorClass::DC},
    {"neck_roll", -0.35, 0.35, 3.0, MotorClass::DC},
    {"neck_yaw", -0.9, 0.9, 3.0, MotorClass::DC},
}};

constexpr std::array<JointRow, 7> kArm = {{
    {"shoulder_pitch", -2.8, 0.6, 4.0, MotorClass::BrushlessSmall},
    {"shoulder_roll", -0.1, 1.5, 4.0, MotorClass::BrushlessSmall},
    {"shoulder_yaw", -1.0, 1.4, 4.0, MotorClass::BrushlessSmall},
    {"elbow", 0.0, 2.0, 4.0, MotorClass::BrushlessSmall},
    {"wrist_prosup", -1.0, 1.0, 4.0, MotorClass::DC},
    {"wrist_pitch", -0.8, 0.8, 4.0, MotorClass::DC},
    {"wrist_yaw", -0.4, 0.4, 4.0, MotorClass::DC},
}};

constexpr std::array<JointRow, 9> kHand = {{
    {"thumb_oppose", 0.0, 1.6, 4.0, MotorClass::DC},
    {"thumb_proximal", 0.0, 1.6, 4.0, MotorClass::DC},
    {"thumb_distal", 0.0, 1.6, 4.0, MotorClass::DC},
    {"index_proximal", 0.0, 1.6, 4.0, MotorClass::DC},
    {"index_distal", 0.0, 1.6, 4.0, MotorClass::DC},
    {"middle_proximal", 0.0, 1.6, 4.0, MotorClass::DC},
    {"middle_distal", 0.0, 1.6, 4.0, MotorClass::DC},
    {"ring_pinkie_proximal", 0.0, 1.6, 4.0, MotorClass::DC},
    {"ring_pinkie_distal", 0.0, 1.6, 4.0, MotorClass::DC},
}};

constexpr std::array<JointRow, 3> kTorso = {{
    {"torso_pitch", -0.3, 0.8, 3.0, MotorClass::BrushlessSmall},
    {"torso_roll", -0.4, 0.4, 3.0, MotorClass::BrushlessSmall},
    {"torso_yaw", -0.9, 0.9, 3.0, MotorClass::BrushlessSmall},
}};

constexpr std::array<JointRow, 6> kLeg = {{
    {"hip_pitch", -1.5, 0.6, 5.0, MotorClass::BrushlessLarge},
    {"hip_roll", -0.4, 0.6, 5.0, MotorClass::BrushlessSmall},
    {"hip_yaw", -0.6, 0.6, 5.0, MotorClass::BrushlessSmall},
    {"knee", 0.0, 2.0, 5.0, MotorClass::BrushlessLarge},
    {"ankle_pitch", -0.8, 0.8, 5.0, MotorClass::BrushlessLarge},
    {"ankle_roll", -0.4, 0.4, 5.0, MotorClass::BrushlessSmall},
}};

template <std::size_t N>
void append(JointLayout& layout, JointGroup g, const std::array<JointRow, N>& rows, std::string_view prefix)
{
    std::size_t local = 0;
    for (const auto& r : rows)
    {
        JointInfo j;
        j.name = std::string(prefix) + r.name;
        j.group = g;
        j.local_index = local++;
        j.min = r.min;
        j.max = r.max;
        j.max_velocity = r.max_velocity;
        j.motor = r.motor;
        layout.joints.push_back(std::move(j));
    }
}

JointLayout build_layout()
{
    JointLayout layout;
    append(layout, JointGroup::Head, kHead, "");
    append(layout, JointGroup::Neck, kNeck, "");
    append(layout, JointGroup::LeftArm, kArm, "l_");
    append(layout, JointGroup::RightArm, kArm, "r_");
    append(layout, JointGroup::LeftHand, kHand, "l_");
    append(layout, JointGroup::RightHand, kHand, "r_");
    append(layout, JointGroup::Torso, kTorso, "");
    append(layout, JointGroup::LeftLeg, kLeg, "l_");
    append(layout, JointGroup::RightLeg, kLeg, "r_");
    return layout;
}

constexpr MotorSpec kDcMotor{MotorClass::DC, 20.0, 0.025, 0.032, 100.0};
constexpr MotorSpec kSmallBrushless{MotorClass::BrushlessSmall, 110.0, 0.18, 0.22, 100.0};
constexpr MotorSpec kLargeBrushless{MotorClass::BrushlessLarge, 179.0, 0.43, 0.48, 100.0};

} // namespace

std::string_view group_name(JointGroup g)
{
    for (const auto& row : kGroups)
        if (row.group == g)
            return row.name;
    return "unknown";
}

std::size_t group_size(JointGroup g)
{
    for (const auto& row : kGroups)
        if (row.group == g)
            return row.size;
    return 0;
}

std::size_t group_offset(JointGroup g)
{
    std::size_t offset = 0;
    for (const auto& row : kGroups)
    {
        if (row.group == g)
            return offset;
        offset += row.size;
    }
    return offset;
}

std::string_view motor_class_name(MotorClass m)
{
    switch (m)
    {
    case MotorClass::DC: return "DC";
    case MotorClass::BrushlessSmall: return "BrushlessSmall";
    case MotorClass::BrushlessLarge: return "BrushlessLarge";
    }
    return "unknown";
}

const MotorSpec& motor_spec(MotorClass m)
{
    switch (m)
    {
    case MotorClass::DC: return kDcMotor;
    case MotorClass::BrushlessSmall: return kSmallBrushless;
    case MotorClass::BrushlessLarge: return kLargeBrushless;
    }
    return kDcMotor;
}

std::string_view ft_site_name(FtSite s)
{
    switch (s)
    {
    case FtSite::LeftShoulder: return "left_shoulder";
    case FtSite::RightShoulder: return "right_shoulder";
    case FtSite::LeftFootFront: return "left_foot_front";
    case FtSite::LeftFootRear: return "left_foot_rear";
    case FtSite::RightFootFront: return "right_foot_front";
    case FtSite::RightFootRear: return "right_foot_rear";
    }
    return "unknown";
}

std::string_view skin_patch_name(SkinPatch p)
{
    switch (p)
    {
    case SkinPatch::LeftUpperArm: return "left_upper_arm";
    case SkinPatch::RightUpperArm: return "right_upper_arm";
    case SkinPatch::LeftHand: return "left_hand";
    case SkinPatch::RightHand: return "right_hand";
    }
    return "unknown";
}

std::optional<SkinPatch> skin_patch_from_name(std::string_view name)
{
    for (auto p : {SkinPatch::LeftUpperArm, SkinPatch::RightUpperArm, SkinPatch::LeftHand, SkinPatch::RightHand})
        if (skin_patch_name(p) == name)
            return p;
    return std::nullopt;
}

std::string_view chain_name(Chain c)
{
    switch (c)
    {
    case Chain::LeftArm: return "left_arm";
    case Chain::RightArm: return "right_arm";
    case Chain::LeftLeg: return "left_leg";
    case Chain::RightLeg: return "right_leg";
    case Chain::NeckHead: return "neck_head";
    }
    return "unknown";
}

JointVector JointVector::from(const std::vector<double>& v)
{
    if (v.size() != kDofs)
        throw ModelError(ModelErrc::BadVector, "expected 54 values, got " + std::to_string(v.size()));
    JointVector q;
    for (std::size_t i = 0; i < kDofs; ++i)
        q[i] = v[i];
    return q;
}

std::size_t JointLayout::index_of(std::string_view name) const
{
    if (auto i = find(name))
        return *i;
    throw ModelError(ModelErrc::UnknownJoint, std::string(name));
}

std::optional<std::size_t> JointLayout::find(std::string_view name) const
{
    for (std::size_t i = 0; i < joints.size(); ++i)
        if (joints[i].name == name)
            return i;
    return std::nullopt;
}

std::size_t JointLayout::to_global(JointGroup g, std::size_t local)
{
    if (local >= group_size(g))
        throw ModelError(ModelErrc::UnknownJoint, std::string(group_name(g)) + "[" + std::to_string(local) + "]");
    return group_offset(g) + local;
}

std::pair<JointGroup, std::size_t> JointLayout::to_local(std::size_t global)
{
    std::size_t offset = 0;
    for (const auto& row : kGroups)
    {
        if (global < offset + row.size)
            return {row.group, global - offset};
        offset += row.size;
    }
    throw ModelError(ModelErrc::UnknownJoint, "index " + std::to_string(global));
}

bool JointLayout::within_limits(const JointVector& q, double tol) const
{
    for (std::size_t i = 0; i < joints.size(); ++i)
    {
        if (!std::isfinite(q[i]) || q[i] < joints[i].min - tol || q[i] > joints[i].max + tol)
            return false;
    }
    return true;
}

bool JointLayout::clamp(JointVector& q) const
{
    bool clamped = false;
    for (std::size_t i = 0; i < joints.size(); ++i)
    {
        const double c = std::clamp(q[i], joints[i].min, joints[i].max);
        if (c != q[i])
        {
            q[i] = c;
            clamped = true;
        }
    }
    return clamped;
}

JointVector JointLayout::center() const
{
    JointVector q;
    for (std::size_t i = 0; i < joints.size(); ++i)
        q[i] = 0.5 * (joints[i].min + joints[i].max);
    return q;
}

// ---------------------------------------------------------------------------
// Kinematic tree
//
// Convention: z up, x forward, y left. At the zero posture every link frame
// is aligned with the base frame, arms hang along the body and legs are
// straight. Right-side roll and yaw axes are mirrored so that equal joint
// values give mirrored postures.

int KinematicTree::add(Link l)
{
    m_links.push_back(std::move(l));
    return static_cast<int>(m_links.size()) - 1;
}

KinematicTree::KinematicTree(const Geometry& geo, const MassModel& mass)
{
    const auto jidx = [](JointGroup g, std::size_t local) { return static_cast<int>(JointLayout::to_global(g, local)); };

    // torso_and_head mass over: base, 3 torso links, 3 neck links.
    const double upper_link_mass = mass.torso_and_head_mass() / 7.0;
    const double arm_link_mass = mass.arms_mass() / 2.0 / 7.0;
    const double leg_link_mass = mass.legs_mass() / 2.0 / 6.0;

    Link base;
    base.name = "root_link";
    base.mass = upper_link_mass;
    base.com = Vec3(0.0, 0.0, 0.05);
    const int root = add(base);

    // Torso: pitch (y), roll (x), yaw (z) at pelvis_to_chest above the root.
    const int torso_pitch = add({"torso_pitch_link", root, jidx(JointGroup::Torso, 0), Vec3(0, 0, geo.pelvis_to_chest),
                                 Vec3::UnitY(), upper_link_mass, Vec3::Zero()});
    const int torso_roll = add({"torso_roll_link", torso_pitch, jidx(JointGroup::Torso, 1), Vec3::Zero(), Vec3::UnitX(),
                                upper_link_mass, Vec3::Zero()});
    const int chest = add({"chest", torso_roll, jidx(JointGroup::Torso, 2), Vec3::Zero(), Vec3::UnitZ(),
                           upper_link_mass, Vec3(0, 0, 0.5 * geo.chest_to_neck)});

    const int neck_pitch = add({"neck_pitch_link", chest, jidx(JointGroup::Neck, 0), Vec3(0, 0, geo.chest_to_neck),
                                Vec3::UnitY(), upper_link_mass, Vec3::Zero()});
    const int neck_roll = add({"neck_roll_link", neck_pitch, jidx(JointGroup::Neck, 1), Vec3::Zero(), Vec3::UnitX(),
                               upper_link_mass, Vec3::Zero()});
    const int head = add({"head", neck_roll, jidx(JointGroup::Neck, 2), Vec3::Zero(), Vec3::UnitZ(), upper_link_mass,
                          Vec3(0, 0, 0.5 * geo.neck_to_top)});
    add({"head_top", head, -1, Vec3(0, 0, geo.neck_to_top), Vec3::UnitZ(), 0.0, Vec3::Zero()});
    add({"camera", head, -1, Vec3(0.06, 0, 0.08), Vec3::UnitZ(), 0.0, Vec3::Zero()});

    for (Side side : {Side::Left, Side::Right})
    {
        const double s = side == Side::Left ? 1.0 : -1.0;
        const std::string p = side == Side::Left ? "l_" : "r_";
        const JointGroup arm = side == Side::Left ? JointGroup::LeftArm : JointGroup::RightArm;

        const int sp = add({p + "shoulder_pitch_link", chest, jidx(arm, 0),
                            Vec3(0, s * geo.shoulder_half_width, geo.chest_to_shoulder), Vec3::UnitY(), arm_link_mass,
                            Vec3::Zero()});
        const int sr = add({p + "shoulder_roll_link", sp, jidx(arm, 1), Vec3::Zero(), s * Vec3::UnitX(), arm_link_mass,
                            Vec3::Zero()});
        const int upper = add({p + "upper_arm", sr, jidx(arm, 2), Vec3::Zero(), s * Vec3::UnitZ(), arm_link_mass,
                               Vec3(0, 0, -0.5 * geo.upper_arm)});
        const int elbow = add({p + "elbow_link", upper, jidx(arm, 3), Vec3(0, 0, -geo.upper_arm), -Vec3::UnitY(),
                               arm_link_mass, Vec3::Zero()});
        const int fore = add({p + "forearm", elbow, jidx(arm, 4), Vec3::Zero(), s * Vec3::UnitZ(), arm_link_mass,
                              Vec3(0, 0, -0.5 * geo.forearm)});
        const int wp = add({p + "wrist_pitch_link", fore, jidx(arm, 5), Vec3(0, 0, -geo.forearm), Vec3::UnitY(),
                            arm_link_mass, Vec3::Zero()});
        const int hand = add({p + "hand", wp, jidx(arm, 6), Vec3::Zero(), s * Vec3::UnitX(), arm_link_mass,
                              Vec3(0, 0, -0.5 * geo.hand)});
        add({p + "fingertip", hand, -1, Vec3(0, 0, -geo.hand), Vec3::UnitZ(), 0.0, Vec3::Zero()});
    }

    for (Side side : {Side::Left, Side::Right})
    {
        const double s = side == Side::Left ? 1.0 : -1.0;
        const std::string p = side == Side::Left ? "l_" : "r_";
        const JointGroup leg = side == Side::Left ? JointGroup::LeftLeg : JointGroup::RightLeg;

        const int hp = add({p + "hip_pitch_link", root, jidx(leg, 0), Vec3(0, s * geo.hip_half_width, 0), Vec3::UnitY(),
                            leg_link_mass, Vec3::Zero()});
        const int hr = add({p + "hip_roll_link", hp, jidx(leg, 1), Vec3::Zero(), s * Vec3::UnitX(), leg_link_mass,
                            Vec3::Zero()});
        const int thigh = add({p + "thigh", hr, jidx(leg, 2), Vec3::Zero(), s * Vec3::UnitZ(), leg_link_mass,
                               Vec3(0, 0, -0.5 * geo.thigh)});
        const int shank = add({p + "shank", thigh, jidx(leg, 3), Vec3(0, 0, -geo.thigh), Vec3::UnitY(), leg_link_mass,
                               Vec3(0, 0, -0.5 * geo.shank)});
        const int ap = add({p + "ankle_pitch_link", shank, jidx(leg, 4), Vec3(0, 0, -geo.shank), Vec3::UnitY(),
                            leg_link_mass, Vec3::Zero()});
        const int foot = add({p + "foot", ap, jidx(leg, 5), Vec3::Zero(), s * Vec3::UnitX(), leg_link_mass,
                              Vec3(0, 0, -0.5 * geo.ankle_height)});
        add({p + "sole", foot, -1, Vec3(0, 0, -geo.ankle_height), Vec3::UnitZ(), 0.0, Vec3::Zero()});
    }
}

int KinematicTree::link_index(std::string_view name) const
{
    for (std::size_t i = 0; i < m_links.size(); ++i)
        if (m_links[i].name == name)
            return static_cast<int>(i);
    throw ModelError(ModelErrc::UnknownJoint, "link " + std::string(name));
}

TreeState KinematicTree::forward(const Pose& base, const JointVector& q) const
{
    TreeState state;
    state.links.resize(m_links.size());
    for (std::size_t i = 0; i < m_links.size(); ++i)
    {
        const Link& l = m_links[i];
        if (l.parent < 0)
        {
            state.links[i] = base;
            continue;
        }
        Pose T = state.links[static_cast<std::size_t>(l.parent)];
        T.translate(l.offset);
        if (l.joint >= 0)
            T.rotate(Eigen::AngleAxisd(q[static_cast<std::size_t>(l.joint)], l.axis));
        state.links[i] = T;
    }
    return state;
}

MatX KinematicTree::frame_jacobian(const TreeState& state, int link, const Vec3& point_world) const
{
    MatX J = MatX::Zero(6, 6 + static_cast<Eigen::Index>(kDofs));
    const Vec3 base_pos = state.links[0].translation();
    J.block<3, 3>(0, 0).setIdentity();
    J.block<3, 3>(0, 3) = -skew(point_world - base_pos);
    J.block<3, 3>(3, 3).setIdentity();

    for (int i = link; i > 0; i = m_links[static_cast<std::size_t>(i)].parent)
    {
        const Link& l = m_links[static_cast<std::size_t>(i)];
        if (l.joint < 0)
            continue;
        const Pose& T = state.links[static_cast<std::size_t>(i)];
        const Vec3 z = T.linear() * l.axis;
        const Eigen::Index col = 6 + l.joint;
        J.block<3, 1>(0, col) = z.cross(point_world - T.translation());
        J.block<3, 1>(3, col) = z;
    }
    return J;
}

Vec3 KinematicTree::com(const TreeState& state) const
{
    Vec3 c = Vec3::Zero();
    double m = 0.0;
    for (std::size_t i = 0; i < m_links.size(); ++i)
    {
        c += m_links[i].mass * (state.links[i] * m_links[i].com);
        m += m_links[i].mass;
    }
    return c / m;
}

MatX KinematicTree::com_jacobian(const TreeState& state) const
{
    MatX J = MatX::Zero(3, 6 + static_cast<Eigen::Index>(kDofs));
    const double M = total_mass();
    for (std::size_t i = 0; i < m_links.size(); ++i)
    {
        if (m_links[i].mass <= 0.0)
            continue;
        const Vec3 p = state.links[i] * m_links[i].com;
        J += (m_links[i].mass / M) * frame_jacobian(state, static_cast<int>(i), p).topRows<3>();
    }
    return J;
}

double KinematicTree::total_mass() const
{
    double m = 0.0;
    for (const auto& l : m_links)
        m += l.mass;
    return m;
}

int KinematicTree::chain_root_link(Chain c) const
{
    switch (c)
    {
    case Chain::LeftArm: return link_index("l_shoulder_pitch_link");
    case Chain::RightArm: return link_index("r_shoulder_pitch_link");
    case Chain::LeftLeg: return link_index("l_hip_pitch_link");
    case Chain::RightLeg: return link_index("r_hip_pitch_link");
    case Chain::NeckHead: return link_index("neck_pitch_link");
    }
    return 0;
}

std::vector<int> KinematicTree::chain_links(Chain c) const
{
    const char* tip = nullptr;
    switch (c)
    {
    case Chain::LeftArm: tip = "l_fingertip"; break;
    case Chain::RightArm: tip = "r_fingertip"; break;
    case Chain::LeftLeg: tip = "l_sole"; break;
    case Chain::RightLeg: tip = "r_sole"; break;
    case Chain::NeckHead: tip = "head_top"; break;
    }
    const int root = chain_root_link(c);
    std::vector<int> out;
    for (int i = link_index(tip); i >= 0; i = m_links[static_cast<std::size_t>(i)].parent)
    {
        out.push_back(i);
        if (i == root)
            break;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> KinematicTree::chain_joints(Chain c) const
{
    std::vector<std::size_t> out;
    for (int i : chain_links(c))
        if (m_links[static_cast<std::size_t>(i)].joint >= 0)
            out.push_back(static_cast<std::size_t>(m_links[static_cast<std::size_t>(i)].joint));
    return out;
}

// ---------------------------------------------------------------------------

double RobotModel::joint_torque_limit(std::string_view joint) const
{
    const auto& spec = motor_spec(layout.at(joint).motor);
    return spec.rated_torque * spec.gear_ratio;
}

double RobotModel::joint_stall_torque(std::string_view joint) const
{
    const auto& spec = motor_spec(layout.at(joint).motor);
    return spec.stall_torque * spec.gear_ratio;
}

bool RobotModel::torque_capable(std::size_t joint) const
{
    return joint < layout.joints.size() && layout.joints[joint].motor != MotorClass::DC;
}

std::vector<Pose> RobotModel::forward_kinematics(Chain chain, const JointVector& q) const
{
    for (std::size_t j : tree.chain_joints(chain))
    {
        const auto& info = layout.joints[j];
        if (!std::isfinite(q[j]) || q[j] < info.min - 1e-9 || q[j] > info.max + 1e-9)
            throw ModelError(ModelErrc::LimitViolation, info.name + " = " + std::to_string(q[j]));
    }
    const TreeState state = tree.forward(Pose::Identity(), q);
    const auto links = tree.chain_links(chain);
    const Pose root_inv = state.links[static_cast<std::size_t>(links.front())].inverse();
    std::vector<Pose> out;
    out.reserve(links.size());
    for (int l : links)
        out.push_back(root_inv * state.links[static_cast<std::size_t>(l)]);
    return out;
}

std::string RobotModel::to_text() const
{
    nlohmann::ordered_json j;
    j["name"] = name;
    j["dofs"] = dofs();
    auto& groups = j["joint_layout"]["groups"];
    groups = nlohmann::ordered_json::array();
    for (JointGroup g : kGroupOrder)
        groups.push_back({{"name", group_name(g)}, {"dofs", group_size(g)}});
    auto& joints = j["joint_layout"]["joints"];
    joints = nlohmann::ordered_json::array();
    for (const auto& info : layout.joints)
    {
        joints.push_back({{"name", info.name},
                          {"group", group_name(info.group)},
                          {"min", info.min},
                          {"max", info.max},
                          {"max_velocity", info.max_velocity},
                          {"motor", motor_class_name(info.motor)}});
    }
    j["geometry"] = {{"height", geometry.height},
                     {"width_arms_down", geometry.width_arms_down},
                     {"leg_length", geometry.leg_length},
                     {"arm_length_shoulder_to_fingertip", geometry.arm_length},
                     {"foot", {{"length", geometry.foot_length},
                               {"width", geometry.foot_width},
                               {"sections", 2},
                               {"section_gap", geometry.foot_section_gap}}},
                     {"neck_extension", geometry.neck_extension}};
    j["mass_model"] = {{"total", mass.total},
                       {"fractions", {{"legs", mass.legs}, {"arms", mass.arms}, {"torso_and_head", mass.torso_and_head}}}};
    auto& motors = j["motor_specs"];
    motors = nlohmann::ordered_json::array();
    for (MotorClass m : {MotorClass::DC, MotorClass::BrushlessSmall, MotorClass::BrushlessLarge})
    {
        const auto& s = motor_spec(m);
        motors.push_back({{"class", motor_class_name(m)},
                          {"rated_power", s.rated_power},
                          {"rated_torque", s.rated_torque},
                          {"stall_torque", s.stall_torque},
                          {"gear_ratio", s.gear_ratio}});
    }
    auto& ft = j["sensor_layout"]["ft_sensors"];
    ft = nlohmann::ordered_json::array();
    for (FtSite s : sensors.ft_sensors)
        ft.push_back(ft_site_name(s));
    auto& skin = j["sensor_layout"]["skin_patches"];
    skin = nlohmann::ordered_json::array();
    for (const auto& g : sensors.skin)
        skin.push_back({{"patch", skin_patch_name(g.patch)}, {"rows", g.rows}, {"cols", g.cols}});
    auto& cams = j["sensor_layout"]["cameras"];
    cams = nlohmann::ordered_json::array();
    for (const auto& c : sensors.cameras)
        cams.push_back({{"width", c.width}, {"height", c.height}, {"fps", c.fps}});
    j["sensor_layout"]["eyelid"] = sensors.eyelid_joint;
    j["sensor_layout"]["face_leds"] = {{"rows", sensors.face_led_rows}, {"cols", sensors.face_led_cols}};
    return j.dump(2) + "\n";
}

RobotModel build_icub3_model()
{
    RobotModel m;
    m.layout = build_layout();
    m.sensors.ft_sensors = {FtSite::LeftShoulder,  FtSite::RightShoulder,  FtSite::LeftFootFront,
                            FtSite::LeftFootRear,  FtSite::RightFootFront, FtSite::RightFootRear};
    m.sensors.skin = {{SkinPatch::LeftUpperArm, 8, 12},
                      {SkinPatch::RightUpperArm, 8, 12},
                      {SkinPatch::LeftHand, 6, 8},
                      {SkinPatch::RightHand, 6, 8}};
    m.tree = KinematicTree(m.geometry, m.mass);
    return m;
}

// ---------------------------------------------------------------------------
// Support polygon

std::vector<Vec2> foot_section_corners(const Geometry& geo, const Pose2& foot)
{
    const double hl = 0.5 * geo.foot_length;
    const double hg = 0.5 * geo.foot_section_gap;
    const double hw = 0.5 * geo.foot_width;
    const Eigen::Rotation2Dd R(foot.yaw);
    const Vec2 c = foot.position();
    std::vector<Vec2> out;
    for (auto [x0, x1] : {std::pair{-hl, -hg}, std::pair{hg, hl}})
        for (double x : {x0, x1})
            for (double y : {-hw, hw})
                out.push_back(c + R * Vec2(x, y));
    return out;
}

std::array<Vec2, 2> foot_section_centers(const Geometry& geo, const Pose2& foot)
{
    const double d = 0.5 * (0.5 * geo.foot_length + 0.5 * geo.foot_section_gap);
    const Eigen::Rotation2Dd R(foot.yaw);
    // {front, rear}
    return {foot.position() + R * Vec2(d, 0.0), foot.position() + R * Vec2(-d, 0.0)};
}

Polygon support_polygon(const Geometry& geo, Stance stance, const Pose2& left, const Pose2& right)
{
    std::vector<Vec2> pts;
    if (stance == Stance::Left || stance == Stance::Double)
    {
        auto c = foot_section_corners(geo, left);
        pts.insert(pts.end(), c.begin(), c.end());
    }
    if (stance == Stance::Right || stance == Stance::Double)
    {
        auto c = foot_section_corners(geo, right);
        pts.insert(pts.end(), c.begin(), c.end());
    }
    if (pts.empty())
        throw ModelError(ModelErrc::NoContact, "both feet airborne");
    return convex_hull(std::move(pts));
}

Polygon convex_hull(std::vector<Vec2> pts)
{
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) { return (a - b).norm() < 1e-12; }),
              pts.end());
    if (pts.size() < 3)
        return pts;
    const auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    std::vector<Vec2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts)
    {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 1e-15)
            --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;)
    {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 1e-15)
            --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

double polygon_margin(const Polygon& poly, const Vec2& p)
{
    // Convex, counter-clockwise: signed distance is the minimum over edges of
    // the distance to the supporting line when inside.
    double inside = std::numeric_limits<double>::infinity();
    bool outside = false;
    double outside_dist = std::numeric_limits<double>::infinity();
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i)
    {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % n];
        const Vec2 e = b - a;
        const double len = e.norm();
        const double signed_line = (e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x())) / len;
        inside = std::min(inside, signed_line);
        if (signed_line < 0.0)
            outside = true;
        const double t = std::clamp((p - a).dot(e) / (len * len), 0.0, 1.0);
        outside_dist = std::min(outside_dist, (a + t * e - p).norm());
    }
    return outside ? -outside_dist : inside;
}

double polygon_area(const Polygon& poly)
{
    double a = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i)
    {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
}

Vec2 clamp_to_polygon(const Polygon& poly, const Vec2& p, double inset)
{
    if (polygon_margin(poly, p) >= inset)
        return p;
    // Offset every edge inward and intersect consecutive offset lines.
    const std::size_t n = poly.size();
    std::vector<Vec2> normals(n), points(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        const Vec2 e = (poly[(i + 1) % n] - poly[i]).normalized();
        normals[i] = Vec2(-e.y(), e.x());
        points[i] = poly[i] + inset * normals[i];
    }
    Polygon shrunk;
    for (std::size_t i = 0; i < n; ++i)
    {
        const std::size_t j = (i + 1) % n;
        // Lines: n_i . x = n_i . points_i
        Eigen::Matrix2d A;
        A << normals[i].transpose(), normals[j].transpose();
        const Vec2 rhs(normals[i].dot(points[i]), normals[j].dot(points[j]));
        if (std::abs(A.determinant()) < 1e-12)
            continue;
        shrunk.push_back(A.inverse() * rhs);
    }
    shrunk = convex_hull(shrunk);
    if (shrunk.size() < 3)
    {
        Vec2 c = Vec2::Zero();
        for (const auto& v : poly)
            c += v;
        return c / static_cast<double>(n);
    }
    Vec2 best = p;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < shrunk.size(); ++i)
    {
        const Vec2& a = shrunk[i];
        const Vec2 e = shrunk[(i + 1) % shrunk.size()] - a;
        const double t = std::clamp((p - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
        const Vec2 c = a + t * e;
        if ((c - p).norm() < best_d)
        {
            best_d = (c - p).norm();
            best = c;
        }
    }
    return best;
}

} // namespace avatar::model

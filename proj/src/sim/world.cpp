#include <avatar/sim/world.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace avatar::sim {

using model::FtSite;
using model::Stance;

World::World(const model::RobotModel& model, WorldParams params)
    : m_model(&model)
    , m_params(params)
    , m_rng(params.seed)
{
    m_head = model.tree.link_index("head");
    m_hands = {model.tree.link_index("l_hand"), model.tree.link_index("r_hand")};
}

void World::reset(const locomotion::RobotState& initial, const Contact& contact, double t0)
{
    std::vector<PlacedObject> objects = std::move(m_state.objects);
    m_state = {};
    m_state.objects = std::move(objects);
    m_state.t = t0;
    m_state.base = initial.base;
    m_state.q = initial.q;
    m_state.contact = contact;
    m_state.com = m_model->tree.com(m_model->tree.forward(m_state.base, m_state.q));
    m_com_history = {m_state.com};
    m_rng.seed(m_params.seed);
    synthesize_wrenches(Vec3::Zero());
}

const WorldState& World::step(const model::JointVector& q_cmd, const Pose& base, const Contact& contact,
                              const std::optional<Vec3>& com_target)
{
    const double a = 1.0 - std::exp(-m_params.dt / m_params.servo_tau);
    m_state.q.values() += a * (q_cmd.values() - m_state.q.values());
    // The base carries the CoM along the locomotion trajectory; the servo lag
    // and limbs moved outside the balance controller only show in the limb
    // configuration.
    const Vec3 com_cmd = com_target.value_or(m_model->tree.com(m_model->tree.forward(base, q_cmd)));
    m_state.base = base;
    m_state.base.translation() += com_cmd - m_model->tree.com(m_model->tree.forward(base, m_state.q));
    m_state.contact = contact;
    m_state.t += m_params.dt;
    ++m_state.tick;

    const bool finite = m_state.q.values().allFinite() && m_state.base.matrix().allFinite();
    if (!finite)
        throw SimError(SimErrc::Divergence, dump());

    m_state.com = m_model->tree.com(m_model->tree.forward(m_state.base, m_state.q));
    m_com_history.push_back(m_state.com);
    if (m_com_history.size() > 3)
        m_com_history.erase(m_com_history.begin());

    Vec3 acc = Vec3::Zero();
    if (m_com_history.size() == 3)
    {
        const double dt2 = m_params.dt * m_params.dt;
        acc = (m_com_history[2] - 2.0 * m_com_history[1] + m_com_history[0]) / dt2;
        m_state.zmp_executed = m_state.com.head<2>() - (m_state.com.z() / m_params.gravity) * acc.head<2>();
    }
    synthesize_wrenches(acc);
    if (!m_state.com.allFinite())
        throw SimError(SimErrc::Divergence, dump());
    return m_state;
}

void World::synthesize_wrenches(const Vec3& acc)
{
    const auto& geo = m_model->geometry;
    const double mass = m_model->tree.total_mass();
    const Contact& c = m_state.contact;
    const auto lc = model::foot_section_centers(geo, c.left);
    const auto rc = model::foot_section_centers(geo, c.right);
    struct Section
    {
        FtSite site;
        Vec2 centre;
        bool loaded;
    };
    const bool left = c.stance == Stance::Left || c.stance == Stance::Double;
    const bool right = c.stance == Stance::Right || c.stance == Stance::Double;
    const std::array<Section, 4> sections{{{FtSite::LeftFootFront, lc[0], left},
                                           {FtSite::LeftFootRear, lc[1], left},
                                           {FtSite::RightFootFront, rc[0], right},
                                           {FtSite::RightFootRear, rc[1], right}}};

    std::vector<SensorWrench> out;
    const double g = m_params.gravity;
    const Vec3 total(mass * acc.x(), mass * acc.y(), mass * (g + acc.z()));

    if (c.stance != Stance::None)
    {
        const Vec2 com_xy = m_state.com.head<2>();
        const Vec2 target = m_state.zmp_executed.value_or(com_xy);
        const auto poly = model::support_polygon(geo, c.stance, c.left, c.right);
        const Vec2 z = model::clamp_to_polygon(poly, target, 0.0);

        std::array<double, 4> w{};
        double wsum = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            if (sections[i].loaded)
            {
                w[i] = 1.0 / ((sections[i].centre - z).norm() + 1e-3);
                wsum += w[i];
            }
        Vec2 mean = Vec2::Zero();
        for (std::size_t i = 0; i < 4; ++i)
        {
            w[i] /= wsum;
            mean += w[i] * sections[i].centre;
        }
        // Shift every section CoP by the same offset so the net CoP is z.
        const Vec2 delta = z - mean;
        std::normal_distribution<double> noise(0.0, m_params.ft_noise);
        for (std::size_t i = 0; i < 4; ++i)
        {
            SensorWrench s;
            s.site = sections[i].site;
            s.wrench.point = Vec3(sections[i].centre.x(), sections[i].centre.y(), 0.0);
            if (sections[i].loaded)
            {
                s.wrench.force = w[i] * total;
                if (m_params.ft_noise > 0.0)
                    s.wrench.force += Vec3(noise(m_rng), noise(m_rng), noise(m_rng));
                const double fz = s.wrench.force.z();
                s.wrench.torque = Vec3(delta.y() * fz, -delta.x() * fz, 0.0);
            }
            out.push_back(s);
        }
    }
    else
    {
        for (const auto& s : sections)
            out.push_back({s.site, {Vec3(s.centre.x(), s.centre.y(), 0.0), Vec3::Zero(), Vec3::Zero()}});
    }

    // Shoulder sensors carry the weight of each arm.
    const auto ts = m_model->tree.forward(m_state.base, m_state.q);
    const double arm = 0.5 * m_model->mass.arms_mass();
    for (auto [site, link] : {std::pair{FtSite::LeftShoulder, "l_shoulder_pitch_link"},
                              std::pair{FtSite::RightShoulder, "r_shoulder_pitch_link"}})
    {
        SensorWrench s;
        s.site = site;
        s.wrench.point = ts.links[static_cast<std::size_t>(m_model->tree.link_index(link))].translation();
        s.wrench.force = Vec3(0.0, 0.0, -arm * g);
        out.push_back(s);
    }
    m_state.wrenches = std::move(out);
}

std::vector<locomotion::ContactWrench> World::foot_wrenches() const
{
    std::vector<locomotion::ContactWrench> out;
    for (const auto& s : m_state.wrenches)
        if (s.site != FtSite::LeftShoulder && s.site != FtSite::RightShoulder)
            out.push_back(s.wrench);
    return out;
}

double World::total_foot_force() const { return locomotion::total_normal_force(foot_wrenches()); }

std::optional<feedback::SkinEvent> World::inject_touch(std::string_view patch, double intensity,
                                                       std::vector<std::uint16_t> taxels) const
{
    const auto p = model::skin_patch_from_name(patch);
    if (!p)
        throw SimError(SimErrc::UnknownPatch, std::string(patch));
    if (!std::isfinite(intensity) || intensity < 0.0 || intensity > 1.0)
        throw SimError(SimErrc::InvalidTouch, "intensity outside [0, 1]");
    if (intensity == 0.0)
        return std::nullopt;
    int count = 0;
    for (const auto& g : m_model->sensors.skin)
        if (g.patch == *p)
            count = g.count();
    if (taxels.empty())
        for (int i = 0; i < std::min(count, 6); ++i)
            taxels.push_back(static_cast<std::uint16_t>(i));
    std::sort(taxels.begin(), taxels.end());
    taxels.erase(std::unique(taxels.begin(), taxels.end()), taxels.end());
    if (taxels.back() >= count)
        throw SimError(SimErrc::InvalidTouch, "taxel index beyond the patch");
    return feedback::SkinEvent{*p, std::move(taxels), intensity, m_state.t};
}

void World::spawn_object(std::uint32_t id, const Vec3& position)
{
    for (auto& o : m_state.objects)
        if (o.id == id)
        {
            o.position = position;
            return;
        }
    m_state.objects.push_back({id, position});
}

feedback::CameraFrame World::render_camera() const
{
    const auto ts = m_model->tree.forward(m_state.base, m_state.q);
    const Pose& head = ts.links[static_cast<std::size_t>(m_head)];
    feedback::CameraFrame f;
    const auto& cam = m_model->sensors.cameras[0];
    f.timestamp = m_state.t;
    f.width = static_cast<std::uint16_t>(cam.width);
    f.height = static_cast<std::uint16_t>(cam.height);
    f.scene.camera.position = head.translation();
    f.scene.camera.orientation = Quat(head.linear());
    const Vec3 forward = head.linear().col(0);
    for (const auto& o : m_state.objects)
    {
        const Vec3 d = o.position - head.translation();
        const double dist = d.norm();
        if (dist > m_params.camera_range || dist < 1e-9)
            continue;
        if (std::acos(std::clamp(forward.dot(d) / dist, -1.0, 1.0)) > 0.5 * m_params.camera_fov)
            continue;
        f.scene.objects.push_back({o.id, {o.position, Quat::Identity()}});
    }
    return f;
}

std::array<double, 5> World::fingertip_forces(model::Side side) const
{
    std::array<double, 5> forces{};
    const auto ts = m_model->tree.forward(m_state.base, m_state.q);
    const Vec3 hand = ts.links[static_cast<std::size_t>(m_hands[side == model::Side::Left ? 0 : 1])].translation();
    const bool near = std::any_of(m_state.objects.begin(), m_state.objects.end(), [&](const PlacedObject& o) {
        return (o.position - hand).norm() < m_params.grasp_radius;
    });
    if (!near)
        return forces;
    const std::size_t off =
        model::group_offset(side == model::Side::Left ? model::JointGroup::LeftHand : model::JointGroup::RightHand);
    // Proximal joint of thumb, index, middle and the ring+pinkie pair.
    const std::array<std::size_t, 5> joint{1, 3, 5, 7, 7};
    for (std::size_t i = 0; i < 5; ++i)
    {
        const auto& info = m_model->layout.joints[off + joint[i]];
        const double flex = (m_state.q[off + joint[i]] - info.min) / (info.max - info.min);
        forces[i] = m_params.finger_stiffness * std::max(0.0, flex - m_params.contact_flexion);
    }
    return forces;
}

std::string World::dump() const
{
    std::ostringstream os;
    os << "t=" << m_state.t << " tick=" << m_state.tick << " base=" << m_state.base.translation().transpose()
       << " com=" << m_state.com.transpose() << " q=[";
    for (std::size_t i = 0; i < model::kDofs; ++i)
        os << (i ? " " : "") << m_state.q[i];
    os << "]";
    return os.str();
}

} // namespace avatar::sim

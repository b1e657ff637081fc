#include <avatar/locomotion/centroidal.hpp>

#include <algorithm>
#include <cmath>

namespace avatar::locomotion {

double LipmParams::omega() const { return std::sqrt(gravity / com_height); }

ZmpReference::ZmpReference(const FootstepPlan& plan, const Vec2& start, const PlannerParams& planner,
                           const model::Geometry& geo, double omega)
    : m_plan(plan)
    , m_geo(geo)
    , m_omega(omega)
{
    auto push = [this](double t, const Vec2& p) {
        if (!m_knots.empty() && t <= m_knots.back().t)
            t = m_knots.back().t + 1e-9;
        m_knots.push_back({t, p, Vec2::Zero()});
    };

    push(plan.t_start, start);
    Vec2 prev = start;
    Pose2 left = plan.start.left;
    Pose2 right = plan.start.right;
    double t0 = plan.t_start;
    for (std::size_t k = 0; k < plan.steps.size(); ++k)
    {
        const Footstep& s = plan.steps[k];
        const Pose2& stance = s.foot == Foot::Left ? right : left;
        const Vec2 target = stance.position();
        push(t0 + planner.ds_hold_start, prev);
        push(s.t_liftoff - planner.ds_hold_end, target);
        prev = target;
        (s.foot == Foot::Left ? left : right) = s.pose;
        t0 = s.t_touchdown;
    }
    const Vec2 final_center = 0.5 * (left.position() + right.position());
    push(t0 + planner.ds_hold_start, prev);
    push(std::max(plan.t_end - planner.ds_hold_end, m_knots.back().t), final_center);

    // Backward recursion: the terminal point is at rest.
    m_knots.back().dcm = m_knots.back().p;
    for (std::size_t i = m_knots.size() - 1; i-- > 0;)
    {
        const Knot& b = m_knots[i + 1];
        Knot& a = m_knots[i];
        const double dt = b.t - a.t;
        const Vec2 v = (b.p - a.p) / dt;
        a.dcm = a.p + v / m_omega + std::exp(-m_omega * dt) * (b.dcm - b.p - v / m_omega);
    }
}

Vec2 ZmpReference::zmp(double t) const
{
    if (t <= m_knots.front().t)
        return m_knots.front().p;
    if (t >= m_knots.back().t)
        return m_knots.back().p;
    auto it = std::upper_bound(m_knots.begin(), m_knots.end(), t, [](double v, const Knot& k) { return v < k.t; });
    const Knot& b = *it;
    const Knot& a = *(it - 1);
    const double s = (t - a.t) / (b.t - a.t);
    return a.p + s * (b.p - a.p);
}

Vec2 ZmpReference::dcm(double t) const
{
    if (t >= m_knots.back().t)
        return m_knots.back().dcm;
    if (t <= m_knots.front().t)
    {
        // Constant ZMP before the first knot.
        const Knot& a = m_knots.front();
        return a.p + std::exp(m_omega * (t - a.t)) * (a.dcm - a.p);
    }
    auto it = std::upper_bound(m_knots.begin(), m_knots.end(), t, [](double v, const Knot& k) { return v < k.t; });
    const Knot& b = *it;
    const Knot& a = *(it - 1);
    const Vec2 v = (b.p - a.p) / (b.t - a.t);
    const Vec2 p = a.p + (t - a.t) * v;
    return p + v / m_omega + std::exp(m_omega * (t - b.t)) * (b.dcm - b.p - v / m_omega);
}

model::Stance ZmpReference::stance(double t) const { return plan_phase(m_plan, t).stance; }

model::Polygon ZmpReference::support(double t) const
{
    const PlanPhase ph = plan_phase(m_plan, t);
    return model::support_polygon(m_geo, ph.stance, ph.left, ph.right);
}

double ZmpReference::max_excursion(double dt) const
{
    double worst = 0.0;
    const double t_end = std::max(m_plan.t_end, m_knots.back().t);
    for (double t = m_plan.t_start; t <= t_end + 1e-12; t += dt)
        worst = std::max(worst, -model::polygon_margin(support(t), zmp(t)));
    return worst;
}

CentroidalState lipm_propagate(const CentroidalState& s, const Vec2& zmp, double omega, double dt)
{
    const double ch = std::cosh(omega * dt);
    const double sh = std::sinh(omega * dt);
    const Vec2 e = s.com - zmp;
    return {zmp + e * ch + s.com_vel * (sh / omega), e * (omega * sh) + s.com_vel * ch};
}

CentroidalGenerator::CentroidalGenerator(LipmParams lipm, PlannerParams planner, model::Geometry geo)
    : m_lipm(lipm)
    , m_planner(planner)
    , m_geo(geo)
{
}

void CentroidalGenerator::reset(const CentroidalState& state) { m_state = state; }

void CentroidalGenerator::set_plan(const FootstepPlan& plan, const Vec2& zmp_start)
{
    ZmpReference ref(plan, zmp_start, m_planner, m_geo, m_lipm.omega());
    const double excursion = ref.max_excursion(m_lipm.dt);
    if (excursion > m_lipm.plan_tolerance)
        throw LocomotionError(LocomotionErrc::InfeasiblePlan,
                              "ZMP reference leaves the support polygon by " + std::to_string(excursion) + " m");
    m_ref = std::move(ref);
}

Vec2 CentroidalGenerator::dcm() const { return m_state.com + m_state.com_vel / m_lipm.omega(); }

CentroidalSample CentroidalGenerator::step(double t, const std::optional<Vec2>& zmp_meas)
{
    if (!m_ref.valid())
        throw LocomotionError(LocomotionErrc::NotInitialized, "no plan installed");
    const double w = m_lipm.omega();
    CentroidalSample s;
    s.zmp_ref = m_ref.zmp(t);
    s.dcm_ref = m_ref.dcm(t);
    s.stance = m_ref.stance(t);
    const Vec2 xi = dcm();
    Vec2 cmd = s.zmp_ref + (1.0 + m_lipm.k_dcm / w) * (xi - s.dcm_ref);
    if (zmp_meas)
        cmd += m_lipm.k_zmp * (s.zmp_ref - *zmp_meas);
    const model::Polygon poly = m_ref.support(t);
    cmd = model::clamp_to_polygon(poly, cmd, m_lipm.zmp_inset);
    s.zmp_cmd = cmd;
    s.zmp_margin = model::polygon_margin(poly, cmd);

    m_state = lipm_propagate(m_state, cmd, w, m_lipm.dt);
    s.t = t + m_lipm.dt;
    s.com = m_state.com;
    s.com_vel = m_state.com_vel;
    s.com_acc = w * w * (m_state.com - cmd);
    s.dcm = dcm();
    return s;
}

CentroidalRefs generate_centroidal(const FootstepPlan& plan, const std::optional<Vec2>& zmp_meas,
                                   const CentroidalState& com_state, const LipmParams& lipm,
                                   const PlannerParams& planner, const model::Geometry& geo, double settle)
{
    CentroidalGenerator gen(lipm, planner, geo);
    gen.reset(com_state);
    gen.set_plan(plan, com_state.com);
    CentroidalRefs refs;
    refs.dt = lipm.dt;
    const auto n = static_cast<long>(std::ceil((plan.t_end + settle - plan.t_start) / lipm.dt - 1e-9));
    refs.samples.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i)
    {
        const double t = plan.t_start + static_cast<double>(i) * lipm.dt;
        refs.samples.push_back(gen.step(t, i == 0 ? zmp_meas : std::nullopt));
    }
    return refs;
}

} // namespace avatar::locomotion

#include <avatar/locomotion/walking.hpp>

#include <algorithm>
#include <cmath>

namespace avatar::locomotion {

namespace {

Vec2 lateral(double yaw) { return {-std::sin(yaw), std::cos(yaw)}; }
Vec2 forward(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }

double side_sign(Foot f) { return f == Foot::Left ? 1.0 : -1.0; }

Pose2 place(const Vec2& path, double yaw, Foot f, double width)
{
    const Vec2 p = path + side_sign(f) * 0.5 * width * lateral(yaw);
    return {p.x(), p.y(), wrap_angle(yaw)};
}

} // namespace

Pose2 stance_midpoint(const Pose2& left, const Pose2& right)
{
    const double yaw = std::atan2(std::sin(left.yaw) + std::sin(right.yaw), std::cos(left.yaw) + std::cos(right.yaw));
    return {0.5 * (left.x + right.x), 0.5 * (left.y + right.y), yaw};
}

double step_double_support(const FootstepPlan& plan, std::size_t k, const PlannerParams& params)
{
    return (k == 0 && plan.from_rest) ? params.initial_double_support : params.double_support;
}

FootstepPlan plan_footsteps(const WalkingCommand& cmd, const StanceState& stance, int horizon, double t_start,
                            bool from_rest, const PlannerParams& params)
{
    if (!std::isfinite(cmd.speed) || cmd.speed < 0.0 || cmd.speed > params.max_speed + 1e-12)
        throw LocomotionError(LocomotionErrc::SpeedOutOfRange, std::to_string(cmd.speed) + " m/s");
    if (!std::isfinite(cmd.heading))
        throw LocomotionError(LocomotionErrc::SpeedOutOfRange, "non-finite heading");
    if (horizon < 1)
        throw LocomotionError(LocomotionErrc::BadHorizon, std::to_string(horizon));

    FootstepPlan plan;
    plan.start = stance;
    plan.t_start = t_start;
    plan.from_rest = from_rest;

    const double length = std::min(cmd.speed * params.step_period, params.max_step_length);
    const double w = params.step_width;
    const double heading = wrap_angle(cmd.heading);

    std::vector<Footstep> steps;
    if (length <= 0.0)
    {
        if (params.step_in_place)
        {
            Foot f = stance.next_swing;
            for (int k = 0; k < horizon; ++k, f = other(f))
            {
                const Pose2& p = stance.foot(f);
                const Pose2& s = stance.foot(other(f));
                steps.push_back({f, p, 0.0, 0.0, s.position() + side_sign(other(f)) * -0.5 * w * lateral(s.yaw)});
            }
        }
        else
        {
            // Bring a trailing foot alongside the leading one.
            const Pose2 mid = stance_midpoint(stance.left, stance.right);
            const double along = (stance.left.position() - stance.right.position()).dot(forward(mid.yaw));
            if (std::abs(along) > params.alignment_tolerance)
            {
                const Foot trailing = along > 0.0 ? Foot::Right : Foot::Left;
                const Pose2& lead = stance.foot(other(trailing));
                const Vec2 path = lead.position() - side_sign(other(trailing)) * 0.5 * w * lateral(lead.yaw);
                steps.push_back({trailing, place(path, lead.yaw, trailing, w), 0.0, 0.0, path});
            }
        }
    }
    else
    {
        const Foot first_stance = other(stance.next_swing);
        const Pose2& s = stance.foot(first_stance);
        Vec2 path = s.position() - side_sign(first_stance) * 0.5 * w * lateral(s.yaw);
        double yaw = s.yaw;
        Foot f = stance.next_swing;
        for (int k = 0; k < horizon; ++k, f = other(f))
        {
            const double turn = std::clamp(wrap_angle(heading - yaw), -params.max_turn_per_step, params.max_turn_per_step);
            yaw = wrap_angle(yaw + turn);
            path += length * forward(yaw);
            steps.push_back({f, place(path, yaw, f, w), 0.0, 0.0, path});
        }
    }

    double t = t_start;
    for (std::size_t k = 0; k < steps.size(); ++k)
    {
        const double ds = (k == 0 && from_rest) ? params.initial_double_support : params.double_support;
        steps[k].t_liftoff = t + ds;
        steps[k].t_touchdown = steps[k].t_liftoff + (params.step_period - params.double_support);
        t = steps[k].t_touchdown;
    }
    plan.steps = std::move(steps);
    plan.t_end = t + (plan.steps.empty() && from_rest ? params.initial_double_support : params.double_support);
    return plan;
}

PlanPhase plan_phase(const FootstepPlan& plan, double t)
{
    PlanPhase ph;
    ph.left = plan.start.left;
    ph.right = plan.start.right;
    for (std::size_t k = 0; k < plan.steps.size(); ++k)
    {
        const Footstep& s = plan.steps[k];
        if (t < s.t_liftoff)
        {
            ph.step = static_cast<int>(k) - 1;
            return ph;
        }
        if (t < s.t_touchdown)
        {
            ph.step = static_cast<int>(k);
            ph.swinging = true;
            ph.swing_foot = s.foot;
            ph.stance = s.foot == Foot::Left ? model::Stance::Right : model::Stance::Left;
            ph.swing_from = s.foot == Foot::Left ? ph.left : ph.right;
            ph.swing_to = s.pose;
            ph.swing_progress = (t - s.t_liftoff) / (s.t_touchdown - s.t_liftoff);
            return ph;
        }
        (s.foot == Foot::Left ? ph.left : ph.right) = s.pose;
    }
    ph.step = static_cast<int>(plan.steps.size()) - 1;
    return ph;
}

} // namespace avatar::locomotion

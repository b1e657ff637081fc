#pragma once

#include <avatar/common/error.hpp>
#include <avatar/common/geometry.hpp>
#include <avatar/model/robot_model.hpp>

#include <optional>
#include <string_view>
#include <vector>

namespace avatar::locomotion {

enum class LocomotionErrc
{
    SpeedOutOfRange,
    BadHorizon,
    NoGroundContact,
    InfeasiblePlan,
    EmptyPlan,
    NotInitialized,
};

constexpr std::string_view to_string(LocomotionErrc c)
{
    switch (c)
    {
    case LocomotionErrc::SpeedOutOfRange: return "SpeedOutOfRange";
    case LocomotionErrc::BadHorizon: return "BadHorizon";
    case LocomotionErrc::NoGroundContact: return "NoGroundContact";
    case LocomotionErrc::InfeasiblePlan: return "InfeasiblePlan";
    case LocomotionErrc::EmptyPlan: return "EmptyPlan";
    case LocomotionErrc::NotInitialized: return "NotInitialized";
    }
    return "LocomotionError";
}

using LocomotionError = Error<LocomotionErrc>;

struct WalkingCommand
{
    /// World-frame walking direction, (-pi, pi].
    double heading{0.0};
    /// m/s, within [0, max_speed].
    double speed{0.0};

    bool operator==(const WalkingCommand&) const = default;
};

enum class Foot
{
    Left,
    Right,
};

constexpr Foot other(Foot f) { return f == Foot::Left ? Foot::Right : Foot::Left; }
constexpr std::string_view foot_name(Foot f) { return f == Foot::Left ? "left" : "right"; }

struct Footstep
{
    Foot foot{Foot::Left};
    Pose2 pose;
    double t_liftoff{0.0};
    double t_touchdown{0.0};
    /// Point on the unicycle path this foothold was placed around.
    Vec2 path_point{Vec2::Zero()};
};

struct PlannerParams
{
    double step_period{1.0};
    double double_support{0.3};
    /// Double support duration of the first step when starting from rest.
    double initial_double_support{0.8};
    /// ZMP reference hold at the start and end of every double support.
    double ds_hold_start{0.05};
    double ds_hold_end{0.1};
    double max_step_length{0.25};
    double step_width{0.20};
    double max_speed{0.25};
    double max_turn_per_step{0.25};
    bool step_in_place{false};
    /// Feet closer than this along the walking direction count as aligned.
    double alignment_tolerance{0.01};
};

struct StanceState
{
    Pose2 left;
    Pose2 right;
    /// Foot that swings first in the next plan.
    Foot next_swing{Foot::Left};

    const Pose2& foot(Foot f) const { return f == Foot::Left ? left : right; }
    Pose2& foot(Foot f) { return f == Foot::Left ? left : right; }
};

struct FootstepPlan
{
    StanceState start;
    double t_start{0.0};
    bool from_rest{true};
    std::vector<Footstep> steps;
    /// Time at which the final double support settles.
    double t_end{0.0};

    bool empty() const { return steps.empty(); }
};

/// Unicycle rollout at the commanded heading and speed. Step length is
/// clamp(speed * step_period, 0, max_step_length); footholds alternate at
/// +-step_width/2 around the unicycle path.
FootstepPlan plan_footsteps(const WalkingCommand& cmd, const StanceState& stance, int horizon, double t_start,
                            bool from_rest, const PlannerParams& params);

/// Where the feet are and which of them carry weight at time t.
struct PlanPhase
{
    model::Stance stance{model::Stance::Double};
    Pose2 left;
    Pose2 right;
    /// Index into plan.steps of the step in progress (or last completed).
    int step{-1};
    bool swinging{false};
    Foot swing_foot{Foot::Left};
    /// Progress of the swing in [0, 1].
    double swing_progress{0.0};
    Pose2 swing_from;
    Pose2 swing_to;
};

PlanPhase plan_phase(const FootstepPlan& plan, double t);

/// Double support duration of step k.
double step_double_support(const FootstepPlan& plan, std::size_t k, const PlannerParams& params);

/// Unicycle midpoint between two feet (average position and yaw).
Pose2 stance_midpoint(const Pose2& left, const Pose2& right);

} // namespace avatar::locomotion

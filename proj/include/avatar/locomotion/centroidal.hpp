#pragma once

#include <avatar/locomotion/walking.hpp>

#include <optional>
#include <vector>

namespace avatar::locomotion {

struct LipmParams
{
    double com_height{0.55};
    double gravity{9.81};
    /// DCM error decay rate, 1/s.
    double k_dcm{2.0};
    /// Gain on the measured ZMP error.
    double k_zmp{0.1};
    /// Commanded ZMP is kept this far inside the support polygon.
    double zmp_inset{0.015};
    /// Tolerance for the planned ZMP leaving the support polygon.
    double plan_tolerance{1e-3};
    double dt{0.01};

    double omega() const;
};

/// Piecewise-linear ZMP reference built from a footstep plan, with its
/// divergent component of motion obtained by backward recursion from the
/// terminal point.
class ZmpReference
{
public:
    struct Knot
    {
        double t{0.0};
        Vec2 p{Vec2::Zero()};
        Vec2 dcm{Vec2::Zero()};
    };

    ZmpReference() = default;
    ZmpReference(const FootstepPlan& plan, const Vec2& start, const PlannerParams& planner, const model::Geometry& geo,
                 double omega);

    Vec2 zmp(double t) const;
    Vec2 dcm(double t) const;
    model::Polygon support(double t) const;
    model::Stance stance(double t) const;
    const FootstepPlan& plan() const { return m_plan; }
    const std::vector<Knot>& knots() const { return m_knots; }
    /// Centre of the final double support.
    Vec2 terminal() const { return m_knots.back().p; }
    bool valid() const { return !m_knots.empty(); }

    /// Largest distance by which the reference leaves the support polygon on
    /// a grid of period dt (0 when it stays inside).
    double max_excursion(double dt) const;

private:
    FootstepPlan m_plan;
    model::Geometry m_geo;
    double m_omega{1.0};
    std::vector<Knot> m_knots;
};

struct CentroidalState
{
    Vec2 com{Vec2::Zero()};
    Vec2 com_vel{Vec2::Zero()};
};

struct CentroidalSample
{
    double t{0.0};
    Vec2 com{Vec2::Zero()};
    Vec2 com_vel{Vec2::Zero()};
    Vec2 com_acc{Vec2::Zero()};
    Vec2 zmp_ref{Vec2::Zero()};
    Vec2 zmp_cmd{Vec2::Zero()};
    Vec2 dcm{Vec2::Zero()};
    Vec2 dcm_ref{Vec2::Zero()};
    model::Stance stance{model::Stance::Double};
    /// Distance of the commanded ZMP from the support polygon edge.
    double zmp_margin{0.0};
};

struct CentroidalRefs
{
    double dt{0.01};
    std::vector<CentroidalSample> samples;
};

/// Linear inverted pendulum with DCM feedback:
///   zmp_cmd = zmp_ref + (1 + k_dcm / omega)(dcm - dcm_ref) + k_zmp (zmp_ref - zmp_meas)
/// clamped into the support polygon, integrated with the exact solution for a
/// zero-order-hold ZMP.
class CentroidalGenerator
{
public:
    CentroidalGenerator(LipmParams lipm, PlannerParams planner, model::Geometry geo);

    void reset(const CentroidalState& state);
    /// Installs a plan; the reference starts at `zmp_start`. Throws
    /// InfeasiblePlan when the reference leaves the support polygon.
    void set_plan(const FootstepPlan& plan, const Vec2& zmp_start);

    /// Advances from t to t + dt.
    CentroidalSample step(double t, const std::optional<Vec2>& zmp_meas);

    const CentroidalState& state() const { return m_state; }
    const ZmpReference& reference() const { return m_ref; }
    const LipmParams& params() const { return m_lipm; }
    Vec2 dcm() const;

private:
    LipmParams m_lipm;
    PlannerParams m_planner;
    model::Geometry m_geo;
    CentroidalState m_state;
    ZmpReference m_ref;
};

/// Exact LIPM propagation over dt for a constant ZMP.
CentroidalState lipm_propagate(const CentroidalState& s, const Vec2& zmp, double omega, double dt);

/// Rolls the generator out over the whole plan (plus `settle` seconds). The
/// measured ZMP, if given, acts on the first sample only.
CentroidalRefs generate_centroidal(const FootstepPlan& plan, const std::optional<Vec2>& zmp_meas,
                                   const CentroidalState& com_state, const LipmParams& lipm,
                                   const PlannerParams& planner, const model::Geometry& geo, double settle = 1.0);

} // namespace avatar::locomotion

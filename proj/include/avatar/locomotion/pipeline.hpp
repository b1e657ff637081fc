#pragma once

#include <avatar/locomotion/centroidal.hpp>
#include <avatar/locomotion/walking.hpp>
#include <avatar/locomotion/whole_body.hpp>
#include <avatar/locomotion/zmp.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace avatar::locomotion {

struct PipelineParams
{
    PlannerParams planner;
    LipmParams lipm;
    WholeBodyParams whole_body;
    int horizon{4};
    double swing_height{0.035};
    double homing_time{2.0};
    double min_normal_force{50.0};
};

/// Posture the controller regularises towards when no operator reference is
/// available: knees bent, arms relaxed.
model::JointVector nominal_posture(const model::RobotModel& model);

struct PipelineMeasurements
{
    std::vector<ContactWrench> wrenches;
};

struct FaultEvent
{
    double t{0.0};
    std::string source;
    std::string what;
};

struct PipelineDiagnostics
{
    double t{0.0};
    Vec2 zmp_ref{Vec2::Zero()};
    Vec2 zmp_cmd{Vec2::Zero()};
    std::optional<Vec2> zmp_meas;
    /// |zmp_ref - zmp_meas|, 0 without a measurement.
    double zmp_error{0.0};
    Vec2 dcm{Vec2::Zero()};
    Vec2 dcm_ref{Vec2::Zero()};
    Vec3 com_ref{Vec3::Zero()};
    double zmp_margin{0.0};
    model::Stance stance{model::Stance::Double};
    QpStatus qp_status{QpStatus::Optimal};
    int qp_iterations{0};
    double high_residual{0.0};
    double torso_residual{0.0};
    double posture_residual{0.0};
    int step{-1};
    bool replanned{false};

    /// One structured text record (a JSON object on one line).
    std::string to_record() const;
};

struct PipelineOutput
{
    RobotState reference;
    PipelineDiagnostics diag;
    std::vector<FaultEvent> faults;
};

/// The three control layers ticked at 100 Hz: footstep planner (event
/// driven), centroidal generator and whole-body QP.
class ControlPipeline
{
public:
    ControlPipeline(const model::RobotModel& model, PipelineParams params = {});

    /// Places the robot with its soles at the given poses and brings the CoM
    /// down to the walking height. Returns the homed reference state.
    RobotState initialize(const Pose2& left, const Pose2& right, double t0 = 0.0);

    /// One control cycle. `cmd` is the latest walking command if a new one
    /// arrived; `posture_ref` the latest operator posture, if any.
    PipelineOutput tick(const std::optional<WalkingCommand>& cmd, const std::optional<model::JointVector>& posture_ref,
                        const PipelineMeasurements& measurements);

    bool initialized() const { return m_initialized; }
    double time() const { return m_t; }
    const RobotState& reference() const { return m_state; }
    const WalkingCommand& active_command() const { return m_active; }
    const WalkingCommand& pending_command() const { return m_pending; }
    const FootstepPlan& plan() const { return m_gen.reference().plan(); }
    const CentroidalGenerator& centroidal() const { return m_gen; }
    const WholeBodyController& whole_body() const { return m_wb; }
    const TaskStack& last_stack() const { return m_last_stack; }
    const PipelineParams& params() const { return m_params; }
    std::uint64_t replans() const { return m_replans; }
    /// Sole targets at time t under the active plan.
    std::pair<Pose, Pose> foot_targets(double t) const;

private:
    void replan(double t_start, bool from_rest, std::vector<FaultEvent>& faults);
    double next_boundary() const;

    const model::RobotModel* m_model;
    PipelineParams m_params;
    WholeBodyController m_wb;
    CentroidalGenerator m_gen;
    model::JointVector m_nominal;

    bool m_initialized{false};
    double m_t{0.0};
    RobotState m_state;
    double m_root_height{0.0};
    WalkingCommand m_active;
    WalkingCommand m_pending;
    CentroidalSample m_last_sample;
    TaskStack m_last_stack;
    std::uint64_t m_replans{0};
};

} // namespace avatar::locomotion

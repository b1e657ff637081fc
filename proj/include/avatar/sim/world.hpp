#pragma once

#include <avatar/common/error.hpp>
#include <avatar/feedback/feedback.hpp>
#include <avatar/locomotion/whole_body.hpp>
#include <avatar/locomotion/zmp.hpp>
#include <avatar/model/robot_model.hpp>

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace avatar::sim {

enum class SimErrc
{
    Divergence,
    UnknownPatch,
    InvalidTouch,
    MalformedScenario,
    MalformedConfig,
    ScenarioAbort,
};

constexpr std::string_view to_string(SimErrc c)
{
    switch (c)
    {
    case SimErrc::Divergence: return "Divergence";
    case SimErrc::UnknownPatch: return "UnknownPatch";
    case SimErrc::InvalidTouch: return "InvalidTouch";
    case SimErrc::MalformedScenario: return "MalformedScenario";
    case SimErrc::MalformedConfig: return "MalformedConfig";
    case SimErrc::ScenarioAbort: return "ScenarioAbort";
    }
    return "SimError";
}

using SimError = Error<SimErrc>;

struct WorldParams
{
    double dt{0.01};
    /// First-order joint servo time constant, s.
    double servo_tau{0.03};
    double gravity{9.81};
    /// Standard deviation of the F/T force noise, N.
    double ft_noise{0.0};
    std::uint64_t seed{0};
    /// Hand to object distance under which the fingers can press on it, m.
    double grasp_radius{0.12};
    /// Fingertip force per unit of flexion beyond contact, N.
    double finger_stiffness{40.0};
    /// Normalised flexion at which fingertips meet a held object.
    double contact_flexion{0.3};
    double camera_fov{1.4};
    double camera_range{6.0};
};

struct Contact
{
    model::Stance stance{model::Stance::Double};
    Pose2 left;
    Pose2 right;
};

struct SensorWrench
{
    model::FtSite site{model::FtSite::LeftFootFront};
    /// World frame; the torque is about `wrench.point`.
    locomotion::ContactWrench wrench;
};

struct PlacedObject
{
    std::uint32_t id{0};
    Vec3 position{Vec3::Zero()};
};

struct WorldState
{
    double t{0.0};
    std::uint64_t tick{0};
    Pose base{Pose::Identity()};
    model::JointVector q;
    Vec3 com{Vec3::Zero()};
    Contact contact;
    /// From the CoM motion (LIPM), once two steps of history exist.
    std::optional<Vec2> zmp_executed;
    std::vector<SensorWrench> wrenches;
    std::vector<PlacedObject> objects;
};

/// Kinematic avatar: joints follow the commanded positions through a
/// first-order servo lag, the base is placed so the CoM follows the
/// locomotion layer, and sensors are synthesised from the resulting motion.
class World
{
public:
    World(const model::RobotModel& model, WorldParams params = {});

    void reset(const locomotion::RobotState& initial, const Contact& contact, double t0 = 0.0);

    /// One tick. The base is shifted so the CoM lands on `com_target`, by
    /// default the CoM of the commanded configuration. Throws Divergence
    /// (with a state dump) on non-finite state.
    const WorldState& step(const model::JointVector& q_cmd, const Pose& base, const Contact& contact,
                           const std::optional<Vec3>& com_target = std::nullopt);

    const WorldState& state() const { return m_state; }
    const WorldParams& params() const { return m_params; }
    const model::RobotModel& model() const { return *m_model; }

    /// The four foot sensors, in the layout used by the locomotion layer.
    std::vector<locomotion::ContactWrench> foot_wrenches() const;
    double total_foot_force() const;

    /// Throws UnknownPatch and InvalidTouch. nullopt at intensity 0. An
    /// empty taxel list touches a default cluster of the patch.
    std::optional<feedback::SkinEvent> inject_touch(std::string_view patch, double intensity,
                                                    std::vector<std::uint16_t> taxels = {}) const;

    void spawn_object(std::uint32_t id, const Vec3& position);
    feedback::CameraFrame render_camera() const;
    std::array<double, 5> fingertip_forces(model::Side side) const;

    /// Human readable state for diagnostics.
    std::string dump() const;

private:
    void synthesize_wrenches(const Vec3& acc);

    const model::RobotModel* m_model;
    WorldParams m_params;
    WorldState m_state;
    std::vector<Vec3> m_com_history;
    std::mt19937_64 m_rng;
    int m_head{0};
    std::array<int, 2> m_hands{};
};

} // namespace avatar::sim

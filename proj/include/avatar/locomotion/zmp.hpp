#pragma once

#include <avatar/common/geometry.hpp>

#include <optional>
#include <vector>

namespace avatar::locomotion {

/// Force/torque reading of one foot sensor, world frame. The torque is taken
/// about `point`.
struct ContactWrench
{
    Vec3 point{Vec3::Zero()};
    Vec3 force{Vec3::Zero()};
    Vec3 torque{Vec3::Zero()};
};

/// Ground-plane centre of pressure of one wrench; nullopt when fz <= 0.
std::optional<Vec2> center_of_pressure(const ContactWrench& w);

/// Normal-force weighted mean of the per-sensor CoPs. Throws NoGroundContact
/// when the total normal force is below `min_normal_force`.
Vec2 measured_zmp(const std::vector<ContactWrench>& wrenches, double min_normal_force = 50.0);

double total_normal_force(const std::vector<ContactWrench>& wrenches);

} // namespace avatar::locomotion

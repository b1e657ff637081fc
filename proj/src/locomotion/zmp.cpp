#include <avatar/locomotion/walking.hpp>
#include <avatar/locomotion/zmp.hpp>

namespace avatar::locomotion {

std::optional<Vec2> center_of_pressure(const ContactWrench& w)
{
    const double fz = w.force.z();
    if (!(fz > 0.0))
        return std::nullopt;
    const Vec3& p = w.point;
    const double x = p.x() - (w.torque.y() + p.z() * w.force.x()) / fz;
    const double y = p.y() + (w.torque.x() - p.z() * w.force.y()) / fz;
    return Vec2(x, y);
}

double total_normal_force(const std::vector<ContactWrench>& wrenches)
{
    double sum = 0.0;
    for (const auto& w : wrenches)
        if (w.force.z() > 0.0)
            sum += w.force.z();
    return sum;
}

Vec2 measured_zmp(const std::vector<ContactWrench>& wrenches, double min_normal_force)
{
    Vec2 acc = Vec2::Zero();
    double fz_sum = 0.0;
    for (const auto& w : wrenches)
    {
        const auto cop = center_of_pressure(w);
        if (!cop)
            continue;
        acc += w.force.z() * *cop;
        fz_sum += w.force.z();
    }
    if (!(fz_sum >= min_normal_force))
        throw LocomotionError(LocomotionErrc::NoGroundContact, "total normal force " + std::to_string(fz_sum) + " N");
    return acc / fz_sum;
}

} // namespace avatar::locomotion

#include <avatar/sim/config.hpp>

#include <fstream>
#include <functional>
#include <set>

namespace avatar::sim {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// One description of the config tree drives both writing and reading.
class Writer
{
public:
    explicit Writer(ordered_json& root)
        : m_stack{&root}
    {
    }

    void section(const char* name, const std::function<void()>& body)
    {
        ordered_json& child = (*m_stack.back())[name] = ordered_json::object();
        m_stack.push_back(&child);
        body();
        m_stack.pop_back();
    }

    template <typename T>
    void operator()(const char* key, T& v)
    {
        (*m_stack.back())[key] = v;
    }

    void carrier(const char* key, bus::Carrier& c) { (*m_stack.back())[key] = bus::carrier_name(c); }
    void mapping(const char* key, feedback::HapticMapping& m) { (*m_stack.back())[key] = m.to_json(); }

private:
    std::vector<ordered_json*> m_stack;
};

class Reader
{
public:
    explicit Reader(const json& root)
        : m_stack{&root}
        , m_path{""}
    {
        check_object(root, "");
    }

    void section(const char* name, const std::function<void()>& body)
    {
        const json& cur = *m_stack.back();
        m_seen.back().insert(name);
        if (!cur.contains(name))
            return;
        const json& child = cur.at(name);
        check_object(child, path(name));
        m_stack.push_back(&child);
        m_path.push_back(path(name));
        m_seen.emplace_back();
        body();
        finish_level();
        m_seen.pop_back();
        m_path.pop_back();
        m_stack.pop_back();
    }

    template <typename T>
    void operator()(const char* key, T& v)
    {
        m_seen.back().insert(key);
        const json& cur = *m_stack.back();
        if (!cur.contains(key))
            return;
        try
        {
            v = cur.at(key).get<T>();
        }
        catch (const json::exception& e)
        {
            throw SimError(SimErrc::MalformedConfig, path(key) + ": " + e.what());
        }
    }

    void carrier(const char* key, bus::Carrier& c)
    {
        std::string name(bus::carrier_name(c));
        (*this)(key, name);
        const auto parsed = bus::carrier_from_name(name);
        if (!parsed)
            throw SimError(SimErrc::MalformedConfig, path(key) + ": unknown carrier " + name);
        c = *parsed;
    }

    void mapping(const char* key, feedback::HapticMapping& m)
    {
        m_seen.back().insert(key);
        const json& cur = *m_stack.back();
        if (!cur.contains(key))
            return;
        try
        {
            m = feedback::HapticMapping::from_json(cur.at(key));
        }
        catch (const feedback::FeedbackError& e)
        {
            throw SimError(SimErrc::MalformedConfig, path(key) + ": " + e.what());
        }
    }

    void finish_level()
    {
        for (const auto& [k, v] : m_stack.back()->items())
            if (!m_seen.back().count(k))
                throw SimError(SimErrc::MalformedConfig, "unknown key " + path(k.c_str()));
    }

private:
    std::string path(const char* key) const { return m_path.back().empty() ? key : m_path.back() + "." + key; }

    static void check_object(const json& j, const std::string& where)
    {
        if (!j.is_object())
            throw SimError(SimErrc::MalformedConfig, (where.empty() ? "config" : where) + " must be an object");
    }

    std::vector<const json*> m_stack;
    std::vector<std::string> m_path;
    std::vector<std::set<std::string>> m_seen{{}};
};

template <typename V>
void profile(V& v, const char* name, bus::LinkProfile& p)
{
    v.section(name, [&] {
        v("one_way_delay_ms", p.one_way_delay_ms);
        v("jitter_ms", p.jitter_ms);
        v("loss", p.loss);
        v("seed", p.seed);
    });
}

template <typename V>
void visit(V& v, SimConfig& c)
{
    v.section("sim", [&] {
        auto& w = c.world;
        v("dt", w.dt);
        v("servo_tau", w.servo_tau);
        v("gravity", w.gravity);
        v("ft_noise", w.ft_noise);
        v("seed", w.seed);
        v("grasp_radius", w.grasp_radius);
        v("finger_stiffness", w.finger_stiffness);
        v("contact_flexion", w.contact_flexion);
        v("camera_fov", w.camera_fov);
        v("camera_range", w.camera_range);
        v("operator_rate", c.operator_rate);
    });
    v.section("links", [&] {
        profile(v, "uplink", c.links.uplink);
        profile(v, "downlink", c.links.downlink);
        v("relay", c.links.relay);
        v("operator_subnet", c.links.operator_subnet);
        v("avatar_subnet", c.links.avatar_subnet);
        v.carrier("command_carrier", c.links.command_carrier);
        v.carrier("reference_carrier", c.links.reference_carrier);
        v.carrier("feedback_carrier", c.links.feedback_carrier);
    });
    v.section("locomotion", [&] {
        auto& l = c.locomotion;
        v("horizon", l.horizon);
        v("swing_height", l.swing_height);
        v("homing_time", l.homing_time);
        v("min_normal_force", l.min_normal_force);
        v.section("planner", [&] {
            auto& p = l.planner;
            v("step_period", p.step_period);
            v("double_support", p.double_support);
            v("initial_double_support", p.initial_double_support);
            v("ds_hold_start", p.ds_hold_start);
            v("ds_hold_end", p.ds_hold_end);
            v("max_step_length", p.max_step_length);
            v("step_width", p.step_width);
            v("max_speed", p.max_speed);
            v("max_turn_per_step", p.max_turn_per_step);
            v("step_in_place", p.step_in_place);
            v("alignment_tolerance", p.alignment_tolerance);
        });
        v.section("lipm", [&] {
            auto& p = l.lipm;
            v("com_height", p.com_height);
            v("gravity", p.gravity);
            v("k_dcm", p.k_dcm);
            v("k_zmp", p.k_zmp);
            v("zmp_inset", p.zmp_inset);
            v("plan_tolerance", p.plan_tolerance);
            v("dt", p.dt);
        });
        v.section("whole_body", [&] {
            auto& p = l.whole_body;
            v("dt", p.dt);
            v("k_com", p.k_com);
            v("k_foot", p.k_foot);
            v("k_root", p.k_root);
            v("k_torso", p.k_torso);
            v("k_posture", p.k_posture);
            v("w_torso", p.w_torso);
            v("w_posture", p.w_posture);
            v("posture_scale_arms", p.posture_scale_arms);
            v("posture_scale_torso", p.posture_scale_torso);
            v("posture_scale_legs", p.posture_scale_legs);
            v("regularization", p.regularization);
            v("base_velocity_bound", p.base_velocity_bound);
        });
    });
    v.section("retargeting", [&] {
        v.section("calibration", [&] {
            v("min_duration", c.calibration.min_duration);
            v("max_deviation", c.calibration.max_deviation);
        });
        v.section("arm_ik", [&] {
            auto& p = c.retargeting.ik;
            v("damping", p.damping);
            v("tolerance", p.tolerance);
            v("max_iterations", p.max_iterations);
            v("null_gain", p.null_gain);
        });
        v.section("treadmill", [&] {
            auto& p = c.retargeting.locomotion;
            v("deadzone", p.deadzone);
            v("max_speed", p.max_speed);
            v("tau", p.tau);
        });
    });
    v.section("feedback", [&] {
        v("haptic_duration_ms", c.feedback.routing.duration_ms);
        v.mapping("haptic_mapping", c.feedback.mapping);
        v("frame_fps", c.feedback.frame_fps);
        v("frame_slack", c.feedback.frame_slack);
        v("render_hz", c.feedback.render_hz);
        v("fingertip_hz", c.feedback.fingertip_hz);
    });
    v.section("monitor", [&] {
        v("probe_interval_s", c.monitor.probe_interval_s);
        v("window_s", c.monitor.window_s);
        v("readout_hz", c.monitor.readout_hz);
    });
    v.section("gateway", [&] {
        v("telemetry_hz", c.gateway.telemetry_hz);
        v("port", c.gateway.port);
    });
}

} // namespace

ordered_json SimConfig::to_json() const
{
    ordered_json root = ordered_json::object();
    Writer w(root);
    SimConfig copy = *this;
    visit(w, copy);
    return root;
}

SimConfig SimConfig::from_json(const json& j)
{
    SimConfig c;
    Reader r(j);
    visit(r, c);
    r.finish_level();
    try
    {
        c.links.uplink.validate();
        c.links.downlink.validate();
    }
    catch (const std::invalid_argument& e)
    {
        throw SimError(SimErrc::MalformedConfig, e.what());
    }
    if (!(c.world.dt > 0.0) || !(c.world.servo_tau > 0.0) || !(c.operator_rate > 0.0) ||
        !(c.gateway.telemetry_hz > 0.0) || !(c.feedback.frame_fps > 0.0) || !(c.feedback.render_hz > 0.0) ||
        !(c.monitor.probe_interval_s > 0.0) || !(c.monitor.window_s > 0.0))
        throw SimError(SimErrc::MalformedConfig, "rates and periods must be positive");
    if (std::abs(c.world.dt - c.locomotion.whole_body.dt) > 1e-12 || std::abs(c.world.dt - c.locomotion.lipm.dt) > 1e-12)
        throw SimError(SimErrc::MalformedConfig, "sim, lipm and whole-body dt must agree");
    if (!c.feedback.mapping.covers_all())
        throw SimError(SimErrc::MalformedConfig, "haptic mapping must cover every skin patch");
    return c;
}

SimConfig SimConfig::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw SimError(SimErrc::MalformedConfig, "cannot open " + path);
    json j;
    try
    {
        j = json::parse(in);
    }
    catch (const json::exception& e)
    {
        throw SimError(SimErrc::MalformedConfig, path + ": " + e.what());
    }
    return from_json(j);
}

} // namespace avatar::sim

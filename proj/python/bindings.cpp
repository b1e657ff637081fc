#include <avatar/feedback/feedback.hpp>
#include <avatar/gateway/protocol.hpp>
#include <avatar/lowlevel/servo.hpp>
#include <avatar/locomotion/qp.hpp>
#include <avatar/sim/stack.hpp>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace avatar;

namespace {

const model::RobotModel& robot()
{
    static const model::RobotModel m = model::build_icub3_model();
    return m;
}

sim::SimConfig config_from(const std::string& json_text)
{
    return json_text.empty() ? sim::SimConfig{} : sim::SimConfig::from_json(nlohmann::json::parse(json_text));
}

/// Owns its configuration so the Python side can pass plain JSON text.
class PyStack
{
public:
    PyStack(const std::string& config_json, std::uint64_t seed)
        : m_stack(robot(), config_from(config_json), seed)
    {
    }

    sim::AvatarStack& get() { return m_stack; }

    void send_walk(double heading, double speed)
    {
        if (!(speed >= 0.0 && speed <= m_stack.config().locomotion.planner.max_speed))
            throw py::value_error("speed outside [0, max_speed]");
        m_stack.send_walk({heading, speed});
    }

    void request_touch(const std::string& patch, double intensity)
    {
        const auto p = model::skin_patch_from_name(patch);
        if (!p)
            throw py::value_error("unknown skin patch " + patch);
        sim::TouchRequest r;
        r.patch = *p;
        r.intensity = intensity;
        m_stack.request_touch(r);
    }

    std::string run_scenario(const std::string& path)
    {
        return m_stack.run_scenario(sim::load_scenario(path)).to_json().dump();
    }

    std::vector<double> base_position() const
    {
        const Vec3 p = m_stack.world().state().base.translation();
        return {p.x(), p.y(), p.z()};
    }

    std::vector<double> haptic_latencies_ms() const
    {
        std::vector<double> out;
        for (const auto& h : m_stack.haptics())
            out.push_back(h.latency_ms());
        return out;
    }

    std::vector<std::string> faults() const
    {
        std::vector<std::string> out;
        for (const auto& f : m_stack.faults())
            out.push_back(f.source + ": " + f.what);
        return out;
    }

    const sim::AvatarStack& stack() const { return m_stack; }

private:
    sim::AvatarStack m_stack;
};

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Simulated humanoid avatar: model, QP solver, min-jerk, and the full telexistence stack";

    py::register_exception<sim::SimError>(m, "SimError");
    py::register_exception<gateway::GatewayError>(m, "GatewayError");

    m.def("model_text", [] { return robot().to_text(); }, "Robot model file contents (JSON).");
    m.def("joint_names", [] {
        std::vector<std::string> out;
        for (const auto& j : robot().layout.joints)
            out.push_back(j.name);
        return out;
    });
    m.def("joint_limits", [] {
        std::vector<std::pair<double, double>> out;
        for (const auto& j : robot().layout.joints)
            out.emplace_back(j.min, j.max);
        return out;
    });
    m.def("pose_preset", [](const std::string& name) {
        try
        {
            return sim::pose_preset(robot(), name).to_std();
        }
        catch (const std::invalid_argument& e)
        {
            throw py::value_error(e.what());
        }
    });

    m.def(
        "min_jerk",
        [](double q0, double qf, double duration, double t0, double t) {
            const auto s = lowlevel::min_jerk_eval({q0, qf, duration, t0}, t);
            return py::make_tuple(s.position, s.velocity, s.acceleration);
        },
        py::arg("q0"), py::arg("qf"), py::arg("duration"), py::arg("t0"), py::arg("t"),
        "(position, velocity, acceleration) of the quintic at time t.");

    m.def(
        "solve_qp",
        [](const MatX& H, const VecX& g, const MatX& A_eq, const VecX& b_eq, const MatX& C, const VecX& d,
           const VecX& lb, const VecX& ub) {
            locomotion::QpProblem qp{H, g, A_eq, b_eq, C, d, lb, ub};
            const auto r = locomotion::solve_qp(qp);
            py::dict out;
            out["status"] = std::string(locomotion::to_string(r.status));
            out["x"] = r.x;
            out["objective"] = r.objective;
            out["iterations"] = r.iterations;
            out["kkt"] = r.ok() ? locomotion::kkt_report(qp, r).max() : -1.0;
            return out;
        },
        py::arg("H"), py::arg("g"), py::arg("A_eq") = MatX(0, 0), py::arg("b_eq") = VecX(0),
        py::arg("C") = MatX(0, 0), py::arg("d") = VecX(0), py::arg("lb") = VecX(0), py::arg("ub") = VecX(0),
        "minimize 1/2 x'Hx + g'x s.t. A_eq x = b_eq, C x <= d, lb <= x <= ub.");

    m.def("finger_brake_forces", [](const std::array<double, 5>& forces) {
        std::array<double, 5> out{};
        const auto fb = feedback::compute_finger_feedback(forces);
        for (std::size_t i = 0; i < 5; ++i)
            out[i] = fb.fingers[i].brake_force;
        return out;
    });

    m.def("default_config", [] { return sim::SimConfig{}.to_json().dump(); }, "Default config as JSON text.");

    py::class_<PyStack>(m, "Stack")
        .def(py::init<const std::string&, std::uint64_t>(), py::arg("config_json") = std::string(),
             py::arg("seed") = 0)
        .def("step", [](PyStack& s) { s.get().step(); })
        .def("run_for", [](PyStack& s, double seconds) { s.get().run_for(seconds); }, py::arg("seconds"))
        .def("send_walk", &PyStack::send_walk, py::arg("heading"), py::arg("speed"))
        .def("request_touch", &PyStack::request_touch, py::arg("patch"), py::arg("intensity"))
        .def("run_scenario", &PyStack::run_scenario, py::arg("path"), "Runs a scenario file; report as JSON text.")
        .def("measure_latency",
             [](PyStack& s, const std::string& topic, int probes, double window_s) {
                 const auto st = s.get().bus().measure_latency(s.get().connection_of(topic), probes, window_s);
                 py::dict out;
                 out["samples"] = st.samples;
                 out["mean_ms"] = st.mean_ms;
                 out["p95_ms"] = st.p95_ms;
                 out["max_ms"] = st.max_ms;
                 return out;
             },
             py::arg("topic") = std::string(sim::topics::kLocomotionCmd), py::arg("probes") = 100,
             py::arg("window_s") = 5.0)
        .def_property_readonly("time", [](const PyStack& s) { return s.stack().time(); })
        .def_property_readonly("ticks", [](const PyStack& s) { return s.stack().ticks(); })
        .def_property_readonly("base_position", &PyStack::base_position)
        .def_property_readonly("joint_positions", [](const PyStack& s) { return s.stack().world().state().q.to_std(); })
        .def_property_readonly("faults", &PyStack::faults)
        .def_property_readonly("haptic_latencies_ms", &PyStack::haptic_latencies_ms)
        .def_property_readonly("frames_delivered", [](const PyStack& s) { return s.stack().frames_delivered(); })
        .def_property_readonly("min_zmp_margin_executed",
                               [](const PyStack& s) { return s.stack().min_zmp_margin_executed(); })
        .def_property_readonly("face", [](const PyStack& s) { return s.stack().face(); });
}

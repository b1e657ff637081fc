#include <avatar/retargeting/operator_frame.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace avatar::retargeting {

using nlohmann::json;

std::string_view node_name(Node n)
{
    switch (n)
    {
    case Node::Chest: return "chest";
    case Node::LeftUpperArm: return "left_upper_arm";
    case Node::LeftForearm: return "left_forearm";
    case Node::RightUpperArm: return "right_upper_arm";
    case Node::RightForearm: return "right_forearm";
    }
    return "unknown";
}

std::string_view expression_name(Expression e)
{
    switch (e)
    {
    case Expression::Neutral: return "neutral";
    case Expression::Smile: return "smile";
    case Expression::Frown: return "frown";
    case Expression::Surprise: return "surprise";
    case Expression::EyesClosed: return "eyes_closed";
    }
    return "unknown";
}

Expression expression_from_name(std::string_view name)
{
    for (Expression e : kExpressions)
        if (expression_name(e) == name)
            return e;
    throw RetargetError(RetargetErrc::UnknownExpression, std::string(name));
}

namespace {

bool finite_all(std::initializer_list<double> v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace

void OperatorFrame::validate() const
{
    for (std::size_t i = 0; i < kNodes; ++i)
    {
        const Quat& q = nodes[i];
        if (!finite_all({q.w(), q.x(), q.y(), q.z()}) || std::abs(q.norm() - 1.0) > 1e-6)
            throw RetargetError(RetargetErrc::InvalidFrame,
                                "node " + std::string(node_name(static_cast<Node>(i))) + " is not a unit quaternion");
    }
    if (!head_pose.matrix().allFinite())
        throw RetargetError(RetargetErrc::InvalidFrame, "head pose");
    if (!finite_all({timestamp, gaze.version, gaze.vergence, gaze.tilt, eye_openness, treadmill.speed,
                     treadmill.ring_heading}))
        throw RetargetError(RetargetErrc::InvalidFrame, "non-finite value");
    for (const auto& hand : fingers)
        for (double f : hand)
            if (!std::isfinite(f))
                throw RetargetError(RetargetErrc::InvalidFrame, "non-finite flexion");
    if (treadmill.speed < 0.0)
        throw RetargetError(RetargetErrc::InvalidFrame, "negative treadmill speed");
}

void OperatorFrame::clamp_ranges()
{
    eye_openness = std::clamp(eye_openness, 0.0, 1.0);
    for (auto& hand : fingers)
        for (double& f : hand)
            f = std::clamp(f, 0.0, 1.0);
}

json to_json(const OperatorFrame& f)
{
    json nodes = json::object();
    for (std::size_t i = 0; i < kNodes; ++i)
    {
        const Quat& q = f.nodes[i];
        nodes[std::string(node_name(static_cast<Node>(i)))] = {q.w(), q.x(), q.y(), q.z()};
    }
    const Vec3 hp = f.head_pose.translation();
    const Mat3 hr = f.head_pose.linear();
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            rot.push_back(hr(r, c));
    return json{
        {"t", f.timestamp},
        {"nodes", nodes},
        {"head", {{"p", {hp.x(), hp.y(), hp.z()}}, {"R", rot}}},
        {"gaze", {{"version", f.gaze.version}, {"vergence", f.gaze.vergence}, {"tilt", f.gaze.tilt}}},
        {"eye_openness", f.eye_openness},
        {"fingers", {{"left", f.fingers[0]}, {"right", f.fingers[1]}}},
        {"treadmill", {{"speed", f.treadmill.speed}, {"ring_heading", f.treadmill.ring_heading}}},
        {"expression", expression_name(f.expression)},
    };
}

namespace {

Quat quat_from(const json& a)
{
    if (!a.is_array() || a.size() != 4)
        throw RetargetError(RetargetErrc::MalformedSession, "quaternion must have 4 numbers");
    return Quat(a[0].get<double>(), a[1].get<double>(), a[2].get<double>(), a[3].get<double>());
}

} // namespace

OperatorFrame frame_from_json(const json& j)
{
    try
    {
        OperatorFrame f;
        f.timestamp = j.at("t").get<double>();
        for (std::size_t i = 0; i < kNodes; ++i)
            f.nodes[i] = quat_from(j.at("nodes").at(std::string(node_name(static_cast<Node>(i)))));
        const auto& h = j.at("head");
        const auto p = h.at("p").get<std::array<double, 3>>();
        const auto rot = h.at("R").get<std::array<double, 9>>();
        f.head_pose = Pose::Identity();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                f.head_pose.linear()(r, c) = rot[static_cast<std::size_t>(3 * r + c)];
        f.head_pose.translation() = Vec3(p[0], p[1], p[2]);
        const auto& g = j.at("gaze");
        f.gaze = {g.at("version").get<double>(), g.at("vergence").get<double>(), g.at("tilt").get<double>()};
        f.eye_openness = j.at("eye_openness").get<double>();
        f.fingers[0] = j.at("fingers").at("left").get<HandFlexion>();
        f.fingers[1] = j.at("fingers").at("right").get<HandFlexion>();
        f.treadmill = {j.at("treadmill").at("speed").get<double>(), j.at("treadmill").at("ring_heading").get<double>()};
        f.expression = expression_from_name(j.at("expression").get<std::string>());
        return f;
    }
    catch (const json::exception& e)
    {
        throw RetargetError(RetargetErrc::MalformedSession, e.what());
    }
}

std::string to_session_line(const OperatorFrame& f) { return to_json(f).dump(); }

OperatorFrame from_session_line(std::string_view line)
{
    json j;
    try
    {
        j = json::parse(line);
    }
    catch (const json::exception& e)
    {
        throw RetargetError(RetargetErrc::MalformedSession, e.what());
    }
    return frame_from_json(j);
}

void write_session(std::ostream& out, const std::vector<OperatorFrame>& frames)
{
    for (const auto& f : frames)
        out << to_session_line(f) << '\n';
}

std::vector<OperatorFrame> read_session(std::istream& in)
{
    std::vector<OperatorFrame> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line))
    {
        ++n;
        if (line.empty())
            continue;
        try
        {
            out.push_back(from_session_line(line));
        }
        catch (const RetargetError& e)
        {
            throw RetargetError(RetargetErrc::MalformedSession, "line " + std::to_string(n) + ": " + e.what());
        }
    }
    for (std::size_t i = 1; i < out.size(); ++i)
        if (!(out[i].timestamp > out[i - 1].timestamp))
            throw RetargetError(RetargetErrc::MalformedSession, "timestamps must increase");
    return out;
}

std::vector<OperatorFrame> read_session_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw RetargetError(RetargetErrc::MalformedSession, "cannot open " + path);
    return read_session(in);
}

namespace {

bool same(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

} // namespace

bool identical(const OperatorFrame& a, const OperatorFrame& b)
{
    if (!same(a.timestamp, b.timestamp) || a.expression != b.expression)
        return false;
    for (std::size_t i = 0; i < kNodes; ++i)
        for (int k = 0; k < 4; ++k)
            if (!same(a.nodes[i].coeffs()[k], b.nodes[i].coeffs()[k]))
                return false;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            if (!same(a.head_pose.matrix()(r, c), b.head_pose.matrix()(r, c)))
                return false;
    if (!same(a.gaze.version, b.gaze.version) || !same(a.gaze.vergence, b.gaze.vergence) ||
        !same(a.gaze.tilt, b.gaze.tilt) || !same(a.eye_openness, b.eye_openness) ||
        !same(a.treadmill.speed, b.treadmill.speed) || !same(a.treadmill.ring_heading, b.treadmill.ring_heading))
        return false;
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t k = 0; k < 5; ++k)
            if (!same(a.fingers[h][k], b.fingers[h][k]))
                return false;
    return true;
}

} // namespace avatar::retargeting

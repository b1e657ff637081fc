#include <avatar/sim/scenario.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace avatar::sim {

namespace {

struct KindName
{
    EventKind kind;
    std::string_view name;
    std::size_t min_args;
    std::size_t max_args;
};

constexpr std::array<KindName, 13> kKinds = {{
    {EventKind::Walk, "walk", 2, 2},
    {EventKind::Stop, "stop", 0, 0},
    {EventKind::Expression, "expression", 1, 1},
    {EventKind::Pose, "pose", 1, 1},
    {EventKind::Fingers, "fingers", 2, 2},
    {EventKind::Eyelids, "eyelids", 1, 1},
    {EventKind::Head, "head", 2, 2},
    {EventKind::Touch, "touch", 2, 3},
    {EventKind::Link, "link", 3, 4},
    {EventKind::Spawn, "spawn", 4, 4},
    {EventKind::Replay, "replay", 1, 1},
    {EventKind::Checkpoint, "checkpoint", 1, 64},
    {EventKind::End, "end", 0, 0},
}};

[[noreturn]] void fail(int line, const std::string& what)
{
    throw SimError(SimErrc::MalformedScenario, "line " + std::to_string(line) + ": " + what);
}

double number(const std::string& s, int line)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        fail(line, "not a number: " + s);
    return v;
}

std::vector<std::uint16_t> taxel_list(const std::string& s, int line)
{
    std::vector<std::uint16_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        unsigned v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc{} || ptr != item.data() + item.size() || v > 0xffff)
            fail(line, "bad taxel list " + s);
        out.push_back(static_cast<std::uint16_t>(v));
    }
    return out;
}

Expectation expectation(const std::string& s, int line)
{
    for (const char* op : {">=", "<=", ">", "<", "="})
    {
        const auto pos = s.find(op);
        if (pos == std::string::npos || pos == 0)
            continue;
        Expectation e{s.substr(0, pos), op, s.substr(pos + std::char_traits<char>::length(op))};
        if (e.value.empty())
            break;
        return e;
    }
    fail(line, "bad checkpoint condition " + s);
}

} // namespace

std::string_view event_kind_name(EventKind k)
{
    for (const auto& kn : kKinds)
        if (kn.kind == k)
            return kn.name;
    return "?";
}

double Scenario::duration() const
{
    if (events.empty())
        return 0.0;
    for (const auto& e : events)
        if (e.kind == EventKind::End)
            return e.t;
    return events.back().t;
}

Scenario parse_scenario(std::istream& in, std::string name)
{
    Scenario s;
    s.name = std::move(name);
    std::string raw;
    int line = 0;
    double last_t = 0.0;
    bool ended = false;
    while (std::getline(in, raw))
    {
        ++line;
        if (const auto hash = raw.find('#'); hash != std::string::npos)
            raw.erase(hash);
        std::istringstream ls(raw);
        std::vector<std::string> tok;
        for (std::string w; ls >> w;)
            tok.push_back(w);
        if (tok.empty())
            continue;
        if (ended)
            fail(line, "event after end");
        if (tok.size() < 2)
            fail(line, "expected '<t> <kind> ...'");

        ScenarioEvent e;
        e.line = line;
        e.t = number(tok[0], line);
        if (e.t < 0.0)
            fail(line, "negative time");
        if (e.t < last_t)
            fail(line, "events out of time order");
        last_t = e.t;

        const KindName* kn = nullptr;
        for (const auto& k : kKinds)
            if (k.name == tok[1])
                kn = &k;
        if (!kn)
            fail(line, "unknown event " + tok[1]);
        e.kind = kn->kind;
        const std::vector<std::string> args(tok.begin() + 2, tok.end());
        if (args.size() < kn->min_args || args.size() > kn->max_args)
            fail(line, "wrong argument count for " + tok[1]);

        switch (e.kind)
        {
        case EventKind::Walk:
        case EventKind::Head:
        case EventKind::Eyelids:
        case EventKind::Spawn:
            for (const auto& a : args)
                e.num.push_back(number(a, line));
            break;
        case EventKind::Expression:
        case EventKind::Pose:
        case EventKind::Replay:
            e.text = args[0];
            break;
        case EventKind::Fingers:
            e.text = args[0];
            if (e.text != "left" && e.text != "right" && e.text != "both")
                fail(line, "fingers side must be left, right or both");
            e.num.push_back(number(args[1], line));
            break;
        case EventKind::Touch:
            e.text = args[0];
            e.num.push_back(number(args[1], line));
            if (args.size() == 3)
                e.taxels = taxel_list(args[2], line);
            break;
        case EventKind::Link:
            for (std::size_t i = 0; i < 3; ++i)
                e.num.push_back(number(args[i], line));
            if (args.size() == 4)
                e.text = args[3];
            break;
        case EventKind::Checkpoint:
            e.text = args[0];
            for (std::size_t i = 1; i < args.size(); ++i)
                e.expect.push_back(expectation(args[i], line));
            break;
        case EventKind::Stop:
        case EventKind::End:
            break;
        }
        if (e.kind == EventKind::End)
            ended = true;
        s.events.push_back(std::move(e));
    }
    return s;
}

Scenario parse_scenario_text(const std::string& text, std::string name)
{
    std::istringstream in(text);
    return parse_scenario(in, std::move(name));
}

Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw SimError(SimErrc::MalformedScenario, "cannot open " + path);
    const std::filesystem::path p(path);
    Scenario s = parse_scenario(in, p.stem().string());
    s.base_dir = p.parent_path().string();
    return s;
}

} // namespace avatar::sim

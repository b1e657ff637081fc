#pragma once

#include <avatar/sim/world.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace avatar::sim {

enum class EventKind
{
    Walk,
    Stop,
    Expression,
    Pose,
    Fingers,
    Eyelids,
    Head,
    Touch,
    Link,
    Spawn,
    Replay,
    Checkpoint,
    End,
};

std::string_view event_kind_name(EventKind k);

/// Condition checked when a checkpoint is reached, e.g. `moved>=0.5`.
struct Expectation
{
    std::string quantity;
    std::string op;
    std::string value;

    std::string text() const { return quantity + op + value; }
};

/// One scenario line. Field use by kind:
///   walk h s                heading, speed  -> num[0], num[1]
///   stop
///   expression label        -> text
///   pose preset             -> text
///   fingers side flex       -> text (left|right|both), num[0]
///   eyelids o               -> num[0]
///   head yaw pitch          -> num[0], num[1]
///   touch patch i [taxels]  -> text, num[0], taxels
///   link d j l [topic]      -> num[0..2], text (empty: every cross link)
///   spawn id x y z          -> num[0..3]
///   replay file             -> text
///   checkpoint name [cond]  -> text, expectations
///   end
struct ScenarioEvent
{
    double t{0.0};
    EventKind kind{EventKind::End};
    std::string text;
    std::vector<double> num;
    std::vector<std::uint16_t> taxels;
    std::vector<Expectation> expect;
    /// 1-based source line.
    int line{0};
};

struct Scenario
{
    std::string name;
    std::vector<ScenarioEvent> events;
    /// Directory relative paths (replay files) resolve against.
    std::string base_dir;

    bool empty() const { return events.empty(); }
    /// Time of the `end` event, or of the last event.
    double duration() const;
};

/// One event per line: `<t> <kind> <args...>`. `#` starts a comment.
/// Throws MalformedScenario with the offending line number.
Scenario parse_scenario(std::istream& in, std::string name = "scenario");
Scenario parse_scenario_text(const std::string& text, std::string name = "scenario");
Scenario load_scenario(const std::string& path);

} // namespace avatar::sim

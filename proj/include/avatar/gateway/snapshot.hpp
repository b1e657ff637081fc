#pragma once

#include <avatar/feedback/feedback.hpp>
#include <avatar/locomotion/pipeline.hpp>
#include <avatar/sim/messages.hpp>
#include <avatar/sim/stack.hpp>

#include <nlohmann/json.hpp>

#include <deque>
#include <mutex>
#include <optional>

namespace avatar::gateway {

struct SnapshotParams
{
    /// A field older than this is reported in "stale", s.
    double stale_after{1.5};
    /// Skin events stay active this long after their arrival, s.
    double skin_hold{0.5};
    /// Haptic commands stay in the snapshot this long after arrival, s.
    double haptic_hold{1.0};
    /// Most recent faults carried in every snapshot.
    std::size_t max_faults{16};
};

/// Latest-value join of the operator-side topics. Fed from the simulation
/// thread, read by the broadcaster; never waits for a topic. Times are
/// simulation seconds.
class SnapshotAssembler
{
public:
    explicit SnapshotAssembler(SnapshotParams params = {});

    void on_state(const sim::StateMsg& m, double now);
    void on_skin(const feedback::SkinEvent& e, double now);
    void on_haptic(const sim::HapticArrival& h);
    void on_latency(const feedback::LatencyReadout& r, double now);
    void on_frame(const feedback::CameraFrame& f, double now);
    void on_fault(const locomotion::FaultEvent& f);
    /// Simulation time seen by the feeder, used as the snapshot clock.
    void set_time(double now);

    /// Listener forwarding every stack callback here, then to `next`.
    sim::StackListener listener(const sim::AvatarStack& stack, sim::StackListener next = {});

    /// One telemetry message. snapshot_time never repeats or decreases.
    nlohmann::ordered_json assemble();
    std::uint64_t assembled() const;

private:
    struct Field
    {
        std::optional<double> updated;
    };

    double age(const Field& f, double now) const;

    SnapshotParams m_params;
    mutable std::mutex m_mutex;
    double m_now{0.0};
    std::optional<double> m_epoch;
    double m_last_snapshot{-std::numeric_limits<double>::infinity()};
    std::uint64_t m_count{0};

    std::optional<sim::StateMsg> m_state;
    Field m_state_field, m_skin_field, m_latency_field, m_frame_field;
    std::deque<std::pair<double, feedback::SkinEvent>> m_skin;
    std::deque<sim::HapticArrival> m_haptics;
    feedback::LatencyReadout m_latency;
    std::optional<feedback::CameraFrame> m_frame;
    std::deque<locomotion::FaultEvent> m_faults;
    std::uint64_t m_fault_count{0};
};

} // namespace avatar::gateway

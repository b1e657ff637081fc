#pragma once

#include <avatar/common/time.hpp>

#include <atomic>
#include <chrono>

namespace avatar::bus {

class Clock
{
public:
    virtual ~Clock() = default;
    virtual Micros now() const = 0;
    /// True when time only moves when someone advances it.
    virtual bool manual() const { return false; }
};

class SteadyClock final : public Clock
{
public:
    SteadyClock()
        : m_origin(std::chrono::steady_clock::now())
    {
    }

    Micros now() const override
    {
        return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - m_origin)
            .count();
    }

private:
    std::chrono::steady_clock::time_point m_origin;
};

/// Virtual time for deterministic runs.
class ManualClock final : public Clock
{
public:
    explicit ManualClock(Micros start = 0)
        : m_now(start)
    {
    }

    Micros now() const override { return m_now.load(); }
    bool manual() const override { return true; }

    void set(Micros t) { m_now.store(t); }
    void advance(Micros dt) { m_now.fetch_add(dt); }

private:
    std::atomic<Micros> m_now;
};

} // namespace avatar::bus

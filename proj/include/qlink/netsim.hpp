#pragma once

// Deterministic discrete-event core: simulated time, seeded random streams,
// the event queue, the classical channel between nodes and the trace log.

#include "json.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qlink {

using Duration = std::chrono::nanoseconds;

/// Simulated clock. Time is an integer nanosecond count from the start of the run.
struct SimClock {
    using rep = std::int64_t;
    using period = std::nano;
    using duration = Duration;
    using time_point = std::chrono::time_point<SimClock, Duration>;
    static constexpr bool is_steady = true;
};
using SimTime = SimClock::time_point;

inline SimTime at_ns(std::int64_t ns) { return SimTime(Duration(ns)); }
inline std::int64_t ns_of(SimTime t) { return t.time_since_epoch().count(); }
inline double to_ms(Duration d) { return static_cast<double>(d.count()) / 1e6; }
inline double to_ms(SimTime t) { return to_ms(t.time_since_epoch()); }

/// 64-bit Mersenne Twister with a portable uniform mapping.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    bool bernoulli(double p) { return uniform01() < p; }
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);
    /// Uniform duration in [lo, hi].
    Duration uniform_duration(Duration lo, Duration hi);

private:
    std::mt19937_64 engine_;
};

/// Named random streams forked from one root seed. Streams are independent,
/// so extra draws in one subsystem never shift another subsystem's sequence.
class RngStreams {
public:
    explicit RngStreams(std::uint64_t root_seed);
    Rng& stream(const std::string& name);
    std::uint64_t root_seed() const { return root_; }

private:
    std::uint64_t root_;
    std::map<std::string, Rng> streams_;
};

using EventId = std::uint64_t;

enum class PastEventPolicy { Throw, Clamp };

/// Events ordered by (time, insertion sequence). Equal timestamps run FIFO.
class EventQueue {
public:
    EventQueue();

    SimTime now() const { return now_; }

    EventId schedule(SimTime at, std::function<void()> fn);
    EventId schedule_in(Duration delay, std::function<void()> fn) { return schedule(now_ + delay, std::move(fn)); }
    bool cancel(EventId id);

    /// Runs the next pending event. Returns false on an empty queue.
    bool step();
    /// Runs until no events remain.
    void run();
    /// Runs every event with time <= t, then advances the clock to t.
    void run_until(SimTime t);

    std::size_t pending() const { return callbacks_.size(); }
    std::uint64_t executed() const { return executed_; }

    void set_past_policy(PastEventPolicy p) { policy_ = p; }
    std::uint64_t clamped_events() const { return clamped_; }

private:
    struct Entry {
        SimTime at;
        std::uint64_t seq;
        EventId id;
        bool operator>(const Entry& o) const { return at != o.at ? at > o.at : seq > o.seq; }
    };

    SimTime now_{};
    std::uint64_t seq_ = 0;
    std::uint64_t executed_ = 0;
    std::uint64_t clamped_ = 0;
    PastEventPolicy policy_;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap_;
    std::unordered_map<EventId, std::function<void()>> callbacks_;
};

/// Framed classical message: one type byte followed by an opaque payload.
struct Message {
    enum class Type : std::uint8_t { ForwardCreate = 1, Ack = 2, Expire = 3 };

    Type type = Type::ForwardCreate;
    std::vector<std::uint8_t> payload;

    std::vector<std::uint8_t> encode() const;
    static Message decode(const std::vector<std::uint8_t>& frame);
};

struct ChannelParams {
    Duration latency = std::chrono::microseconds(100);
    double loss = 0.0;

    void validate() const;
};

enum class Endpoint : std::uint8_t { Client = 0, Server = 1 };

/// Reliable (or lossy) in-order channel between the two nodes.
class ClassicalChannel {
public:
    using Handler = std::function<void(const Message&)>;

    ClassicalChannel(EventQueue& events, ChannelParams params, Rng& rng);

    /// Delivers `msg` to the other endpoint after the channel latency.
    /// Returns the scheduled arrival time, or nullopt if the message was lost.
    std::optional<SimTime> send(Endpoint from, const Message& msg, Handler on_arrival);

    const ChannelParams& params() const { return params_; }
    std::uint64_t sent() const { return sent_; }
    std::uint64_t dropped() const { return dropped_; }
    std::uint64_t delivered() const { return delivered_; }

private:
    EventQueue& events_;
    ChannelParams params_;
    Rng& rng_;
    SimTime last_arrival_[2]{};
    std::uint64_t sent_ = 0, dropped_ = 0, delivered_ = 0;
};

enum class TraceLevel : std::uint8_t { None = 0, Link = 1, Commands = 2, Full = 3 };

std::string_view to_string(TraceLevel l);
TraceLevel parse_trace_level(std::string_view s);

struct TraceEvent {
    SimTime time;
    std::uint64_t seq = 0;
    std::string node;
    std::string type;
    nlohmann::json payload;
};

/// In-memory trace. Components may log events ahead of the clock (a command's
/// internal timeline is known when it is issued), so output is sorted by
/// (time, emission order).
class Trace {
public:
    explicit Trace(TraceLevel level = TraceLevel::None) : level_(level) {}

    bool enabled(TraceLevel l) const { return l != TraceLevel::None && l <= level_; }
    void emit(TraceLevel l, SimTime t, std::string_view node, std::string_view type,
              nlohmann::json payload = nlohmann::json::object());

    TraceLevel level() const { return level_; }
    std::vector<TraceEvent> sorted() const;
    void write_jsonl(std::ostream& os, const nlohmann::json& header) const;

private:
    TraceLevel level_;
    std::uint64_t seq_ = 0;
    std::vector<TraceEvent> events_;
};

}  // namespace qlink

#include "qlink/netsim.hpp"

#include <algorithm>
#include <iostream>
#include <stdexcept>

namespace qlink {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index on empty range");
    auto i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    return std::min(i, n - 1);
}

Duration Rng::uniform_duration(Duration lo, Duration hi) {
    if (hi < lo) throw std::invalid_argument("uniform_duration: hi < lo");
    const double span = static_cast<double>((hi - lo).count());
    return lo + Duration(static_cast<std::int64_t>(uniform01() * span));
}

RngStreams::RngStreams(std::uint64_t root_seed) : root_(root_seed) {}

Rng& RngStreams::stream(const std::string& name) {
    auto it = streams_.find(name);
    if (it != streams_.end()) return it->second;
    const std::uint64_t h = fnv1a(name);
    std::seed_seq seq{static_cast<std::uint32_t>(root_), static_cast<std::uint32_t>(root_ >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    const std::uint64_t seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return streams_.emplace(name, Rng(seed)).first->second;
}

EventQueue::EventQueue()
#ifndef NDEBUG
    : policy_(PastEventPolicy::Throw)
#else
    : policy_(PastEventPolicy::Clamp)
#endif
{
}

EventId EventQueue::schedule(SimTime at, std::function<void()> fn) {
    if (at < now_) {
        if (policy_ == PastEventPolicy::Throw)
            throw std::logic_error("event scheduled in the past (" + std::to_string(ns_of(at)) +
                                   " ns < now " + std::to_string(ns_of(now_)) + " ns)");
        if (clamped_++ == 0)
            std::cerr << "warning: event scheduled in the past was clamped to the current time\n";
        at = now_;
    }
    const EventId id = ++seq_;
    heap_.push({at, seq_, id});
    callbacks_.emplace(id, std::move(fn));
    return id;
}

bool EventQueue::cancel(EventId id) { return callbacks_.erase(id) > 0; }

bool EventQueue::step() {
    while (!heap_.empty()) {
        const Entry e = heap_.top();
        heap_.pop();
        auto it = callbacks_.find(e.id);
        if (it == callbacks_.end()) continue;  // cancelled
        auto fn = std::move(it->second);
        callbacks_.erase(it);
        now_ = e.at;
        ++executed_;
        fn();
        return true;
    }
    return false;
}

void EventQueue::run() {
    while (step()) {
    }
}

void EventQueue::run_until(SimTime t) {
    while (!heap_.empty()) {
        const Entry& e = heap_.top();
        if (callbacks_.find(e.id) == callbacks_.end()) {
            heap_.pop();
            continue;
        }
        if (e.at > t) break;
        step();
    }
    if (t > now_) now_ = t;
}

std::vector<std::uint8_t> Message::encode() const {
    std::vector<std::uint8_t> out;
    out.reserve(payload.size() + 1);
    out.push_back(static_cast<std::uint8_t>(type));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Message Message::decode(const std::vector<std::uint8_t>& frame) {
    if (frame.empty()) throw std::invalid_argument("empty message frame");
    const auto t = frame[0];
    if (t < 1 || t > 3) throw std::invalid_argument("unknown message type byte " + std::to_string(t));
    Message m;
    m.type = static_cast<Type>(t);
    m.payload.assign(frame.begin() + 1, frame.end());
    return m;
}

void ChannelParams::validate() const {
    if (latency < Duration::zero()) throw std::invalid_argument("channel latency must be non-negative");
    if (loss < 0.0 || loss > 1.0) throw std::invalid_argument("channel loss must be in [0, 1]");
}

ClassicalChannel::ClassicalChannel(EventQueue& events, ChannelParams params, Rng& rng)
    : events_(events), params_(params), rng_(rng) {
    params_.validate();
}

std::optional<SimTime> ClassicalChannel::send(Endpoint from, const Message& msg, Handler on_arrival) {
    ++sent_;
    if (params_.loss > 0.0 && rng_.bernoulli(params_.loss)) {
        ++dropped_;
        return std::nullopt;
    }
    auto& last = last_arrival_[static_cast<int>(from)];
    const SimTime arrival = std::max(events_.now() + params_.latency, last);
    last = arrival;
    events_.schedule(arrival, [this, frame = msg.encode(), h = std::move(on_arrival)]() {
        ++delivered_;
        h(Message::decode(frame));
    });
    return arrival;
}

std::string_view to_string(TraceLevel l) {
    switch (l) {
        case TraceLevel::None: return "none";
        case TraceLevel::Link: return "link";
        case TraceLevel::Commands: return "commands";
        case TraceLevel::Full: return "full";
    }
    return "none";
}

TraceLevel parse_trace_level(std::string_view s) {
    for (auto l : {TraceLevel::None, TraceLevel::Link, TraceLevel::Commands, TraceLevel::Full})
        if (to_string(l) == s) return l;
    throw std::invalid_argument("unknown trace level: " + std::string(s));
}

void Trace::emit(TraceLevel l, SimTime t, std::string_view node, std::string_view type,
                 nlohmann::json payload) {
    if (!enabled(l)) return;
    events_.push_back({t, seq_++, std::string(node), std::string(type), std::move(payload)});
}

std::vector<TraceEvent> Trace::sorted() const {
    std::vector<TraceEvent> out = events_;
    std::stable_sort(out.begin(), out.end(), [](const TraceEvent& a, const TraceEvent& b) {
        return a.time != b.time ? a.time < b.time : a.seq < b.seq;
    });
    return out;
}

void Trace::write_jsonl(std::ostream& os, const nlohmann::json& header) const {
    os << header.dump() << '\n';
    for (const auto& e : sorted()) {
        nlohmann::json j = {{"t_ns", ns_of(e.time)}, {"node", e.node}, {"event", e.type}, {"data", e.payload}};
        os << j.dump() << '\n';
    }
}

}  // namespace qlink

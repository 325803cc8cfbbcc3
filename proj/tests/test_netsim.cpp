#include "qlink/netsim.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace qlink;
using namespace std::chrono_literals;

TEST(EventQueue, EqualTimesRunInInsertionOrder) {
    EventQueue q;
    std::vector<int> order;
    for (int i = 0; i < 5; ++i) q.schedule(at_ns(100), [&order, i] { order.push_back(i); });
    q.schedule(at_ns(50), [&order] { order.push_back(-1); });
    q.run();
    EXPECT_EQ(order, (std::vector<int>{-1, 0, 1, 2, 3, 4}));
    EXPECT_EQ(q.now(), at_ns(100));
}

TEST(EventQueue, EmptyRunLeavesClock) {
    EventQueue q;
    q.run();
    EXPECT_EQ(q.now(), at_ns(0));
    EXPECT_FALSE(q.step());
}

TEST(EventQueue, RunUntilAdvancesClock) {
    EventQueue q;
    int hits = 0;
    q.schedule(at_ns(10), [&] { ++hits; });
    q.schedule(at_ns(30), [&] { ++hits; });
    q.run_until(at_ns(20));
    EXPECT_EQ(hits, 1);
    EXPECT_EQ(q.now(), at_ns(20));
    EXPECT_EQ(q.pending(), 1u);
}

TEST(EventQueue, CancelledEventsDoNotRun) {
    EventQueue q;
    bool ran = false;
    const auto id = q.schedule(at_ns(5), [&] { ran = true; });
    EXPECT_TRUE(q.cancel(id));
    EXPECT_FALSE(q.cancel(id));
    q.run();
    EXPECT_FALSE(ran);
}

TEST(EventQueue, PastEventsThrowOrClamp) {
    EventQueue q;
    q.set_past_policy(PastEventPolicy::Throw);
    q.schedule(at_ns(100), [] {});
    q.run();
    EXPECT_THROW(q.schedule(at_ns(10), [] {}), std::logic_error);
    q.set_past_policy(PastEventPolicy::Clamp);
    SimTime seen{};
    q.schedule(at_ns(10), [&] { seen = q.now(); });
    q.run();
    EXPECT_EQ(seen, at_ns(100));
    EXPECT_EQ(q.clamped_events(), 1u);
}

TEST(EventQueue, ClockNeverGoesBackwards) {
    EventQueue q;
    Rng rng(4);
    SimTime last{};
    bool monotone = true;
    std::function<void()> spawn = [&] {
        if (q.now() < last) monotone = false;
        last = q.now();
        if (q.executed() < 2000) q.schedule_in(Duration(static_cast<std::int64_t>(rng.index(1000))), spawn);
    };
    for (int i = 0; i < 10; ++i) q.schedule(at_ns(static_cast<std::int64_t>(rng.index(100))), spawn);
    q.run();
    EXPECT_TRUE(monotone);
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
    RngStreams a(42), b(42);
    const auto x1 = a.stream("alpha").next();
    // Drawing from an unrelated stream first must not shift "alpha".
    for (int i = 0; i < 10; ++i) b.stream("beta").next();
    EXPECT_EQ(b.stream("alpha").next(), x1);
    RngStreams c(43);
    EXPECT_NE(c.stream("alpha").next(), x1);
}

TEST(Rng, UniformRange) {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform01();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const auto d = r.uniform_duration(10ns, 20ns);
        ASSERT_GE(d, 10ns);
        ASSERT_LE(d, 20ns);
    }
}

TEST(Message, FramingRoundTrip) {
    Message m{Message::Type::Ack, {1, 2, 3}};
    const auto frame = m.encode();
    ASSERT_EQ(frame.size(), 4u);
    EXPECT_EQ(frame[0], 2);
    const auto d = Message::decode(frame);
    EXPECT_EQ(d.type, Message::Type::Ack);
    EXPECT_EQ(d.payload, m.payload);
    EXPECT_THROW(Message::decode({}), std::invalid_argument);
    EXPECT_THROW(Message::decode({9}), std::invalid_argument);
}

TEST(Channel, DeliversAfterLatency) {
    EventQueue q;
    Rng rng(1);
    ClassicalChannel ch(q, ChannelParams{100us, 0.0}, rng);
    SimTime arrived{};
    ch.send(Endpoint::Client, Message{}, [&](const Message&) { arrived = q.now(); });
    q.run();
    EXPECT_EQ(arrived, at_ns(100'000));
}

TEST(Channel, FifoPerDirection) {
    EventQueue q;
    Rng rng(1);
    ClassicalChannel ch(q, ChannelParams{100us, 0.0}, rng);
    std::vector<int> got;
    ch.send(Endpoint::Client, Message{Message::Type::ForwardCreate, {0}}, [&](const Message& m) { got.push_back(m.payload[0]); });
    q.schedule(at_ns(1000), [&] {
        ch.send(Endpoint::Client, Message{Message::Type::ForwardCreate, {1}},
                [&](const Message& m) { got.push_back(m.payload[0]); });
    });
    q.run();
    EXPECT_EQ(got, (std::vector<int>{0, 1}));
}

TEST(Channel, LossRateMatchesBernoulli) {
    EventQueue q;
    Rng rng(77);
    ClassicalChannel ch(q, ChannelParams{1us, 0.5}, rng);
    const int n = 10000;
    int delivered = 0;
    for (int i = 0; i < n; ++i) ch.send(Endpoint::Server, Message{}, [&](const Message&) { ++delivered; });
    q.run();
    EXPECT_NEAR(static_cast<double>(delivered) / n, 0.5, 4 * qlink::testing::binomial_sigma(0.5, n));
    EXPECT_EQ(ch.sent(), static_cast<std::uint64_t>(n));
    EXPECT_EQ(ch.dropped() + ch.delivered(), ch.sent());
}

TEST(Trace, FiltersByLevelAndSortsByTime) {
    Trace t(TraceLevel::Commands);
    t.emit(TraceLevel::Full, at_ns(1), "client", "HIDDEN");
    t.emit(TraceLevel::Link, at_ns(20), "client", "B");
    t.emit(TraceLevel::Commands, at_ns(10), "server", "A");
    const auto ev = t.sorted();
    ASSERT_EQ(ev.size(), 2u);
    EXPECT_EQ(ev[0].type, "A");
    EXPECT_EQ(ev[1].type, "B");

    std::ostringstream os;
    t.write_jsonl(os, {{"schema", "qlink.trace"}});
    std::istringstream is(os.str());
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) {
        EXPECT_TRUE(nlohmann::json::accept(line));
        ++lines;
    }
    EXPECT_EQ(lines, 3);
}

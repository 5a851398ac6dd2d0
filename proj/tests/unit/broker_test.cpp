#include <chrono>
#include <fstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "scorestream/broker.hpp"
#include "scorestream/error.hpp"
#include "test_support.hpp"

using namespace scorestream;
using namespace std::chrono_literals;
using scorestream::testing::TempDir;

namespace {

std::vector<std::uint64_t> offsets_of(const std::vector<Message>& batch) {
    std::vector<std::uint64_t> out;
    for (const auto& m : batch) out.push_back(m.offset);
    return out;
}

void expect_kind(ErrorKind kind, const std::function<void()>& f, const std::string& needle = {}) {
    try {
        f();
        ADD_FAILURE() << "no exception";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
        if (!needle.empty()) EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

}  // namespace

TEST(Broker, OffsetsAreDense) {
    TempDir dir;
    Broker b(dir.path());
    EXPECT_EQ(b.publish("reviews", "a"), 0u);
    EXPECT_EQ(b.publish("reviews", "b"), 1u);
    EXPECT_EQ(b.publish("reviews", "c"), 2u);
    EXPECT_EQ(b.end_offset("reviews"), 3u);
    EXPECT_EQ(b.publish("other", "x"), 0u);
    EXPECT_EQ(b.topics(), (std::vector<std::string>{"other", "reviews"}));
}

TEST(Broker, InvalidNamesRejected) {
    TempDir dir;
    Broker b(dir.path());
    expect_kind(ErrorKind::Config, [&] { b.publish("a b", "x"); });
    expect_kind(ErrorKind::Config, [&] { b.publish("", "x"); });
    expect_kind(ErrorKind::Config, [&] { b.publish("Upper", "x"); });
    EXPECT_TRUE(valid_topic_name("reviews.v2_x-y"));
    EXPECT_FALSE(valid_consumer_id("a.b"));
    expect_kind(ErrorKind::Config, [&] { b.fetch_batch("bad.id", "reviews", 1, 0ms); });
}

TEST(Broker, FetchWindow) {
    TempDir dir;
    Broker b(dir.path());
    for (int i = 0; i < 5; ++i) b.publish("t", "m" + std::to_string(i));
    b.commit_offset("c", "t", 2);
    const auto batch = b.fetch_batch("c", "t", 2, 0ms);
    EXPECT_EQ(offsets_of(batch), (std::vector<std::uint64_t>{2, 3}));
    EXPECT_EQ(batch[0].payload, "m2");
    EXPECT_GT(batch[0].enqueue_time_ms, 0);
}

TEST(Broker, EmptyTopicWaitsForTimeout) {
    TempDir dir;
    Broker b(dir.path());
    const auto t0 = std::chrono::steady_clock::now();
    EXPECT_TRUE(b.fetch_batch("c", "t", 10, 50ms).empty());
    const auto waited = std::chrono::steady_clock::now() - t0;
    EXPECT_GE(waited, 45ms);
    EXPECT_LT(waited, 150ms);
}

TEST(Broker, FetchWakesOnPublish) {
    TempDir dir;
    Broker b(dir.path());
    std::thread producer([&] {
        std::this_thread::sleep_for(30ms);
        b.publish("t", "late");
    });
    const auto t0 = std::chrono::steady_clock::now();
    const auto batch = b.fetch_batch("c", "t", 10, 2000ms);
    producer.join();
    ASSERT_EQ(batch.size(), 1u);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, 500ms);
}

TEST(Broker, RedeliveryWithoutCommit) {
    TempDir dir;
    Broker b(dir.path());
    for (int i = 0; i < 4; ++i) b.publish("t", std::to_string(i));
    const auto a = b.fetch_batch("c", "t", 3, 0ms);
    const auto c = b.fetch_batch("c", "t", 3, 0ms);
    EXPECT_EQ(offsets_of(a), offsets_of(c));
    EXPECT_EQ(offsets_of(a), (std::vector<std::uint64_t>{0, 1, 2}));
}

TEST(Broker, CommitIsMonotoneUnlessRewound) {
    TempDir dir;
    Broker b(dir.path());
    for (int i = 0; i < 5; ++i) b.publish("t", std::to_string(i));
    b.commit_offset("c", "t", 3);
    EXPECT_EQ(b.fetch_batch("c", "t", 10, 0ms).front().offset, 3u);
    b.commit_offset("c", "t", 3);
    expect_kind(ErrorKind::Config, [&] { b.commit_offset("c", "t", 1); });
    EXPECT_EQ(b.committed_offset("c", "t"), 3u);
    b.commit_offset("c", "t", 1, true);
    EXPECT_EQ(b.fetch_batch("c", "t", 10, 0ms).front().offset, 1u);
    expect_kind(ErrorKind::Config, [&] { b.commit_offset("c", "t", 6); });
}

TEST(Broker, ConsumersAreIndependent) {
    TempDir dir;
    Broker b(dir.path());
    for (int i = 0; i < 3; ++i) b.publish("t", std::to_string(i));
    b.commit_offset("one", "t", 3);
    EXPECT_TRUE(b.fetch_batch("one", "t", 10, 0ms).empty());
    EXPECT_EQ(b.fetch_batch("two", "t", 10, 0ms).size(), 3u);
}

TEST(Broker, RestartRestoresOffsets) {
    TempDir dir;
    {
        Broker b(dir.path());
        for (int i = 0; i < 7; ++i) b.publish("t", "p" + std::to_string(i));
        b.commit_offset("c", "t", 4);
    }
    Broker b(dir.path());
    EXPECT_EQ(b.end_offset("t"), 7u);
    EXPECT_EQ(b.committed_offset("c", "t"), 4u);
    EXPECT_EQ(b.recovery_report().consumer_offsets.at("c.t"), 4u);
    const auto batch = b.fetch_batch("c", "t", 10, 0ms);
    ASSERT_EQ(batch.size(), 3u);
    EXPECT_EQ(batch[0].payload, "p4");
    EXPECT_EQ(b.publish("t", "new"), 7u);
}

TEST(Broker, PublishSurvivesProcessKill) {
    TempDir dir;
    const pid_t pid = ::fork();
    ASSERT_GE(pid, 0);
    if (pid == 0) {
        Broker b(dir.path());
        b.publish("t", "before");
        b.publish("t", "durable");
        ::kill(::getpid(), SIGKILL);
        ::_exit(0);
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    ASSERT_TRUE(WIFSIGNALED(status));
    Broker b(dir.path());
    const auto batch = b.fetch_batch("c", "t", 10, 0ms);
    ASSERT_EQ(batch.size(), 2u);
    EXPECT_EQ(batch[1].offset, 1u);
    EXPECT_EQ(batch[1].payload, "durable");
}

TEST(Broker, TornTailIsTruncated) {
    TempDir dir;
    {
        Broker b(dir.path());
        for (int i = 0; i < 3; ++i) b.publish("t", "payload-" + std::to_string(i));
    }
    const auto log = dir / "t.log";
    std::filesystem::resize_file(log, std::filesystem::file_size(log) - 4);
    const auto cut = std::filesystem::file_size(log);
    Broker b(dir.path());
    EXPECT_EQ(b.end_offset("t"), 2u);
    ASSERT_EQ(b.recovery_report().topics.size(), 1u);
    EXPECT_GT(b.recovery_report().topics[0].truncated_bytes, 0u);
    EXPECT_LT(std::filesystem::file_size(log), cut);
    EXPECT_EQ(b.publish("t", "again"), 2u);
    EXPECT_EQ(b.fetch_batch("c", "t", 10, 0ms).back().payload, "again");
}

TEST(Broker, MidLogCorruptionNamesOffset) {
    TempDir dir;
    {
        Broker b(dir.path());
        for (int i = 0; i < 3; ++i) b.publish("t", "payload-" + std::to_string(i));
    }
    // Record 1 starts after record 0: 8-byte header + 8-byte enqueue time + 9-byte payload.
    const std::uint64_t second = 8 + 8 + 9;
    {
        std::fstream f(dir / "t.log", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(second + 8 + 10);
        f.put('#');
    }
    expect_kind(ErrorKind::Integrity, [&] { Broker b(dir.path()); }, "offset 1");
}

TEST(Broker, EmptyDirectoryIsFreshBroker) {
    TempDir dir;
    Broker b(dir / "fresh");
    EXPECT_TRUE(b.topics().empty());
    EXPECT_TRUE(b.recovery_report().topics.empty());
    EXPECT_EQ(b.end_offset("nothing"), 0u);
}

TEST(Broker, TwoHandlesShareADirectory) {
    TempDir dir;
    Broker a(dir.path());
    Broker b(dir.path());
    EXPECT_EQ(a.publish("t", "x"), 0u);
    EXPECT_EQ(b.publish("t", "y"), 1u);
    EXPECT_EQ(a.publish("t", "z"), 2u);
    EXPECT_EQ(offsets_of(b.fetch_batch("c", "t", 10, 0ms)), (std::vector<std::uint64_t>{0, 1, 2}));
}

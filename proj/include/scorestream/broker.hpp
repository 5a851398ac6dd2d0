#pragma once

// Embedded durable message broker: one append-only segment per topic and a
// committed read position per (consumer, topic).
//
// Layout under the data directory:
//   <topic>.log                  framed records, one per message
//   offsets/<consumer>.<topic>   next offset to deliver, replaced atomically
//
// Delivery is at-least-once: fetching never advances a consumer, only an
// explicit commit does. Several processes may share a data directory;
// appends are serialized with an advisory file lock.
//
// A single consumer id must not be driven from two threads at once.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scorestream/frame_file.hpp"

namespace scorestream {

struct Message {
    std::uint64_t offset = 0;
    std::string payload;
    std::int64_t enqueue_time_ms = 0;
};

struct BrokerOptions {
    bool sync_writes = true;
    std::chrono::milliseconds poll_interval{10};  ///< floor of 10ms is enforced
};

struct TopicRecovery {
    std::string topic;
    std::uint64_t end_offset = 0;
    std::uint64_t truncated_bytes = 0;  ///< size of the torn tail that was dropped
};

struct RecoveryReport {
    std::vector<TopicRecovery> topics;
    std::map<std::string, std::uint64_t> consumer_offsets;  ///< "<consumer>.<topic>" -> next offset

    nlohmann::json to_json() const;
};

/// Topic names: [a-z0-9_.-]+. Consumer ids: [A-Za-z0-9_-]+ (no dots, they
/// separate consumer and topic in offset file names).
bool valid_topic_name(std::string_view topic);
bool valid_consumer_id(std::string_view consumer);

class Broker {
public:
    /// Recovers every topic found in `data_dir` (created if missing): end
    /// offsets are rebuilt, a torn final record is truncated and mid-log
    /// corruption throws integrity_error naming the offset.
    explicit Broker(std::filesystem::path data_dir, BrokerOptions options = {});
    ~Broker();

    Broker(const Broker&) = delete;
    Broker& operator=(const Broker&) = delete;

    /// Durably appends and returns the message offset. Creates the topic on
    /// first use.
    std::uint64_t publish(std::string_view topic, std::string_view payload);

    /// Up to `max_messages` starting at the consumer's committed offset.
    /// Waits up to `max_wait` when nothing is available. Does not advance the
    /// consumer.
    std::vector<Message> fetch_batch(std::string_view consumer, std::string_view topic, std::size_t max_messages,
                                     std::chrono::milliseconds max_wait);

    /// Records `next_offset` durably. Moving backwards requires `rewind`.
    void commit_offset(std::string_view consumer, std::string_view topic, std::uint64_t next_offset,
                       bool rewind = false);

    std::uint64_t committed_offset(std::string_view consumer, std::string_view topic);
    std::uint64_t end_offset(std::string_view topic);
    std::vector<std::string> topics() const;

    const RecoveryReport& recovery_report() const { return recovery_; }
    const std::filesystem::path& data_dir() const { return dir_; }

    /// Wakes blocked fetches (used for shutdown).
    void notify_all();

private:
    struct Topic;
    Topic& topic_for(std::string_view name, bool create);
    Topic* find_topic(std::string_view name);
    void refresh(Topic& t);
    std::filesystem::path offset_path(std::string_view consumer, std::string_view topic) const;
    std::optional<std::uint64_t> read_offset_file(std::string_view consumer, std::string_view topic) const;

    std::filesystem::path dir_;
    BrokerOptions options_;
    RecoveryReport recovery_;

    mutable std::mutex topics_mu_;
    std::map<std::string, std::unique_ptr<Topic>, std::less<>> topics_;

    std::mutex offsets_mu_;
    std::map<std::string, std::uint64_t, std::less<>> offsets_;
};

}  // namespace scorestream

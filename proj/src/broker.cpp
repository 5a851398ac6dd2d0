#include "scorestream/broker.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scorestream/binary_io.hpp"
#include "scorestream/error.hpp"

namespace scorestream {

namespace {

bool all_chars(std::string_view s, bool allow_upper, bool allow_dot) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [&](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
               (allow_upper && c >= 'A' && c <= 'Z') || (allow_dot && c == '.');
    });
}

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string encode_body(std::int64_t enqueue_ms, std::string_view payload) {
    std::string body(8, '\0');
    const auto v = static_cast<std::uint64_t>(enqueue_ms);
    for (int i = 0; i < 8; ++i) body[i] = static_cast<char>(v >> (8 * i));
    body.append(payload);
    return body;
}

Message decode_body(std::uint64_t offset, const std::string& body) {
    if (body.size() < 8) throw integrity_error("broker record at offset " + std::to_string(offset) + " is too short");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(body[i])) << (8 * i);
    return {offset, body.substr(8), static_cast<std::int64_t>(v)};
}

std::string offset_key(std::string_view consumer, std::string_view topic) {
    std::string key(consumer);
    key.push_back('.');
    key.append(topic);
    return key;
}

}  // namespace

bool valid_topic_name(std::string_view topic) { return all_chars(topic, false, true); }
bool valid_consumer_id(std::string_view consumer) { return all_chars(consumer, true, false); }

nlohmann::json RecoveryReport::to_json() const {
    nlohmann::json topics_json = nlohmann::json::array();
    for (const auto& t : topics) {
        topics_json.push_back({{"topic", t.topic}, {"end_offset", t.end_offset}, {"truncated_bytes", t.truncated_bytes}});
    }
    return {{"topics", topics_json}, {"consumer_offsets", consumer_offsets}};
}

struct Broker::Topic {
    Topic(std::string n, const std::filesystem::path& path, bool sync) : name(std::move(n)), file(path, sync) {}

    std::string name;
    FrameFile file;
    std::vector<std::uint64_t> starts;
    std::uint64_t end_bytes = 0;
    std::mutex mu;
    std::condition_variable cv;
};

Broker::Broker(std::filesystem::path data_dir, BrokerOptions options)
    : dir_(std::move(data_dir)), options_(options) {
    if (options_.poll_interval < std::chrono::milliseconds(10)) options_.poll_interval = std::chrono::milliseconds(10);
    std::filesystem::create_directories(dir_ / "offsets");

    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".log") continue;
        auto name = entry.path().stem().string();
        if (valid_topic_name(name)) names.push_back(std::move(name));
    }
    std::sort(names.begin(), names.end());

    for (const auto& name : names) {
        auto topic = std::make_unique<Topic>(name, dir_ / (name + ".log"), options_.sync_writes);
        FrameFile::Lock lock(topic->file, /*exclusive=*/true);
        const auto scan = topic->file.scan(0, /*repair=*/true);
        topic->starts = scan.starts;
        topic->end_bytes = scan.end;
        recovery_.topics.push_back({name, topic->starts.size(), scan.torn_bytes});
        topics_.emplace(name, std::move(topic));
    }

    for (const auto& entry : std::filesystem::directory_iterator(dir_ / "offsets")) {
        if (!entry.is_regular_file()) continue;
        const auto file = entry.path().filename().string();
        const auto dot = file.find('.');
        if (dot == std::string::npos || file.find(".tmp.") != std::string::npos) continue;
        const auto consumer = file.substr(0, dot);
        const auto topic = file.substr(dot + 1);
        if (!valid_consumer_id(consumer) || !valid_topic_name(topic)) continue;
        auto value = read_offset_file(consumer, topic).value_or(0);
        const auto* t = find_topic(topic);
        const std::uint64_t end = t ? t->starts.size() : 0;
        value = std::min(value, end);
        offsets_[offset_key(consumer, topic)] = value;
        recovery_.consumer_offsets[offset_key(consumer, topic)] = value;
    }
}

Broker::~Broker() = default;

Broker::Topic* Broker::find_topic(std::string_view name) {
    std::lock_guard lock(topics_mu_);
    const auto it = topics_.find(name);
    return it == topics_.end() ? nullptr : it->second.get();
}

Broker::Topic& Broker::topic_for(std::string_view name, bool create) {
    if (!valid_topic_name(name)) {
        throw config_error("invalid topic name '" + std::string(name) + "' (allowed: [a-z0-9_.-]+)");
    }
    std::lock_guard lock(topics_mu_);
    auto it = topics_.find(name);
    if (it == topics_.end()) {
        if (!create) throw config_error("unknown topic '" + std::string(name) + "'");
        auto topic = std::make_unique<Topic>(std::string(name), dir_ / (std::string(name) + ".log"),
                                             options_.sync_writes);
        it = topics_.emplace(std::string(name), std::move(topic)).first;
    }
    return *it->second;
}

void Broker::refresh(Topic& t) {
    // Another process may have appended since we last looked.
    if (t.file.size() == t.end_bytes) return;
    FrameFile::Lock lock(t.file, /*exclusive=*/false);
    const auto scan = t.file.scan(t.end_bytes, /*repair=*/false);
    t.starts.insert(t.starts.end(), scan.starts.begin(), scan.starts.end());
    t.end_bytes = scan.end;
}

std::uint64_t Broker::publish(std::string_view topic, std::string_view payload) {
    auto& t = topic_for(topic, /*create=*/true);
    std::lock_guard lock(t.mu);
    FrameFile::Lock file_lock(t.file, /*exclusive=*/true);
    const auto scan = t.file.scan(t.end_bytes, /*repair=*/true, t.starts.size());
    t.starts.insert(t.starts.end(), scan.starts.begin(), scan.starts.end());
    t.end_bytes = scan.end;

    const auto body = encode_body(now_ms(), payload);
    const auto start = t.file.append(body, t.end_bytes);
    t.starts.push_back(start);
    t.end_bytes = start + FrameFile::kHeaderSize + body.size();
    const std::uint64_t offset = t.starts.size() - 1;
    t.cv.notify_all();
    return offset;
}

std::vector<Message> Broker::fetch_batch(std::string_view consumer, std::string_view topic, std::size_t max_messages,
                                         std::chrono::milliseconds max_wait) {
    if (!valid_consumer_id(consumer)) throw config_error("invalid consumer id '" + std::string(consumer) + "'");
    auto& t = topic_for(topic, /*create=*/true);
    const std::uint64_t next = committed_offset(consumer, topic);
    std::vector<Message> out;
    if (max_messages == 0) return out;

    const auto deadline = std::chrono::steady_clock::now() + max_wait;
    std::unique_lock lock(t.mu);
    for (;;) {
        refresh(t);
        if (t.starts.size() > next) break;
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) return out;
        t.cv.wait_for(lock, std::min<std::chrono::steady_clock::duration>(options_.poll_interval, deadline - now));
    }
    const std::uint64_t stop = std::min<std::uint64_t>(t.starts.size(), next + max_messages);
    std::vector<std::uint64_t> positions(t.starts.begin() + static_cast<std::ptrdiff_t>(next),
                                         t.starts.begin() + static_cast<std::ptrdiff_t>(stop));
    lock.unlock();

    out.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        out.push_back(decode_body(next + i, t.file.read_body(positions[i])));
    }
    return out;
}

std::filesystem::path Broker::offset_path(std::string_view consumer, std::string_view topic) const {
    return dir_ / "offsets" / offset_key(consumer, topic);
}

std::optional<std::uint64_t> Broker::read_offset_file(std::string_view consumer, std::string_view topic) const {
    std::ifstream in(offset_path(consumer, topic));
    if (!in) return std::nullopt;
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw integrity_error("corrupt consumer offset file " + offset_path(consumer, topic).string());
    }
    return value;
}

std::uint64_t Broker::committed_offset(std::string_view consumer, std::string_view topic) {
    if (!valid_consumer_id(consumer)) throw config_error("invalid consumer id '" + std::string(consumer) + "'");
    if (!valid_topic_name(topic)) throw config_error("invalid topic name '" + std::string(topic) + "'");
    std::lock_guard lock(offsets_mu_);
    const auto key = offset_key(consumer, topic);
    if (auto it = offsets_.find(key); it != offsets_.end()) return it->second;
    auto value = read_offset_file(consumer, topic);
    if (!value) {
        value = 0;
        write_file_atomic(offset_path(consumer, topic), std::string_view("0\n"), options_.sync_writes);
    }
    offsets_[key] = *value;
    return *value;
}

void Broker::commit_offset(std::string_view consumer, std::string_view topic, std::uint64_t next_offset, bool rewind) {
    const std::uint64_t current = committed_offset(consumer, topic);
    const std::uint64_t end = end_offset(topic);
    if (next_offset > end) {
        throw config_error("commit of offset " + std::to_string(next_offset) + " beyond end of topic '" +
                           std::string(topic) + "' (" + std::to_string(end) + ")");
    }
    if (next_offset < current && !rewind) {
        throw config_error("commit of offset " + std::to_string(next_offset) + " for consumer '" +
                           std::string(consumer) + "' would move back from " + std::to_string(current) +
                           "; pass rewind to allow it");
    }
    std::lock_guard lock(offsets_mu_);
    write_file_atomic(offset_path(consumer, topic), std::to_string(next_offset) + "\n", options_.sync_writes);
    offsets_[offset_key(consumer, topic)] = next_offset;
}

std::uint64_t Broker::end_offset(std::string_view topic) {
    if (!valid_topic_name(topic)) throw config_error("invalid topic name '" + std::string(topic) + "'");
    auto* t = find_topic(topic);
    if (!t) {
        // may have been created by another process
        if (!std::filesystem::exists(dir_ / (std::string(topic) + ".log"))) return 0;
        t = &topic_for(topic, true);
    }
    std::lock_guard lock(t->mu);
    refresh(*t);
    return t->starts.size();
}

std::vector<std::string> Broker::topics() const {
    std::lock_guard lock(topics_mu_);
    std::vector<std::string> out;
    for (const auto& [name, _] : topics_) out.push_back(name);
    return out;
}

void Broker::notify_all() {
    std::lock_guard lock(topics_mu_);
    for (auto& [_, t] : topics_) t->cv.notify_all();
}

}  // namespace scorestream

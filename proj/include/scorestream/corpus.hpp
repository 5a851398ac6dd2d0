#pragma once

// Streaming access to JSON-lines document corpora.
//
// Every record is one JSON object per line. Lines that cannot be admitted
// (malformed JSON, empty text, score out of range) are skipped and counted;
// they never abort a pass and never consume a document index.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace scorestream {

struct ScoreRange {
    double min = 1.0;
    double max = 5.0;

    bool contains(double v) const { return v >= min && v <= max; }
    double clamp(double v) const { return v < min ? min : (v > max ? max : v); }
    bool operator==(const ScoreRange&) const = default;
};

struct FieldMapping {
    std::string text_field = "reviewText";
    std::string score_field = "overall";
    std::string id_field;  ///< optional; empty disables id extraction
    ScoreRange range;

    bool operator==(const FieldMapping&) const = default;
};

struct RawRecord {
    std::string text;
    std::optional<double> score;
    std::optional<std::string> id;
};

enum class SkipReason { Malformed, EmptyText, ScoreOutOfRange };

struct ParseResult {
    std::optional<RawRecord> record;
    SkipReason reason = SkipReason::Malformed;  ///< meaningful only when record is empty

    bool admitted() const { return record.has_value(); }
};

ParseResult parse_record(std::string_view line, const FieldMapping& mapping);

/// Lowercases ASCII letters and splits on every maximal run of ASCII
/// characters that are not letters or digits. Bytes >= 0x80 are kept as
/// token characters so multi-byte UTF-8 letters are not shredded.
std::vector<std::string> tokenize(std::string_view text);

struct TokenizedDocument {
    std::uint64_t doc_index = 0;
    std::vector<std::string> tokens;
    std::optional<double> score;
    std::optional<std::string> id;
};

struct SkipCounters {
    std::uint64_t admitted = 0;
    std::uint64_t skipped_malformed = 0;
    std::uint64_t skipped_empty = 0;
    std::uint64_t skipped_score = 0;

    void count(SkipReason reason);
    nlohmann::json to_json() const;
    bool operator==(const SkipCounters&) const = default;
};

/// Single-pass reader over a JSON-lines file. Holds one line at a time.
class CorpusIterator {
public:
    CorpusIterator(std::filesystem::path path, FieldMapping mapping);

    /// Next admitted document, or nullopt at end of file.
    std::optional<TokenizedDocument> next();

    std::uint64_t byte_offset() const { return offset_; }
    const SkipCounters& counters() const { return counters_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    FieldMapping mapping_;
    std::ifstream in_;
    std::string line_;
    std::uint64_t offset_ = 0;
    std::uint64_t next_index_ = 0;
    SkipCounters counters_;
};

using DocumentVisitor = std::function<void(const TokenizedDocument&)>;

/// A re-iterable document collection. Each call to for_each is one full,
/// independent pass in a fixed order.
class DocumentSource {
public:
    virtual ~DocumentSource() = default;
    virtual void for_each(const DocumentVisitor& visit) const = 0;
};

/// Streams a file on every pass; memory stays bounded by the longest line.
class FileCorpus final : public DocumentSource {
public:
    FileCorpus(std::filesystem::path path, FieldMapping mapping);

    void for_each(const DocumentVisitor& visit) const override;

    /// Counters of the most recent completed pass.
    const SkipCounters& last_counters() const { return counters_; }

private:
    std::filesystem::path path_;
    FieldMapping mapping_;
    mutable SkipCounters counters_;
};

class InMemoryCorpus final : public DocumentSource {
public:
    InMemoryCorpus() = default;
    explicit InMemoryCorpus(std::vector<TokenizedDocument> docs) : docs_(std::move(docs)) {}

    /// Builds documents from raw token lists, indexing them 0..n-1.
    static InMemoryCorpus from_tokens(const std::vector<std::vector<std::string>>& docs);

    void for_each(const DocumentVisitor& visit) const override;

    const std::vector<TokenizedDocument>& documents() const { return docs_; }

private:
    std::vector<TokenizedDocument> docs_;
};

/// Convenience: stream the whole file and collect the admitted documents.
std::vector<TokenizedDocument> read_corpus(const std::filesystem::path& path, const FieldMapping& mapping,
                                           SkipCounters* counters = nullptr);

}  // namespace scorestream

#include "scorestream/corpus.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include <nlohmann/json.hpp>

#include "scorestream/error.hpp"

namespace scorestream {

namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

bool is_token_char(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }

}  // namespace

ParseResult parse_record(std::string_view line, const FieldMapping& mapping) {
    ParseResult out;
    const auto doc = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_object()) return out;

    const auto text_it = doc.find(mapping.text_field);
    if (text_it == doc.end() || !text_it->is_string()) return out;

    RawRecord rec;
    rec.text = text_it->get<std::string>();
    if (trim(rec.text).empty()) {
        out.reason = SkipReason::EmptyText;
        return out;
    }

    const auto score_it = doc.find(mapping.score_field);
    if (score_it != doc.end() && !score_it->is_null()) {
        std::optional<double> score;
        if (score_it->is_number()) {
            score = score_it->get<double>();
        } else if (score_it->is_string()) {
            score = parse_number(score_it->get_ref<const std::string&>());
        }
        if (!score || !std::isfinite(*score)) return out;
        if (!mapping.range.contains(*score)) {
            out.reason = SkipReason::ScoreOutOfRange;
            return out;
        }
        rec.score = score;
    }

    if (!mapping.id_field.empty()) {
        const auto id_it = doc.find(mapping.id_field);
        if (id_it != doc.end()) {
            rec.id = id_it->is_string() ? id_it->get<std::string>() : id_it->dump();
        }
    }
    out.record = std::move(rec);
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (is_token_char(c)) {
            current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

void SkipCounters::count(SkipReason reason) {
    switch (reason) {
    case SkipReason::Malformed: ++skipped_malformed; break;
    case SkipReason::EmptyText: ++skipped_empty; break;
    case SkipReason::ScoreOutOfRange: ++skipped_score; break;
    }
}

nlohmann::json SkipCounters::to_json() const {
    return {{"admitted", admitted},
            {"skipped_malformed", skipped_malformed},
            {"skipped_empty", skipped_empty},
            {"skipped_score", skipped_score}};
}

CorpusIterator::CorpusIterator(std::filesystem::path path, FieldMapping mapping)
    : path_(std::move(path)), mapping_(std::move(mapping)), in_(path_, std::ios::binary) {
    if (!in_) {
        throw config_error("cannot open corpus file " + path_.string());
    }
}

std::optional<TokenizedDocument> CorpusIterator::next() {
    while (std::getline(in_, line_)) {
        offset_ += line_.size() + (in_.eof() ? 0 : 1);

        std::string_view view = line_;
        if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
        if (trim(view).empty()) continue;

        auto parsed = parse_record(view, mapping_);
        if (!parsed.admitted()) {
            counters_.count(parsed.reason);
            continue;
        }
        TokenizedDocument doc;
        doc.tokens = tokenize(parsed.record->text);
        if (doc.tokens.empty()) {
            counters_.count(SkipReason::EmptyText);
            continue;
        }
        doc.doc_index = next_index_++;
        doc.score = parsed.record->score;
        doc.id = std::move(parsed.record->id);
        ++counters_.admitted;
        return doc;
    }
    if (in_.bad()) {
        throw runtime_error("read failure in " + path_.string() + " at byte offset " + std::to_string(offset_));
    }
    return std::nullopt;
}

FileCorpus::FileCorpus(std::filesystem::path path, FieldMapping mapping)
    : path_(std::move(path)), mapping_(std::move(mapping)) {}

void FileCorpus::for_each(const DocumentVisitor& visit) const {
    CorpusIterator it(path_, mapping_);
    while (auto doc = it.next()) {
        visit(*doc);
    }
    counters_ = it.counters();
}

InMemoryCorpus InMemoryCorpus::from_tokens(const std::vector<std::vector<std::string>>& docs) {
    std::vector<TokenizedDocument> out;
    out.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        out.push_back({i, docs[i], std::nullopt, std::nullopt});
    }
    return InMemoryCorpus(std::move(out));
}

void InMemoryCorpus::for_each(const DocumentVisitor& visit) const {
    for (const auto& doc : docs_) visit(doc);
}

std::vector<TokenizedDocument> read_corpus(const std::filesystem::path& path, const FieldMapping& mapping,
                                           SkipCounters* counters) {
    CorpusIterator it(path, mapping);
    std::vector<TokenizedDocument> docs;
    while (auto doc = it.next()) docs.push_back(std::move(*doc));
    if (counters) *counters = it.counters();
    return docs;
}

}  // namespace scorestream

#include "scorestream/synthetic.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include <nlohmann/json.hpp>

#include "scorestream/error.hpp"
#include "scorestream/rng.hpp"

namespace scorestream {

namespace {

constexpr std::array<std::string_view, 40> kPositive = {
    "great",     "excellent", "love",     "perfect",   "amazing",   "wonderful", "fantastic", "best",
    "happy",     "recommend", "superb",   "reliable",  "sturdy",    "beautiful", "awesome",   "pleased",
    "brilliant", "solid",     "delight",  "flawless",  "impressed", "enjoy",     "favorite",  "quality",
    "smooth",    "comfortable", "works",  "worth",     "glad",      "terrific",  "outstanding", "nice",
    "elegant",   "durable",   "fast",     "friendly",  "satisfied", "charming",  "gorgeous",  "handy"};

constexpr std::array<std::string_view, 40> kNegative = {
    "terrible", "awful",    "broken",   "waste",     "poor",     "disappointed", "worst",   "refund",
    "useless",  "cheap",    "flimsy",   "horrible",  "defective", "returned",    "junk",    "annoying",
    "failed",   "bad",      "ugly",     "slow",      "leaking",  "cracked",      "noisy",   "regret",
    "faulty",   "mediocre", "lousy",    "frustrating", "damaged", "missing",     "boring",  "overpriced",
    "sticky",   "weak",     "rough",    "unreliable", "dull",    "confusing",    "painful", "rattles"};

}  // namespace

std::span<const std::string_view> positive_words() { return kPositive; }
std::span<const std::string_view> negative_words() { return kNegative; }

nlohmann::json SyntheticSummary::to_json() const {
    return {{"n_docs", options.n_docs},
            {"seed", options.seed},
            {"min_tokens", options.min_tokens},
            {"max_tokens", options.max_tokens},
            {"noise_bound", options.noise_bound},
            {"positive_pool", positive_pool},
            {"negative_pool", negative_pool},
            {"score_formula", "clip(1 + 4p + U(-noise_bound, noise_bound), 1, 5)"},
            {"mean_score", mean_score}};
}

std::vector<SyntheticDocument> generate_synthetic_documents(const SyntheticOptions& options) {
    if (options.n_docs < 10) throw config_error("synthetic corpus needs n_docs >= 10");
    if (options.min_tokens < 1 || options.max_tokens < options.min_tokens) {
        throw config_error("synthetic corpus token bounds must satisfy 1 <= min_tokens <= max_tokens");
    }
    Rng rng(options.seed);
    std::vector<SyntheticDocument> docs;
    docs.reserve(options.n_docs);
    const std::size_t span = options.max_tokens - options.min_tokens + 1;
    for (std::size_t i = 0; i < options.n_docs; ++i) {
        SyntheticDocument doc;
        doc.mixing = rng.uniform();
        const std::size_t n_tokens = options.min_tokens + rng.below(span);
        std::size_t positives = 0;
        for (std::size_t t = 0; t < n_tokens; ++t) {
            const bool positive = rng.uniform() < doc.mixing;
            const auto pool = positive ? positive_words() : negative_words();
            if (positive) ++positives;
            if (t > 0) doc.text.push_back(' ');
            doc.text += pool[rng.below(pool.size())];
        }
        doc.positive_fraction = static_cast<double>(positives) / static_cast<double>(n_tokens);
        const double noise = rng.uniform(-options.noise_bound, options.noise_bound);
        doc.score = std::clamp(1.0 + 4.0 * doc.mixing + noise, 1.0, 5.0);
        docs.push_back(std::move(doc));
    }
    return docs;
}

SyntheticSummary generate_synthetic_corpus(const SyntheticOptions& options, const std::filesystem::path& out) {
    const auto docs = generate_synthetic_documents(options);
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw runtime_error("cannot write synthetic corpus to " + out.string());

    SyntheticSummary summary;
    summary.options = options;
    summary.positive_pool = kPositive.size();
    summary.negative_pool = kNegative.size();
    double total = 0.0;
    for (const auto& d : docs) {
        nlohmann::json line = {{"reviewText", d.text}, {"overall", d.score}};
        f << line.dump() << '\n';
        total += d.score;
    }
    summary.mean_score = total / static_cast<double>(docs.size());
    f.flush();
    if (!f) throw runtime_error("write failure on " + out.string());
    return summary;
}

}  // namespace scorestream

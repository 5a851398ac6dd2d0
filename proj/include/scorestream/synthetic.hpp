#pragma once

// Seeded generator of scored review-like documents with a known ground truth.
//
// Each document draws a mixing fraction p ~ U(0, 1); every token comes from
// the positive pool with probability p and from the negative pool otherwise.
// The score is 1 + 4p plus bounded uniform noise, clipped to [1, 5].

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace scorestream {

struct SyntheticOptions {
    std::size_t n_docs = 2000;
    std::uint64_t seed = 1;
    std::size_t min_tokens = 10;
    std::size_t max_tokens = 50;
    double noise_bound = 0.25;
};

struct SyntheticDocument {
    std::string text;
    double score = 0.0;
    double mixing = 0.0;             ///< the drawn p
    double positive_fraction = 0.0;  ///< realized share of positive tokens
};

struct SyntheticSummary {
    SyntheticOptions options;
    std::size_t positive_pool = 0;
    std::size_t negative_pool = 0;
    double mean_score = 0.0;

    nlohmann::json to_json() const;
};

std::span<const std::string_view> positive_words();
std::span<const std::string_view> negative_words();

/// Throws config_error when n_docs < 10.
std::vector<SyntheticDocument> generate_synthetic_documents(const SyntheticOptions& options);

/// Writes JSON lines {"reviewText": ..., "overall": ...}.
SyntheticSummary generate_synthetic_corpus(const SyntheticOptions& options, const std::filesystem::path& out);

}  // namespace scorestream

#pragma once

// Paragraph vectors (distributed-memory variant) trained with negative
// sampling, plus inference of vectors for unseen documents.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scorestream/corpus.hpp"

namespace scorestream {

struct EmbeddingParams {
    std::uint32_t dim = 100;
    std::uint32_t window = 5;
    std::uint32_t negatives = 5;
    std::uint32_t epochs = 10;
    double alpha_start = 0.025;
    double alpha_end = 0.0001;
    std::uint32_t min_count = 2;
    std::uint64_t seed = 1;
    double subsample_t = 0.0;  ///< 0 disables frequent-word subsampling
    std::uint32_t infer_steps = 50;

    /// Throws config_error on values training cannot run with.
    void validate() const;
    bool operator==(const EmbeddingParams&) const = default;
};

class Vocabulary {
public:
    struct Entry {
        std::string token;
        std::uint64_t count = 0;
        bool operator==(const Entry&) const = default;
    };

    Vocabulary() = default;

    /// Keeps tokens with count >= min_count, ordered by count descending then
    /// token ascending. Throws config_error when nothing survives.
    static Vocabulary from_counts(const std::unordered_map<std::string, std::uint64_t>& counts,
                                  std::uint64_t min_count);
    static Vocabulary build(const DocumentSource& corpus, std::uint64_t min_count);

    /// Entries must already be in canonical order (used by the model loader).
    static Vocabulary from_entries(std::vector<Entry> entries);

    std::optional<std::uint32_t> index_of(std::string_view token) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<Entry>& entries() const { return entries_; }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }

    /// Sum of the counts of the retained tokens.
    std::uint64_t total_count() const { return total_; }

    bool operator==(const Vocabulary& o) const { return entries_ == o.entries_; }

private:
    struct Hash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
    };
    void index();

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::uint32_t, Hash, std::equal_to<>> lookup_;
    std::uint64_t total_ = 0;
};

/// p(w) proportional to count(w)^0.75.
std::vector<double> build_noise_table(const Vocabulary& vocab);

/// Draws word indices from a noise distribution by inverse CDF.
class NoiseSampler {
public:
    NoiseSampler() = default;
    explicit NoiseSampler(std::span<const double> probabilities);

    template <class R>
    std::uint32_t sample(R& rng) const {
        const double u = rng.uniform();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;
        return static_cast<std::uint32_t>(it - cdf_.begin());
    }

private:
    std::vector<double> cdf_;
};

/// Dense row-major float matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    bool all_finite() const;
    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

struct ParagraphVectorModel {
    Vocabulary vocab;
    EmbeddingParams params;
    Matrix word_in;   ///< V x D context word vectors
    Matrix word_out;  ///< V x D output (prediction) vectors
    Matrix doc_vecs;  ///< K x D, one row per admitted training document
    std::vector<double> noise;
    NoiseSampler sampler;

    std::size_t dim() const { return params.dim; }
    std::size_t document_count() const { return doc_vecs.rows(); }

    /// CRC32 over word_in and word_out; inference must never change it.
    std::uint32_t word_weights_checksum() const;

    bool operator==(const ParagraphVectorModel& o) const {
        return vocab == o.vocab && params == o.params && word_in == o.word_in && word_out == o.word_out &&
               doc_vecs == o.doc_vecs && noise == o.noise;
    }
};

struct EpochStats {
    std::uint32_t epoch = 0;  ///< 1-based
    double mean_loss = 0.0;
    double alpha = 0.0;  ///< learning rate at the end of the epoch

    nlohmann::json to_json() const;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Builds the vocabulary with one pass, then trains for params.epochs passes.
/// Deterministic: identical corpus, params and seed give a bit-identical model.
/// Throws config_error on bad params, runtime_error on divergence.
ParagraphVectorModel train_paragraph_vectors(const DocumentSource& corpus, const EmbeddingParams& params,
                                             const EpochCallback& on_epoch = {});

/// Same, reusing a vocabulary that was already built over `corpus`.
ParagraphVectorModel train_paragraph_vectors(const DocumentSource& corpus, Vocabulary vocab,
                                             const EmbeddingParams& params, const EpochCallback& on_epoch = {});

struct InferredVector {
    std::vector<float> values;
    bool degenerate = false;  ///< every token was out of vocabulary
};

/// Fits a fresh document vector against the frozen word matrices. Seeded from
/// the model seed and the token sequence, so repeated calls agree exactly.
/// Safe to call concurrently on a shared const model.
InferredVector infer_vector(const ParagraphVectorModel& model, std::span<const std::string> tokens,
                            std::optional<std::uint32_t> steps = std::nullopt);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

inline constexpr std::uint32_t kParagraphModelVersion = 1;

std::vector<std::uint8_t> serialize_model(const ParagraphVectorModel& model);
ParagraphVectorModel deserialize_model(std::span<const std::uint8_t> bytes);

/// Atomic write (temp file + rename).
void save_model(const ParagraphVectorModel& model, const std::filesystem::path& path);
ParagraphVectorModel load_model(const std::filesystem::path& path);

}  // namespace scorestream

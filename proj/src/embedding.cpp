#include "scorestream/embedding.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "scorestream/binary_io.hpp"
#include "scorestream/embedding_math.hpp"
#include "scorestream/error.hpp"
#include "scorestream/rng.hpp"

namespace scorestream {

namespace em = embedding_math;

void EmbeddingParams::validate() const {
    if (dim < 1) throw config_error("embedding.dim must be >= 1");
    if (epochs < 1) throw config_error("embedding.epochs must be >= 1");
    if (negatives < 1) throw config_error("embedding.negatives must be >= 1");
    if (!(alpha_start > 0.0) || !(alpha_end >= 0.0) || alpha_end > alpha_start) {
        throw config_error("embedding learning rates must satisfy 0 <= alpha_end <= alpha_start, alpha_start > 0");
    }
    if (subsample_t < 0.0) throw config_error("embedding.subsample_t must be >= 0");
    if (infer_steps < 1) throw config_error("embedding.infer_steps must be >= 1");
}

// ---------------------------------------------------------------- vocabulary

Vocabulary Vocabulary::from_counts(const std::unordered_map<std::string, std::uint64_t>& counts,
                                   std::uint64_t min_count) {
    std::vector<Entry> entries;
    for (const auto& [token, count] : counts) {
        if (count >= min_count) entries.push_back({token, count});
    }
    if (entries.empty()) {
        throw config_error("vocabulary is empty after applying min_count=" + std::to_string(min_count) + " to " +
                           std::to_string(counts.size()) + " distinct tokens");
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.count != b.count ? a.count > b.count : a.token < b.token;
    });
    return from_entries(std::move(entries));
}

Vocabulary Vocabulary::build(const DocumentSource& corpus, std::uint64_t min_count) {
    std::unordered_map<std::string, std::uint64_t> counts;
    std::size_t docs = 0;
    corpus.for_each([&](const TokenizedDocument& doc) {
        ++docs;
        for (const auto& t : doc.tokens) ++counts[t];
    });
    if (docs == 0) throw config_error("cannot build a vocabulary from an empty corpus");
    return from_counts(counts, min_count);
}

Vocabulary Vocabulary::from_entries(std::vector<Entry> entries) {
    Vocabulary v;
    v.entries_ = std::move(entries);
    v.index();
    return v;
}

void Vocabulary::index() {
    lookup_.clear();
    lookup_.reserve(entries_.size());
    total_ = 0;
    for (std::uint32_t i = 0; i < entries_.size(); ++i) {
        lookup_.emplace(entries_[i].token, i);
        total_ += entries_[i].count;
    }
}

std::optional<std::uint32_t> Vocabulary::index_of(std::string_view token) const {
    const auto it = lookup_.find(token);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------- noise

std::vector<double> build_noise_table(const Vocabulary& vocab) {
    std::vector<double> p(vocab.size());
    double z = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        p[i] = std::pow(static_cast<double>(vocab[i].count), 0.75);
        z += p[i];
    }
    for (auto& x : p) x /= z;
    return p;
}

NoiseSampler::NoiseSampler(std::span<const double> probabilities) : cdf_(probabilities.size()) {
    std::partial_sum(probabilities.begin(), probabilities.end(), cdf_.begin());
}

// ---------------------------------------------------------------- matrix

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float x) { return std::isfinite(x); });
}

std::uint32_t ParagraphVectorModel::word_weights_checksum() const {
    const auto bytes = [](const Matrix& m) {
        return std::span(reinterpret_cast<const std::uint8_t*>(m.data().data()), m.data().size_bytes());
    };
    return crc32(bytes(word_out), crc32(bytes(word_in)));
}

nlohmann::json EpochStats::to_json() const {
    return {{"epoch", epoch}, {"mean_loss", mean_loss}, {"alpha", alpha}};
}

// ---------------------------------------------------------------- training

namespace {

void init_uniform(Matrix& m, Rng& rng) {
    const double half = 0.5 / static_cast<double>(m.cols());
    for (auto& x : m.data()) x = static_cast<float>(rng.uniform(-half, half));
}

/// One prediction of `center` from the document vector and context words.
/// Returns the loss. The document vector is always updated; word matrices are
/// updated through `trainable` only (nullptr during inference).
class PvdmStep {
public:
    PvdmStep(std::size_t dim, std::uint32_t negatives)
        : hidden_(dim), grad_(dim), coeff_(negatives + 1) {
        rows_.reserve(negatives + 1);
        row_ids_.reserve(negatives + 1);
        contexts_.reserve(64);
    }

    double run(std::span<float> doc, std::span<const std::uint32_t> context_ids, std::uint32_t center,
               const ParagraphVectorModel& model, Rng& rng, double alpha, ParagraphVectorModel* trainable) {
        const Matrix& word_in = model.word_in;
        const Matrix& word_out = model.word_out;
        const std::uint32_t negatives = model.params.negatives;
        contexts_.clear();
        for (auto id : context_ids) contexts_.push_back(word_in.row(id));
        em::pvdm_hidden<float>(doc, contexts_, hidden_);

        rows_.clear();
        row_ids_.clear();
        rows_.push_back(word_out.row(center));
        row_ids_.push_back(center);
        for (std::uint32_t n = 0; n < negatives; ++n) {
            const std::uint32_t w = model.sampler.sample(rng);
            if (w == center) continue;
            rows_.push_back(word_out.row(w));
            row_ids_.push_back(w);
        }

        const double loss = em::ns_loss_and_grad<float>(
            hidden_, std::span<const std::span<const float>>(rows_), grad_, std::span(coeff_.data(), rows_.size()));

        if (trainable) {
            for (std::size_t j = 0; j < row_ids_.size(); ++j) {
                auto out = trainable->word_out.row(row_ids_[j]);
                const float step = static_cast<float>(alpha * coeff_[j]);
                for (std::size_t d = 0; d < out.size(); ++d) out[d] -= step * hidden_[d];
            }
        }
        const float scale = static_cast<float>(alpha / static_cast<double>(context_ids.size() + 1));
        for (std::size_t d = 0; d < doc.size(); ++d) doc[d] -= scale * grad_[d];
        if (trainable) {
            for (auto id : context_ids) {
                auto row = trainable->word_in.row(id);
                for (std::size_t d = 0; d < row.size(); ++d) row[d] -= scale * grad_[d];
            }
        }
        return loss;
    }

private:
    std::vector<float> hidden_;
    std::vector<float> grad_;
    std::vector<double> coeff_;
    std::vector<std::span<const float>> contexts_;
    std::vector<std::span<const float>> rows_;
    std::vector<std::uint32_t> row_ids_;
};

/// Maps tokens to vocabulary ids, dropping out-of-vocabulary tokens.
void to_ids(const Vocabulary& vocab, std::span<const std::string> tokens, std::vector<std::uint32_t>& out) {
    out.clear();
    for (const auto& t : tokens) {
        if (auto id = vocab.index_of(t)) out.push_back(*id);
    }
}

/// Runs every center position of one document once.
double document_pass(std::span<float> doc, std::span<const std::uint32_t> ids, const ParagraphVectorModel& model,
                     Rng& rng, PvdmStep& step, double alpha, ParagraphVectorModel* trainable,
                     std::vector<std::uint32_t>& ctx) {
    const std::size_t window = model.params.window;
    double loss = 0.0;
    const std::size_t n = ids.size();
    for (std::size_t i = 0; i < n; ++i) {
        ctx.clear();
        const std::size_t lo = i >= window ? i - window : 0;
        const std::size_t hi = std::min(n, i + window + 1);
        for (std::size_t j = lo; j < hi; ++j) {
            if (j != i) ctx.push_back(ids[j]);
        }
        loss += step.run(doc, ctx, ids[i], model, rng, alpha, trainable);
    }
    return loss;
}

}  // namespace

ParagraphVectorModel train_paragraph_vectors(const DocumentSource& corpus, const EmbeddingParams& params,
                                             const EpochCallback& on_epoch) {
    params.validate();
    return train_paragraph_vectors(corpus, Vocabulary::build(corpus, params.min_count), params, on_epoch);
}

ParagraphVectorModel train_paragraph_vectors(const DocumentSource& corpus, Vocabulary vocab,
                                             const EmbeddingParams& params, const EpochCallback& on_epoch) {
    params.validate();
    if (vocab.empty()) throw config_error("cannot train with an empty vocabulary");

    std::size_t doc_count = 0;
    std::uint64_t positions_per_epoch = 0;
    corpus.for_each([&](const TokenizedDocument& doc) {
        ++doc_count;
        for (const auto& t : doc.tokens) {
            if (vocab.index_of(t)) ++positions_per_epoch;
        }
    });
    if (doc_count == 0) throw config_error("cannot train paragraph vectors on an empty corpus");

    ParagraphVectorModel model;
    model.vocab = std::move(vocab);
    model.params = params;
    const std::size_t V = model.vocab.size();
    const std::size_t D = params.dim;
    model.word_in = Matrix(V, D);
    model.word_out = Matrix(V, D);
    model.doc_vecs = Matrix(doc_count, D);
    model.noise = build_noise_table(model.vocab);
    model.sampler = NoiseSampler(model.noise);

    Rng rng(params.seed);
    init_uniform(model.word_in, rng);
    init_uniform(model.doc_vecs, rng);

    // keep probability for frequent-word subsampling, per vocabulary id
    std::vector<double> keep(V, 1.0);
    if (params.subsample_t > 0.0) {
        const double threshold = params.subsample_t * static_cast<double>(model.vocab.total_count());
        for (std::size_t i = 0; i < V; ++i) {
            const double c = static_cast<double>(model.vocab[i].count);
            keep[i] = std::min(1.0, (std::sqrt(c / threshold) + 1.0) * threshold / c);
        }
    }

    PvdmStep step(D, params.negatives);
    std::vector<std::uint32_t> ids, kept, ctx;
    const double total_positions = static_cast<double>(positions_per_epoch) * params.epochs;
    std::uint64_t seen = 0;
    double alpha = params.alpha_start;

    for (std::uint32_t epoch = 1; epoch <= params.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::uint64_t predictions = 0;
        std::size_t row = 0;
        corpus.for_each([&](const TokenizedDocument& doc) {
            to_ids(model.vocab, doc.tokens, ids);
            const std::uint64_t in_vocab = ids.size();
            if (params.subsample_t > 0.0) {
                kept.clear();
                for (auto id : ids) {
                    if (keep[id] >= 1.0 || rng.uniform() < keep[id]) kept.push_back(id);
                }
                ids.swap(kept);
            }
            const double progress = total_positions > 0 ? static_cast<double>(seen) / total_positions : 0.0;
            alpha = std::max(params.alpha_end, params.alpha_start - (params.alpha_start - params.alpha_end) * progress);
            epoch_loss += document_pass(model.doc_vecs.row(row), ids, model, rng, step, alpha, &model, ctx);
            predictions += ids.size();
            seen += in_vocab;
            ++row;
        });
        if (row != doc_count) {
            throw runtime_error("corpus changed between passes: expected " + std::to_string(doc_count) +
                                " documents, saw " + std::to_string(row));
        }
        const double mean_loss = predictions ? epoch_loss / static_cast<double>(predictions) : 0.0;
        if (!std::isfinite(mean_loss)) {
            throw runtime_error("paragraph vector training diverged in epoch " + std::to_string(epoch) +
                                "; last good epoch " + std::to_string(epoch - 1));
        }
        if (on_epoch) on_epoch({epoch, mean_loss, alpha});
    }
    if (!model.word_in.all_finite() || !model.word_out.all_finite() || !model.doc_vecs.all_finite()) {
        throw runtime_error("paragraph vector training produced non-finite weights; last good epoch " +
                            std::to_string(params.epochs - 1));
    }
    return model;
}

InferredVector infer_vector(const ParagraphVectorModel& model, std::span<const std::string> tokens,
                            std::optional<std::uint32_t> steps) {
    const std::size_t D = model.dim();
    InferredVector out;
    out.values.assign(D, 0.0f);

    std::vector<std::uint32_t> ids;
    to_ids(model.vocab, tokens, ids);
    if (ids.empty()) {
        out.degenerate = true;
        return out;
    }

    std::uint64_t h = fnv1a({});
    for (const auto& t : tokens) {
        h = fnv1a(t, h);
        h = fnv1a("\x1f", h);
    }
    Rng rng(mix_seed(model.params.seed ^ h));
    const double half = 0.5 / static_cast<double>(D);
    for (auto& x : out.values) x = static_cast<float>(rng.uniform(-half, half));

    PvdmStep step(D, model.params.negatives);
    std::vector<std::uint32_t> ctx;
    const std::uint32_t n_steps = steps.value_or(model.params.infer_steps);
    const auto& p = model.params;
    // Spread the step size a training document received over its `epochs`
    // passes across the inference passes; otherwise the vector keeps growing
    // with every extra pass and drifts away from the trained vectors.
    const double scale = static_cast<double>(p.epochs) / static_cast<double>(std::max<std::uint32_t>(n_steps, 1));
    for (std::uint32_t s = 0; s < n_steps; ++s) {
        const double progress = n_steps > 1 ? static_cast<double>(s) / (n_steps - 1) : 0.0;
        const double alpha = scale * (p.alpha_start - (p.alpha_start - p.alpha_end) * progress);
        document_pass(out.values, ids, model, rng, step, alpha, nullptr, ctx);
    }
    return out;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    const double ab = em::dot(a, b);
    const double aa = em::dot(a, a);
    const double bb = em::dot(b, b);
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

// ---------------------------------------------------------------- persistence

namespace {

constexpr std::string_view kMagic = "RRPV";

void write_matrix(ByteWriter& w, const Matrix& m) {
    w.u64(m.rows());
    w.u64(m.cols());
    for (float x : m.data()) w.f32(x);
}

Matrix read_matrix(ByteReader& r, std::size_t expect_cols, const char* name) {
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (cols != expect_cols) {
        throw integrity_error(std::string("model matrix ") + name + " has " + std::to_string(cols) +
                              " columns, expected " + std::to_string(expect_cols));
    }
    if (rows != 0 && r.remaining() / (4 * cols) < rows) {
        throw integrity_error(std::string("model matrix ") + name + " is truncated");
    }
    Matrix m(rows, cols);
    for (auto& x : m.data()) x = r.f32();
    return m;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ParagraphVectorModel& model) {
    ByteWriter w;
    w.raw(kMagic);
    w.u32(kParagraphModelVersion);

    w.u64(model.vocab.size());
    for (const auto& e : model.vocab.entries()) {
        w.str(e.token);
        w.u64(e.count);
    }

    const auto& p = model.params;
    w.u32(p.dim);
    w.u32(p.window);
    w.u32(p.negatives);
    w.u32(p.epochs);
    w.f64(p.alpha_start);
    w.f64(p.alpha_end);
    w.u32(p.min_count);
    w.u64(p.seed);
    w.f64(p.subsample_t);
    w.u32(p.infer_steps);

    write_matrix(w, model.word_in);
    write_matrix(w, model.word_out);
    write_matrix(w, model.doc_vecs);

    auto bytes = w.take();
    const std::uint32_t crc = crc32(bytes);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
    return bytes;
}

ParagraphVectorModel deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kMagic) {
        throw integrity_error("not a paragraph vector model (bad magic header)");
    }
    ByteReader header(bytes.subspan(4, 4));
    const auto version = header.u32();
    if (version != kParagraphModelVersion) {
        throw integrity_error("unsupported paragraph vector model version " + std::to_string(version) +
                              " (expected " + std::to_string(kParagraphModelVersion) + ")");
    }
    if (bytes.size() < 12) throw integrity_error("paragraph vector model is truncated");
    const auto body = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4));
    if (tail.u32() != crc32(body)) {
        throw integrity_error("paragraph vector model checksum mismatch (truncated or corrupt file)");
    }

    ByteReader r(body.subspan(8));
    const auto vocab_size = r.u64();
    if (vocab_size == 0 || vocab_size > r.remaining()) throw integrity_error("paragraph vector model has a bad vocabulary size");
    std::vector<Vocabulary::Entry> entries;
    entries.reserve(vocab_size);
    for (std::uint64_t i = 0; i < vocab_size; ++i) {
        auto token = r.str();
        const auto count = r.u64();
        entries.push_back({std::move(token), count});
    }

    ParagraphVectorModel model;
    model.vocab = Vocabulary::from_entries(std::move(entries));
    auto& p = model.params;
    p.dim = r.u32();
    p.window = r.u32();
    p.negatives = r.u32();
    p.epochs = r.u32();
    p.alpha_start = r.f64();
    p.alpha_end = r.f64();
    p.min_count = r.u32();
    p.seed = r.u64();
    p.subsample_t = r.f64();
    p.infer_steps = r.u32();
    if (p.dim == 0) throw integrity_error("paragraph vector model has zero dimension");

    model.word_in = read_matrix(r, p.dim, "word_in");
    model.word_out = read_matrix(r, p.dim, "word_out");
    model.doc_vecs = read_matrix(r, p.dim, "doc_vecs");
    if (model.word_in.rows() != vocab_size || model.word_out.rows() != vocab_size) {
        throw integrity_error("paragraph vector model word matrices do not match the vocabulary size");
    }
    if (r.remaining() != 0) throw integrity_error("trailing bytes in paragraph vector model");

    model.noise = build_noise_table(model.vocab);
    model.sampler = NoiseSampler(model.noise);
    return model;
}

void save_model(const ParagraphVectorModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_model(model));
}

ParagraphVectorModel load_model(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw integrity_error("paragraph vector model not found: " + path.string());
    }
    try {
        return deserialize_model(read_file_bytes(path));
    } catch (const Error& e) {
        throw integrity_error(path.string() + ": " + e.what());
    }
}

}  // namespace scorestream

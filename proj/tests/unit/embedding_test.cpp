#include <cmath>
#include <atomic>
#include <numeric>
#include <thread>

#include <gtest/gtest.h>

#include "gradient_check.hpp"
#include "scorestream/binary_io.hpp"
#include "scorestream/embedding.hpp"
#include "scorestream/error.hpp"
#include "scorestream/synthetic.hpp"
#include "test_support.hpp"

using namespace scorestream;
using scorestream::testing::TempDir;

namespace {

InMemoryCorpus synthetic_corpus(std::size_t n, std::uint64_t seed) {
    SyntheticOptions o;
    o.n_docs = n;
    o.seed = seed;
    std::vector<std::vector<std::string>> docs;
    for (const auto& d : generate_synthetic_documents(o)) docs.push_back(tokenize(d.text));
    return InMemoryCorpus::from_tokens(docs);
}

EmbeddingParams small_params() {
    EmbeddingParams p;
    p.dim = 16;
    p.epochs = 10;
    p.seed = 7;
    return p;
}

const ParagraphVectorModel& shared_model() {
    static const ParagraphVectorModel model = [] {
        auto p = small_params();
        p.alpha_start = 0.1;
        return train_paragraph_vectors(synthetic_corpus(50, 7), p);
    }();
    return model;
}

}  // namespace

TEST(Vocabulary, CountsAndIndices) {
    const auto corpus = InMemoryCorpus::from_tokens({{"a", "b", "a"}, {"a"}});
    const auto v = Vocabulary::build(corpus, 1);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[0].token, "a");
    EXPECT_EQ(v[0].count, 3u);
    EXPECT_EQ(v[1].token, "b");
    EXPECT_EQ(v[1].count, 1u);
    EXPECT_EQ(*v.index_of("a"), 0u);
    EXPECT_EQ(*v.index_of("b"), 1u);
    EXPECT_FALSE(v.index_of("c"));
    EXPECT_EQ(v.total_count(), 4u);
}

TEST(Vocabulary, MinCountThreshold) {
    const auto v = Vocabulary::build(InMemoryCorpus::from_tokens({{"a", "b", "a"}, {"a"}}), 2);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].token, "a");
}

TEST(Vocabulary, LexicographicTieBreak) {
    const auto v = Vocabulary::from_counts({{"y", 2}, {"x", 2}}, 1);
    EXPECT_EQ(*v.index_of("x"), 0u);
    EXPECT_EQ(*v.index_of("y"), 1u);
}

TEST(Vocabulary, EmptyAfterFilteringIsFatal) {
    EXPECT_THROW(Vocabulary::build(InMemoryCorpus::from_tokens({{"a"}, {"b"}}), 5), Error);
    EXPECT_THROW(Vocabulary::build(InMemoryCorpus{}, 1), Error);
}

TEST(NoiseTable, FormulaValues) {
    const auto p = build_noise_table(Vocabulary::from_counts({{"a", 4}, {"b", 1}}, 1));
    const double z = std::pow(4.0, 0.75) + 1.0;
    EXPECT_NEAR(p[0], std::pow(4.0, 0.75) / z, 1e-12);
    EXPECT_NEAR(p[0], 0.7388, 1e-4);
    EXPECT_NEAR(p[1], 0.2612, 1e-4);

    const auto even = build_noise_table(Vocabulary::from_counts({{"a", 1}, {"b", 1}}, 1));
    EXPECT_DOUBLE_EQ(even[0], 0.5);
    EXPECT_DOUBLE_EQ(even[1], 0.5);
    EXPECT_DOUBLE_EQ(build_noise_table(Vocabulary::from_counts({{"solo", 9}}, 1))[0], 1.0);
}

TEST(NoiseTable, SumsToOne) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::unordered_map<std::string, std::uint64_t> counts;
        const auto n = 1 + rng.below(2000);
        for (std::uint64_t i = 0; i < n; ++i) counts["w" + std::to_string(i)] = 1 + rng.below(100000);
        const auto p = build_noise_table(Vocabulary::from_counts(counts, 1));
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    }
}

TEST(NoiseTable, SamplerFollowsDistribution) {
    const std::vector<double> p{0.7, 0.2, 0.1};
    NoiseSampler s(p);
    Rng rng(11);
    std::vector<int> hits(3);
    const int n = 200000;
    for (int i = 0; i < n; ++i) ++hits[s.sample(rng)];
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(hits[i] / double(n), p[i], 0.005);
}

TEST(EmbeddingGradient, NegativeSamplingMatchesFiniteDifferences) {
    const auto r = scorestream::testing::check_negative_sampling(40, 2024);
    EXPECT_GE(r.configurations, 20);
    EXPECT_LT(r.worst_relative_error, 1e-4);
}

TEST(EmbeddingParams, Validation) {
    auto p = small_params();
    p.epochs = 0;
    EXPECT_THROW(p.validate(), Error);
    EXPECT_THROW(train_paragraph_vectors(synthetic_corpus(20, 1), p), Error);
    p = small_params();
    p.dim = 0;
    EXPECT_THROW(p.validate(), Error);
    p = small_params();
    p.alpha_end = 1.0;
    EXPECT_THROW(p.validate(), Error);
}

TEST(Training, LossDecreasesOverFirstEpochs) {
    // alpha_start is raised from the default: at 0.025 the first epochs sit on
    // the plateau created by the zero-initialized output matrix.
    auto p = small_params();
    p.alpha_start = 0.1;
    std::vector<EpochStats> trace;
    train_paragraph_vectors(synthetic_corpus(50, 7), p, [&](const EpochStats& s) { trace.push_back(s); });
    ASSERT_EQ(trace.size(), 10u);
    EXPECT_LT(trace[1].mean_loss, trace[0].mean_loss);
    EXPECT_LT(trace[2].mean_loss, trace[1].mean_loss);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        EXPECT_EQ(trace[i].epoch, i + 1);
        EXPECT_TRUE(std::isfinite(trace[i].mean_loss));
        if (i > 0) EXPECT_LT(trace[i].alpha, trace[i - 1].alpha);
    }
}

TEST(Training, ModelShapeAndFiniteness) {
    const auto& m = shared_model();
    EXPECT_EQ(m.doc_vecs.rows(), 50u);
    EXPECT_EQ(m.doc_vecs.cols(), 16u);
    EXPECT_EQ(m.word_in.rows(), m.vocab.size());
    EXPECT_EQ(m.word_out.rows(), m.vocab.size());
    EXPECT_TRUE(m.word_in.all_finite());
    EXPECT_TRUE(m.word_out.all_finite());
    EXPECT_TRUE(m.doc_vecs.all_finite());
    EXPECT_NEAR(std::accumulate(m.noise.begin(), m.noise.end(), 0.0), 1.0, 1e-9);
}

TEST(Training, SameSeedIsBitIdentical) {
    auto p = small_params();
    const auto a = train_paragraph_vectors(synthetic_corpus(50, 7), p);
    const auto b = train_paragraph_vectors(synthetic_corpus(50, 7), p);
    EXPECT_TRUE(a == b);
    EXPECT_EQ(serialize_model(a), serialize_model(b));
    p.seed = 8;
    const auto c = train_paragraph_vectors(synthetic_corpus(50, 7), p);
    EXPECT_FALSE(a.doc_vecs == c.doc_vecs);
}

TEST(Training, SubsamplingRunsAndStaysFinite) {
    auto p = small_params();
    p.subsample_t = 1e-3;
    const auto m = train_paragraph_vectors(synthetic_corpus(60, 2), p);
    EXPECT_TRUE(m.doc_vecs.all_finite());
    EXPECT_EQ(m.doc_vecs.rows(), 60u);
}

TEST(Training, DivergenceIsReported) {
    auto p = small_params();
    p.alpha_start = 1e30;
    p.alpha_end = 1e30;
    try {
        train_paragraph_vectors(synthetic_corpus(30, 1), p);
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Runtime);
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
    }
}

TEST(Inference, SelfRetrievalOnToyModel) {
    // Trained longer and with a larger step than the defaults so that 50
    // documents over an 80-word vocabulary separate.
    auto p = small_params();
    p.alpha_start = 0.1;
    p.epochs = 100;
    const auto corpus = synthetic_corpus(50, 7);
    const auto m = train_paragraph_vectors(corpus, p);
    int hits = 0;
    for (const auto& doc : corpus.documents()) {
        const auto v = infer_vector(m, doc.tokens);
        std::size_t best = 0;
        double best_cos = -2.0;
        for (std::size_t j = 0; j < m.doc_vecs.rows(); ++j) {
            const double c = cosine_similarity(v.values, m.doc_vecs.row(j));
            if (c > best_cos) {
                best_cos = c;
                best = j;
            }
        }
        hits += best == doc.doc_index ? 1 : 0;
    }
    EXPECT_GE(hits, 40) << hits << "/50 top-1 self matches";
}

TEST(Inference, AllOutOfVocabularyIsDegenerateZero) {
    const std::vector<std::string> tokens{"zzzz", "qqqq"};
    const auto v = infer_vector(shared_model(), tokens);
    EXPECT_TRUE(v.degenerate);
    ASSERT_EQ(v.values.size(), 16u);
    for (float x : v.values) EXPECT_EQ(x, 0.0f);
    EXPECT_TRUE(infer_vector(shared_model(), std::vector<std::string>{}).degenerate);
}

TEST(Inference, DeterministicAndIsolated) {
    const auto& m = shared_model();
    const auto before = m.word_weights_checksum();
    const auto docs = synthetic_corpus(10, 99);
    for (int round = 0; round < 3; ++round) {
        for (const auto& d : docs.documents()) {
            const auto a = infer_vector(m, d.tokens);
            const auto b = infer_vector(m, d.tokens);
            EXPECT_FALSE(a.degenerate);
            EXPECT_EQ(a.values, b.values);
            for (float x : a.values) EXPECT_TRUE(std::isfinite(x));
        }
    }
    EXPECT_EQ(before, m.word_weights_checksum());
}

TEST(Inference, ConcurrentCallsAgree) {
    const auto& m = shared_model();
    const std::vector<std::string> tokens{"great", "awful", "love", "broken"};
    const auto expected = infer_vector(m, tokens).values;
    std::vector<std::thread> threads;
    std::atomic<int> mismatches{0};
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&] {
            for (int i = 0; i < 20; ++i) mismatches += infer_vector(m, tokens).values == expected ? 0 : 1;
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(mismatches, 0);
}

TEST(Persistence, RoundTripIsBitwiseEqual) {
    TempDir dir;
    const auto& m = shared_model();
    save_model(m, dir / "m.rrpv");
    const auto loaded = load_model(dir / "m.rrpv");
    EXPECT_TRUE(loaded == m);
    EXPECT_EQ(loaded.params, m.params);
    EXPECT_EQ(serialize_model(loaded), serialize_model(m));
    const std::vector<std::string> tokens{"great", "value"};
    EXPECT_EQ(infer_vector(loaded, tokens).values, infer_vector(m, tokens).values);
}

TEST(Persistence, WrongMagicIsRejected) {
    TempDir dir;
    auto bytes = serialize_model(shared_model());
    bytes[0] = 'X';
    write_file_atomic(dir / "bad.rrpv", bytes);
    try {
        load_model(dir / "bad.rrpv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Integrity);
    }
}

TEST(Persistence, WrongVersionIsRejected) {
    TempDir dir;
    auto bytes = serialize_model(shared_model());
    bytes[4] = 99;
    write_file_atomic(dir / "v.rrpv", bytes);
    try {
        load_model(dir / "v.rrpv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Integrity);
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
    }
}

TEST(Persistence, TruncatedFileIsIntegrityError) {
    TempDir dir;
    auto bytes = serialize_model(shared_model());
    bytes.resize(bytes.size() - 100);
    write_file_atomic(dir / "t.rrpv", bytes);
    try {
        load_model(dir / "t.rrpv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Integrity);
    }
    EXPECT_THROW(load_model(dir / "missing.rrpv"), Error);
}

TEST(Persistence, FlippedByteFailsChecksum) {
    TempDir dir;
    auto bytes = serialize_model(shared_model());
    bytes[bytes.size() / 2] ^= 0x40;
    write_file_atomic(dir / "f.rrpv", bytes);
    EXPECT_THROW(load_model(dir / "f.rrpv"), Error);
}

TEST(Cosine, BasicValues) {
    const std::vector<float> a{1, 0}, b{0, 1}, c{2, 0}, z{0, 0};
    EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(a, c), 1.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(a, z), 0.0);
}

#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "scorestream/corpus.hpp"
#include "scorestream/error.hpp"
#include "scorestream/synthetic.hpp"
#include "test_support.hpp"

using namespace scorestream;
using scorestream::testing::TempDir;
using scorestream::testing::read_text;

TEST(Synthetic, SameSeedWritesIdenticalFiles) {
    TempDir dir;
    SyntheticOptions o;
    o.n_docs = 100;
    o.seed = 1;
    generate_synthetic_corpus(o, dir / "a.jsonl");
    generate_synthetic_corpus(o, dir / "b.jsonl");
    EXPECT_EQ(read_text(dir / "a.jsonl"), read_text(dir / "b.jsonl"));
    o.seed = 2;
    generate_synthetic_corpus(o, dir / "c.jsonl");
    EXPECT_NE(read_text(dir / "a.jsonl"), read_text(dir / "c.jsonl"));
}

TEST(Synthetic, ScoresFollowTheMixingFraction) {
    SyntheticOptions o;
    o.n_docs = 2000;
    for (const auto& d : generate_synthetic_documents(o)) {
        const double expected = std::clamp(1.0 + 4.0 * d.mixing, 1.0, 5.0);
        EXPECT_LE(std::abs(d.score - expected), 0.25 + 1e-12);
        EXPECT_GE(d.score, 1.0);
        EXPECT_LE(d.score, 5.0);
        if (d.mixing > 0.999) EXPECT_NEAR(d.score, 5.0, 0.25 + 4 * 0.001);
        const auto n = tokenize(d.text).size();
        EXPECT_GE(n, 10u);
        EXPECT_LE(n, 50u);
    }
}

TEST(Synthetic, ScoreCorrelatesWithPositiveFraction) {
    SyntheticOptions o;
    o.n_docs = 2000;
    const auto docs = generate_synthetic_documents(o);
    double mx = 0, my = 0;
    for (const auto& d : docs) {
        mx += d.positive_fraction;
        my += d.score;
    }
    mx /= docs.size();
    my /= docs.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (const auto& d : docs) {
        sxy += (d.positive_fraction - mx) * (d.score - my);
        sxx += (d.positive_fraction - mx) * (d.positive_fraction - mx);
        syy += (d.score - my) * (d.score - my);
    }
    EXPECT_GT(sxy / std::sqrt(sxx * syy), 0.9);
}

TEST(Synthetic, RealizedFractionMatchesText) {
    SyntheticOptions o;
    o.n_docs = 50;
    const auto pos = positive_words();
    for (const auto& d : generate_synthetic_documents(o)) {
        const auto tokens = tokenize(d.text);
        std::size_t hits = 0;
        for (const auto& t : tokens)
            hits += std::find(pos.begin(), pos.end(), t) != pos.end() ? 1 : 0;
        EXPECT_DOUBLE_EQ(d.positive_fraction, double(hits) / tokens.size());
    }
}

TEST(Synthetic, OutputParsesAsCorpus) {
    TempDir dir;
    SyntheticOptions o;
    o.n_docs = 30;
    const auto summary = generate_synthetic_corpus(o, dir / "s.jsonl");
    SkipCounters c;
    const auto docs = read_corpus(dir / "s.jsonl", FieldMapping{}, &c);
    EXPECT_EQ(docs.size(), 30u);
    EXPECT_EQ(c.admitted, 30u);
    for (const auto& d : docs) EXPECT_TRUE(d.score);
    const auto j = summary.to_json();
    EXPECT_EQ(j.at("n_docs"), 30);
    EXPECT_GT(summary.positive_pool, 0u);
    EXPECT_GT(summary.negative_pool, 0u);
}

TEST(Synthetic, TooFewDocumentsRejected) {
    SyntheticOptions o;
    o.n_docs = 9;
    try {
        generate_synthetic_documents(o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
}

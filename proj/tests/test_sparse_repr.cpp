#include "lexipse/errors.hpp"
#include "lexipse/sparse_repr.hpp"
#include "support/convert.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace lexipse;
using testsupport::to_matrix;

namespace {

LogitMatrix logits(const oracle::Grid& g) { return LogitMatrix(to_matrix(g)); }

SparseLexiconVector sparse(std::size_t v, std::vector<SparseEntry> e) { return {v, std::move(e)}; }

}  // namespace

TEST_SUITE("sparse_repr") {

TEST_CASE("logit matrix rejects empty and non-finite input") {
    CHECK_THROWS_AS(LogitMatrix(Matrix(0, 3)), InvalidInput);
    CHECK_THROWS_AS(LogitMatrix(Matrix(2, 0)), InvalidInput);
    Matrix m = Matrix::Zero(2, 3);
    m(1, 2) = std::numeric_limits<double>::quiet_NaN();
    try {
        LogitMatrix bad(m);
        FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 1") != std::string::npos);
        CHECK(msg.find("column 2") != std::string::npos);
    }
    m(1, 2) = INFINITY;
    CHECK_THROWS_AS(LogitMatrix{m}, InvalidInput);
    CHECK_THROWS_AS(LogitMatrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("saturate_pool on zeros is empty") {
    const auto p = saturate_pool(logits({{0, 0}, {0, 0}}));
    CHECK(p.vocab_size == 2);
    CHECK(p.entries.empty());
}

TEST_CASE("saturate_pool on a mixed-sign 2x2") {
    const auto p = saturate_pool(logits({{1.0, -2.0}, {0.5, 3.0}}));
    const auto want = oracle::saturate({{1.0, -2.0}, {0.5, 3.0}});
    REQUIRE(p.nnz() == 2);
    CHECK(p.entries[0].term == 0);
    CHECK(p.entries[0].weight == doctest::Approx(want[0]).epsilon(1e-15));
    CHECK(p.entries[1].weight == doctest::Approx(want[1]).epsilon(1e-15));
    CHECK(p.entries[0].weight == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(p.entries[1].weight == doctest::Approx(1.386294).epsilon(1e-6));
}

TEST_CASE("saturate_pool of e-1 is one") {
    const auto p = saturate_pool(logits({{std::exp(1.0) - 1.0}}));
    REQUIRE(p.nnz() == 1);
    CHECK(p.entries[0].weight == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("saturate_pool epsilon prunes small weights") {
    const auto p = saturate_pool(logits({{0.001, 1.0, 0.0}}), 0.01);
    REQUIRE(p.nnz() == 1);
    CHECK(p.entries[0].term == 1);
}

TEST_CASE("saturate_pool matches the scalar oracle, is row-order free and monotone") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto rows = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
        const auto vocab = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
        auto g = oracle::random_grid(rows, vocab, -3.0, 3.0, rng);
        const auto p = saturate_pool(logits(g));
        p.validate();
        const auto want = oracle::saturate(g);
        const Vector dense = p.dense();
        for (std::size_t j = 0; j < vocab; ++j) CHECK(dense[static_cast<Eigen::Index>(j)] == doctest::Approx(want[j]).epsilon(1e-14));

        std::shuffle(g.begin(), g.end(), rng);
        CHECK(saturate_pool(logits(g)) == p);

        auto raised = g;
        const auto r = std::uniform_int_distribution<std::size_t>(0, rows - 1)(rng);
        const auto c = std::uniform_int_distribution<std::size_t>(0, vocab - 1)(rng);
        raised[r][c] += 0.7;
        const Vector after = saturate_pool(logits(raised)).dense();
        CHECK(((after - dense).array() >= 0.0).all());
    }
}

TEST_CASE("lexicon_distribution of a constant row is uniform") {
    for (const double c : {-5.0, 0.0, 7.5}) {
        const auto a = lexicon_distribution(logits({{c, c, c}}));
        for (Eigen::Index j = 0; j < 3; ++j) CHECK(a.probs[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
}

TEST_CASE("lexicon_distribution pools without relu or log") {
    const auto a = lexicon_distribution(logits({{1.0, -2.0}, {0.5, 3.0}}));
    const auto want = oracle::softmax({1.0, 3.0});
    CHECK(a.probs[0] == doctest::Approx(want[0]).epsilon(1e-14));
    CHECK(a.probs[1] == doctest::Approx(want[1]).epsilon(1e-14));
    CHECK(a.probs[0] == doctest::Approx(0.119203).epsilon(1e-6));
    CHECK(a.probs[1] == doctest::Approx(0.880797).epsilon(1e-6));
}

TEST_CASE("lexicon_distribution survives extreme logits") {
    const auto a = lexicon_distribution(logits({{10.0, -1e9}}));
    CHECK(a.probs[0] == doctest::Approx(1.0));
    CHECK(a.probs[1] == doctest::Approx(0.0));
    CHECK(std::abs(a.probs.sum() - 1.0) <= 1e-9);
}

TEST_CASE("lexicon_distribution is shift invariant and normalised") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = oracle::random_grid(3, 17, -4.0, 4.0, rng);
        const auto a = lexicon_distribution(logits(g));
        CHECK(std::abs(a.probs.sum() - 1.0) <= 1e-9);
        CHECK((a.probs.array() >= 0.0).all());
        for (auto& row : g)
            for (auto& v : row) v += 123.25;
        const auto b = lexicon_distribution(logits(g));
        CHECK((a.probs - b.probs).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("cbow_bottleneck examples") {
    const auto run = [](std::vector<double> a, const oracle::Grid& w) {
        LexiconDistribution d{Eigen::Map<Vector>(a.data(), static_cast<Eigen::Index>(a.size()))};
        return cbow_bottleneck(d, to_matrix(w)).values;
    };
    const Vector b1 = run({0.5, 0.5}, {{1, 0}, {0, 1}});
    CHECK(b1[0] == 0.5);
    CHECK(b1[1] == 0.5);
    const Vector b2 = run({1.0, 0.0}, {{3, -1, 2}, {9, 9, 9}});
    CHECK(b2[0] == 3);
    CHECK(b2[1] == -1);
    CHECK(b2[2] == 2);
    const Vector b3 = run({0.25, 0.75}, {{2, 0}, {0, 4}});
    CHECK(b3[0] == doctest::Approx(0.5));
    CHECK(b3[1] == doctest::Approx(3.0));
    CHECK_THROWS_AS(run({0.5, 0.5}, {{1, 0}, {0, 1}, {1, 1}}), ShapeError);
}

TEST_CASE("cbow_bottleneck of the uniform distribution is the column mean") {
    std::mt19937_64 rng(9);
    const auto w = oracle::random_grid(6, 4, -1.0, 1.0, rng);
    LexiconDistribution d{Vector::Constant(6, 1.0 / 6.0)};
    const Vector b = cbow_bottleneck(d, to_matrix(w)).values;
    for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.0;
        for (const auto& row : w) mean += row[c] / 6.0;
        CHECK(b[static_cast<Eigen::Index>(c)] == doctest::Approx(mean).epsilon(1e-14));
    }
}

TEST_CASE("bottleneck backward honours the stop-gradient") {
    std::mt19937_64 rng(2);
    const Matrix w = to_matrix(oracle::random_grid(5, 3, -1.0, 1.0, rng));
    const RowVector a = RowVector::Constant(5, 0.2);
    const RowVector g = to_matrix(oracle::random_grid(1, 3, -1.0, 1.0, rng)).row(0);
    const auto sg = cbow_bottleneck_backward(a, w, g, true);
    CHECK(sg.grad_embeddings.size() == 0);
    const RowVector want = g * w.transpose();
    CHECK((sg.grad_probs - want).cwiseAbs().maxCoeff() < 1e-15);
    const auto leak = cbow_bottleneck_backward(a, w, g, false);
    CHECK((leak.grad_embeddings - a.transpose() * g).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("top_k_sparsify keeps the largest weights") {
    const auto v = sparse(10, {{0, 1.0}, {5, 3.0}, {9, 2.0}});
    const auto top = top_k_sparsify(v, 2);
    CHECK(top == sparse(10, {{5, 3.0}, {9, 2.0}}));
    CHECK(top_k_sparsify(v, 3) == v);
    CHECK(top_k_sparsify(v, 50) == v);
    CHECK(top_k_sparsify(sparse(4, {{1, 2.0}, {2, 2.0}, {3, 2.0}}), 2) == sparse(4, {{1, 2.0}, {2, 2.0}}));
    CHECK_THROWS_AS(top_k_sparsify(v, 0), InvalidArgument);
}

TEST_CASE("top_k_sparsify properties against a sort-and-truncate oracle") {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> wd(1, 6);
    for (int trial = 0; trial < 300; ++trial) {
        SparseLexiconVector v{64, {}};
        for (TermId t = 0; t < 64; ++t)
            if (rng() % 3 == 0) v.entries.push_back({t, wd(rng) * 0.5});
        const auto k = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
        const auto top = top_k_sparsify(v, k);
        top.validate();
        CHECK(top.nnz() <= std::min(k, v.nnz()));
        CHECK(top_k_sparsify(top, k) == top);

        auto order = v.entries;
        std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.weight > b.weight; });
        order.resize(std::min(k, order.size()));
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.term < b.term; });
        CHECK(top.entries == order);
    }
}

TEST_CASE("sparse vector validation and dense round-trip") {
    CHECK_THROWS_AS(sparse(4, {{2, 1.0}, {1, 1.0}}).validate(), InvalidInput);
    CHECK_THROWS_AS(sparse(4, {{1, 0.0}}).validate(), InvalidInput);
    CHECK_THROWS_AS(sparse(4, {{4, 1.0}}).validate(), InvalidInput);
    const std::vector<double> dense{0.0, 2.0, 0.0, 0.5};
    const auto v = SparseLexiconVector::from_dense(dense);
    CHECK(v == sparse(4, {{1, 2.0}, {3, 0.5}}));
    const Vector back = v.dense();
    for (std::size_t i = 0; i < 4; ++i) CHECK(back[static_cast<Eigen::Index>(i)] == dense[i]);
}

}

#include "lexipse/errors.hpp"
#include "lexipse/objectives.hpp"
#include "lexipse/selfcheck.hpp"
#include "support/convert.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace lexipse;
using testsupport::to_grid;
using testsupport::to_matrix;

TEST_SUITE("objectives") {

TEST_CASE("mask_tokens selects the rounded count") {
    std::vector<TermId> ten(10);
    std::iota(ten.begin(), ten.end(), 1);
    const auto m = mask_tokens(ten, 0.3, 0, 50, std::uint64_t{3});
    CHECK(m.masked_positions.size() == 3);
    m.validate();
    const std::vector<TermId> four{5, 6, 7, 8};
    CHECK(mask_tokens(four, 0.5, 0, 50, std::uint64_t{1}).masked_positions.size() == 2);
    CHECK(masked_count(10, 0.3) == 3);
    CHECK(masked_count(12, 0.5) == 6);
    CHECK(masked_count(5, 0.3) == 2);  // 1.5 rounds up
}

TEST_CASE("mask_tokens is deterministic under its seed") {
    std::vector<TermId> seq(40);
    std::iota(seq.begin(), seq.end(), 1);
    const auto a = mask_tokens(seq, 0.3, 0, 100, std::uint64_t{42});
    const auto b = mask_tokens(seq, 0.3, 0, 100, std::uint64_t{42});
    CHECK(a == b);
    const auto c = mask_tokens(seq, 0.3, 0, 100, std::uint64_t{43});
    CHECK(a.masked_positions != c.masked_positions);
}

TEST_CASE("mask_tokens rejects rates outside the open unit interval") {
    const std::vector<TermId> seq{1, 2, 3};
    for (const double r : {0.0, 1.0, -0.1, 1.5}) CHECK_THROWS_AS(mask_tokens(seq, r, 0, 10, std::uint64_t{0}), InvalidArgument);
    CHECK_THROWS_AS(mask_tokens(std::vector<TermId>{}, 0.3, 0, 10, std::uint64_t{0}), InvalidArgument);
}

TEST_CASE("mask_tokens properties") {
    std::mt19937_64 rng(8);
    std::size_t selected = 0, to_mask = 0, unchanged = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const auto len = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
        std::vector<TermId> seq(len);
        for (auto& t : seq) t = std::uniform_int_distribution<TermId>(1, 99)(rng);
        const double rate = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
        const auto m = mask_tokens(seq, rate, 0, 100, rng);
        m.validate();
        CHECK(m.original == seq);
        CHECK(m.masked_positions.size() == masked_count(len, rate));
        CHECK(std::is_sorted(m.masked_positions.begin(), m.masked_positions.end()));
        CHECK(std::adjacent_find(m.masked_positions.begin(), m.masked_positions.end()) == m.masked_positions.end());
        for (std::size_t i = 0; i < len; ++i) {
            const bool sel = std::binary_search(m.masked_positions.begin(), m.masked_positions.end(), i);
            if (!sel) CHECK(m.tokens[i] == seq[i]);
        }
        for (const auto p : m.masked_positions) {
            ++selected;
            to_mask += m.tokens[p] == 0;
            unchanged += m.tokens[p] == seq[p];
        }
    }
    const double mask_share = static_cast<double>(to_mask) / static_cast<double>(selected);
    CHECK(mask_share == doctest::Approx(0.8).epsilon(0.06));
    CHECK(static_cast<double>(unchanged) / static_cast<double>(selected) >= 0.07);
}

TEST_CASE("mlm_loss on uniform logits is log V") {
    MaskedSequence m{{0, 2}, {3, 2}, {0}, 0};
    const auto out = mlm_loss(LogitMatrix(Matrix::Zero(3, 4)), m);
    CHECK(out.value == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(out.value == doctest::Approx(1.386294).epsilon(1e-6));
}

TEST_CASE("mlm_loss of a confident correct prediction is near zero") {
    Matrix s = Matrix::Zero(2, 5);
    s(1, 3) = 1e3;
    MaskedSequence m{{0}, {3}, {0}, 0};
    CHECK(mlm_loss(LogitMatrix(s), m).value < 1e-12);
}

TEST_CASE("mlm_loss matches the scalar oracle and zeroes unmasked rows") {
    const oracle::Grid g{{9, 9, 9}, {0.3, -1.2, 2.0}, {1.0, 1.0, 1.0}, {-0.5, 0.25, 0.75}};
    MaskedSequence m{{0, 1, 0}, {2, 1, 0}, {0, 2}, 0};
    const auto out = mlm_loss(LogitMatrix(to_matrix(g)), m);
    const double want = oracle::cross_entropy(g[1], 2) + oracle::cross_entropy(g[3], 0);
    CHECK(std::abs(out.value - want) <= 1e-12);
    const Matrix& grad = out.grads.at(0);
    CHECK(grad.row(0).isZero(0.0));
    CHECK(grad.row(2).isZero(0.0));
    const auto sm = oracle::softmax(g[1]);
    CHECK(grad(1, 2) == doctest::Approx(sm[2] - 1.0).epsilon(1e-14));
    CHECK(std::abs(grad.row(3).sum()) < 1e-14);
}

TEST_CASE("mlm_loss rejects masked positions past the logits") {
    MaskedSequence m{{0, 0}, {1, 1}, {1}, 0};
    CHECK_THROWS_AS(mlm_loss(LogitMatrix(Matrix::Zero(2, 3)), m), ShapeError);
}

TEST_CASE("flops_reg examples") {
    CHECK(flops_reg(to_matrix({{1, 0}, {0, 2}})) == doctest::Approx(1.25).epsilon(1e-15));
    CHECK(flops_reg(Matrix::Zero(3, 4)) == 0.0);
    CHECK(flops_reg(to_matrix({{3}})) == 9.0);
    const std::vector<SparseLexiconVector> mixed{{2, {{0, 1.0}}}, {3, {}}};
    CHECK_THROWS_AS(flops_reg(std::span<const SparseLexiconVector>(mixed)), ShapeError);
}

TEST_CASE("flops_reg is permutation invariant and quadratic") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = oracle::random_grid(4, 9, 0.0, 2.0, rng);
        const double f = flops_reg(to_matrix(g));
        CHECK(f == doctest::Approx(oracle::flops(g)).epsilon(1e-13));
        std::shuffle(g.begin(), g.end(), rng);
        CHECK(flops_reg(to_matrix(g)) == doctest::Approx(f).epsilon(1e-13));
        const double c = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
        CHECK(flops_reg(c * to_matrix(g)) == doctest::Approx(c * c * f).epsilon(1e-12));
    }
}

TEST_CASE("baco_loss of a single pair without regulariser is zero") {
    const auto out = baco_loss(to_matrix({{0.3, 2.0}}), to_matrix({{1.0, 0.0}}), 0.05, 0.0);
    CHECK(out.value == 0.0);
}

TEST_CASE("baco_loss on orthogonal pairs matches the oracle") {
    const oracle::Grid img{{1, 0}, {0, 1}};
    const oracle::Grid txt{{1, 0}, {0, 1}};
    const auto out = baco_loss(to_matrix(img), to_matrix(txt), 1.0, 0.0);
    CHECK(std::abs(out.value - oracle::baco(img, txt, 1.0, 0.0)) <= 1e-10);
    CHECK(out.value == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("baco_loss matches the oracle on random batches") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
        const auto v = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
        const auto img = oracle::random_grid(n, v, 0.0, 1.5, rng);
        const auto txt = oracle::random_grid(n, v, 0.0, 1.5, rng);
        const double tau = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
        const double lambda = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
        const auto out = baco_loss(to_matrix(img), to_matrix(txt), tau, lambda);
        CHECK(out.value == doctest::Approx(oracle::baco(img, txt, tau, lambda)).epsilon(1e-11));
        const auto i2t = baco_directional(to_matrix(img), to_matrix(txt), tau, lambda, Direction::ImageToText);
        CHECK(i2t.value == doctest::Approx(oracle::info_nce(img, txt, tau) + lambda * oracle::flops(img)).epsilon(1e-11));
    }
}

TEST_CASE("baco_loss is invariant under aligned permutation") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        auto img = oracle::random_grid(5, 7, 0.0, 1.0, rng);
        auto txt = oracle::random_grid(5, 7, 0.0, 1.0, rng);
        const double before = baco_loss(to_matrix(img), to_matrix(txt), 0.2, 0.01).value;
        std::vector<std::size_t> perm(5);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        oracle::Grid pi, pt;
        for (const auto p : perm) {
            pi.push_back(img[p]);
            pt.push_back(txt[p]);
        }
        CHECK(baco_loss(to_matrix(pi), to_matrix(pt), 0.2, 0.01).value == doctest::Approx(before).epsilon(1e-12));
    }
}

TEST_CASE("baco_loss is non-negative and falls as the positive margin grows") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix img = to_matrix(oracle::random_grid(4, 6, 0.0, 1.0, rng));
        const Matrix txt = to_matrix(oracle::random_grid(4, 6, 0.0, 1.0, rng));
        double prev = baco_loss(img, txt, 0.5, 0.0).value;
        CHECK(prev >= 0.0);
        for (double margin = 0.5; margin <= 4.0; margin += 0.5) {
            Matrix a(4, 10), b(4, 10);
            a << img, margin * Matrix::Identity(4, 4);
            b << txt, margin * Matrix::Identity(4, 4);
            const double cur = baco_loss(a, b, 0.5, 0.0).value;
            CHECK(cur >= 0.0);
            CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("baco_loss argument errors") {
    CHECK_THROWS_AS(baco_loss(Matrix::Zero(2, 3), Matrix::Zero(3, 3), 0.05, 0.0), ShapeError);
    CHECK_THROWS_AS(baco_loss(Matrix::Zero(2, 3), Matrix::Zero(2, 3), 0.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(baco_loss(Matrix::Zero(2, 3), Matrix::Zero(2, 3), -1.0, 0.0), InvalidArgument);
}

TEST_CASE("sparse and dense baco agree") {
    const std::vector<SparseLexiconVector> img{{3, {{0, 1.0}, {2, 0.5}}}, {3, {{1, 2.0}}}};
    const std::vector<SparseLexiconVector> txt{{3, {{0, 0.7}}}, {3, {{1, 1.0}, {2, 0.2}}}};
    const auto sparse = baco_loss(img, txt, 0.3, 0.01);
    const auto dense = baco_loss(stack_dense(img), stack_dense(txt), 0.3, 0.01);
    CHECK(sparse.value == doctest::Approx(dense.value).epsilon(1e-14));
}

TEST_CASE("moco_loss examples") {
    const SparseLexiconVector q{3, {{0, 1.0}, {1, 2.0}}};
    const SparseLexiconVector pos{3, {{1, 1.0}}};
    const auto empty = moco_loss(q, pos, {}, 0.05, 0.5);
    CHECK(empty.value == doctest::Approx(0.5 * (1.0 + 4.0)).epsilon(1e-14));
    const std::vector<SparseLexiconVector> queue{pos};
    CHECK(moco_loss(q, pos, queue, 1.0, 0.0).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(moco_loss(q, pos, queue, 0.0, 0.0), InvalidArgument);
}

TEST_CASE("moco_loss matches the oracle") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const auto qg = oracle::random_grid(1, 8, 0.0, 1.0, rng);
        const auto pg = oracle::random_grid(1, 8, 0.0, 1.0, rng);
        const auto queue = oracle::random_grid(5, 8, 0.0, 1.0, rng);
        const auto q = SparseLexiconVector::from_dense(qg[0]);
        const auto p = SparseLexiconVector::from_dense(pg[0]);
        std::vector<SparseLexiconVector> qs;
        for (const auto& row : queue) qs.push_back(SparseLexiconVector::from_dense(row));
        const auto out = moco_loss(q, p, qs, 0.2, 0.01);
        CHECK(out.value == doctest::Approx(oracle::moco_single(qg[0], pg[0], queue, 0.2, 0.01)).epsilon(1e-12));
        const auto batched = moco_batch_loss(to_matrix(qg), to_matrix(pg), to_matrix(queue), 0.2, 0.01);
        CHECK(batched.value == doctest::Approx(out.value).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradients match central differences") {
    for (const auto target : {GradTarget::MlmLoss, GradTarget::BacoImageToText, GradTarget::BacoTextToImage,
                              GradTarget::BacoLoss, GradTarget::MocoLoss}) {
        CAPTURE(to_string(target));
        const auto r = gradient_suite(target, 100, 21);
        CHECK(r.checked > 0);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("baco gradient agrees with an independent finite-difference oracle") {
    std::mt19937_64 rng(99);
    const auto img = oracle::random_grid(3, 5, 0.0, 1.0, rng);
    const auto txt = oracle::random_grid(3, 5, 0.0, 1.0, rng);
    const auto out = baco_loss(to_matrix(img), to_matrix(txt), 0.3, 0.1);
    std::vector<double> flat;
    for (const auto& r : img) flat.insert(flat.end(), r.begin(), r.end());
    const auto f = [&](const std::vector<double>& x) {
        oracle::Grid g(3, std::vector<double>(5));
        for (std::size_t i = 0; i < 15; ++i) g[i / 5][i % 5] = x[i];
        return oracle::baco(g, txt, 0.3, 0.1);
    };
    for (std::size_t i = 0; i < 15; ++i) {
        const double fd = oracle::central_difference(f, flat, i);
        const auto r = static_cast<Eigen::Index>(i / 5), c = static_cast<Eigen::Index>(i % 5);
        CHECK(oracle::rel_err(out.grads[0](r, c), fd) < 1e-6);
    }
}

TEST_CASE("phase1_total") {
    CHECK(phase1_total(0, 0, 0, 0) == 0.0);
    CHECK(phase1_total(1, 2, 3, 4) == 10.0);
    CHECK(phase1_total(4, 3, 2, 1) == phase1_total(2, 4, 1, 3));
    CHECK_THROWS_AS(phase1_total(1, NAN, 0, 0), InvalidInput);
    CHECK_THROWS_AS(phase1_total(1, 0, INFINITY, 0), InvalidInput);
}

}

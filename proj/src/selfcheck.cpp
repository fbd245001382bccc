#include "lexipse/selfcheck.hpp"

#include "lexipse/errors.hpp"
#include "lexipse/evalbench.hpp"
#include "lexipse/lexindex.hpp"
#include "lexipse/momentum.hpp"
#include "lexipse/objectives.hpp"
#include "lexipse/sparse_repr.hpp"
#include "lexipse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace lexipse {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    return std::abs(analytic - numeric) / denom;
}

void GradCheck::merge(const GradCheck& other) {
    max_rel_error = std::max(max_rel_error, other.max_rel_error);
    checked += other.checked;
    skipped += other.skipped;
}

GradCheck check_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, const Matrix& analytic,
                         double h, bool skip_kinks) {
    if (analytic.rows() != x.rows() || analytic.cols() != x.cols()) throw ShapeError("gradient shape differs from input");
    GradCheck out;
    Matrix probe = x;
    const double f0 = skip_kinks ? f(x) : 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + h;
        const double fp = f(probe);
        probe.data()[i] = orig - h;
        const double fm = f(probe);
        probe.data()[i] = orig;
        if (skip_kinks) {
            const double right = (fp - f0) / h;
            const double left = (f0 - fm) / h;
            if (std::abs(right - left) > 1e-3 * std::max({std::abs(right), std::abs(left), 1.0})) {
                ++out.skipped;
                continue;
            }
        }
        const double numeric = (fp - fm) / (2.0 * h);
        out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic.data()[i], numeric));
        ++out.checked;
    }
    return out;
}

std::string to_string(GradTarget target) {
    switch (target) {
        case GradTarget::MlmLoss: return "mlm_loss";
        case GradTarget::BacoImageToText: return "baco_i2t";
        case GradTarget::BacoTextToImage: return "baco_t2i";
        case GradTarget::BacoLoss: return "baco_loss";
        case GradTarget::MocoLoss: return "moco_loss";
        case GradTarget::SaturatePool: return "saturate_pool";
        case GradTarget::LexiconDistribution: return "lexicon_distribution";
        case GradTarget::Phase1Model: return "phase1_model";
    }
    return "unknown";
}

namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
    return m;
}

std::size_t pick(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

SparseLexiconVector row_sparse(const Matrix& m, Eigen::Index r) {
    const RowVector row = m.row(r);
    return SparseLexiconVector::from_dense({row.data(), static_cast<std::size_t>(row.size())});
}

GradCheck mlm_instance(std::mt19937_64& rng) {
    const auto v = pick(3, 16, rng);
    const auto n = pick(1, 4, rng);
    std::vector<TermId> tokens(n);
    for (auto& t : tokens) t = static_cast<TermId>(pick(1, v - 1, rng));
    const MaskedSequence masked = mask_tokens(tokens, 0.5, 0, v, rng);
    const Matrix logits = uniform(static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(v), -3.0, 3.0, rng);
    const LossOutput out = mlm_loss(logits, masked);
    return check_gradient([&](const Matrix& x) { return mlm_loss(x, masked).value; }, logits, out.grads[0]);
}

GradCheck baco_instance(GradTarget target, std::mt19937_64& rng) {
    const auto v = static_cast<Eigen::Index>(pick(2, 16, rng));
    const auto n = static_cast<Eigen::Index>(pick(1, 4, rng));
    const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const double lambda = std::uniform_real_distribution<double>(0.01, 0.5)(rng);
    const Matrix img = uniform(n, v, 0.0, 1.0, rng);
    const Matrix txt = uniform(n, v, 0.0, 1.0, rng);
    auto eval = [&](const Matrix& a, const Matrix& b) {
        switch (target) {
            case GradTarget::BacoImageToText: return baco_directional(a, b, tau, lambda, Direction::ImageToText);
            case GradTarget::BacoTextToImage: return baco_directional(a, b, tau, lambda, Direction::TextToImage);
            default: return baco_loss(a, b, tau, lambda);
        }
    };
    const LossOutput out = eval(img, txt);
    GradCheck g = check_gradient([&](const Matrix& x) { return eval(x, txt).value; }, img, out.grads[0]);
    g.merge(check_gradient([&](const Matrix& x) { return eval(img, x).value; }, txt, out.grads[1]));
    return g;
}

GradCheck moco_instance(std::mt19937_64& rng) {
    const auto v = static_cast<Eigen::Index>(pick(2, 16, rng));
    const auto k = static_cast<Eigen::Index>(pick(0, 4, rng));
    const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const double lambda = std::uniform_real_distribution<double>(0.01, 0.5)(rng);
    // Strictly positive query so every perturbed copy is still a valid sparse vector.
    const Matrix query = uniform(1, v, 0.05, 1.0, rng);
    const Matrix pos = uniform(1, v, 0.0, 1.0, rng);
    const Matrix queue = uniform(k, v, 0.0, 1.0, rng);
    std::vector<SparseLexiconVector> negatives;
    for (Eigen::Index r = 0; r < k; ++r) negatives.push_back(row_sparse(queue, r));
    const auto positive = row_sparse(pos, 0);
    auto value = [&](const Matrix& q) { return moco_loss(row_sparse(q, 0), positive, negatives, tau, lambda); };
    const LossOutput out = value(query);
    GradCheck g = check_gradient([&](const Matrix& q) { return value(q).value; }, query, out.grads[0]);

    const auto n = static_cast<Eigen::Index>(pick(1, 4, rng));
    const Matrix queries = uniform(n, v, 0.0, 1.0, rng);
    const Matrix positives = uniform(n, v, 0.0, 1.0, rng);
    const LossOutput batched = moco_batch_loss(queries, positives, queue, tau, lambda);
    g.merge(check_gradient([&](const Matrix& q) { return moco_batch_loss(q, positives, queue, tau, lambda).value; },
                           queries, batched.grads[0]));
    return g;
}

GradCheck saturate_instance(std::mt19937_64& rng) {
    const auto v = static_cast<Eigen::Index>(pick(2, 16, rng));
    const auto rows = static_cast<Eigen::Index>(pick(1, 5, rng));
    const Matrix logits = uniform(rows, v, -2.0, 2.0, rng);
    const RowVector weights = uniform(1, v, -1.0, 1.0, rng);
    auto value = [&](const Matrix& x) { return saturate_pool_dense(max_pool(x)).dot(weights); };
    Matrix grad = Matrix::Zero(rows, v);
    saturate_pool_backward(max_pool(logits), weights, grad);
    return check_gradient(value, logits, grad, 1e-5, true);
}

GradCheck lexicon_instance(std::mt19937_64& rng) {
    const auto v = static_cast<Eigen::Index>(pick(2, 16, rng));
    const auto rows = static_cast<Eigen::Index>(pick(1, 5, rng));
    const auto d = static_cast<Eigen::Index>(pick(1, 4, rng));
    const Matrix logits = uniform(rows, v, -2.0, 2.0, rng);
    const Matrix emb = uniform(v, d, -1.0, 1.0, rng);
    const RowVector weights = uniform(1, d, -1.0, 1.0, rng);
    auto value = [&](const Matrix& x) {
        const RowVector a = lexicon_distribution_dense(max_pool(x));
        return (a * emb).dot(weights);
    };
    const PooledLogits pooled = max_pool(logits);
    const RowVector a = lexicon_distribution_dense(pooled);
    const BottleneckGrads bg = cbow_bottleneck_backward(a, emb, weights, true);
    Matrix grad = Matrix::Zero(rows, v);
    lexicon_distribution_backward(pooled, a, bg.grad_probs, grad);
    return check_gradient(value, logits, grad, 1e-5, true);
}

// Tiny hand-built pair set: 16-term vocabulary, token 0 reserved for [MASK].
SyntheticPairSet tiny_pairs(std::size_t count, std::size_t len, std::mt19937_64& rng) {
    SyntheticPairSet data;
    data.vocab_size = 16;
    data.mask_token = 0;
    for (std::size_t i = 0; i < count; ++i) {
        PairSample p;
        p.id = "p" + std::to_string(i);
        for (std::size_t j = 0; j < len; ++j) {
            p.text.push_back(static_cast<TermId>(pick(1, 15, rng)));
            p.image.push_back(static_cast<TermId>(pick(0, 15, rng)));
        }
        data.pairs.push_back(std::move(p));
    }
    return data;
}

TrainConfig tiny_config(bool stop_gradient) {
    TrainConfig cfg;
    cfg.dim = 3;
    cfg.batch_size = 3;
    cfg.tau = 0.5;
    cfg.lambda = 0.05;
    cfg.init_scale = 0.5;
    cfg.stop_gradient = stop_gradient;
    return cfg;
}

GradCheck phase1_instance(std::mt19937_64& rng) {
    const auto data = tiny_pairs(3, 4, rng);
    const TrainConfig cfg = tiny_config(false);
    ToyModel model = ToyModel::init(data.vocab_size, cfg.dim, cfg.init_scale, rng());
    const std::vector<std::size_t> samples{0, 1, 2};
    const Phase1Batch batch = make_phase1_batch(data, samples, cfg, rng);
    ModelGrads grads = ModelGrads::zeros_for(model);
    phase1_objective(model, data, batch, cfg, &grads);

    GradCheck g;
    auto check_params = [&](auto& params, const auto& param_grads) {
        std::vector<Matrix*> ps;
        std::vector<const Matrix*> gs;
        params.for_each([&](const char*, Matrix& m) { ps.push_back(&m); });
        param_grads.for_each([&](const char*, const Matrix& m) { gs.push_back(&m); });
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const Matrix saved = *ps[i];
            auto value = [&](const Matrix& x) {
                *ps[i] = x;
                return phase1_objective(model, data, batch, cfg, nullptr).total;
            };
            g.merge(check_gradient(value, saved, *gs[i], 1e-5, true));
            *ps[i] = saved;
        }
    };
    check_params(model.image.params(), grads.image);
    check_params(model.text.params(), grads.text);
    check_params(model.image_decoder.params(), grads.image_decoder);
    check_params(model.text_decoder.params(), grads.text_decoder);
    return g;
}

}  // namespace

GradCheck gradient_suite(GradTarget target, std::size_t instances, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GradCheck total;
    for (std::size_t i = 0; i < instances; ++i) {
        switch (target) {
            case GradTarget::MlmLoss: total.merge(mlm_instance(rng)); break;
            case GradTarget::BacoImageToText:
            case GradTarget::BacoTextToImage:
            case GradTarget::BacoLoss: total.merge(baco_instance(target, rng)); break;
            case GradTarget::MocoLoss: total.merge(moco_instance(rng)); break;
            case GradTarget::SaturatePool: total.merge(saturate_instance(rng)); break;
            case GradTarget::LexiconDistribution: total.merge(lexicon_instance(rng)); break;
            case GradTarget::Phase1Model: total.merge(phase1_instance(rng)); break;
        }
    }
    return total;
}

Matrix bottleneck_embedding_gradient(bool stop_gradient, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto data = tiny_pairs(3, 4, rng);
    TrainConfig cfg = tiny_config(stop_gradient);
    cfg.objectives = {false, true, false, false, false};
    const ToyModel model = ToyModel::init(data.vocab_size, cfg.dim, cfg.init_scale, rng());
    const std::vector<std::size_t> samples{0, 1, 2};
    const Phase1Batch batch = make_phase1_batch(data, samples, cfg, rng);
    ModelGrads grads = ModelGrads::zeros_for(model);
    phase1_objective(model, data, batch, cfg, &grads);
    return grads.text.embeddings;
}

bool SelfCheckReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {

QuantizedLexiconVector random_doc(std::string id, std::size_t vocab, double density, std::mt19937_64& rng) {
    QuantizedLexiconVector doc{std::move(id), {}};
    std::bernoulli_distribution keep(density);
    std::uniform_int_distribution<int> w(1, 255);
    for (std::size_t t = 0; t < vocab; ++t) {
        if (keep(rng)) doc.terms.push_back({static_cast<std::uint16_t>(t), static_cast<std::uint8_t>(w(rng))});
    }
    return doc;
}

CheckResult retrieval_oracle(std::size_t instances, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < instances; ++i) {
        const auto vocab = pick(1, 512, rng);
        const auto docs = pick(1, 200, rng);
        const double density = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
        std::vector<QuantizedLexiconVector> corpus;
        for (std::size_t d = 0; d < docs; ++d) corpus.push_back(random_doc("d" + std::to_string(d), vocab, density, rng));
        const auto index = build_index(corpus, vocab);
        const auto query = random_doc("q", vocab, std::max(density, 0.02), rng);
        for (const std::size_t k : {1, 5, 10, 50}) {
            if (search(index, query, k) != brute_force_search(corpus, query, k)) {
                return {"retrieval matches brute force", false, "instance " + std::to_string(i) + ", k=" + std::to_string(k)};
            }
        }
    }
    return {"retrieval matches brute force", true, std::to_string(instances) + " instances"};
}

CheckResult index_round_trip(std::size_t instances, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < instances; ++i) {
        const auto vocab = pick(1, 300, rng);
        std::vector<QuantizedLexiconVector> corpus;
        for (std::size_t d = 0, n = pick(0, 40, rng); d < n; ++d) {
            corpus.push_back(random_doc("doc-" + std::to_string(d), vocab, 0.05, rng));
        }
        const auto bytes = serialize_index(build_index(corpus, vocab));
        if (serialize_index(deserialize_index(bytes)) != bytes) {
            return {"index round-trip", false, "instance " + std::to_string(i)};
        }
        auto corrupt = bytes;
        corrupt[pick(0, 3, rng)] ^= 0x5A;
        try {
            deserialize_index(corrupt);
            return {"index round-trip", false, "corrupted magic accepted"};
        } catch (const FormatError&) {
        }
    }
    return {"index round-trip", true, std::to_string(instances) + " instances"};
}

CheckResult checkpoint_round_trip(std::size_t instances, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < instances; ++i) {
        const auto model = ToyModel::init(pick(2, 24, rng), pick(1, 6, rng), 0.5, rng());
        const auto bytes = serialize_checkpoint(model);
        if (serialize_checkpoint(deserialize_checkpoint(bytes)) != bytes) {
            return {"checkpoint round-trip", false, "instance " + std::to_string(i)};
        }
        auto corrupt = bytes;
        corrupt[pick(0, 5, rng)] ^= 0x33;
        try {
            deserialize_checkpoint(corrupt);
            return {"checkpoint round-trip", false, "corrupted header accepted"};
        } catch (const FormatError&) {
        }
    }
    return {"checkpoint round-trip", true, std::to_string(instances) + " instances"};
}

CheckResult quantization_examples() {
    const std::vector<std::pair<double, int>> cases{{0.6931, 69}, {0.29, 29}, {1.0, 100}, {2.55, 255}, {3.0, 255}, {0.009, 0}};
    for (const auto& [p, want] : cases) {
        const auto q = quantize(SparseLexiconVector{1, {{0, p}}});
        const int got = q.terms.empty() ? 0 : q.terms.front().weight;
        if (got != want) {
            std::ostringstream msg;
            msg << "p=" << p << " gave " << got << ", want " << want;
            return {"quantization", false, msg.str()};
        }
    }
    return {"quantization", true, std::to_string(cases.size()) + " cases"};
}

CheckResult representation_invariants(std::size_t instances, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < instances; ++i) {
        const Matrix logits = uniform(static_cast<Eigen::Index>(pick(1, 6, rng)), static_cast<Eigen::Index>(pick(1, 32, rng)),
                                      -5.0, 5.0, rng);
        const auto pooled = max_pool(logits);
        const RowVector p = saturate_pool_dense(pooled);
        const RowVector a = lexicon_distribution_dense(pooled);
        if ((p.array() < 0.0).any()) return {"representation invariants", false, "negative lexicon weight"};
        if (std::abs(a.sum() - 1.0) > 1e-9) return {"representation invariants", false, "distribution does not sum to 1"};
    }
    return {"representation invariants", true, std::to_string(instances) + " instances"};
}

CheckResult recall_monotone(std::size_t instances, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < instances; ++i) {
        std::vector<RankedQuery> ranked;
        Qrels qrels;
        for (std::size_t q = 0, n = pick(1, 20, rng); q < n; ++q) {
            RankedQuery rq{"q" + std::to_string(q), {}};
            for (std::size_t h = 0, hits = pick(0, 12, rng); h < hits; ++h) rq.result.hits.push_back({"d" + std::to_string(pick(0, 15, rng)), 1});
            qrels[rq.query_id].insert("d" + std::to_string(pick(0, 15, rng)));
            ranked.push_back(std::move(rq));
        }
        const std::size_t ks[] = {1, 5, 10};
        const auto r = recall_at_k(ranked, qrels, ks);
        if (!(r.at(1) <= r.at(5) && r.at(5) <= r.at(10))) return {"recall monotone in k", false, "instance " + std::to_string(i)};
    }
    return {"recall monotone in k", true, std::to_string(instances) + " instances"};
}

CheckResult ema_fixed_point() {
    EmaTracker tracker({0.0, 1.0, -2.0}, 0.9);
    const std::vector<double> live{3.0, 3.0, 3.0};
    for (int i = 0; i < 400; ++i) tracker.update(live);
    for (std::size_t j = 0; j < live.size(); ++j) {
        if (std::abs(tracker.shadow()[j] - live[j]) > 1e-12) return {"ema converges to frozen params", false, ""};
    }
    return {"ema converges to frozen params", true, "400 updates"};
}

}  // namespace

SelfCheckReport run_selfcheck(const SelfCheckOptions& opts) {
    SelfCheckReport report;
    const double tol = 1e-4;
    const std::pair<GradTarget, std::size_t> suites[] = {
        {GradTarget::MlmLoss, opts.instances},
        {GradTarget::BacoImageToText, opts.instances},
        {GradTarget::BacoTextToImage, opts.instances},
        {GradTarget::BacoLoss, opts.instances},
        {GradTarget::MocoLoss, opts.instances},
        {GradTarget::SaturatePool, opts.instances},
        {GradTarget::LexiconDistribution, opts.instances},
        {GradTarget::Phase1Model, std::max<std::size_t>(1, opts.instances / 10)},
    };
    std::uint64_t stream = 0;
    for (const auto& [target, n] : suites) {
        const GradCheck g = gradient_suite(target, n, opts.seed + (++stream) * 1000003ULL);
        std::ostringstream detail;
        detail << "max rel err " << g.max_rel_error << " over " << g.checked << " entries";
        if (g.skipped) detail << " (" << g.skipped << " at kinks skipped)";
        report.checks.push_back({"gradient " + to_string(target), g.checked > 0 && g.max_rel_error < tol, detail.str()});
    }

    const Matrix g = bottleneck_embedding_gradient(!opts.inject_sg_violation, opts.seed);
    const double leak = g.cwiseAbs().maxCoeff();
    std::ostringstream detail;
    detail << "max |dL/dW_te| through bottleneck = " << leak;
    report.checks.push_back({"stop-gradient on token embeddings", leak == 0.0, detail.str()});

    std::mt19937_64 rng(opts.seed ^ 0xC0FFEEULL);
    report.checks.push_back(retrieval_oracle(opts.instances, rng));
    report.checks.push_back(index_round_trip(opts.instances, rng));
    report.checks.push_back(checkpoint_round_trip(opts.instances, rng));
    report.checks.push_back(quantization_examples());
    report.checks.push_back(representation_invariants(opts.instances, rng));
    report.checks.push_back(recall_monotone(opts.instances, rng));
    report.checks.push_back(ema_fixed_point());
    return report;
}

}  // namespace lexipse

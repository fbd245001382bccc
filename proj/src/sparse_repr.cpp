#include "lexipse/sparse_repr.hpp"

#include "lexipse/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lexipse {

namespace {

void check_finite(const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!std::isfinite(m(r, c))) {
                throw InvalidInput("non-finite logit at row " + std::to_string(r) + ", column " +
                                   std::to_string(c));
            }
        }
    }
}

}  // namespace

LogitMatrix::LogitMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) {
        throw InvalidInput("logit matrix needs at least one row and one vocabulary column");
    }
    check_finite(values_);
}

LogitMatrix::LogitMatrix(std::size_t rows, std::size_t vocab, std::vector<double> row_major) {
    if (row_major.size() != rows * vocab) {
        throw ShapeError("logit buffer holds " + std::to_string(row_major.size()) + " values, expected " +
                         std::to_string(rows * vocab));
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(vocab));
    std::copy(row_major.begin(), row_major.end(), m.data());
    *this = LogitMatrix(std::move(m));
}

Vector SparseLexiconVector::dense() const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(vocab_size));
    for (const auto& e : entries) out[e.term] = e.weight;
    return out;
}

void SparseLexiconVector::validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.term >= vocab_size) {
            throw InvalidInput("term id " + std::to_string(e.term) + " outside vocabulary of size " +
                               std::to_string(vocab_size));
        }
        if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
            throw InvalidInput("term " + std::to_string(e.term) + " has non-positive or non-finite weight");
        }
        if (i > 0 && entries[i - 1].term >= e.term) {
            throw InvalidInput("term ids must be strictly increasing");
        }
    }
}

SparseLexiconVector SparseLexiconVector::from_dense(std::span<const double> dense, double epsilon) {
    SparseLexiconVector out;
    out.vocab_size = dense.size();
    for (std::size_t j = 0; j < dense.size(); ++j) {
        if (dense[j] > epsilon && dense[j] > 0.0) out.entries.push_back({static_cast<TermId>(j), dense[j]});
    }
    return out;
}

PooledLogits max_pool(const Eigen::Ref<const Matrix>& logits) {
    PooledLogits out;
    out.values.resize(logits.cols());
    out.argmax.resize(static_cast<std::size_t>(logits.cols()));
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        Eigen::Index best = 0;
        double v = logits(0, c);
        for (Eigen::Index r = 1; r < logits.rows(); ++r) {
            if (logits(r, c) > v) {
                v = logits(r, c);
                best = r;
            }
        }
        out.values[c] = v;
        out.argmax[static_cast<std::size_t>(c)] = best;
    }
    return out;
}

RowVector saturate_pool_dense(const PooledLogits& pooled) {
    return pooled.values.unaryExpr([](double x) { return std::log1p(std::max(0.0, x)); });
}

SparseLexiconVector saturate_pool(const LogitMatrix& logits, double epsilon) {
    const RowVector dense = saturate_pool_dense(max_pool(logits.values()));
    return SparseLexiconVector::from_dense(std::span<const double>(dense.data(), dense.size()), epsilon);
}

void saturate_pool_backward(const PooledLogits& pooled, const RowVector& grad_rep, Eigen::Ref<Matrix> grad_logits) {
    for (Eigen::Index c = 0; c < pooled.values.size(); ++c) {
        const double m = pooled.values[c];
        if (m > 0.0) grad_logits(pooled.argmax[static_cast<std::size_t>(c)], c) += grad_rep[c] / (1.0 + m);
    }
}

RowVector softmax(const RowVector& z) {
    const double shift = z.maxCoeff();
    RowVector e = (z.array() - shift).exp().matrix();
    return e / e.sum();
}

RowVector lexicon_distribution_dense(const PooledLogits& pooled) { return softmax(pooled.values); }

LexiconDistribution lexicon_distribution(const LogitMatrix& logits) {
    return {lexicon_distribution_dense(max_pool(logits.values())).transpose()};
}

void lexicon_distribution_backward(const PooledLogits& pooled, const RowVector& probs,
                                   const RowVector& grad_probs, Eigen::Ref<Matrix> grad_logits) {
    const double inner = probs.dot(grad_probs);
    for (Eigen::Index c = 0; c < probs.size(); ++c) {
        grad_logits(pooled.argmax[static_cast<std::size_t>(c)], c) += probs[c] * (grad_probs[c] - inner);
    }
}

BottleneckVector cbow_bottleneck(const LexiconDistribution& dist, const Matrix& embeddings) {
    if (static_cast<Eigen::Index>(dist.vocab_size()) != embeddings.rows()) {
        throw ShapeError("distribution over " + std::to_string(dist.vocab_size()) +
                         " terms cannot weight an embedding matrix with " + std::to_string(embeddings.rows()) +
                         " rows");
    }
    return {(dist.probs.transpose() * embeddings).transpose()};
}

BottleneckGrads cbow_bottleneck_backward(const RowVector& probs, const Matrix& embeddings,
                                         const RowVector& grad_bottleneck, bool stop_gradient) {
    if (probs.size() != embeddings.rows() || grad_bottleneck.size() != embeddings.cols()) {
        throw ShapeError("bottleneck backward shape mismatch");
    }
    BottleneckGrads out;
    out.grad_probs = grad_bottleneck * embeddings.transpose();
    if (!stop_gradient) out.grad_embeddings = probs.transpose() * grad_bottleneck;
    return out;
}

SparseLexiconVector top_k_sparsify(const SparseLexiconVector& vec, std::size_t k) {
    if (k == 0) throw InvalidArgument("top-k sparsification needs k >= 1");
    if (vec.entries.size() <= k) return vec;
    std::vector<SparseEntry> kept = vec.entries;
    std::partial_sort(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(k), kept.end(),
                      [](const SparseEntry& a, const SparseEntry& b) {
                          return a.weight != b.weight ? a.weight > b.weight : a.term < b.term;
                      });
    kept.resize(k);
    std::sort(kept.begin(), kept.end(), [](const SparseEntry& a, const SparseEntry& b) { return a.term < b.term; });
    return {vec.vocab_size, std::move(kept)};
}

}  // namespace lexipse

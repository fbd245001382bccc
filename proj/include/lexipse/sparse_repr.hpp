#pragma once

#include "lexipse/common.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lexipse {

/// Token- or patch-level LM logits over the vocabulary, one row per sequence
/// position (the leading row is the CLS slot).
class LogitMatrix {
  public:
    LogitMatrix() = default;

    /// Throws InvalidInput on empty shape or any non-finite value, naming the
    /// offending row and column.
    explicit LogitMatrix(Matrix values);
    LogitMatrix(std::size_t rows, std::size_t vocab, std::vector<double> row_major);

    std::size_t rows() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(values_.cols()); }
    double operator()(std::size_t r, std::size_t c) const { return values_(r, c); }
    const Matrix& values() const noexcept { return values_; }

  private:
    Matrix values_;
};

struct SparseEntry {
    TermId term = 0;
    double weight = 0.0;
    friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Non-negative vocabulary-space vector. Only strictly positive weights are
/// stored, with term ids strictly increasing.
struct SparseLexiconVector {
    std::size_t vocab_size = 0;
    std::vector<SparseEntry> entries;

    std::size_t nnz() const noexcept { return entries.size(); }
    Vector dense() const;
    /// Throws InvalidInput if the ordering or positivity invariant is broken.
    void validate() const;

    /// Keeps entries with weight > epsilon.
    static SparseLexiconVector from_dense(std::span<const double> dense, double epsilon = 0.0);

    friend bool operator==(const SparseLexiconVector&, const SparseLexiconVector&) = default;
};

/// Normalised importance distribution over the vocabulary.
struct LexiconDistribution {
    Vector probs;
    std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(probs.size()); }
};

struct BottleneckVector {
    Vector values;
    std::size_t dim() const noexcept { return static_cast<std::size_t>(values.size()); }
};

/// Column-wise max over the rows of a logit matrix, with the winning row kept
/// so gradients can be routed back.
struct PooledLogits {
    RowVector values;
    std::vector<Eigen::Index> argmax;
};

PooledLogits max_pool(const Eigen::Ref<const Matrix>& logits);

/// log(1 + relu(max over rows)) per vocabulary column. Weights <= epsilon are
/// not stored.
SparseLexiconVector saturate_pool(const LogitMatrix& logits, double epsilon = 0.0);

/// Dense form of saturate_pool for batched training.
RowVector saturate_pool_dense(const PooledLogits& pooled);

/// Given dL/dp for p = saturate_pool(S), accumulates dL/dS into grad_logits.
void saturate_pool_backward(const PooledLogits& pooled, const RowVector& grad_rep, Eigen::Ref<Matrix> grad_logits);

/// softmax over the vocabulary of the column-wise max (no relu, no log).
LexiconDistribution lexicon_distribution(const LogitMatrix& logits);
RowVector lexicon_distribution_dense(const PooledLogits& pooled);

/// Numerically stable softmax of a row.
RowVector softmax(const RowVector& z);

/// Given a = lexicon_distribution(S) and dL/da, accumulates dL/dS.
void lexicon_distribution_backward(const PooledLogits& pooled, const RowVector& probs,
                                   const RowVector& grad_probs, Eigen::Ref<Matrix> grad_logits);

/// b = a * W where W is the |V| x d token-embedding matrix.
BottleneckVector cbow_bottleneck(const LexiconDistribution& dist, const Matrix& embeddings);

struct BottleneckGrads {
    RowVector grad_probs;
    /// Left empty unless the stop-gradient on the embeddings is disabled.
    Matrix grad_embeddings;
};

/// Backward pass for b = a * sg(W). With stop_gradient the embedding gradient
/// is never formed; disabling it exists only to exercise the contract in
/// tests and self-checks.
BottleneckGrads cbow_bottleneck_backward(const RowVector& probs, const Matrix& embeddings,
                                         const RowVector& grad_bottleneck, bool stop_gradient = true);

/// Keeps the k largest weights, ties resolved toward the smaller term id.
SparseLexiconVector top_k_sparsify(const SparseLexiconVector& vec, std::size_t k);

}  // namespace lexipse

#pragma once

#include "lexipse/common.hpp"
#include "lexipse/sparse_repr.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace lexipse {

/// A token sequence after BERT-style corruption.
struct MaskedSequence {
    std::vector<TermId> tokens;
    std::vector<TermId> original;
    /// Every selected position, including the ones left unchanged.
    std::vector<std::size_t> masked_positions;
    TermId mask_token_id = 0;

    void validate() const;
    friend bool operator==(const MaskedSequence&, const MaskedSequence&) = default;
};

/// Scalar loss plus one gradient per differentiable input, in argument order.
struct LossOutput {
    double value = 0.0;
    std::vector<Matrix> grads;
};

/// Selects round-half-up(rate * len) positions without replacement. Each one
/// becomes mask_id with probability 0.8, a uniformly drawn non-mask token with
/// probability 0.1, and stays unchanged otherwise.
MaskedSequence mask_tokens(std::span<const TermId> tokens, double rate, TermId mask_id, std::size_t vocab_size,
                           std::mt19937_64& rng);
MaskedSequence mask_tokens(std::span<const TermId> tokens, double rate, TermId mask_id, std::size_t vocab_size,
                           std::uint64_t seed);

/// Number of positions mask_tokens selects for a sequence of `len` tokens.
std::size_t masked_count(std::size_t len, double rate);

/// Cross-entropy summed over masked positions. Row 0 of `logits` is the CLS /
/// bottleneck slot, so token position j reads logits row j + 1.
/// grads[0] has the shape of `logits`.
LossOutput mlm_loss(const LogitMatrix& logits, const MaskedSequence& masked);
LossOutput mlm_loss(const Matrix& logits, const MaskedSequence& masked);

/// Sum over the vocabulary of the squared batch-mean activation. Rows of
/// `batch` are samples.
double flops_reg(const Matrix& batch);
double flops_reg(std::span<const SparseLexiconVector> batch);
Matrix flops_reg_grad(const Matrix& batch);

enum class Direction { ImageToText, TextToImage };

/// One direction of the in-batch contrastive loss: batch-mean InfoNCE over raw
/// dot-product similarities divided by tau, plus lambda * F of the query
/// modality. grads[0] is w.r.t. images, grads[1] w.r.t. texts.
LossOutput baco_directional(const Matrix& images, const Matrix& texts, double tau, double lambda, Direction dir);

/// Mean of both directions. Rows are aligned positives.
LossOutput baco_loss(const Matrix& images, const Matrix& texts, double tau, double lambda);
LossOutput baco_loss(std::span<const SparseLexiconVector> images, std::span<const SparseLexiconVector> texts,
                     double tau, double lambda);

/// InfoNCE of one query against its momentum positive and a queue of
/// negatives, plus lambda * F({query}). grads[0] is w.r.t. the query only.
LossOutput moco_loss(const SparseLexiconVector& query, const SparseLexiconVector& positive,
                     std::span<const SparseLexiconVector> queue, double tau, double lambda);

/// Batched form used in training: rows of `queries` pair with rows of
/// `positives`; each row's candidate set is its own positive plus every queue
/// row. Value is the batch mean plus lambda * F(queries).
LossOutput moco_batch_loss(const Matrix& queries, const Matrix& positives, const Matrix& queue, double tau,
                           double lambda);

/// Unweighted sum of the four lexicon-bottlenecked pre-training terms.
double phase1_total(double self_mlm, double i2t_mlm, double t2i_mlm, double baco);

/// Stacks sparse vectors into dense rows; all must share a vocabulary size.
Matrix stack_dense(std::span<const SparseLexiconVector> batch);

}  // namespace lexipse

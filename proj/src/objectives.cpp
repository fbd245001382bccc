#include "lexipse/objectives.hpp"

#include "lexipse/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lexipse {

namespace {

double log_sum_exp(const RowVector& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

void require_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("temperature must be positive");
}

void require_finite(const LossOutput& out, const char* what) {
    bool ok = std::isfinite(out.value);
    for (const auto& g : out.grads) ok = ok && g.allFinite();
    if (!ok) throw InvalidInput(std::string(what) + " produced a non-finite value");
}

}  // namespace

void MaskedSequence::validate() const {
    if (tokens.size() != original.size()) throw InvalidInput("masked and original sequences differ in length");
    std::size_t next = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const bool selected = next < masked_positions.size() && masked_positions[next] == i;
        if (selected) {
            ++next;
        } else if (tokens[i] != original[i]) {
            throw InvalidInput("unmasked position " + std::to_string(i) + " was altered");
        }
    }
    if (next != masked_positions.size()) throw InvalidInput("masked positions unsorted or out of range");
}

std::size_t masked_count(std::size_t len, double rate) {
    return static_cast<std::size_t>(std::floor(rate * static_cast<double>(len) + 0.5));
}

MaskedSequence mask_tokens(std::span<const TermId> tokens, double rate, TermId mask_id, std::size_t vocab_size,
                           std::mt19937_64& rng) {
    if (!(rate > 0.0 && rate < 1.0)) throw InvalidArgument("masking rate must lie in (0, 1)");
    if (tokens.empty()) throw InvalidArgument("cannot mask an empty sequence");
    if (vocab_size < 2 || mask_id >= vocab_size) throw InvalidArgument("mask id must lie inside a vocabulary of >= 2");

    MaskedSequence out;
    out.original.assign(tokens.begin(), tokens.end());
    out.tokens = out.original;
    out.mask_token_id = mask_id;

    const std::size_t n = tokens.size();
    const std::size_t count = std::min(n, masked_count(n, rate));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    out.masked_positions.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(out.masked_positions.begin(), out.masked_positions.end());

    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<TermId> other(0, static_cast<TermId>(vocab_size - 2));
    for (const std::size_t pos : out.masked_positions) {
        const double u = coin(rng);
        if (u < 0.8) {
            out.tokens[pos] = mask_id;
        } else if (u < 0.9) {
            TermId t = other(rng);
            if (t >= mask_id) ++t;
            out.tokens[pos] = t;
        }
    }
    return out;
}

MaskedSequence mask_tokens(std::span<const TermId> tokens, double rate, TermId mask_id, std::size_t vocab_size,
                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return mask_tokens(tokens, rate, mask_id, vocab_size, rng);
}

LossOutput mlm_loss(const Matrix& logits, const MaskedSequence& masked) {
    LossOutput out;
    out.grads.emplace_back(Matrix::Zero(logits.rows(), logits.cols()));
    Matrix& grad = out.grads.front();
    for (const std::size_t pos : masked.masked_positions) {
        const auto row = static_cast<Eigen::Index>(pos + 1);
        if (row >= logits.rows()) {
            throw ShapeError("masked position " + std::to_string(pos) + " has no logit row (matrix has " +
                             std::to_string(logits.rows()) + " rows)");
        }
        const TermId target = masked.original[pos];
        if (static_cast<Eigen::Index>(target) >= logits.cols()) {
            throw ShapeError("target token " + std::to_string(target) + " outside the logit vocabulary");
        }
        const RowVector z = logits.row(row);
        const double lse = log_sum_exp(z);
        out.value += lse - z[target];
        grad.row(row) = (z.array() - lse).exp().matrix();
        grad(row, target) -= 1.0;
    }
    require_finite(out, "mlm loss");
    return out;
}

LossOutput mlm_loss(const LogitMatrix& logits, const MaskedSequence& masked) {
    return mlm_loss(logits.values(), masked);
}

double flops_reg(const Matrix& batch) {
    if (batch.rows() == 0) throw ShapeError("FLOPS regularizer needs a non-empty batch");
    return batch.colwise().mean().squaredNorm();
}

Matrix flops_reg_grad(const Matrix& batch) {
    const double n = static_cast<double>(batch.rows());
    const RowVector mean = batch.colwise().mean();
    return (2.0 / n) * mean.replicate(batch.rows(), 1);
}

Matrix stack_dense(std::span<const SparseLexiconVector> batch) {
    if (batch.empty()) return Matrix(0, 0);
    const std::size_t v = batch.front().vocab_size;
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(v));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].vocab_size != v) {
            throw ShapeError("vocabulary mismatch in batch: " + std::to_string(batch[i].vocab_size) + " vs " +
                             std::to_string(v));
        }
        for (const auto& e : batch[i].entries) out(static_cast<Eigen::Index>(i), e.term) = e.weight;
    }
    return out;
}

double flops_reg(std::span<const SparseLexiconVector> batch) {
    if (batch.empty()) throw ShapeError("FLOPS regularizer needs a non-empty batch");
    return flops_reg(stack_dense(batch));
}

LossOutput baco_directional(const Matrix& images, const Matrix& texts, double tau, double lambda, Direction dir) {
    require_tau(tau);
    if (images.rows() != texts.rows() || images.cols() != texts.cols()) {
        throw ShapeError("image and text batches differ in shape");
    }
    if (images.rows() == 0) throw ShapeError("contrastive loss needs at least one pair");
    const auto n = images.rows();
    const double inv_n = 1.0 / static_cast<double>(n);

    // scores(i, j) = image_i . text_j / tau; i2t normalises rows, t2i columns.
    Matrix scores = (images * texts.transpose()) / tau;
    if (dir == Direction::TextToImage) scores.transposeInPlace();

    LossOutput out;
    Matrix dscores(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const RowVector z = scores.row(i);
        const double lse = log_sum_exp(z);
        out.value += (lse - z[i]) * inv_n;
        dscores.row(i) = (z.array() - lse).exp().matrix();
        dscores(i, i) -= 1.0;
    }
    dscores *= inv_n / tau;
    if (dir == Direction::TextToImage) dscores.transposeInPlace();

    Matrix g_img = dscores * texts;
    Matrix g_txt = dscores.transpose() * images;
    if (lambda != 0.0) {
        if (dir == Direction::ImageToText) {
            out.value += lambda * flops_reg(images);
            g_img += lambda * flops_reg_grad(images);
        } else {
            out.value += lambda * flops_reg(texts);
            g_txt += lambda * flops_reg_grad(texts);
        }
    }
    out.grads.push_back(std::move(g_img));
    out.grads.push_back(std::move(g_txt));
    require_finite(out, "contrastive loss");
    return out;
}

LossOutput baco_loss(const Matrix& images, const Matrix& texts, double tau, double lambda) {
    LossOutput i2t = baco_directional(images, texts, tau, lambda, Direction::ImageToText);
    const LossOutput t2i = baco_directional(images, texts, tau, lambda, Direction::TextToImage);
    i2t.value = 0.5 * (i2t.value + t2i.value);
    for (std::size_t k = 0; k < 2; ++k) i2t.grads[k] = 0.5 * (i2t.grads[k] + t2i.grads[k]);
    return i2t;
}

LossOutput baco_loss(std::span<const SparseLexiconVector> images, std::span<const SparseLexiconVector> texts,
                     double tau, double lambda) {
    if (images.size() != texts.size()) {
        throw ShapeError("batch sizes differ: " + std::to_string(images.size()) + " images, " +
                         std::to_string(texts.size()) + " texts");
    }
    require_tau(tau);
    return baco_loss(stack_dense(images), stack_dense(texts), tau, lambda);
}

LossOutput moco_batch_loss(const Matrix& queries, const Matrix& positives, const Matrix& queue, double tau,
                           double lambda) {
    require_tau(tau);
    if (queries.cols() == 0) throw InvalidArgument("empty vocabulary");
    if (queries.rows() != positives.rows() || queries.cols() != positives.cols()) {
        throw ShapeError("queries and momentum positives differ in shape");
    }
    if (queue.rows() > 0 && queue.cols() != queries.cols()) throw ShapeError("queue vocabulary mismatch");
    if (queries.rows() == 0) throw ShapeError("momentum loss needs at least one query");

    const auto n = queries.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    const Matrix neg_scores = queue.rows() > 0 ? Matrix((queries * queue.transpose()) / tau) : Matrix(n, 0);

    LossOutput out;
    Matrix grad(n, queries.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        RowVector z(neg_scores.cols() + 1);
        z[0] = queries.row(i).dot(positives.row(i)) / tau;
        if (neg_scores.cols() > 0) z.tail(neg_scores.cols()) = neg_scores.row(i);
        const double lse = log_sum_exp(z);
        out.value += (lse - z[0]) * inv_n;
        const RowVector prob = (z.array() - lse).exp().matrix();
        RowVector g = (prob[0] - 1.0) * positives.row(i);
        if (queue.rows() > 0) g += prob.tail(queue.rows()) * queue;
        grad.row(i) = g * (inv_n / tau);
    }
    if (lambda != 0.0) {
        out.value += lambda * flops_reg(queries);
        grad += lambda * flops_reg_grad(queries);
    }
    out.grads.push_back(std::move(grad));
    require_finite(out, "momentum contrastive loss");
    return out;
}

LossOutput moco_loss(const SparseLexiconVector& query, const SparseLexiconVector& positive,
                     std::span<const SparseLexiconVector> queue, double tau, double lambda) {
    require_tau(tau);
    if (query.vocab_size == 0) throw InvalidArgument("empty vocabulary");
    if (positive.vocab_size != query.vocab_size) throw ShapeError("positive vocabulary mismatch");
    const Matrix q = query.dense().transpose();
    const Matrix pos = positive.dense().transpose();
    Matrix negatives = queue.empty() ? Matrix(0, q.cols()) : stack_dense(queue);
    return moco_batch_loss(q, pos, negatives, tau, lambda);
}

double phase1_total(double self_mlm, double i2t_mlm, double t2i_mlm, double baco) {
    for (const double v : {self_mlm, i2t_mlm, t2i_mlm, baco}) {
        if (!std::isfinite(v)) throw InvalidInput("phase-1 loss term is not finite");
    }
    return self_mlm + i2t_mlm + t2i_mlm + baco;
}

}  // namespace lexipse

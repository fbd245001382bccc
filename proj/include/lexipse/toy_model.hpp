#pragma once

#include "lexipse/common.hpp"
#include "lexipse/sparse_repr.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lexipse {

enum class Modality { Visual, Textual };

/// Parameters of a linear encoder: symbol embeddings, a learned CLS row, and
/// an LM head (projection plus per-term bias) into the vocabulary.
struct EncoderParams {
    Matrix embeddings;  // symbols x d
    Matrix cls;         // 1 x d
    Matrix head;        // d x |V|
    Matrix bias;        // 1 x |V|

    template <typename F>
    void for_each(F&& f) {
        f("embeddings", embeddings);
        f("cls", cls);
        f("head", head);
        f("bias", bias);
    }
    template <typename F>
    void for_each(F&& f) const {
        f("embeddings", embeddings);
        f("cls", cls);
        f("head", head);
        f("bias", bias);
    }
};

/// Linear masked-token decoder conditioned on a bottleneck vector.
struct DecoderParams {
    Matrix embeddings;  // |V| x d
    Matrix head;        // d x |V|
    Matrix bias;        // 1 x |V|

    template <typename F>
    void for_each(F&& f) {
        f("embeddings", embeddings);
        f("head", head);
        f("bias", bias);
    }
    template <typename F>
    void for_each(F&& f) const {
        f("embeddings", embeddings);
        f("head", head);
        f("bias", bias);
    }
};

template <typename Params>
Params zeros_like(const Params& p) {
    Params z = p;
    z.for_each([](const char*, Matrix& m) { m.setZero(); });
    return z;
}

template <typename Params>
std::vector<double> flatten(const Params& p) {
    std::vector<double> out;
    p.for_each([&](const char*, const Matrix& m) { out.insert(out.end(), m.data(), m.data() + m.size()); });
    return out;
}

template <typename Params>
void unflatten(Params& p, std::span<const double> flat) {
    std::size_t at = 0;
    p.for_each([&](const char*, Matrix& m) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), m.size(), m.data());
        at += static_cast<std::size_t>(m.size());
    });
}

/// Cached activations of one batched encoder pass. Every sequence in a batch
/// has the same length; sample b owns logit rows [b*(len+1), (b+1)*(len+1)).
struct EncoderPass {
    std::size_t batch = 0;
    std::size_t seq_len = 0;
    std::vector<std::vector<TermId>> inputs;
    Matrix hidden;
    Matrix logits;

    std::size_t rows_per_sample() const noexcept { return seq_len + 1; }
    Matrix sample_logits(std::size_t b) const;
};

/// Embeds [CLS; x], adds the sequence mean of those embeddings to every
/// position, then projects through the LM head.
class ToyEncoder {
  public:
    ToyEncoder() = default;
    ToyEncoder(Modality modality, std::size_t input_symbols, std::size_t dim, std::size_t vocab_size,
               double init_scale, std::mt19937_64& rng);
    ToyEncoder(Modality modality, EncoderParams params);

    Modality modality() const noexcept { return modality_; }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(params_.head.rows()); }
    std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(params_.head.cols()); }
    std::size_t input_symbols() const noexcept { return static_cast<std::size_t>(params_.embeddings.rows()); }

    EncoderParams& params() noexcept { return params_; }
    const EncoderParams& params() const noexcept { return params_; }

    EncoderPass forward(std::span<const std::vector<TermId>> sequences) const;
    /// Accumulates parameter gradients for dL/dlogits into `grads`.
    void backward(const EncoderPass& pass, const Matrix& grad_logits, EncoderParams& grads) const;

    LogitMatrix logits(std::span<const TermId> sequence) const;

  private:
    Modality modality_ = Modality::Textual;
    EncoderParams params_;
};

struct DecoderPass {
    /// One row per masked position across the batch.
    Matrix hidden;
    Matrix logits;
    std::vector<std::size_t> owner;       // sample index of each row
    std::vector<TermId> inputs;           // corrupted token fed at each row
};

class ToyDecoder {
  public:
    ToyDecoder() = default;
    ToyDecoder(std::size_t dim, std::size_t vocab_size, double init_scale, std::mt19937_64& rng);
    explicit ToyDecoder(DecoderParams params) : params_(std::move(params)) {}

    DecoderParams& params() noexcept { return params_; }
    const DecoderParams& params() const noexcept { return params_; }

    /// Hidden state at a masked position is embed(token) + bottleneck of its
    /// sample. The bottleneck-only slot that replaces CLS carries no loss and
    /// is not materialised.
    DecoderPass forward(const Matrix& bottlenecks, std::span<const std::vector<TermId>> corrupted,
                        std::span<const std::vector<std::size_t>> masked_positions) const;
    /// Accumulates parameter gradients and returns dL/dbottleneck (batch x d).
    Matrix backward(const DecoderPass& pass, const Matrix& grad_logits, std::size_t batch, DecoderParams& grads) const;

  private:
    DecoderParams params_;
};

/// All trainable state of the toy pipeline.
struct ToyModel {
    ToyEncoder image;
    ToyEncoder text;
    ToyDecoder image_decoder;
    ToyDecoder text_decoder;

    static ToyModel init(std::size_t vocab_size, std::size_t dim, double init_scale, std::uint64_t seed);

    /// The text encoder's token embeddings double as the bottleneck matrix.
    const Matrix& token_embeddings() const noexcept { return text.params().embeddings; }
};

/// Sparse representation of one sequence under an encoder.
SparseLexiconVector encode_sparse(const ToyEncoder& encoder, std::span<const TermId> sequence);

}  // namespace lexipse

#include "lexipse/toy_model.hpp"

#include "lexipse/errors.hpp"

namespace lexipse {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

}  // namespace

Matrix EncoderPass::sample_logits(std::size_t b) const {
    const auto rows = static_cast<Eigen::Index>(rows_per_sample());
    return logits.middleRows(static_cast<Eigen::Index>(b) * rows, rows);
}

ToyEncoder::ToyEncoder(Modality modality, std::size_t input_symbols, std::size_t dim, std::size_t vocab_size,
                       double init_scale, std::mt19937_64& rng)
    : modality_(modality) {
    const auto d = static_cast<Eigen::Index>(dim);
    const auto v = static_cast<Eigen::Index>(vocab_size);
    params_.embeddings = gaussian(static_cast<Eigen::Index>(input_symbols), d, init_scale, rng);
    params_.cls = gaussian(1, d, init_scale, rng);
    params_.head = gaussian(d, v, init_scale, rng);
    params_.bias = Matrix::Zero(1, v);
}

ToyEncoder::ToyEncoder(Modality modality, EncoderParams params) : modality_(modality), params_(std::move(params)) {
    const auto d = params_.head.rows();
    if (params_.embeddings.cols() != d || params_.cls.rows() != 1 || params_.cls.cols() != d || params_.bias.rows() != 1 ||
        params_.bias.cols() != params_.head.cols()) {
        throw ShapeError("inconsistent encoder parameter shapes");
    }
}

EncoderPass ToyEncoder::forward(std::span<const std::vector<TermId>> sequences) const {
    EncoderPass pass;
    pass.batch = sequences.size();
    pass.seq_len = sequences.empty() ? 0 : sequences.front().size();
    pass.inputs.assign(sequences.begin(), sequences.end());
    const auto rows = static_cast<Eigen::Index>(pass.rows_per_sample());
    const auto d = params_.head.rows();
    pass.hidden.resize(static_cast<Eigen::Index>(pass.batch) * rows, d);

    for (std::size_t b = 0; b < pass.batch; ++b) {
        const auto& seq = sequences[b];
        if (seq.size() != pass.seq_len) throw ShapeError("encoder batch mixes sequence lengths");
        auto block = pass.hidden.middleRows(static_cast<Eigen::Index>(b) * rows, rows);
        block.row(0) = params_.cls;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (seq[i] >= input_symbols()) throw ShapeError("input symbol outside the embedding table");
            block.row(static_cast<Eigen::Index>(i) + 1) = params_.embeddings.row(seq[i]);
        }
        const RowVector context = block.colwise().mean();
        block.rowwise() += context;
    }
    pass.logits = pass.hidden * params_.head;
    pass.logits.rowwise() += params_.bias.row(0);
    return pass;
}

void ToyEncoder::backward(const EncoderPass& pass, const Matrix& grad_logits, EncoderParams& grads) const {
    grads.head.noalias() += pass.hidden.transpose() * grad_logits;
    grads.bias += grad_logits.colwise().sum();
    const Matrix grad_hidden = grad_logits * params_.head.transpose();

    const auto rows = static_cast<Eigen::Index>(pass.rows_per_sample());
    for (std::size_t b = 0; b < pass.batch; ++b) {
        const auto block = grad_hidden.middleRows(static_cast<Eigen::Index>(b) * rows, rows);
        const RowVector shared = block.colwise().sum() / static_cast<double>(rows);
        grads.cls.row(0) += block.row(0) + shared;
        const auto& seq = pass.inputs[b];
        for (std::size_t i = 0; i < seq.size(); ++i) {
            grads.embeddings.row(seq[i]) += block.row(static_cast<Eigen::Index>(i) + 1) + shared;
        }
    }
}

LogitMatrix ToyEncoder::logits(std::span<const TermId> sequence) const {
    const std::vector<std::vector<TermId>> one{std::vector<TermId>(sequence.begin(), sequence.end())};
    return LogitMatrix(forward(one).logits);
}

ToyDecoder::ToyDecoder(std::size_t dim, std::size_t vocab_size, double init_scale, std::mt19937_64& rng) {
    const auto d = static_cast<Eigen::Index>(dim);
    const auto v = static_cast<Eigen::Index>(vocab_size);
    params_.embeddings = gaussian(v, d, init_scale, rng);
    params_.head = gaussian(d, v, init_scale, rng);
    params_.bias = Matrix::Zero(1, v);
}

DecoderPass ToyDecoder::forward(const Matrix& bottlenecks, std::span<const std::vector<TermId>> corrupted,
                                std::span<const std::vector<std::size_t>> masked_positions) const {
    DecoderPass pass;
    std::size_t total = 0;
    for (const auto& m : masked_positions) total += m.size();
    pass.hidden.resize(static_cast<Eigen::Index>(total), params_.head.rows());
    Eigen::Index r = 0;
    for (std::size_t b = 0; b < masked_positions.size(); ++b) {
        for (const auto pos : masked_positions[b]) {
            const TermId tok = corrupted[b][pos];
            pass.hidden.row(r++) = params_.embeddings.row(tok) + bottlenecks.row(static_cast<Eigen::Index>(b));
            pass.owner.push_back(b);
            pass.inputs.push_back(tok);
        }
    }
    pass.logits = pass.hidden * params_.head;
    pass.logits.rowwise() += params_.bias.row(0);
    return pass;
}

Matrix ToyDecoder::backward(const DecoderPass& pass, const Matrix& grad_logits, std::size_t batch,
                            DecoderParams& grads) const {
    grads.head.noalias() += pass.hidden.transpose() * grad_logits;
    grads.bias += grad_logits.colwise().sum();
    const Matrix grad_hidden = grad_logits * params_.head.transpose();
    Matrix grad_bottleneck = Matrix::Zero(static_cast<Eigen::Index>(batch), params_.head.rows());
    for (Eigen::Index r = 0; r < grad_hidden.rows(); ++r) {
        grads.embeddings.row(pass.inputs[static_cast<std::size_t>(r)]) += grad_hidden.row(r);
        grad_bottleneck.row(static_cast<Eigen::Index>(pass.owner[static_cast<std::size_t>(r)])) += grad_hidden.row(r);
    }
    return grad_bottleneck;
}

ToyModel ToyModel::init(std::size_t vocab_size, std::size_t dim, double init_scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ToyModel m;
    m.image = ToyEncoder(Modality::Visual, vocab_size, dim, vocab_size, init_scale, rng);
    m.text = ToyEncoder(Modality::Textual, vocab_size, dim, vocab_size, init_scale, rng);
    m.image_decoder = ToyDecoder(dim, vocab_size, init_scale, rng);
    m.text_decoder = ToyDecoder(dim, vocab_size, init_scale, rng);
    return m;
}

SparseLexiconVector encode_sparse(const ToyEncoder& encoder, std::span<const TermId> sequence) {
    return saturate_pool(encoder.logits(sequence));
}

}  // namespace lexipse

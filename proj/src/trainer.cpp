#include "lexipse/trainer.hpp"

#include "lexipse/binary.hpp"
#include "lexipse/errors.hpp"
#include "lexipse/lexindex.hpp"
#include "lexipse/evalbench.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lexipse {

void TrainConfig::validate() const {
    if (dim == 0) throw InvalidArgument("dim must be >= 1");
    if (steps == 0) throw InvalidArgument("steps must be >= 1");
    if (batch_size < 2) throw InvalidArgument("batch size must be >= 2 for in-batch negatives");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning rate must be positive");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("tau must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be non-negative");
    for (const double r : {enc_mask_rate, dec_mask_rate}) {
        if (!(r > 0.0 && r < 1.0)) throw InvalidArgument("mask rates must lie in (0, 1)");
    }
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw InvalidArgument("ema decay must lie in [0, 1)");
    if (queue_capacity == 0) throw InvalidArgument("queue capacity must be >= 1");
    if (!(init_scale > 0.0)) throw InvalidArgument("init scale must be positive");
    if (!(grad_clip >= 0.0)) throw InvalidArgument("gradient clip must be non-negative");
    if (dec_mask_rate < enc_mask_rate) {
        spdlog::warn("decoder mask rate {} is below encoder mask rate {}", dec_mask_rate, enc_mask_rate);
    }
}

Phase1Batch make_phase1_batch(const SyntheticPairSet& data, std::span<const std::size_t> samples,
                              const TrainConfig& cfg, std::mt19937_64& rng) {
    Phase1Batch batch;
    batch.samples.assign(samples.begin(), samples.end());
    for (const auto s : samples) {
        const auto& text = data.pairs.at(s).text;
        batch.encoder_masked.push_back(mask_tokens(text, cfg.enc_mask_rate, data.mask_token, data.vocab_size, rng));
        batch.decoder_masked.push_back(mask_tokens(text, cfg.dec_mask_rate, data.mask_token, data.vocab_size, rng));
    }
    return batch;
}

ModelGrads ModelGrads::zeros_for(const ToyModel& model) {
    return {zeros_like(model.image.params()), zeros_like(model.text.params()),
            zeros_like(model.image_decoder.params()), zeros_like(model.text_decoder.params())};
}

namespace {

struct Encoded {
    EncoderPass pass;
    std::vector<PooledLogits> pooled;
    Matrix reps;  // saturated representations, one row per sample
};

Encoded encode(const ToyEncoder& enc, std::span<const std::vector<TermId>> seqs) {
    Encoded e;
    e.pass = enc.forward(seqs);
    const auto rows = static_cast<Eigen::Index>(e.pass.rows_per_sample());
    e.reps.resize(static_cast<Eigen::Index>(seqs.size()), e.pass.logits.cols());
    for (std::size_t b = 0; b < seqs.size(); ++b) {
        e.pooled.push_back(max_pool(e.pass.logits.middleRows(static_cast<Eigen::Index>(b) * rows, rows)));
        e.reps.row(static_cast<Eigen::Index>(b)) = saturate_pool_dense(e.pooled.back());
    }
    return e;
}

double mean_nnz(const Matrix& reps) {
    if (reps.rows() == 0) return 0.0;
    return static_cast<double>((reps.array() > 0.0).count()) / static_cast<double>(reps.rows());
}

Eigen::Ref<Matrix> sample_block(Matrix& m, const EncoderPass& pass, std::size_t b) {
    const auto rows = static_cast<Eigen::Index>(pass.rows_per_sample());
    return m.middleRows(static_cast<Eigen::Index>(b) * rows, rows);
}

// Reconstruction of the original text from a bottleneck; returns the batch-mean loss.
double decode_through_bottleneck(const ToyDecoder& decoder, const Encoded& enc, const Matrix& probs,
                                 const Matrix& bottleneck_embeddings, const Phase1Batch& batch,
                                 const TrainConfig& cfg, Matrix* grad_enc_logits, DecoderParams* dec_grads,
                                 Matrix* grad_bottleneck_embeddings) {
    const auto n = batch.samples.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    const Matrix bottlenecks = probs * bottleneck_embeddings;

    std::vector<std::vector<TermId>> corrupted;
    std::vector<std::vector<std::size_t>> positions;
    for (const auto& m : batch.decoder_masked) {
        corrupted.push_back(m.tokens);
        positions.push_back(m.masked_positions);
    }
    const DecoderPass pass = decoder.forward(bottlenecks, corrupted, positions);

    double loss = 0.0;
    Matrix grad_logits(pass.logits.rows(), pass.logits.cols());
    Eigen::Index r = 0;
    for (std::size_t b = 0; b < n; ++b) {
        const auto& dm = batch.decoder_masked[b];
        const auto m = static_cast<Eigen::Index>(dm.masked_positions.size());
        Matrix compact(m + 1, pass.logits.cols());
        compact.row(0).setZero();
        compact.bottomRows(m) = pass.logits.middleRows(r, m);
        MaskedSequence seq;
        seq.mask_token_id = dm.mask_token_id;
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto pos = dm.masked_positions[static_cast<std::size_t>(j)];
            seq.tokens.push_back(dm.tokens[pos]);
            seq.original.push_back(dm.original[pos]);
            seq.masked_positions.push_back(static_cast<std::size_t>(j));
        }
        const LossOutput out = mlm_loss(compact, seq);
        loss += out.value * inv_n;
        grad_logits.middleRows(r, m) = out.grads[0].bottomRows(m) * inv_n;
        r += m;
    }

    if (grad_enc_logits != nullptr) {
        const Matrix grad_b = decoder.backward(pass, grad_logits, n, *dec_grads);
        for (std::size_t b = 0; b < n; ++b) {
            const auto row = static_cast<Eigen::Index>(b);
            const RowVector p = probs.row(row);
            const BottleneckGrads bg = cbow_bottleneck_backward(p, bottleneck_embeddings, grad_b.row(row), cfg.stop_gradient);
            lexicon_distribution_backward(enc.pooled[b], p, bg.grad_probs, sample_block(*grad_enc_logits, enc.pass, b));
            if (!cfg.stop_gradient) *grad_bottleneck_embeddings += bg.grad_embeddings;
        }
    }
    return loss;
}

Matrix distributions(const Encoded& enc) {
    Matrix a(enc.reps.rows(), enc.reps.cols());
    for (std::size_t b = 0; b < enc.pooled.size(); ++b) a.row(static_cast<Eigen::Index>(b)) = lexicon_distribution_dense(enc.pooled[b]);
    return a;
}

void saturate_backward_rows(const Encoded& enc, const Matrix& grad_reps, Matrix& grad_logits) {
    for (std::size_t b = 0; b < enc.pooled.size(); ++b) {
        saturate_pool_backward(enc.pooled[b], grad_reps.row(static_cast<Eigen::Index>(b)), sample_block(grad_logits, enc.pass, b));
    }
}

}  // namespace

Phase1Losses phase1_objective(const ToyModel& model, const SyntheticPairSet& data, const Phase1Batch& batch,
                              const TrainConfig& cfg, ModelGrads* grads) {
    const auto& obj = cfg.objectives;
    const auto n = batch.samples.size();
    if (n == 0) throw InvalidArgument("empty batch");
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<std::vector<TermId>> images, texts, enc_masked;
    for (std::size_t b = 0; b < n; ++b) {
        const auto& pair = data.pairs.at(batch.samples[b]);
        images.push_back(pair.image);
        texts.push_back(pair.text);
        enc_masked.push_back(batch.encoder_masked[b].tokens);
    }

    const Encoded img = encode(model.image, images);
    const Encoded txt = encode(model.text, texts);
    const bool need_masked = obj.self_mlm || obj.t2i_mlm;
    const Encoded txtm = need_masked ? encode(model.text, enc_masked) : Encoded{};

    Phase1Losses losses;
    losses.nnz_img = mean_nnz(img.reps);
    losses.nnz_txt = mean_nnz(txt.reps);

    const bool want = grads != nullptr;
    Matrix d_img, d_txt, d_txtm;
    if (want) {
        d_img = Matrix::Zero(img.pass.logits.rows(), img.pass.logits.cols());
        d_txt = Matrix::Zero(txt.pass.logits.rows(), txt.pass.logits.cols());
        if (need_masked) d_txtm = Matrix::Zero(txtm.pass.logits.rows(), txtm.pass.logits.cols());
    }

    if (obj.self_mlm) {
        for (std::size_t b = 0; b < n; ++b) {
            const LossOutput out = mlm_loss(txtm.pass.sample_logits(b), batch.encoder_masked[b]);
            losses.self_mlm += out.value * inv_n;
            if (want) sample_block(d_txtm, txtm.pass, b) += out.grads[0] * inv_n;
        }
    }

    const Matrix& w_te = model.token_embeddings();
    if (obj.i2t_mlm) {
        losses.i2t_mlm = decode_through_bottleneck(model.text_decoder, img, distributions(img), w_te, batch, cfg,
                                                   want ? &d_img : nullptr, want ? &grads->text_decoder : nullptr,
                                                   want ? &grads->text.embeddings : nullptr);
    }
    if (obj.t2i_mlm) {
        losses.t2i_mlm = decode_through_bottleneck(model.image_decoder, txtm, distributions(txtm), w_te, batch, cfg,
                                                   want ? &d_txtm : nullptr, want ? &grads->image_decoder : nullptr,
                                                   want ? &grads->text.embeddings : nullptr);
    }
    if (obj.baco) {
        const LossOutput out = baco_loss(img.reps, txt.reps, cfg.tau, cfg.lambda);
        losses.baco = out.value;
        if (want) {
            saturate_backward_rows(img, out.grads[0], d_img);
            saturate_backward_rows(txt, out.grads[1], d_txt);
        }
    }
    losses.total = phase1_total(losses.self_mlm, losses.i2t_mlm, losses.t2i_mlm, losses.baco);

    if (want) {
        model.image.backward(img.pass, d_img, grads->image);
        model.text.backward(txt.pass, d_txt, grads->text);
        if (need_masked) model.text.backward(txtm.pass, d_txtm, grads->text);
    }
    return losses;
}

Phase2Losses phase2_objective(const ToyModel& model, const MomentumState& momentum, const SyntheticPairSet& data,
                              std::span<const std::size_t> samples, const TrainConfig& cfg, ModelGrads* grads) {
    if (samples.empty()) throw InvalidArgument("empty batch");
    std::vector<std::vector<TermId>> images, texts;
    for (const auto s : samples) {
        images.push_back(data.pairs.at(s).image);
        texts.push_back(data.pairs.at(s).text);
    }
    const Encoded img = encode(model.image, images);
    const Encoded txt = encode(model.text, texts);

    Phase2Losses out;
    out.momentum_img = encode(momentum.image, images).reps;
    out.momentum_txt = encode(momentum.text, texts).reps;
    out.nnz_img = mean_nnz(img.reps);
    out.nnz_txt = mean_nnz(txt.reps);

    const Matrix img_queue = momentum.image_queue.rows() ? momentum.image_queue : Matrix(0, img.reps.cols());
    const Matrix txt_queue = momentum.text_queue.rows() ? momentum.text_queue : Matrix(0, txt.reps.cols());
    const LossOutput i2t = moco_batch_loss(img.reps, out.momentum_txt, txt_queue, cfg.tau, cfg.lambda);
    const LossOutput t2i = moco_batch_loss(txt.reps, out.momentum_img, img_queue, cfg.tau, cfg.lambda);
    out.moco = 0.5 * (i2t.value + t2i.value);

    if (grads != nullptr) {
        Matrix d_img = Matrix::Zero(img.pass.logits.rows(), img.pass.logits.cols());
        Matrix d_txt = Matrix::Zero(txt.pass.logits.rows(), txt.pass.logits.cols());
        saturate_backward_rows(img, 0.5 * i2t.grads[0], d_img);
        saturate_backward_rows(txt, 0.5 * t2i.grads[0], d_txt);
        model.image.backward(img.pass, d_img, grads->image);
        model.text.backward(txt.pass, d_txt, grads->text);
    }
    return out;
}

EvalResult evaluate(const ToyModel& model, const SyntheticPairSet& data) {
    const auto held = data.split(true);
    EvalResult res;
    res.candidates = held.size();
    if (held.empty()) return res;

    std::vector<std::vector<TermId>> images, texts;
    for (const auto i : held) {
        images.push_back(data.pairs[i].image);
        texts.push_back(data.pairs[i].text);
    }
    const Encoded img = encode(model.image, images);
    const Encoded txt = encode(model.text, texts);
    res.nnz_img = mean_nnz(img.reps);
    res.nnz_txt = mean_nnz(txt.reps);

    const auto vocab = static_cast<std::size_t>(img.reps.cols());
    std::vector<QuantizedLexiconVector> qimg, qtxt;
    Qrels t2i_qrels, i2t_qrels;
    for (std::size_t r = 0; r < held.size(); ++r) {
        const auto& pair = data.pairs[held[r]];
        const auto row = static_cast<Eigen::Index>(r);
        const RowVector ir = img.reps.row(row), tr = txt.reps.row(row);
        qimg.push_back(quantize(SparseLexiconVector::from_dense({ir.data(), vocab}), pair.image_id()));
        qtxt.push_back(quantize(SparseLexiconVector::from_dense({tr.data(), vocab}), pair.text_id()));
        t2i_qrels[pair.text_id()].insert(pair.image_id());
        i2t_qrels[pair.image_id()].insert(pair.text_id());
    }

    auto run = [&](const std::vector<QuantizedLexiconVector>& corpus, const std::vector<QuantizedLexiconVector>& queries,
                   const Qrels& qrels) {
        const InvertedIndex index = build_index(corpus, vocab);
        Searcher searcher(index);
        std::vector<RankedQuery> ranked;
        for (const auto& q : queries) ranked.push_back({q.id, searcher.search(q, 1)});
        const std::size_t ks[] = {1};
        return recall_at_k(ranked, qrels, ks).at(1);
    };
    res.r1_t2i = run(qimg, qtxt, t2i_qrels);
    res.r1_i2t = run(qtxt, qimg, i2t_qrels);
    return res;
}

namespace {

double grad_norm(const ModelGrads& grads) {
    double sq = 0.0;
    auto add = [&](const char*, const Matrix& m) { sq += m.squaredNorm(); };
    grads.image.for_each(add);
    grads.text.for_each(add);
    grads.image_decoder.for_each(add);
    grads.text_decoder.for_each(add);
    return std::sqrt(sq);
}

void sgd(ToyModel& model, const ModelGrads& grads, double lr, double clip) {
    if (clip > 0.0) {
        const double norm = grad_norm(grads);
        if (norm > clip) lr *= clip / norm;
    }
    auto step = [lr](auto& params, const auto& g) {
        std::vector<Matrix*> ps;
        std::vector<const Matrix*> gs;
        params.for_each([&](const char*, Matrix& m) { ps.push_back(&m); });
        g.for_each([&](const char*, const Matrix& m) { gs.push_back(&m); });
        for (std::size_t i = 0; i < ps.size(); ++i) *ps[i] -= lr * *gs[i];
    };
    step(model.image.params(), grads.image);
    step(model.text.params(), grads.text);
    step(model.image_decoder.params(), grads.image_decoder);
    step(model.text_decoder.params(), grads.text_decoder);
}

// Epoch-wise shuffling; a batch larger than the training split wraps around.
class BatchSampler {
  public:
    BatchSampler(std::vector<std::size_t> pool, std::mt19937_64& rng) : pool_(std::move(pool)), rng_(&rng) {
        if (pool_.empty()) throw InvalidInput("no training pairs");
        std::shuffle(pool_.begin(), pool_.end(), *rng_);
    }

    std::vector<std::size_t> next(std::size_t n) {
        std::vector<std::size_t> out;
        while (out.size() < n) {
            if (at_ == pool_.size()) {
                std::shuffle(pool_.begin(), pool_.end(), *rng_);
                at_ = 0;
            }
            out.push_back(pool_[at_++]);
        }
        return out;
    }

  private:
    std::vector<std::size_t> pool_;
    std::mt19937_64* rng_;
    std::size_t at_ = 0;
};

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) { return seed * 0x9E3779B97F4A7C15ULL + stream; }

bool eval_due(const TrainConfig& cfg, std::size_t step, std::size_t last) {
    return cfg.eval_every != 0 && (step % cfg.eval_every == 0 || step == last);
}

Matrix stack_rows(const std::deque<RowVector>& rows, Eigen::Index cols) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
    Eigen::Index r = 0;
    for (const auto& row : rows) m.row(r++) = row;
    return m;
}

}  // namespace

TrainResult train_phase1(const TrainConfig& cfg, const SyntheticPairSet& data) {
    cfg.validate();
    TrainResult result;
    result.model = ToyModel::init(data.vocab_size, cfg.dim, cfg.init_scale, cfg.seed);
    std::mt19937_64 rng(stream_seed(cfg.seed, 1));
    BatchSampler sampler(data.split(false), rng);
    const auto& obj = cfg.objectives;

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const auto samples = sampler.next(cfg.batch_size);
        const Phase1Batch batch = make_phase1_batch(data, samples, cfg, rng);
        ModelGrads grads = ModelGrads::zeros_for(result.model);
        Phase1Losses losses;
        try {
            losses = phase1_objective(result.model, data, batch, cfg, &grads);
        } catch (const InvalidInput& e) {
            throw Divergence(e.what(), step);
        }
        if (!std::isfinite(losses.total)) throw Divergence("non-finite phase-1 loss at step " + std::to_string(step), step);
        sgd(result.model, grads, cfg.learning_rate, cfg.grad_clip);

        StepMetrics m;
        m.step = step;
        if (obj.self_mlm) m.self_mlm = losses.self_mlm;
        if (obj.i2t_mlm) m.i2t_mlm = losses.i2t_mlm;
        if (obj.t2i_mlm) m.t2i_mlm = losses.t2i_mlm;
        if (obj.baco) m.baco = losses.baco;
        m.nnz_img = losses.nnz_img;
        m.nnz_txt = losses.nnz_txt;
        if (eval_due(cfg, step, cfg.steps)) m.r1 = evaluate(result.model, data).r1();
        spdlog::debug("phase1 step {} total {:.4f} nnz {:.1f}/{:.1f}", step, losses.total, m.nnz_img, m.nnz_txt);
        result.trace.push_back(m);
    }
    result.final_eval = evaluate(result.model, data);
    return result;
}

TrainResult train_phase2(const TrainConfig& cfg, const SyntheticPairSet& data, ToyModel phase1_model,
                         std::size_t step_offset) {
    cfg.validate();
    if (cfg.queue_capacity < cfg.batch_size) {
        throw InvalidArgument("queue capacity " + std::to_string(cfg.queue_capacity) + " is smaller than the batch");
    }
    TrainResult result;
    result.model = std::move(phase1_model);
    if (result.model.image.vocab_size() != data.vocab_size) throw ShapeError("model vocabulary does not match the data");

    const auto vocab = static_cast<Eigen::Index>(data.vocab_size);
    MomentumState momentum{result.model.image, result.model.text, Matrix(0, vocab), Matrix(0, vocab)};
    EmaTracker ema_img(flatten(result.model.image.params()), cfg.ema_decay);
    EmaTracker ema_txt(flatten(result.model.text.params()), cfg.ema_decay);
    NegativeQueue<RowVector> img_queue(cfg.queue_capacity), txt_queue(cfg.queue_capacity);

    std::mt19937_64 rng(stream_seed(cfg.seed, 2));
    BatchSampler sampler(data.split(false), rng);
    const std::size_t last = step_offset + cfg.phase2_steps;

    for (std::size_t step = step_offset + 1; step <= last; ++step) {
        const auto samples = sampler.next(cfg.batch_size);
        ModelGrads grads = ModelGrads::zeros_for(result.model);
        Phase2Losses losses;
        try {
            losses = phase2_objective(result.model, momentum, data, samples, cfg, &grads);
        } catch (const InvalidInput& e) {
            throw Divergence(e.what(), step);
        }
        if (!std::isfinite(losses.moco)) throw Divergence("non-finite momentum loss at step " + std::to_string(step), step);
        sgd(result.model, grads, cfg.learning_rate, cfg.grad_clip);

        ema_img.update(flatten(result.model.image.params()));
        ema_txt.update(flatten(result.model.text.params()));
        unflatten(momentum.image.params(), std::span<const double>(ema_img.shadow()));
        unflatten(momentum.text.params(), std::span<const double>(ema_txt.shadow()));

        std::vector<RowVector> new_img, new_txt;
        for (Eigen::Index r = 0; r < losses.momentum_img.rows(); ++r) {
            new_img.emplace_back(losses.momentum_img.row(r));
            new_txt.emplace_back(losses.momentum_txt.row(r));
        }
        img_queue = queue_push(std::move(img_queue), std::span<const RowVector>(new_img));
        txt_queue = queue_push(std::move(txt_queue), std::span<const RowVector>(new_txt));
        momentum.image_queue = stack_rows(img_queue.entries(), vocab);
        momentum.text_queue = stack_rows(txt_queue.entries(), vocab);
        result.queue_sizes.push_back(img_queue.size());

        StepMetrics m;
        m.step = step;
        m.moco = losses.moco;
        m.nnz_img = losses.nnz_img;
        m.nnz_txt = losses.nnz_txt;
        if (eval_due(cfg, step - step_offset, cfg.phase2_steps)) m.r1 = evaluate(result.model, data).r1();
        spdlog::debug("phase2 step {} moco {:.4f} queue {}", step, losses.moco, img_queue.size());
        result.trace.push_back(m);
    }
    result.final_eval = evaluate(result.model, data);
    return result;
}

TrainResult train(const TrainConfig& cfg, const SyntheticPairSet& data, std::optional<ToyModel> init) {
    switch (cfg.phase) {
        case PhaseSelect::One:
            return train_phase1(cfg, data);
        case PhaseSelect::Two:
            if (!init) throw InvalidArgument("phase two needs a phase-one checkpoint");
            return train_phase2(cfg, data, std::move(*init));
        case PhaseSelect::Both:
            break;
    }
    TrainResult first = train_phase1(cfg, data);
    if (!cfg.objectives.moco || cfg.phase2_steps == 0) return first;
    TrainResult second = train_phase2(cfg, data, std::move(first.model), cfg.steps);
    first.trace.insert(first.trace.end(), second.trace.begin(), second.trace.end());
    second.trace = std::move(first.trace);
    return second;
}

void write_trace_jsonl(std::ostream& out, std::span<const StepMetrics> trace) {
    for (const auto& m : trace) {
        nlohmann::ordered_json j;
        j["step"] = m.step;
        auto opt = [&](const char* key, const std::optional<double>& v) {
            if (v) j[key] = *v;
        };
        opt("L_self", m.self_mlm);
        opt("L_i2t", m.i2t_mlm);
        opt("L_t2i", m.t2i_mlm);
        opt("L_baco", m.baco);
        opt("L_moco", m.moco);
        j["nnz_img"] = m.nnz_img;
        j["nnz_txt"] = m.nnz_txt;
        opt("r1", m.r1);
        out << j.dump() << '\n';
    }
}

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'X', 'C', 'K'};
constexpr std::uint16_t kCheckpointVersion = 1;

template <typename F>
void for_each_tensor(const ToyModel& model, F&& f) {
    auto prefixed = [&](const std::string& prefix) {
        return [&f, prefix](const char* name, const Matrix& m) { f(prefix + "." + name, m); };
    };
    model.image.params().for_each(prefixed("image"));
    model.text.params().for_each(prefixed("text"));
    model.image_decoder.params().for_each(prefixed("image_decoder"));
    model.text_decoder.params().for_each(prefixed("text_decoder"));
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ToyModel& model) {
    std::vector<std::pair<std::string, const Matrix*>> tensors;
    for_each_tensor(model, [&](const std::string& name, const Matrix& m) { tensors.emplace_back(name, &m); });

    binary::Writer w;
    w.put_bytes(std::string_view(kCheckpointMagic, 4));
    w.put<std::uint16_t>(kCheckpointVersion);
    w.put<std::uint16_t>(0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.put_bytes(name);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m->rows()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m->cols()));
    }
    for (const auto& [name, m] : tensors) {
        for (Eigen::Index i = 0; i < m->size(); ++i) w.put<float>(static_cast<float>(m->data()[i]));
    }
    return w.take();
}

ToyModel deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    binary::Reader r(bytes);
    const auto magic = r.get_string(4, "checkpoint magic");
    if (magic != std::string(kCheckpointMagic, 4)) throw FormatError("not a checkpoint (bad magic)", 0);
    const auto version = r.get<std::uint16_t>("checkpoint version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    }
    r.get<std::uint16_t>("reserved");
    const auto count = r.get<std::uint32_t>("tensor count");

    // Shapes are only known after init, so build a template model and fill it.
    ToyModel model;
    std::vector<std::pair<std::string, Matrix*>> slots;
    auto collect = [&](const std::string& prefix, auto& params) {
        params.for_each([&, prefix](const char* name, Matrix& m) { slots.emplace_back(prefix + "." + name, &m); });
    };
    collect("image", model.image.params());
    collect("text", model.text.params());
    collect("image_decoder", model.image_decoder.params());
    collect("text_decoder", model.text_decoder.params());
    if (count != slots.size()) {
        throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, expected " + std::to_string(slots.size()));
    }
    for (auto& [expected, m] : slots) {
        const auto at = r.offset();
        const auto len = r.get<std::uint16_t>("tensor name length");
        const auto name = r.get_string(len, "tensor name");
        if (name != expected) throw FormatError("unexpected tensor '" + name + "', wanted '" + expected + "'", at);
        const auto rows = r.get<std::uint32_t>("tensor rows");
        const auto cols = r.get<std::uint32_t>("tensor cols");
        m->resize(rows, cols);
    }
    for (auto& [name, m] : slots) {
        for (Eigen::Index i = 0; i < m->size(); ++i) {
            const auto at = r.offset();
            const float v = r.get<float>("tensor payload");
            if (!std::isfinite(v)) throw FormatError("non-finite value in tensor '" + name + "'", at);
            m->data()[i] = v;
        }
    }
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint payload", r.offset());

    const auto v = model.image.params().head.cols();
    const auto d = model.image.params().head.rows();
    for (const auto* dec : {&model.image_decoder.params(), &model.text_decoder.params()}) {
        if (dec->embeddings.rows() != v || dec->embeddings.cols() != d || dec->head.rows() != d ||
            dec->head.cols() != v || dec->bias.rows() != 1 || dec->bias.cols() != v) {
            throw ShapeError("checkpoint decoder shapes are inconsistent");
        }
    }
    if (model.text.params().head.cols() != v || model.text.params().head.rows() != d ||
        model.text.params().embeddings.rows() != v) {
        throw ShapeError("checkpoint encoder shapes are inconsistent");
    }
    model.image = ToyEncoder(Modality::Visual, std::move(model.image.params()));
    model.text = ToyEncoder(Modality::Textual, std::move(model.text.params()));
    return model;
}

void save_checkpoint(const std::string& path, const ToyModel& model) { binary::write_file(path, serialize_checkpoint(model)); }

ToyModel load_checkpoint(const std::string& path) { return deserialize_checkpoint(binary::read_file(path)); }

}  // namespace lexipse

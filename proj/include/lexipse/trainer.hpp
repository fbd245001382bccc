#pragma once

#include "lexipse/momentum.hpp"
#include "lexipse/objectives.hpp"
#include "lexipse/synth.hpp"
#include "lexipse/toy_model.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

namespace lexipse {

/// Which losses participate; each can be removed for ablations.
struct ObjectiveToggles {
    bool self_mlm = true;
    bool i2t_mlm = true;
    bool t2i_mlm = true;
    bool baco = true;
    bool moco = true;
};

enum class PhaseSelect { One, Two, Both };

struct TrainConfig {
    std::size_t dim = 32;
    std::size_t batch_size = 32;
    std::size_t steps = 1000;
    std::size_t phase2_steps = 300;
    double learning_rate = 1.0;
    double tau = 0.05;
    double lambda = 0.002;
    double enc_mask_rate = 0.3;
    double dec_mask_rate = 0.5;
    double ema_decay = 0.99;
    std::size_t queue_capacity = 4096;
    std::uint64_t seed = 0;
    PhaseSelect phase = PhaseSelect::Both;
    ObjectiveToggles objectives;
    std::size_t eval_every = 100;
    double init_scale = 0.1;
    /// Rescales the whole gradient to this L2 norm when it is larger; 0 disables.
    double grad_clip = 1.0;
    /// Only ever false in tests that check the bottleneck stop-gradient.
    bool stop_gradient = true;

    /// Throws InvalidArgument on out-of-range knobs; warns when the decoder
    /// masks less aggressively than the encoder.
    void validate() const;
};

struct StepMetrics {
    std::size_t step = 0;
    std::optional<double> self_mlm, i2t_mlm, t2i_mlm, baco, moco;
    double nnz_img = 0.0;
    double nnz_txt = 0.0;
    std::optional<double> r1;
};

struct EvalResult {
    double r1_t2i = 0.0;
    double r1_i2t = 0.0;
    double nnz_img = 0.0;
    double nnz_txt = 0.0;
    std::size_t candidates = 0;

    double r1() const noexcept { return 0.5 * (r1_t2i + r1_i2t); }
    double random_r1() const noexcept { return candidates ? 1.0 / static_cast<double>(candidates) : 0.0; }
};

struct TrainResult {
    ToyModel model;
    std::vector<StepMetrics> trace;
    EvalResult final_eval;
    /// Queue lengths after each phase-2 step.
    std::vector<std::size_t> queue_sizes;
};

/// Corruptions drawn for one phase-1 batch; fixed so a gradient can be
/// re-evaluated under finite differences.
struct Phase1Batch {
    std::vector<std::size_t> samples;
    std::vector<MaskedSequence> encoder_masked;
    std::vector<MaskedSequence> decoder_masked;
};

Phase1Batch make_phase1_batch(const SyntheticPairSet& data, std::span<const std::size_t> samples,
                              const TrainConfig& cfg, std::mt19937_64& rng);

struct ModelGrads {
    EncoderParams image;
    EncoderParams text;
    DecoderParams image_decoder;
    DecoderParams text_decoder;

    static ModelGrads zeros_for(const ToyModel& model);
};

struct Phase1Losses {
    double self_mlm = 0.0;
    double i2t_mlm = 0.0;
    double t2i_mlm = 0.0;
    double baco = 0.0;
    double total = 0.0;
    double nnz_img = 0.0;
    double nnz_txt = 0.0;
};

/// Forward pass of every enabled phase-1 objective; when `grads` is given,
/// accumulates analytic gradients of `total` into it.
Phase1Losses phase1_objective(const ToyModel& model, const SyntheticPairSet& data, const Phase1Batch& batch,
                              const TrainConfig& cfg, ModelGrads* grads);

struct MomentumState {
    ToyEncoder image;
    ToyEncoder text;
    Matrix image_queue;  // rows are momentum image representations
    Matrix text_queue;
};

struct Phase2Losses {
    double moco = 0.0;
    double nnz_img = 0.0;
    double nnz_txt = 0.0;
    /// Momentum representations of the batch, to be enqueued after the update.
    Matrix momentum_img;
    Matrix momentum_txt;
};

/// L_moco = (i2t + t2i) / 2 for one batch; gradients reach the live encoders only.
Phase2Losses phase2_objective(const ToyModel& model, const MomentumState& momentum, const SyntheticPairSet& data,
                              std::span<const std::size_t> samples, const TrainConfig& cfg, ModelGrads* grads);

/// Held-out R@1 in both directions through the quantized inverted index.
EvalResult evaluate(const ToyModel& model, const SyntheticPairSet& data);

TrainResult train_phase1(const TrainConfig& cfg, const SyntheticPairSet& data);
TrainResult train_phase2(const TrainConfig& cfg, const SyntheticPairSet& data, ToyModel phase1_model,
                         std::size_t step_offset = 0);

/// Runs the phases selected in cfg. Phase two alone needs `init`.
TrainResult train(const TrainConfig& cfg, const SyntheticPairSet& data, std::optional<ToyModel> init = std::nullopt);

/// One JSON object per step with the fields that were computed.
void write_trace_jsonl(std::ostream& out, std::span<const StepMetrics> trace);

/// LXCK checkpoint: magic, u16 version, u16 reserved, u32 tensor count, a
/// shape table of (u16 name length, name, u32 rows, u32 cols), then every
/// tensor as little-endian f32 in table order.
std::vector<std::uint8_t> serialize_checkpoint(const ToyModel& model);
ToyModel deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const ToyModel& model);
ToyModel load_checkpoint(const std::string& path);

}  // namespace lexipse

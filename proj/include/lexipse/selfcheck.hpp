#pragma once

#include "lexipse/common.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lexipse {

/// |a - n| / max(|a|, |n|, 1e-4). The floor keeps round-off on near-zero
/// entries from reading as a large relative error.
double relative_error(double analytic, double numeric);

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Coordinates skipped because the function has a kink within h of the point.
    std::size_t skipped = 0;

    void merge(const GradCheck& other);
};

/// Central differences of `f` at `x`, compared entry by entry with `analytic`.
/// With `skip_kinks`, coordinates whose one-sided slopes disagree are left out.
GradCheck check_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, const Matrix& analytic,
                         double h = 1e-5, bool skip_kinks = false);

enum class GradTarget { MlmLoss, BacoImageToText, BacoTextToImage, BacoLoss, MocoLoss, SaturatePool, LexiconDistribution, Phase1Model };

std::string to_string(GradTarget target);

/// Random small instances (|V| <= 16, N <= 4) of one differentiable piece.
GradCheck gradient_suite(GradTarget target, std::size_t instances, std::uint64_t seed);

/// Gradient of the i2t bottleneck objective alone with respect to the token
/// embedding matrix. All zeros when the stop-gradient is honoured.
Matrix bottleneck_embedding_gradient(bool stop_gradient, std::uint64_t seed);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelfCheckOptions {
    std::size_t instances = 100;
    std::uint64_t seed = 0;
    /// Runs the stop-gradient contract against a trainer with sg removed.
    bool inject_sg_violation = false;
};

struct SelfCheckReport {
    std::vector<CheckResult> checks;
    bool all_passed() const;
};

SelfCheckReport run_selfcheck(const SelfCheckOptions& opts);

}  // namespace lexipse

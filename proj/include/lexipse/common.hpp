#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace lexipse {

/// Dense row-major matrix used for logits, parameters and batched representations.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using TermId = std::uint32_t;

/// Largest vocabulary addressable by the 2-byte term ids of the index.
inline constexpr std::size_t kMaxIndexVocab = 65536;

}  // namespace lexipse

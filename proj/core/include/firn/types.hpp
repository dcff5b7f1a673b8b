#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace firn {

/// Dense 64-bit matrix used for all model math.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Row-major integer grid; rows are layers, columns are echogram columns.
using IndexGrid = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary label mask, rows are depth samples, nonzero marks a layer top.
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kColumns = 256;
inline constexpr int kTargetYears = 5;
inline constexpr int kFeatureYears = 10;
inline constexpr int kMinLayers = 1 + kTargetYears + kFeatureYears;

}  // namespace firn

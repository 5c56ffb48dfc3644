#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace safe {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
// Datasets and point batches are stored one sample per row.
template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using RowMatrix = RowMatrixX<double>;

using SampleId = std::int64_t;

// Probability floor applied before every log.
inline constexpr double kProbFloor = 1e-12;

}  // namespace safe

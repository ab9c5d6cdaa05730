#pragma once

#include <Eigen/Dense>

#include "fpf/errors.hpp"

namespace fpf {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// N particles in d dimensions, one particle per row. N >= 2, finite entries.
template <typename Scalar = double>
class Ensemble {
public:
    using Matrix = MatrixX<Scalar>;

    explicit Ensemble(Matrix positions) : positions_(std::move(positions)) {
        if (positions_.rows() < 2) throw ConfigError("ensemble needs at least 2 particles");
        if (positions_.cols() < 1) throw ConfigError("ensemble dimension must be at least 1");
        if (!positions_.allFinite()) throw DomainError("ensemble contains non-finite coordinates");
    }

    const Matrix& positions() const noexcept { return positions_; }
    Eigen::Index size() const noexcept { return positions_.rows(); }
    Eigen::Index dim() const noexcept { return positions_.cols(); }
    auto particle(Eigen::Index i) const { return positions_.row(i); }

private:
    Matrix positions_;
};

using Ensembled = Ensemble<double>;

} // namespace fpf

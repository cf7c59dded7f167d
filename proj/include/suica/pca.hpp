// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "suica/common.hpp"

namespace suica::pca {

/// Linear projection fitted on centered rows.
struct Pca {
    Vector<double> mean;               // g
    Matrix<double> components;         // g x k, orthonormal columns
    Vector<double> explained_variance; // k

    Index num_components() const { return components.cols(); }
    Matrix<double> transform(const Matrix<double>& x) const;
    Matrix<double> inverse(const Matrix<double>& scores) const;
};

/// Top-k principal directions via SVD, with each component's largest-magnitude
/// loading made positive. Throws DataError when the data has no variance.
Pca fit(const Matrix<double>& x, Index k);

}  // namespace suica::pca

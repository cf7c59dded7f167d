// SPDX-License-Identifier: Apache-2.0
#include "suica/pca.hpp"

#include <string>

namespace suica::pca {

Matrix<double> Pca::transform(const Matrix<double>& x) const {
    if (x.cols() != mean.size()) throw DataError("pca: input width does not match the fit");
    return (x.rowwise() - mean.transpose()) * components;
}

Matrix<double> Pca::inverse(const Matrix<double>& scores) const {
    if (scores.cols() != components.cols()) throw DataError("pca: score width does not match the fit");
    return (scores * components.transpose()).rowwise() + mean.transpose();
}

Pca fit(const Matrix<double>& x, Index k) {
    if (k < 1 || k > std::min(x.rows(), x.cols()))
        throw ConfigError("pca: component count " + std::to_string(k) + " outside [1, min(n, g)]");
    Pca p;
    p.mean = x.colwise().mean().transpose();
    const Matrix<double> centered = x.rowwise() - p.mean.transpose();
    if (centered.squaredNorm() == 0.0) throw DataError("pca: degenerate covariance (data has no variance)");
    Eigen::BDCSVD<Matrix<double>> svd(centered, Eigen::ComputeThinV);
    p.components = svd.matrixV().leftCols(k);
    for (Index c = 0; c < k; ++c) {
        Index arg = 0;
        p.components.col(c).cwiseAbs().maxCoeff(&arg);
        if (p.components(arg, c) < 0.0) p.components.col(c) *= -1.0;
    }
    const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
    p.explained_variance = svd.singularValues().head(k).array().square() / denom;
    return p;
}

}  // namespace suica::pca

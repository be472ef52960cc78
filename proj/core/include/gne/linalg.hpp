// Small linear-algebra helpers shared across modules.
#pragma once

#include <functional>

#include <Eigen/Dense>

namespace gne {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Largest eigenvalue of a symmetric PSD map given as a matvec, by power
/// iteration with relative tolerance `tol`, capped at `max_iter` rounds.
double spectral_norm_sym(const std::function<VectorXd(const VectorXd&)>& matvec,
                         Eigen::Index dim, double tol = 1e-10, int max_iter = 10000);

/// Spectral norm of a dense (possibly nonsymmetric) matrix via power
/// iteration on M' M.
double spectral_norm(const MatrixXd& m, double tol = 1e-10, int max_iter = 10000);

}  // namespace gne

#include "gne/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "gne/rng.hpp"

namespace gne {

namespace {

VectorXd deterministic_unit_vector(Eigen::Index dim) {
  SplitRng rng(0x5eed5eedULL);
  VectorXd v(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    v[j] = rng.uniform(-1.0, 1.0, "power-iteration", static_cast<std::uint64_t>(j));
  }
  double n = v.norm();
  if (n == 0.0) v[0] = 1.0, n = 1.0;
  return v / n;
}

}  // namespace

double spectral_norm_sym(const std::function<VectorXd(const VectorXd&)>& matvec,
                         Eigen::Index dim, double tol, int max_iter) {
  VectorXd v = deterministic_unit_vector(dim);
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    VectorXd w = matvec(v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double next = v.dot(matvec(v));
    if (std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

double spectral_norm(const MatrixXd& m, double tol, int max_iter) {
  if (m.size() == 0) return 0.0;
  const MatrixXd gram = m.transpose() * m;
  const double top = spectral_norm_sym(
      [&gram](const VectorXd& v) { return VectorXd(gram * v); }, gram.rows(), tol,
      max_iter);
  return std::sqrt(std::max(0.0, top));
}

}  // namespace gne

#include <cmath>

#include "doctest.h"
#include "gne/projection.hpp"
#include "gne/rng.hpp"

using namespace gne;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec2(double a, double b) { return (VectorXd(2) << a, b).finished(); }

}  // namespace

TEST_CASE("project_box clamps componentwise") {
  const VectorXd lower = vec2(0, -1);
  const VectorXd upper = vec2(1, 1);
  CHECK((project_box(vec2(2, -3), lower, upper) - vec2(1, -1)).norm() == 0.0);
  CHECK((project_box(vec2(0.5, 0.5), lower, upper) - vec2(0.5, 0.5)).norm() == 0.0);
  CHECK_THROWS_AS(project_box(vec2(0, 0), upper, lower), InvalidBox);
  CHECK_THROWS_AS(project_box(VectorXd::Zero(3), lower, upper), DimensionMismatch);
}

TEST_CASE("project_nonneg zeroes the negative part") {
  CHECK((project_nonneg(vec2(-2, 3)) - vec2(0, 3)).norm() == 0.0);
}

TEST_CASE("box-halfspace projection: known solutions") {
  const VectorXd lo01 = vec2(0, 0);
  const VectorXd hi01 = vec2(1, 1);
  const VectorXd diag = vec2(1, 1);

  SUBCASE("interior point is untouched") {
    const VectorXd p = project_box_halfspace(vec2(0.2, 0.3), lo01, hi01, diag, 1.0);
    CHECK((p - vec2(0.2, 0.3)).norm() < 1e-15);
  }
  SUBCASE("plane active, box inactive") {
    const VectorXd p = project_box_halfspace(vec2(2, 2), lo01, hi01, diag, 1.0);
    CHECK((p - vec2(0.5, 0.5)).norm() < 1e-10);
  }
  SUBCASE("plane active inside a large box") {
    const VectorXd p = project_box_halfspace(vec2(2, 0), VectorXd::Constant(2, -5),
                                             VectorXd::Constant(2, 5), diag, 0.0);
    CHECK((p - vec2(1, -1)).norm() < 1e-10);
  }
  SUBCASE("box active, plane slack") {
    const VectorXd p = project_box_halfspace(vec2(20, -3), lo01, hi01, diag, 5.0);
    CHECK((p - vec2(1, 0)).norm() < 1e-12);
  }
  SUBCASE("plane excluding the box is rejected") {
    CHECK_THROWS_AS(project_box_halfspace(vec2(0, 0), lo01, hi01, diag, -1.0),
                    InfeasibleSet);
  }
}

TEST_CASE("box-halfspace projection: feasibility, idempotence, optimality") {
  const SplitRng rng(101);
  const int dim = 5;
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd lower(dim), upper(dim), a(dim), y(dim);
    for (int j = 0; j < dim; ++j) {
      lower[j] = rng.uniform(-2.0, 0.0, "lo", trial, j);
      upper[j] = lower[j] + rng.uniform(0.5, 3.0, "wid", trial, j);
      a[j] = rng.uniform(-1.0, 1.0, "a", trial, j);
      y[j] = rng.uniform(-6.0, 6.0, "y", trial, j);
    }
    if (a.norm() < 0.2) a[0] += 1.0;
    const VectorXd mid = 0.5 * (lower + upper);
    const double b = a.dot(mid) + rng.uniform(0.05, 1.0, "b", trial, 0);

    const VectorXd p = project_box_halfspace(y, lower, upper, a, b);
    CHECK(((p - lower).array() >= -1e-10).all());
    CHECK(((upper - p).array() >= -1e-10).all());
    CHECK(a.dot(p) <= b + 1e-9);
    CHECK((project_box_halfspace(p, lower, upper, a, b) - p).norm() < 1e-8);

    for (int probe = 0; probe < 10; ++probe) {
      VectorXd q(dim);
      for (int j = 0; j < dim; ++j) {
        q[j] = rng.uniform(lower[j], upper[j], "q", trial * 16 + probe, j);
      }
      q = project_box_halfspace(q, lower, upper, a, b);
      CHECK((y - p).dot(q - p) <= 1e-8 * (1.0 + y.norm() * (q - p).norm()));
    }
  }
}

TEST_CASE("polyhedral projection agrees with the closed-form specialists") {
  const SplitRng rng(202);
  const VectorXd lower = vec2(-1, -2);
  const VectorXd upper = vec2(2, 1);

  Polyhedron box_poly;
  box_poly.rows_a = (MatrixXd(4, 2) << 1, 0, 0, 1, -1, 0, 0, -1).finished();
  box_poly.rows_b = (VectorXd(4) << 2, 1, 1, 2).finished();
  box_poly.strict_point = vec2(0, 0);

  Polyhedron cut_poly = box_poly;
  cut_poly.rows_a.conservativeResize(5, 2);
  cut_poly.rows_a.row(4) = vec2(1, 1).transpose();
  cut_poly.rows_b.conservativeResize(5);
  cut_poly.rows_b[4] = 0.5;

  for (int trial = 0; trial < 40; ++trial) {
    const VectorXd y = vec2(rng.uniform(-5, 5, "x", trial, 0), rng.uniform(-5, 5, "y", trial, 1));
    CHECK((project_polyhedron(y, box_poly) - project_box(y, lower, upper)).norm() < 1e-8);
    CHECK((project_polyhedron(y, cut_poly) -
           project_box_halfspace(y, lower, upper, vec2(1, 1), 0.5))
              .norm() < 1e-7);
  }
}

TEST_CASE("project_local dispatches on the set description") {
  const VectorXd y = vec2(4, 4);
  const Box box{vec2(0, 0), vec2(1, 1)};
  CHECK((project_local(box, y) - vec2(1, 1)).norm() == 0.0);

  const BoxHalfspace bh{vec2(0, 0), vec2(1, 1), vec2(1, 1), 1.0};
  CHECK((project_local(bh, y) - vec2(0.5, 0.5)).norm() < 1e-10);
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "almostcomm/errors.hpp"
#include "almostcomm/lin_solver.hpp"
#include "test_support.hpp"

using namespace almostcomm;
using namespace testing_support;

namespace {

Matrix rotation(double theta, double phi) {
  Matrix u(2, 2);
  u << std::cos(theta), -std::polar(1.0, phi) * std::sin(theta), std::polar(1.0, -phi) * std::sin(theta),
      std::cos(theta);
  return u;
}

double offdiag(const Matrix& m) {
  double s = 0.0;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (i != j) s += std::norm(m(i, j));
    }
  }
  return s;
}

struct BruteForce {
  double energy = 1e300;
  double distance_sum = 1e300;
};

// Scan all 2x2 rotations; report the least off-diagonal energy and the least
// dist_a + dist_b of the pair obtained by keeping the rotated diagonals.
BruteForce scan_rotations(const Matrix& a, const Matrix& b) {
  BruteForce out;
  const int steps = 400;
  for (int i = 0; i <= steps; ++i) {
    const double theta = std::numbers::pi / 2 * i / steps;
    for (int k = 0; k < 64; ++k) {
      const Matrix u = rotation(theta, 2.0 * std::numbers::pi * k / 64);
      const Matrix ra = u.adjoint() * a * u;
      const Matrix rb = u.adjoint() * b * u;
      out.energy = std::min(out.energy, offdiag(ra) + offdiag(rb));
      const Matrix a1 = u * Matrix(ra.diagonal().asDiagonal()) * u.adjoint();
      const Matrix b1 = u * Matrix(rb.diagonal().asDiagonal()) * u.adjoint();
      out.distance_sum = std::min(out.distance_sum, max_singular(a - a1) + max_singular(b - b1));
    }
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(JointDiagonalize, CommutingPairConverges) {
  Rng rng(41);
  const Matrix q = random_unitary(10, rng);
  const HermitianMatrix a = HermitianMatrix::diagonal(uniform_vector(10, -1, 1, rng)).conjugated(q);
  const HermitianMatrix b = HermitianMatrix::diagonal(uniform_vector(10, -1, 1, rng)).conjugated(q);
  const JointDiagonalization jd = joint_diagonalize(a, b);
  EXPECT_TRUE(jd.report.converged);
  EXPECT_LT(jd.report.offdiag_energy, 1e-20);
  EXPECT_LT(unitarity_defect(jd.unitary), 1e-12);
}

TEST(JointDiagonalize, PauliPairNearIdentity) {
  const double delta = 0.01;
  const Matrix a = sigma_z();
  const Matrix b = sigma_z() + delta * sigma_x();
  const JointDiagonalization jd = joint_diagonalize(HermitianMatrix(a), HermitianMatrix(b));
  // the optimal rotation angle is about delta/4 (half the tilt of b, split
  // between the two matrices); anything of order delta is acceptable
  EXPECT_LT(std::abs(jd.unitary(0, 1)), delta);
  const BruteForce oracle = scan_rotations(a, b);
  EXPECT_LE(jd.report.offdiag_energy, oracle.energy + 1e-9);
}

TEST(JointDiagonalize, RandomAlmostCommutingConverges) {
  // The final energy sits on a floor set by the commutator, so the reduction
  // ratio scatters around 4e-7 with a tail past 1e-6; the bound is on the median.
  Rng rng(42);
  std::vector<double> ratios;
  for (int trial = 0; trial < 15; ++trial) {
    const AlmostCommuting p = almost_commuting(16, 1e-3, 1.0, rng);
    const JointDiagonalization jd = joint_diagonalize(p.a, p.b);
    EXPECT_TRUE(jd.report.converged);
    EXPECT_LE(jd.report.sweeps, 200);
    ratios.push_back(jd.report.offdiag_energy / jd.report.energy_trace.front());
  }
  EXPECT_LE(median(ratios), 1e-6);
}

TEST(JointDiagonalize, EnergyTraceNonincreasing) {
  Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    const AlmostCommuting p = almost_commuting(12, std::pow(10.0, -trial % 4), 1.0, rng);
    const JointDiagonalization jd = joint_diagonalize(p.a, p.b);
    const auto& e = jd.report.energy_trace;
    ASSERT_EQ(e.size(), static_cast<std::size_t>(jd.report.sweeps) + 1);
    for (std::size_t i = 1; i < e.size(); ++i) EXPECT_LE(e[i], e[i - 1] + 1e-13 * e.front());
  }
}

TEST(JointDiagonalize, Deterministic) {
  Rng rng(44);
  const AlmostCommuting p = almost_commuting(9, 1e-2, 1.0, rng);
  EXPECT_EQ(joint_diagonalize(p.a, p.b).unitary, joint_diagonalize(p.a, p.b).unitary);
}

TEST(JointDiagonalize, InvalidArguments) {
  EXPECT_THROW(joint_diagonalize(HermitianMatrix::identity(2), HermitianMatrix::identity(3)), DimensionMismatch);
  EXPECT_THROW(joint_diagonalize(HermitianMatrix::identity(2), HermitianMatrix::identity(2), 0.0), InvalidArgument);
}

TEST(CommutingApproximation, AlreadyCommuting) {
  Rng rng(45);
  const Matrix q = random_unitary(8, rng);
  const HermitianMatrix a = HermitianMatrix::diagonal(uniform_vector(8, -1, 1, rng)).conjugated(q);
  const HermitianMatrix b = HermitianMatrix::diagonal(uniform_vector(8, -1, 1, rng)).conjugated(q);
  const CommutingPair c = commuting_approximation(a, b);
  EXPECT_LE(c.dist_a, 1e-10);
  EXPECT_LE(c.dist_b, 1e-10);
}

TEST(CommutingApproximation, PauliPairAgainstRotationScan) {
  const double delta = 0.05;
  const Matrix a = sigma_z();
  const Matrix b = sigma_z() + delta * sigma_x();
  const CommutingPair c = commuting_approximation(HermitianMatrix(a), HermitianMatrix(b));
  const BruteForce oracle = scan_rotations(a, b);
  EXPECT_LE(oracle.distance_sum, 3 * delta);
  EXPECT_LE(c.dist_a + c.dist_b, 3 * delta);
  EXPECT_NEAR(c.dist_a, max_singular(a - c.a1().matrix()), 1e-14);
  EXPECT_NEAR(c.dist_b, max_singular(b - c.b1().matrix()), 1e-14);
}

TEST(CommutingApproximation, MaximallyNonCommuting) {
  const HermitianMatrix a = diag({0.0, 1.0});
  const HermitianMatrix b(sigma_x());
  const CommutingPair c = commuting_approximation(a, b);
  EXPECT_LE(c.dist_a, 2.0);
  EXPECT_LE(c.dist_b, 2.0);
  EXPECT_LT(op_norm(commutator(c.a1(), c.b1())), 1e-12);
}

TEST(CommutingApproximation, StructuralCommutation) {
  Rng rng(46);
  for (int trial = 0; trial < 20; ++trial) {
    const AlmostCommuting p = almost_commuting(10, std::pow(10.0, -trial % 5), 1.0 + trial, rng);
    const CommutingPair c = commuting_approximation(p.a, p.b);
    const HermitianMatrix a1 = c.a1();
    const HermitianMatrix b1 = c.b1();
    const double scale = std::max(1.0, op_norm(a1)) * std::max(1.0, op_norm(b1));
    EXPECT_LE(op_norm(commutator(a1, b1)), 1e-12 * scale);
    EXPECT_LT(unitarity_defect(c.basis), 1e-12);
  }
}

TEST(CommutingApproximation, UnitaryInvariance) {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const AlmostCommuting p = almost_commuting(12, 1e-3, 1.0, rng);
    const Matrix u = random_unitary(12, rng);
    const CommutingPair c1 = commuting_approximation(p.a, p.b);
    const CommutingPair c2 = commuting_approximation(p.a.conjugated(u), p.b.conjugated(u));
    EXPECT_NEAR(c1.dist_a, c2.dist_a, 1e-8);
    EXPECT_NEAR(c1.dist_b, c2.dist_b, 1e-8);
  }
}

TEST(CommutingApproximation, ModulusTrend) {
  Rng rng(48);
  for (Index n : {8, 16, 32}) {
    std::vector<double> medians;
    for (double nu : {1e-1, 1e-2, 1e-4}) {
      std::vector<double> d;
      for (int trial = 0; trial < 9; ++trial) {
        const AlmostCommuting p = almost_commuting(n, nu, 1.0, rng);
        const CommutingPair c = commuting_approximation(p.a, p.b);
        d.push_back(c.dist_a + c.dist_b);
      }
      medians.push_back(median(d));
    }
    EXPECT_GT(medians[0], medians[1]) << "n = " << n;
    EXPECT_GT(medians[1], medians[2]) << "n = " << n;
  }
}

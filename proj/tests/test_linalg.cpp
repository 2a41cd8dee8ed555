#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "lowswitch/errors.hpp"
#include "lowswitch/linalg.hpp"
#include "lowswitch/rng.hpp"
#include "oracles.hpp"

using namespace lowswitch;

namespace {

Vec unit_vector(std::size_t d, Stream& rng) {
  Vec v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = rng.normal();
  return v / v.norm();
}

}  // namespace

TEST_CASE("new accumulator is ridge times identity") {
  CovarianceAccumulator a(2, 1.0);
  CHECK(a.logdet() == 0.0);
  CHECK((a.inverse() - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
  CovarianceAccumulator b(3, 2.0);
  CHECK(b.logdet() == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-15));
  CovarianceAccumulator c(1, 0.5);
  CHECK(c.matrix()(0, 0) == 0.5);
  CHECK(c.count() == 0);
  CHECK_THROWS_AS(CovarianceAccumulator(0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(CovarianceAccumulator(2, 0.0), InvalidArgument);
  CHECK_THROWS_AS(CovarianceAccumulator(2, -1.0), InvalidArgument);
}

TEST_CASE("rank-one update on e1") {
  CovarianceAccumulator a(2, 1.0);
  a.update(Vec::Unit(2, 0));
  CHECK(a.logdet() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(a.matrix()(0, 0) == 2.0);
  CHECK(a.matrix()(1, 1) == 1.0);
  CHECK(a.matrix()(0, 1) == 0.0);
  CHECK(a.mahalanobis_inv(Vec::Unit(2, 0)) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(a.mahalanobis_inv(Vec::Zero(2)) == 0.0);
}

TEST_CASE("zero update leaves the accumulator unchanged") {
  CovarianceAccumulator a(3, 1.0);
  a.update(Vec::Zero(3));
  CHECK(a.logdet() == 0.0);
  CHECK(a.matrix() == Mat::Identity(3, 3));
  CHECK(a.count() == 1);
}

TEST_CASE("update rejects bad input") {
  CovarianceAccumulator a(2, 1.0);
  CHECK_THROWS_AS(a.update(Vec::Zero(3)), InvalidArgument);
  CHECK_THROWS_AS(a.update(Vec::Constant(2, 1.0)), InvalidArgument);
  CHECK_THROWS_AS(a.mahalanobis_inv(Vec::Zero(3)), InvalidArgument);
  a.update(Vec::Constant(2, 1.0 / std::sqrt(2.0)));  // norm exactly 1 within rounding
}

TEST_CASE("mahalanobis norm of a unit vector under identity is 1") {
  Stream rng(3);
  CovarianceAccumulator a(5, 1.0);
  CHECK(a.mahalanobis_inv(unit_vector(5, rng)) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("incremental inverse tracks direct inversion") {
  Stream rng(11);
  CovarianceAccumulator a(4, 1.0);
  for (int i = 0; i < 1000; ++i) a.update(unit_vector(4, rng));
  const Mat direct = oracle::direct_inverse(a.matrix());
  CHECK((a.inverse() - direct).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((a.inverse() * a.matrix() - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("logdet agrees with a direct factorization and is monotone") {
  Stream rng(5);
  for (std::size_t d : {1, 3, 8}) {
    CovarianceAccumulator a(d, 1.5);
    double prev = a.logdet();
    for (int i = 0; i < 600; ++i) {
      a.update(unit_vector(d, rng) * rng.uniform());
      CHECK(a.logdet() >= prev);
      prev = a.logdet();
    }
    const double direct = std::log(a.matrix().fullPivLu().determinant());
    CHECK(a.logdet() == doctest::Approx(direct).epsilon(1e-10));
    // Envelope: det <= (lambda + count/d)^d.
    CHECK(a.logdet() <= static_cast<double>(d) * std::log(1.5 + 600.0 / static_cast<double>(d)));
  }
}

TEST_CASE("ridge solve: scalar closed form and empty target") {
  CovarianceAccumulator a(1, 1.0);
  CHECK(ridge_solve(a, RidgeTarget{}).norm() == 0.0);
  a.update(Vec::Ones(1));
  RidgeTarget t{{Vec::Ones(1)}, {2.0}};
  CHECK(ridge_solve(a, t)(0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ridge solve matches the normal equations") {
  Stream rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + trial % 5;
    CovarianceAccumulator a(d, 1.0);
    RidgeTarget t;
    for (int i = 0; i < 50; ++i) {
      const Vec phi = unit_vector(d, rng) * rng.uniform();
      a.update(phi);
      t.features.push_back(phi);
      t.responses.push_back(rng.uniform(0.0, 2.0));
    }
    const Vec ref = oracle::normal_equations(t.features, t.responses, 1.0);
    CHECK((ridge_solve(a, t) - ref).cwiseAbs().maxCoeff() <= 1e-10);

    std::vector<WeightedRidgeTerm> terms;
    for (std::size_t i = 0; i < t.features.size(); ++i) {
      terms.push_back({t.features[i], 1.0, t.responses[i]});
    }
    CHECK((ridge_solve(a, terms) - ref).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("ridge solve rejects a target that does not match the history") {
  CovarianceAccumulator a(2, 1.0);
  a.update(Vec::Unit(2, 0));
  CHECK_THROWS_AS(ridge_solve(a, RidgeTarget{}), InvalidState);
  RidgeTarget ragged{{Vec::Unit(2, 0)}, {}};
  CHECK_THROWS_AS(ridge_solve(a, ragged), InvalidArgument);
}

TEST_CASE("det_doubled boundary cases") {
  CHECK(det_doubled(std::numbers::ln2, 0.0));
  CHECK_FALSE(det_doubled(0.69, 0.0));
  CHECK_FALSE(det_doubled(1.0, 1.0));
  CHECK(det_doubled(1.0 + std::numbers::ln2, 1.0));
  // Monotone in the logdet for a fixed baseline.
  bool seen = false;
  for (double x = 0.0; x < 2.0; x += 0.001) {
    const bool d = det_doubled(x, 0.1);
    if (seen) CHECK(d);
    seen |= d;
  }
}

TEST_CASE("elliptical potential examples") {
  const std::vector<Vec> one{Vec::Unit(2, 0)};
  const auto c = elliptical_potential_oracle(one);
  CHECK(c.lhs == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c.bound == doctest::Approx(4.0 * std::log(1.5)).epsilon(1e-15));
  CHECK(c.ok);
  const std::vector<Vec> zeros(10, Vec::Zero(3));
  const auto z = elliptical_potential_oracle(zeros);
  CHECK(z.lhs == 0.0);
  CHECK(z.ok);
  Stream rng(8);
  std::vector<Vec> many;
  for (int i = 0; i < 1000; ++i) many.push_back(unit_vector(4, rng));
  CHECK(elliptical_potential_oracle(many).ok);
}

TEST_CASE("determinant ratio examples") {
  const Mat i2 = Mat::Identity(2, 2);
  CHECK(det_ratio_oracle(i2, i2, Vec::Ones(2)));
  CHECK(det_ratio_oracle(2.0 * i2, i2, Vec(Vec::Unit(2, 1) * 3.0)));
  CHECK(det_ratio_oracle(2.0 * i2, i2, Vec::Zero(2)));
  CHECK_THROWS_AS(det_ratio_oracle(i2, 2.0 * i2, Vec::Ones(2)), InvalidArgument);
}

TEST_CASE("determinant envelope") {
  Stream rng(4);
  std::vector<Vec> phis;
  for (int i = 0; i < 200; ++i) phis.push_back(unit_vector(3, rng));
  const auto e = determinant_envelope_oracle(phis, 1.0);
  CHECK(e.ok);
  CHECK(e.bound == doctest::Approx(3.0 * std::log(1.0 + 200.0 / 3.0)));
}

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace lowswitch {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr std::size_t kMaxDim = 64;

// Running ridge covariance  lambda*I + sum phi phi^T  with its inverse and
// natural-log determinant maintained under rank-1 updates.
class CovarianceAccumulator {
 public:
  static constexpr std::size_t kRefreshInterval = 256;

  CovarianceAccumulator(std::size_t dim, double ridge);

  // Sherman-Morrison on the inverse, matrix determinant lemma on logdet.
  // Every kRefreshInterval updates the inverse is rebuilt from the matrix.
  void update(const Vec& phi);

  // sqrt(x^T inverse x)
  double mahalanobis_inv(const Vec& x) const;

  std::size_t dim() const { return dim_; }
  double ridge() const { return ridge_; }
  const Mat& matrix() const { return matrix_; }
  const Mat& inverse() const { return inverse_; }
  double logdet() const { return logdet_; }
  std::size_t count() const { return count_; }

 private:
  std::size_t dim_;
  double ridge_;
  Mat matrix_;
  Mat inverse_;
  double logdet_;
  std::size_t count_ = 0;
};

struct RidgeTarget {
  std::vector<Vec> features;
  std::vector<double> responses;
};

// Aggregated form of a RidgeTarget: `weight` copies of `phi` whose responses
// sum to `response_sum`.
struct WeightedRidgeTerm {
  Vec phi;
  double weight = 0.0;
  double response_sum = 0.0;
};

// inverse * sum_tau phi_tau y_tau. The target must describe exactly the
// vectors the accumulator has absorbed (checked by count).
Vec ridge_solve(const CovarianceAccumulator& acc, const RidgeTarget& target);
Vec ridge_solve(const CovarianceAccumulator& acc, std::span<const WeightedRidgeTerm> terms);

// logdet >= baseline + ln 2, exact float comparison.
bool det_doubled(double logdet, double baseline_logdet);
bool det_doubled(const CovarianceAccumulator& acc, double baseline_logdet);

// Direct factorization helpers, used for drift refresh and by the oracles.
Mat inverse_spd(const Mat& m);
double logdet_spd(const Mat& m);

// ---- property oracles -------------------------------------------------

struct PotentialCheck {
  double lhs = 0.0;
  double bound = 0.0;
  bool ok = true;
};

// sum_t ||phi_t||^2_{Sigma_{t-1}^{-1}} against 2 d ln(1 + T/d), Sigma_0 = I.
PotentialCheck elliptical_potential_oracle(std::span<const Vec> phis);

// ||x||_A^2 / ||x||_B^2 <= det(A)/det(B) for A >= B > 0.
bool det_ratio_oracle(const Mat& a, const Mat& b, const Vec& x);

// logdet(lambda I + sum phi phi^T) <= d ln(lambda + T/d).
struct EnvelopeCheck {
  double logdet = 0.0;
  double bound = 0.0;
  bool ok = true;
};
EnvelopeCheck determinant_envelope_oracle(std::span<const Vec> phis, double ridge);

}  // namespace lowswitch

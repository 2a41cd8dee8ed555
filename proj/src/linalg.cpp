#include "lowswitch/linalg.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "lowswitch/errors.hpp"

namespace lowswitch {

namespace {

void check_dim(std::size_t expected, Eigen::Index got, const char* what) {
  if (static_cast<std::size_t>(got) != expected) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (expected " +
                          std::to_string(expected) + ", got " + std::to_string(got) + ")");
  }
}

}  // namespace

CovarianceAccumulator::CovarianceAccumulator(std::size_t dim, double ridge)
    : dim_(dim), ridge_(ridge) {
  if (dim == 0 || dim > kMaxDim) {
    throw InvalidArgument("cov_new: dim must be in [1, 64]");
  }
  if (!(ridge > 0.0)) {
    throw InvalidArgument("cov_new: ridge must be positive");
  }
  const auto d = static_cast<Eigen::Index>(dim);
  matrix_ = ridge * Mat::Identity(d, d);
  inverse_ = Mat::Identity(d, d) / ridge;
  logdet_ = static_cast<double>(dim) * std::log(ridge);
}

void CovarianceAccumulator::update(const Vec& phi) {
  check_dim(dim_, phi.size(), "cov_update");
  if (phi.norm() > 1.0 + 1e-12) {
    throw InvalidArgument("cov_update: feature norm exceeds 1");
  }
  const Vec u = inverse_ * phi;
  const double q = std::max(0.0, phi.dot(u));
  matrix_.noalias() += phi * phi.transpose();
  inverse_.noalias() -= (u * u.transpose()) / (1.0 + q);
  inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
  logdet_ += std::log1p(q);
  ++count_;
  if (count_ % kRefreshInterval == 0) {
    inverse_ = inverse_spd(matrix_);
  }
}

double CovarianceAccumulator::mahalanobis_inv(const Vec& x) const {
  check_dim(dim_, x.size(), "mahalanobis_inv");
  return std::sqrt(std::max(0.0, x.dot(inverse_ * x)));
}

Vec ridge_solve(const CovarianceAccumulator& acc, const RidgeTarget& target) {
  if (target.features.size() != target.responses.size()) {
    throw InvalidArgument("ridge_solve: features and responses differ in length");
  }
  if (target.features.size() != acc.count()) {
    throw InvalidState("ridge_solve: target length " + std::to_string(target.features.size()) +
                       " does not match accumulator count " + std::to_string(acc.count()));
  }
  Vec rhs = Vec::Zero(static_cast<Eigen::Index>(acc.dim()));
  for (std::size_t i = 0; i < target.features.size(); ++i) {
    check_dim(acc.dim(), target.features[i].size(), "ridge_solve");
    rhs += target.responses[i] * target.features[i];
  }
  return acc.inverse() * rhs;
}

Vec ridge_solve(const CovarianceAccumulator& acc, std::span<const WeightedRidgeTerm> terms) {
  Vec rhs = Vec::Zero(static_cast<Eigen::Index>(acc.dim()));
  double total = 0.0;
  for (const auto& t : terms) {
    check_dim(acc.dim(), t.phi.size(), "ridge_solve");
    rhs += t.response_sum * t.phi;
    total += t.weight;
  }
  if (std::abs(total - static_cast<double>(acc.count())) > 0.5) {
    throw InvalidState("ridge_solve: total weight " + std::to_string(total) +
                       " does not match accumulator count " + std::to_string(acc.count()));
  }
  return acc.inverse() * rhs;
}

bool det_doubled(double logdet, double baseline_logdet) {
  return logdet >= baseline_logdet + std::numbers::ln2;
}

bool det_doubled(const CovarianceAccumulator& acc, double baseline_logdet) {
  return det_doubled(acc.logdet(), baseline_logdet);
}

Mat inverse_spd(const Mat& m) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) {
    throw InternalError("inverse_spd: matrix is not positive definite");
  }
  Mat inv = llt.solve(Mat::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

double logdet_spd(const Mat& m) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) {
    throw InternalError("logdet_spd: matrix is not positive definite");
  }
  const Mat& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

PotentialCheck elliptical_potential_oracle(std::span<const Vec> phis) {
  PotentialCheck out;
  if (phis.empty()) {
    return out;
  }
  const auto d = phis.front().size();
  Mat sigma = Mat::Identity(d, d);
  for (const auto& phi : phis) {
    if (phi.size() != d) throw InvalidArgument("elliptical_potential_oracle: ragged input");
    out.lhs += phi.dot(inverse_spd(sigma) * phi);
    sigma.noalias() += phi * phi.transpose();
  }
  const double dd = static_cast<double>(d);
  out.bound = 2.0 * dd * std::log(1.0 + static_cast<double>(phis.size()) / dd);
  out.ok = out.lhs <= out.bound;
  return out;
}

bool det_ratio_oracle(const Mat& a, const Mat& b, const Vec& x) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows() ||
      x.size() != a.rows()) {
    throw InvalidArgument("det_ratio_oracle: shape mismatch");
  }
  Eigen::SelfAdjointEigenSolver<Mat> diff(a - b, Eigen::EigenvaluesOnly);
  if (diff.eigenvalues().minCoeff() < -1e-10) {
    throw InvalidArgument("det_ratio_oracle: A - B is not positive semi-definite");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eb(b, Eigen::EigenvaluesOnly);
  if (eb.eigenvalues().minCoeff() <= 0.0) {
    throw InvalidArgument("det_ratio_oracle: B is not positive definite");
  }
  const double xb = x.dot(b * x);
  if (xb == 0.0) return true;
  const double ratio = x.dot(a * x) / xb;
  return ratio <= std::exp(logdet_spd(a) - logdet_spd(b)) + 1e-9;
}

EnvelopeCheck determinant_envelope_oracle(std::span<const Vec> phis, double ridge) {
  EnvelopeCheck out;
  if (phis.empty()) return out;
  const auto d = phis.front().size();
  Mat sigma = ridge * Mat::Identity(d, d);
  for (const auto& phi : phis) sigma.noalias() += phi * phi.transpose();
  const double dd = static_cast<double>(d);
  out.logdet = logdet_spd(sigma);
  out.bound = dd * std::log(ridge + static_cast<double>(phis.size()) / dd);
  out.ok = out.logdet <= out.bound + 1e-12;
  return out;
}

}  // namespace lowswitch

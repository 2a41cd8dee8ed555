#pragma once

#include <functional>
#include <string>

namespace lowswitch {

// Monotone link f on [-1, 1] with derivative bounds
//   kappa1 <= |f'(z)| <= kappa2,   |f''(z)| <= M.
// The bounds are measured on a uniform 1001-point grid at construction.
class LinkFunction {
 public:
  using Fn = std::function<double(double)>;

  static constexpr int kGridPoints = 1001;

  // Throws InvalidArgument if f' changes sign or vanishes on the grid, or
  // if f is non-finite there.
  LinkFunction(std::string name, Fn f, Fn fprime, Fn fsecond);

  static LinkFunction identity();
  static LinkFunction logistic();
  // Looks up a shipped link by name ("identity", "logistic").
  static LinkFunction by_name(const std::string& name);

  double operator()(double z) const { return f_(z); }
  double derivative(double z) const { return fprime_(z); }
  double second_derivative(double z) const { return fsecond_(z); }

  const std::string& name() const { return name_; }
  double kappa1() const { return kappa1_; }
  double kappa2() const { return kappa2_; }
  double curvature_bound() const { return m_; }
  bool is_identity() const { return name_ == "identity"; }

 private:
  std::string name_;
  Fn f_;
  Fn fprime_;
  Fn fsecond_;
  double kappa1_ = 0.0;
  double kappa2_ = 0.0;
  double m_ = 0.0;
};

}  // namespace lowswitch

#include "lowswitch/link.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "lowswitch/errors.hpp"

namespace lowswitch {

LinkFunction::LinkFunction(std::string name, Fn f, Fn fprime, Fn fsecond)
    : name_(std::move(name)), f_(std::move(f)), fprime_(std::move(fprime)),
      fsecond_(std::move(fsecond)) {
  kappa1_ = std::numeric_limits<double>::infinity();
  kappa2_ = 0.0;
  m_ = 0.0;
  int sign = 0;
  for (int i = 0; i < kGridPoints; ++i) {
    const double z = -1.0 + 2.0 * i / (kGridPoints - 1);
    const double v = f_(z);
    const double d1 = fprime_(z);
    const double d2 = fsecond_(z);
    if (!std::isfinite(v) || !std::isfinite(d1) || !std::isfinite(d2)) {
      throw InvalidArgument("link '" + name_ + "': non-finite value on [-1, 1]");
    }
    if (d1 == 0.0) {
      throw InvalidArgument("link '" + name_ + "': derivative vanishes on [-1, 1]");
    }
    const int s = d1 > 0.0 ? 1 : -1;
    if (sign != 0 && s != sign) {
      throw InvalidArgument("link '" + name_ + "': not monotone on [-1, 1]");
    }
    sign = s;
    kappa1_ = std::min(kappa1_, std::abs(d1));
    kappa2_ = std::max(kappa2_, std::abs(d1));
    m_ = std::max(m_, std::abs(d2));
  }
}

LinkFunction LinkFunction::identity() {
  return {"identity", [](double z) { return z; }, [](double) { return 1.0; },
          [](double) { return 0.0; }};
}

LinkFunction LinkFunction::logistic() {
  auto f = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  auto fp = [f](double z) {
    const double s = f(z);
    return s * (1.0 - s);
  };
  auto fpp = [f](double z) {
    const double s = f(z);
    return s * (1.0 - s) * (1.0 - 2.0 * s);
  };
  return {"logistic", f, fp, fpp};
}

LinkFunction LinkFunction::by_name(const std::string& name) {
  if (name == "identity") return identity();
  if (name == "logistic") return logistic();
  throw InvalidArgument("unknown link function '" + name + "'");
}

}  // namespace lowswitch

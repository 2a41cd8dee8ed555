#include <doctest.h>

#include <cmath>

#include "lowswitch/errors.hpp"
#include "lowswitch/link.hpp"

using namespace lowswitch;

TEST_CASE("identity link constants") {
  const auto f = LinkFunction::identity();
  CHECK(f.kappa1() == 1.0);
  CHECK(f.kappa2() == 1.0);
  CHECK(f.curvature_bound() == 0.0);
  CHECK(f(0.3) == 0.3);
  CHECK(f.is_identity());
}

TEST_CASE("logistic link constants on [-1, 1]") {
  const auto f = LinkFunction::logistic();
  const double e = std::exp(1.0);
  CHECK(f.kappa1() == doctest::Approx(e / ((1.0 + e) * (1.0 + e))).epsilon(1e-12));
  CHECK(f.kappa1() == doctest::Approx(0.1966).epsilon(1e-3));
  CHECK(f.kappa2() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(f(0.0) == 0.5);
  CHECK_FALSE(f.is_identity());
  // |f''| = f'(1-2f) peaks at z with f = (3 - sqrt 3)/6, outside [-1, 1]; the grid max is at |z| = 1.
  const double s = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(f.curvature_bound() == doctest::Approx(s * (1 - s) * std::abs(1 - 2 * s)).epsilon(1e-9));
}

TEST_CASE("links must be monotone with non-vanishing slope") {
  CHECK_THROWS_AS(LinkFunction("square", [](double z) { return z * z; },
                               [](double z) { return 2 * z; }, [](double) { return 2.0; }),
                  InvalidArgument);
  CHECK_THROWS_AS(LinkFunction("flat", [](double) { return 0.5; }, [](double) { return 0.0; },
                               [](double) { return 0.0; }),
                  InvalidArgument);
  const LinkFunction dec("neg", [](double z) { return -z; }, [](double) { return -1.0; },
                         [](double) { return 0.0; });
  CHECK(dec.kappa1() == 1.0);
  CHECK_THROWS_AS(LinkFunction::by_name("probit"), InvalidArgument);
}

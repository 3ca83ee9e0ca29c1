#include <doctest.h>

#include <cmath>
#include <initializer_list>

#include "bernflow/normal.hpp"

using namespace bernflow;

TEST_CASE("log pdf and pdf agree with the closed form") {
  for (double z : {-8.0, -2.5, -1.0, 0.0, 0.5, 3.0, 8.0}) {
    const double ref = -0.5 * z * z - 0.5 * std::log(2.0 * M_PI);
    CHECK(stdnormal::log_pdf(z) == doctest::Approx(ref).epsilon(1e-14));
    CHECK(stdnormal::pdf(z) == doctest::Approx(std::exp(ref)).epsilon(1e-13));
  }
  CHECK(stdnormal::kLogSqrt2Pi == doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-16));
}

TEST_CASE("cdf reference values") {
  CHECK(stdnormal::cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(stdnormal::cdf(1.0) == doctest::Approx(0.841344746068542949).epsilon(1e-12));
  CHECK(stdnormal::cdf(-1.959963984540054) == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(stdnormal::cdf(-8.0) == doctest::Approx(6.22096057427178e-16).epsilon(1e-6));
  CHECK(stdnormal::cdf(8.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("quantile reference values") {
  CHECK(stdnormal::quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(stdnormal::quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(stdnormal::quantile(0.841344746068543) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stdnormal::quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-9));
}

TEST_CASE("quantile inverts cdf across the range") {
  for (int i = 1; i < 1000; ++i) {
    const double p = i / 1000.0;
    const double z = stdnormal::quantile(p);
    CHECK(stdnormal::cdf(z) == doctest::Approx(p).epsilon(1e-12));
  }
  // lower tail keeps full relative precision in p, so the round trip is tight
  for (double z : {-7.0, -5.0, 5.0}) {
    CHECK(stdnormal::quantile(stdnormal::cdf(z)) == doctest::Approx(z).epsilon(1e-9));
  }
  // upper deep tail: 1 - p is at the resolution of doubles near 1, which caps
  // the recoverable z accuracy around 1e-5
  CHECK(stdnormal::quantile(stdnormal::cdf(7.0)) == doctest::Approx(7.0).epsilon(1e-4));
}

TEST_CASE("cdf is monotone and symmetric") {
  double prev = 0.0;
  for (int i = -400; i <= 400; ++i) {
    const double z = i / 50.0;
    const double c = stdnormal::cdf(z);
    CHECK(c >= prev);
    prev = c;
    CHECK(stdnormal::cdf(-z) == doctest::Approx(1.0 - c).epsilon(1e-12));
  }
}

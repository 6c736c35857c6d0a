#include <doctest.h>

#include <cmath>
#include <random>

#include "hercules/errors.hpp"
#include "hercules/series.hpp"
#include "support.hpp"

using namespace hercules;

namespace {

double mean_of(const Series& s) {
  double m = 0.0;
  for (float v : s) m += v;
  return m / static_cast<double>(s.size());
}

double sd_of(const Series& s) {
  const double m = mean_of(s);
  double v = 0.0;
  for (float x : s) v += (x - m) * (x - m);
  return std::sqrt(v / static_cast<double>(s.size()));
}

}  // namespace

TEST_CASE("z_normalize") {
  const Series a = z_normalize(Series{0.0f, 2.0f});
  CHECK(a[0] == doctest::Approx(-1.0));
  CHECK(a[1] == doctest::Approx(1.0));

  CHECK(z_normalize(Series{5.0f, 5.0f, 5.0f}) == Series{0.0f, 0.0f, 0.0f});

  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    Series s = testing::gaussian(256, rng);
    for (std::size_t i = 1; i < s.size(); ++i) s[i] += s[i - 1];
    const Series z = z_normalize(s);
    CHECK(std::abs(mean_of(z)) < 1e-5);
    CHECK(std::abs(sd_of(z) - 1.0) < 1e-4);
    const Series zz = z_normalize(z);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(zz[i] - z[i]) < 1e-4);
  }

  CHECK_THROWS_AS(z_normalize(Series{}), ContractError);
}

TEST_CASE("euclidean_sq") {
  const Series a{0.0f, 0.0f};
  const Series b{3.0f, 4.0f};
  CHECK(euclidean_sq(a, b) == 25.0f);
  CHECK(std::sqrt(euclidean_sq(a, b)) == 5.0f);
  CHECK(euclidean_sq(b, b) == 0.0f);
  CHECK_THROWS_AS(euclidean_sq(a, Series{1.0f}), ContractError);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 500; ++t) {
    const Series x = testing::gaussian(256, rng);
    const Series y = testing::gaussian(256, rng);
    const double want = testing::euclidean_sq_double(x, y);
    CHECK(std::abs(euclidean_sq(x, y) - want) <= 1e-5 * want);
    CHECK(euclidean_sq(x, y) == euclidean_sq(y, x));
    CHECK(euclidean_sq(x, x) == 0.0f);
  }
}

TEST_CASE("euclidean_sq_early_abandon") {
  const Series a{0.0f, 0.0f};
  const Series b{3.0f, 4.0f};
  CHECK_FALSE(euclidean_sq_early_abandon(a, b, 1.0f).has_value());
  CHECK(euclidean_sq_early_abandon(a, b, 26.0f).value() == 25.0f);
  CHECK_FALSE(euclidean_sq_early_abandon(a, b, 25.0f).has_value());
  CHECK_THROWS_AS(euclidean_sq_early_abandon(a, b, -1.0f), ContractError);
  CHECK_THROWS_AS(euclidean_sq_early_abandon(a, Series{1.0f}, 1.0f), ContractError);

  // Never abandons a pair whose true distance is below the bound, and agrees
  // with the plain distance whenever it answers.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> frac(0.0, 2.0);
  int abandoned = 0;
  for (int t = 0; t < 10000; ++t) {
    const Series x = testing::gaussian(64, rng);
    const Series y = testing::gaussian(64, rng);
    const float full = euclidean_sq(x, y);
    const auto bound = static_cast<float>(full * frac(rng));
    const auto got = euclidean_sq_early_abandon(x, y, bound);
    if (full < bound) REQUIRE(got.has_value());
    if (got) {
      CHECK(*got == doctest::Approx(full).epsilon(1e-5));
    } else {
      ++abandoned;
    }
  }
  CHECK(abandoned > 0);
}

TEST_CASE("raw files round trip and reject partial series") {
  testing::TempDir dir;
  const std::vector<float> v{1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f};
  write_raw_file(dir.file("a.bin"), v);
  CHECK(raw_file_series_count(dir.file("a.bin"), 3) == 2);
  CHECK(read_raw_file(dir.file("a.bin"), 3) == v);
  CHECK_THROWS_AS(raw_file_series_count(dir.file("a.bin"), 4), ConfigError);
  CHECK_THROWS_AS(read_raw_file(dir.file("missing.bin"), 3), IoError);
}

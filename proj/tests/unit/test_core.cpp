#include <catch2/catch_amalgamated.hpp>

#include "fedsim/core.hpp"

using namespace fedsim;

TEST_CASE("splitmix64 is a stable pure function") {
  CHECK(splitmix64(0) == splitmix64(0));
  CHECK(splitmix64(1) == splitmix64(1));
  CHECK(splitmix64(0) != splitmix64(1));
  // Known value of the reference splitmix64 for input 0 (first output of the
  // stream seeded with 0), frozen so seed derivations never drift silently.
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("mix_seed depends on order and content") {
  CHECK(mix_seed({1, 2}) == mix_seed({1, 2}));
  CHECK(mix_seed({1, 2}) != mix_seed({2, 1}));
  CHECK(mix_seed({1, 2}) != mix_seed({1, 3}));
  CHECK(mix_seed({1}) != mix_seed({1, 0}));
}

TEST_CASE("make_rng reproduces streams from the same parts") {
  auto a = make_rng({7, 8, 9});
  auto b = make_rng({7, 8, 9});
  for (int i = 0; i < 5; ++i) CHECK(a() == b());
  auto c = make_rng({7, 8, 10});
  bool differs = false;
  auto a2 = make_rng({7, 8, 9});
  for (int i = 0; i < 5; ++i) differs |= (a2() != c());
  CHECK(differs);
}

TEST_CASE("vector algebra basics") {
  ParamVector a{1.0, 2.0, 3.0};
  ParamVector b{4.0, -5.0, 6.0};
  CHECK(dot(a, b) == Catch::Approx(4.0 - 10.0 + 18.0));
  CHECK(squared_norm(a) == Catch::Approx(14.0));
  CHECK(norm(ParamVector{3.0, 4.0}) == Catch::Approx(5.0));
  ParamVector y = b;
  axpy(2.0, a, y);
  CHECK(y == ParamVector{6.0, -1.0, 12.0});
  CHECK(sub(a, b) == ParamVector{-3.0, 7.0, -3.0});
  CHECK(squared_distance(a, b) == Catch::Approx(9.0 + 49.0 + 9.0));
}

TEST_CASE("stacked helpers") {
  std::vector<ParamVector> ws{{3.0, 0.0}, {0.0, 4.0}};
  CHECK(stacked_norm(ws) == Catch::Approx(5.0));
  std::vector<ParamVector> vs{{0.0, 0.0}, {0.0, 0.0}};
  CHECK(stacked_squared_distance(ws, vs) == Catch::Approx(25.0));
}

TEST_CASE("all_finite flags inf and nan") {
  CHECK(all_finite({1.0, -2.0, 0.0}));
  CHECK_FALSE(all_finite({1.0, std::numeric_limits<double>::infinity()}));
  CHECK_FALSE(all_finite({std::numeric_limits<double>::quiet_NaN()}));
}

TEST_CASE("require throws ContractViolation with the message") {
  CHECK_NOTHROW(require(true, "fine"));
  CHECK_THROWS_AS(require(false, "broken"), ContractViolation);
  CHECK_THROWS_WITH(require(false, "broken"), "broken");
}

TEST_CASE("size mismatches are contract violations") {
  ParamVector a{1.0, 2.0};
  ParamVector b{1.0};
  CHECK_THROWS_AS(dot(a, b), ContractViolation);
  CHECK_THROWS_AS(sub(a, b), ContractViolation);
  ParamVector y{1.0};
  CHECK_THROWS_AS(axpy(1.0, a, y), ContractViolation);
}

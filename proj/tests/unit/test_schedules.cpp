#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fedsim/schedules.hpp"

using namespace fedsim;

TEST_CASE("constant_theorem schedule: alpha = lambda/sqrt(K), beta = 1/sqrt(K)") {
  const auto s1 = make_schedule(ScheduleKind::constant_theorem, 1, 2.5);
  REQUIRE(s1.size() == 1);
  CHECK(s1[0].alpha == Catch::Approx(2.5));
  CHECK(s1[0].beta == Catch::Approx(1.0));

  const auto s100 = make_schedule(ScheduleKind::constant_theorem, 100, 2.0);
  REQUIRE(s100.size() == 100);
  for (const auto& st : s100) {
    CHECK(st.beta == Catch::Approx(0.1));
    CHECK(st.alpha == Catch::Approx(0.2));
  }
}

TEST_CASE("diminishing schedule: alpha_k = a/(k+b), beta_k = alpha_k/lambda") {
  const double a = 2.0, b = 3.0, lambda = 4.0;
  const auto s = make_schedule(ScheduleKind::diminishing, 5, lambda, a, b);
  REQUIRE(s.size() == 5);
  for (int k = 1; k <= 5; ++k) {
    CHECK(s[k - 1].alpha == Catch::Approx(a / (k + b)));
    CHECK(s[k - 1].beta == Catch::Approx(a / (k + b) / lambda));
  }
  // strictly decreasing
  for (int k = 1; k < 5; ++k) CHECK(s[k].alpha < s[k - 1].alpha);
}

TEST_CASE("fixed schedule holds the value for both step sizes") {
  const auto s = make_schedule(ScheduleKind::fixed, 3, 1.0, 0.3, 0.0);
  for (const auto& st : s) {
    CHECK(st.alpha == 0.3);
    CHECK(st.beta == 0.3);
  }
}

TEST_CASE("resolve_schedules mixes families componentwise") {
  ScheduleSpec alpha{ScheduleKind::fixed, 0.7, 0.7};
  ScheduleSpec beta{ScheduleKind::diminishing, 1.0, 1.0};
  const double lambda = 2.0;
  const auto s = resolve_schedules(alpha, beta, 4, lambda);
  REQUIRE(s.size() == 4);
  for (int k = 1; k <= 4; ++k) {
    CHECK(s[k - 1].alpha == Catch::Approx(0.7));
    CHECK(s[k - 1].beta == Catch::Approx(1.0 / (k + 1.0) / lambda));
  }
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(make_schedule(ScheduleKind::fixed, 0, 1.0, 0.1, 0.0),
                  ContractViolation);
  CHECK_THROWS_AS(make_schedule(ScheduleKind::fixed, 5, 0.0, 0.1, 0.0),
                  ContractViolation);
  CHECK_THROWS_AS(make_schedule(ScheduleKind::diminishing, 5, 1.0, 0.0, 1.0),
                  ContractViolation);
  CHECK_THROWS_AS(make_schedule(ScheduleKind::diminishing, 5, 1.0, 1.0, -1.0),
                  ContractViolation);
}

TEST_CASE("schedule kind string round trip") {
  CHECK(schedule_kind_from_string("constant_theorem") == ScheduleKind::constant_theorem);
  CHECK(schedule_kind_from_string("diminishing") == ScheduleKind::diminishing);
  CHECK(schedule_kind_from_string("fixed") == ScheduleKind::fixed);
  CHECK_THROWS_AS(schedule_kind_from_string("bogus"), ConfigError);
  CHECK(std::string(to_string(ScheduleKind::diminishing)) == "diminishing");
}

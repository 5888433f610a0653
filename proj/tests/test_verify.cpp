#include <doctest.h>

#include <cmath>

#include "siss/verify.hpp"

using namespace siss;

TEST_CASE("comparing an estimator against itself passes trivially") {
  const DenoiserModel model = verify_detail::make_check_model(1);
  const UnlearnDataset ds = verify_detail::make_check_dataset(2);
  const NoiseSchedule schedule = build_schedule(1000, 1e-4, 0.02);
  Rng base(3);
  std::vector<verify_detail::MeanVar> a(model.params.size()), b(model.params.size());
  for (int i = 0; i < 2000; ++i) {
    Rng r1 = base.split(static_cast<std::uint64_t>(i));
    Rng r2 = base.split(static_cast<std::uint64_t>(i));  // identical stream
    const LossEstimate e1 = naive_deletion_loss(model, ds, schedule, 1, r1);
    const LossEstimate e2 = naive_deletion_loss(model, ds, schedule, 1, r2);
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j].add(e1.gradient.values[j]);
      b[j].add(e2.gradient.values[j]);
    }
  }
  for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j].mean == b[j].mean);
}

TEST_CASE("weight bounds check passes on the acceptance lambda grid") {
  const CheckReport rep = check_weight_bounds(10000, {0.1, 0.3, 0.5, 0.7, 0.9}, 11);
  CHECK(rep.pass);
  CHECK(rep.stats["bound_violations"].get<long long>() == 0);
  CHECK(rep.stats["identity_violations"].get<long long>() == 0);
  CHECK(rep.stats["max_identity_error"].get<double>() < 1e-10);
  CHECK(rep.trials == 50000);
}

TEST_CASE("descent lemma holds including the aligned worst case") {
  const double L = 4.0;
  const CheckReport rep =
      check_descent_lemma(L, {1.0 / (10.0 * L)}, {0.0, 0.1, 0.5, 0.9}, 10000, 12);
  CHECK(rep.pass);
  CHECK(rep.stats["violations"].get<long long>() == 0);
  CHECK(rep.stats["min_slack"].get<double>() >= 0.0);
}

TEST_CASE("the verify suite is internally consistent and deterministic") {
  VerifySuiteOptions opt;
  opt.lemma_trials = 20000;
  opt.rewrite_trials = 60000;
  opt.weight_trials = 3000;
  opt.descent_trials = 3000;
  opt.variance_trials = 500;
  const VerifySuiteResult a = run_verify_suite(opt);
  CHECK(a.all_ok);
  const VerifySuiteResult b = run_verify_suite(opt);
  const nlohmann::json ja = verify_report_json(a, "cafebabe", opt.seed);
  const nlohmann::json jb = verify_report_json(b, "cafebabe", opt.seed);
  CHECK(ja.dump() == jb.dump());

  SUBCASE("report schema carries the documented keys") {
    CHECK(ja.at("schema") == "siss-verify-report/1");
    CHECK(ja.at("config_hash") == "cafebabe");
    CHECK(ja.at("seed").is_number());
    CHECK(ja.at("all_ok").is_boolean());
    REQUIRE(ja.at("checks").is_array());
    for (const auto& c : ja.at("checks")) {
      CHECK(c.at("name").is_string());
      CHECK(c.at("pass").is_boolean());
      CHECK(c.at("expected_pass").is_boolean());
      CHECK(c.at("trials").is_number());
      CHECK(c.contains("stats"));
    }
    CHECK(ja.at("measurements").contains("lambda_gradient_variance"));
  }

  SUBCASE("an injected bad coefficient breaks consistency") {
    VerifySuiteOptions bad = opt;
    bad.inject_bad_coefficient = true;
    const VerifySuiteResult res = run_verify_suite(bad);
    CHECK_FALSE(res.all_ok);
  }
}

TEST_CASE("lambda variance measurement reports one entry per lambda") {
  const nlohmann::json m = measure_lambda_gradient_variance({0.1, 0.5}, 300, 13);
  REQUIRE(m.size() == 2);
  CHECK(m[0].at("lambda") == 0.1);
  CHECK(m[0].at("mean_coordinate_variance").get<double>() > 0.0);
}

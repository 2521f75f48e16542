#include <cmath>
#include <numeric>
#include <random>

#include "curie/data/synth.hpp"
#include "curie/regression/model.hpp"
#include "doctest.h"

using namespace curie;
using namespace curie::regression;

namespace {

// Stacked (upper triangle of x x^T, x y) for one row.
std::vector<double> row_coefficients(const std::vector<double>& x, double y) {
  std::vector<double> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i; j < x.size(); ++j) out.push_back(x[i] * x[j]);
  }
  for (double xi : x) out.push_back(xi * y);
  return out;
}

std::vector<std::vector<double>> extreme_rows(std::size_t d) {
  std::vector<std::vector<double>> rows;
  const std::size_t total = static_cast<std::size_t>(std::pow(3.0, static_cast<double>(d + 1)));
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<double> v(d + 1);
    std::size_t c = code;
    for (double& x : v) {
      x = static_cast<double>(c % 3) - 1.0;
      c /= 3;
    }
    const double y = v.back();
    v.pop_back();
    rows.push_back(row_coefficients(v, y));
  }
  return rows;
}

// Largest L1 change of the stacked coefficients when one row is replaced.
double brute_force_sensitivity(std::size_t d) {
  const auto rows = extreme_rows(d);
  double best = 0.0;
  for (const auto& a : rows) {
    for (const auto& b : rows) {
      double l1 = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
      best = std::max(best, l1);
    }
  }
  return best;
}

// Largest L1 norm of a single row's coefficients.
double largest_row_norm(std::size_t d) {
  double best = 0.0;
  for (const auto& r : extreme_rows(d)) {
    double l1 = 0.0;
    for (double c : r) l1 += std::abs(c);
    best = std::max(best, l1);
  }
  return best;
}

}  // namespace

TEST_CASE("OLS recovers exact coefficients from noiseless statistics") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::Index m = 5;
  Eigen::MatrixXd x(200, m);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    x(r, 0) = 1.0;
    for (Eigen::Index c = 1; c < m; ++c) x(r, c) = u(rng);
  }
  Eigen::VectorXd eta(m);
  eta << 0.5, -1.0, 2.0, 0.25, -0.75;
  const Eigen::VectorXd y = x * eta;
  const Eigen::VectorXd got = solve_ols(x.transpose() * x, x.transpose() * y);
  CHECK((got - eta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("singular or mismatched systems are rejected") {
  Eigen::MatrixXd o = Eigen::MatrixXd::Zero(3, 3);
  o(0, 0) = 1.0;
  CHECK_THROWS_AS(solve_ols(o, Eigen::VectorXd::Ones(3)), SingularMatrix);
  CHECK_THROWS_AS(solve_ols(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Ones(2)),
                  SingularMatrix);
}

TEST_CASE("functional-mechanism sensitivity bounds a brute-force oracle") {
  for (std::size_t d = 1; d <= 4; ++d) {
    CAPTURE(d);
    CHECK(fm_sensitivity(d) >= brute_force_sensitivity(d));
    CHECK(fm_sensitivity(d) == doctest::Approx(2.0 * largest_row_norm(d)));
  }
  CHECK(fm_sensitivity(15) == 270.0);
}

TEST_CASE("Laplace samples have the right location and scale") {
  std::mt19937_64 rng(4);
  const int n = 200000;
  double sum = 0.0, abs_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_laplace(2.0, rng);
    sum += x;
    abs_sum += std::abs(x);
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(abs_sum / n == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("functional mechanism checks its inputs and converges as epsilon grows") {
  std::mt19937_64 data_rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::Index m = 3, rows = 5000;
  Eigen::MatrixXd x(rows, m);
  Eigen::VectorXd y(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    x(r, 0) = 1.0;
    x(r, 1) = u(data_rng);
    x(r, 2) = u(data_rng);
    y(r) = 0.1 + 0.4 * x(r, 1) - 0.3 * x(r, 2);
  }
  const Eigen::MatrixXd o = x.transpose() * x;
  const Eigen::VectorXd v = x.transpose() * y;
  const Eigen::VectorXd exact = solve_ols(o, v);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(functional_mechanism(o, v, rows, 3, 0.0, rng), BudgetError);
  CHECK_THROWS_AS(functional_mechanism(o * 2.0, v, rows, 3, 1.0, rng), NormalizationError);
  double previous = std::numeric_limits<double>::infinity();
  for (double eps : {1.0, 10.0, 100.0, 1e4}) {
    double err = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      err += (functional_mechanism(o, v, rows, 3, eps, rng) - exact).norm();
    }
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous / 50 < 1e-3);
}

TEST_CASE("clinical metrics follow the weekly safety window") {
  const std::vector<double> truth = {5.0, 5.0, 5.0, 4.0};
  const std::vector<double> pred = {5.5, 3.9, 6.1, 4.0};
  const ClinicalReport r = clinical_metrics(pred, truth);
  CHECK(r.count == 4);
  CHECK(r.mae == doctest::Approx((0.5 + 1.1 + 1.1 + 0.0) / 4));
  CHECK(r.mape == doctest::Approx(100.0 * (0.1 + 0.22 + 0.22 + 0.0) / 4));
  CHECK(r.under == doctest::Approx(0.25));
  CHECK(r.over == doctest::Approx(0.25));
  CHECK(r.in_window == doctest::Approx(0.5));
  CHECK_THROWS_AS(clinical_metrics(std::vector<double>{}, std::vector<double>{}), EmptyValidation);
  CHECK_THROWS_AS(clinical_metrics(std::vector<double>{1.0}, std::vector<double>{0.0}),
                  EmptyValidation);
}

TEST_CASE("dose model predicts in original units through the normalisation") {
  const data::Schema schema = data::warfarin_schema();
  DoseModel model;
  model.schema = schema;
  model.encoding = data::DesignEncoding(schema);
  model.normalization = data::NormalizationMap::from_schema(schema);
  model.eta = Eigen::VectorXd::Zero(15);
  model.eta(0) = 0.0;  // normalised dose 0 is the middle of [0, 20]
  std::vector<double> row(schema.size(), 0.0);
  row[0] = 50;
  row[1] = 170;
  row[2] = 70;
  CHECK(predict(model, row) == doctest::Approx(10.0));
  CHECK_THROWS_AS(predict(model, std::vector<double>{1.0}), SchemaMismatch);
  const auto j = to_json(model);
  CHECK(j.at("privacy").at("kind") == "NonPrivate");
  CHECK(j.at("encoding").size() == 15);
}

TEST_CASE("bootstrap interval brackets the mean") {
  std::vector<double> s(200);
  std::iota(s.begin(), s.end(), 0.0);
  const Interval ci = bootstrap_mean(s, 2000, 1);
  CHECK(ci.mean == doctest::Approx(99.5));
  CHECK(ci.lower < ci.mean);
  CHECK(ci.upper > ci.mean);
  CHECK(ci.upper - ci.lower < 25.0);
  CHECK_THROWS_AS(bootstrap_mean(std::vector<double>{}, 10, 1), EmptyValidation);
}

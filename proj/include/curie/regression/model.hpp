#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "curie/data/dataset.hpp"
#include "curie/data/design.hpp"
#include "curie/error.hpp"
#include "json.hpp"

namespace curie::regression {

CURIE_DEFINE_ERROR(SingularMatrix);
CURIE_DEFINE_ERROR(BudgetError);
CURIE_DEFINE_ERROR(NormalizationError);
CURIE_DEFINE_ERROR(EmptyValidation);

inline constexpr double kDefaultMaxCondition = 1e12;
inline constexpr double kDefaultEigenFloor = 1e-4;

// Solves O eta = V for symmetric O. Throws SingularMatrix when the
// eigenvalue ratio exceeds `max_condition` or the residual check fails.
Eigen::VectorXd solve_ols(const Eigen::MatrixXd& o, const Eigen::VectorXd& v,
                          double max_condition = kDefaultMaxCondition);

// L1 sensitivity of the stacked (upper triangle of O, V) coefficients when
// one row with entries in [-1, 1] is replaced: 2 * (d(d+1)/2 + d).
double fm_sensitivity(std::size_t d);

// Functional mechanism for squared loss. Each upper-triangle entry of O and
// each entry of V gets independent Laplace(fm_sensitivity(d) / epsilon)
// noise; O is mirrored, its eigenvalues are floored at `floor`, and the
// system is solved. `rows` is the pooled row count used to check that the
// statistics come from [-1, 1]-normalised data. Throws BudgetError and
// NormalizationError.
Eigen::VectorXd functional_mechanism(const Eigen::MatrixXd& o, const Eigen::VectorXd& v,
                                     double rows, std::size_t d, double epsilon,
                                     std::mt19937_64& rng,
                                     double floor = kDefaultEigenFloor);

double sample_laplace(double scale, std::mt19937_64& rng);

struct DoseModel {
  Eigen::VectorXd eta;
  data::Schema schema;  // raw input schema
  data::DesignEncoding encoding;
  // Present when eta was fitted on [-1, 1]-normalised columns.
  std::optional<data::NormalizationMap> normalization;
  std::optional<double> epsilon;  // set for differentially private models

  bool is_private() const { return epsilon.has_value(); }
};

// Dose in original units for one raw row in schema order.
double predict(const DoseModel& model, std::span<const double> row);
// Throws SchemaMismatch when `ds` does not use the model's schema.
std::vector<double> predict(const DoseModel& model, const data::Dataset& ds);

nlohmann::json to_json(const DoseModel& model);

struct ClinicalReport {
  std::size_t count = 0;
  double mae = 0.0;
  double mape = 0.0;
  double under = 0.0;
  double in_window = 0.0;
  double over = 0.0;
};

inline constexpr double kSafetyWindow = 0.2;

// MAE and MAPE on daily doses; a weekly (7 x daily) prediction is in the
// window when it lies within 20% of the true weekly dose. Throws
// EmptyValidation.
ClinicalReport clinical_metrics(std::span<const double> predicted,
                                std::span<const double> truth);
ClinicalReport clinical_metrics(const DoseModel& model, const data::Dataset& validation);

nlohmann::json to_json(const ClinicalReport& report);

struct Interval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Percentile bootstrap interval for the mean.
Interval bootstrap_mean(std::span<const double> samples, std::size_t resamples,
                        std::uint64_t seed, double level = 0.95);

}  // namespace curie::regression

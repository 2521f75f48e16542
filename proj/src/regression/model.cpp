#include "curie/regression/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "curie/simd/kernels.hpp"

namespace curie::regression {

Eigen::VectorXd solve_ols(const Eigen::MatrixXd& o, const Eigen::VectorXd& v,
                          double max_condition) {
  if (o.rows() != o.cols() || o.rows() != v.size() || o.rows() == 0) {
    throw SingularMatrix("O must be square and match V");
  }
  const Eigen::MatrixXd sym = 0.5 * (o + o.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(condition <= max_condition)) {
    throw SingularMatrix("O is not invertible (condition estimate " +
                         std::to_string(condition) + ")");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() != Eigen::Success) throw SingularMatrix("O is not positive definite");
  Eigen::VectorXd eta = llt.solve(v);
  // One step of iterative refinement tightens the residual on poorly scaled
  // systems (raw clinical units mix 1 and 10^4).
  eta += llt.solve(v - sym * eta);
  const double vn = v.norm();
  const double residual = (sym * eta - v).norm() / (vn > 0.0 ? vn : 1.0);
  if (residual > 1e-8) {
    throw SingularMatrix("residual " + std::to_string(residual) + " exceeds 1e-8");
  }
  return eta;
}

double fm_sensitivity(std::size_t d) {
  const double dd = static_cast<double>(d);
  return 2.0 * (dd * (dd + 1.0) / 2.0 + dd);
}

double sample_laplace(double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double x = u(rng);
  while (x == -0.5) x = u(rng);
  return -scale * std::copysign(1.0, x) * std::log1p(-2.0 * std::abs(x));
}

Eigen::VectorXd functional_mechanism(const Eigen::MatrixXd& o, const Eigen::VectorXd& v,
                                     double rows, std::size_t d, double epsilon,
                                     std::mt19937_64& rng, double floor) {
  if (!(epsilon > 0.0)) throw BudgetError("privacy budget must be positive");
  const Eigen::Index m = o.rows();
  if (o.cols() != m || v.size() != m || static_cast<std::size_t>(m) != d) {
    throw SingularMatrix("O, V and d disagree on the design width");
  }
  // Rows in [-1, 1] bound every entry of O and V by the row count.
  const double limit = rows * (1.0 + 1e-9) + 1e-9;
  if (o.cwiseAbs().maxCoeff() > limit || v.cwiseAbs().maxCoeff() > limit) {
    throw NormalizationError("statistics exceed the [-1, 1] row bound; normalise first");
  }
  const double scale = fm_sensitivity(d) / epsilon;
  Eigen::MatrixXd noisy = o;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j) {
      noisy(i, j) += sample_laplace(scale, rng);
      noisy(j, i) = noisy(i, j);
    }
  }
  Eigen::VectorXd noisy_v = v;
  for (Eigen::Index i = 0; i < m; ++i) noisy_v(i) += sample_laplace(scale, rng);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(noisy);
  const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(floor);
  const Eigen::MatrixXd& q = eig.eigenvectors();
  return q * (lambda.cwiseInverse().asDiagonal() * (q.transpose() * noisy_v));
}

namespace {

std::vector<double> model_row(const DoseModel& model, std::span<const double> row) {
  std::vector<double> cells(row.begin(), row.end());
  if (model.normalization) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const data::ColumnSpec& spec = model.schema.columns()[c];
      if (!spec.is_numeric()) continue;
      cells[c] = std::clamp(model.normalization->normalize(spec.name, cells[c]), -1.0, 1.0);
    }
  }
  return cells;
}

}  // namespace

double predict(const DoseModel& model, std::span<const double> row) {
  if (row.size() != model.schema.size()) {
    throw SchemaMismatch("row has " + std::to_string(row.size()) + " cells, schema has " +
                         std::to_string(model.schema.size()));
  }
  if (static_cast<std::size_t>(model.eta.size()) != model.encoding.width()) {
    throw SchemaMismatch("coefficients do not match the design encoding");
  }
  const std::vector<double> cells = model_row(model, row);
  std::vector<double> x(model.encoding.width());
  model.encoding.encode_row(cells, x);
  const double y = simd::dot(x, std::span<const double>(model.eta.data(), x.size()));
  return model.normalization ? model.normalization->denormalize(model.schema.target(), y) : y;
}

std::vector<double> predict(const DoseModel& model, const data::Dataset& ds) {
  const auto report = data::check_shared_schema(model.schema, ds.schema());
  if (!report.ok || model.schema.columns() != ds.schema().columns()) {
    throw SchemaMismatch("dataset schema differs from the model's");
  }
  std::vector<double> out;
  out.reserve(ds.rows());
  for (std::size_t r = 0; r < ds.rows(); ++r) out.push_back(predict(model, ds.row(r)));
  return out;
}

nlohmann::json to_json(const DoseModel& model) {
  nlohmann::json columns = nlohmann::json::array();
  for (const data::DesignColumn& c : model.encoding.columns()) columns.push_back(c.name);
  nlohmann::json ranges = nlohmann::json::array();
  if (model.normalization) {
    for (const data::ColumnRange& r : model.normalization->ranges()) {
      ranges.push_back({{"column", r.column}, {"min", r.min}, {"max", r.max}});
    }
  }
  std::vector<double> eta(model.eta.data(), model.eta.data() + model.eta.size());
  nlohmann::json privacy = model.epsilon
                               ? nlohmann::json{{"kind", "DP"}, {"epsilon", *model.epsilon}}
                               : nlohmann::json{{"kind", "NonPrivate"}};
  return {{"encoding", columns},
          {"normalization", ranges},
          {"coefficients", eta},
          {"target", model.schema.target()},
          {"privacy", privacy}};
}

ClinicalReport clinical_metrics(std::span<const double> predicted,
                                std::span<const double> truth) {
  if (predicted.empty() || predicted.size() != truth.size()) {
    throw EmptyValidation("validation needs matching, nonempty predictions and doses");
  }
  ClinicalReport r;
  r.count = truth.size();
  std::size_t under = 0, in = 0, over = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!(truth[i] > 0.0)) throw EmptyValidation("true doses must be positive");
    const double err = std::abs(predicted[i] - truth[i]);
    r.mae += err;
    r.mape += err / truth[i];
    const double weekly_pred = 7.0 * predicted[i];
    const double weekly_true = 7.0 * truth[i];
    if (weekly_pred < (1.0 - kSafetyWindow) * weekly_true) {
      ++under;
    } else if (weekly_pred > (1.0 + kSafetyWindow) * weekly_true) {
      ++over;
    } else {
      ++in;
    }
  }
  const double n = static_cast<double>(r.count);
  r.mae /= n;
  r.mape = 100.0 * r.mape / n;
  r.under = static_cast<double>(under) / n;
  r.over = static_cast<double>(over) / n;
  r.in_window = static_cast<double>(in) / n;
  return r;
}

ClinicalReport clinical_metrics(const DoseModel& model, const data::Dataset& validation) {
  if (validation.rows() == 0) throw EmptyValidation("validation set is empty");
  const std::vector<double> pred = predict(model, validation);
  const auto truth = validation.target();
  return clinical_metrics(pred, truth);
}

nlohmann::json to_json(const ClinicalReport& r) {
  return {{"count", r.count},         {"mae", r.mae},   {"mape", r.mape},
          {"under", r.under},         {"in_window", r.in_window}, {"over", r.over}};
}

Interval bootstrap_mean(std::span<const double> samples, std::size_t resamples,
                        std::uint64_t seed, double level) {
  if (samples.empty() || resamples == 0) throw EmptyValidation("bootstrap needs samples");
  Interval out;
  out.mean = std::accumulate(samples.begin(), samples.end(), 0.0) /
             static_cast<double>(samples.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<double> means(resamples);
  for (double& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) s += samples[pick(rng)];
    m = s / static_cast<double>(samples.size());
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1)));
    return means[std::min(idx, resamples - 1)];
  };
  out.lower = at(alpha);
  out.upper = at(1.0 - alpha);
  return out;
}

}  // namespace curie::regression

#include "curie/dd/statistics.hpp"

#include <sodium.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "curie/simd/kernels.hpp"

namespace curie::dd {
namespace {

std::set<std::string_view> distinct(std::span<const std::string> v) {
  return {v.begin(), v.end()};
}

void require_same_length(std::span<const double> a, std::span<const double> b,
                         std::size_t minimum) {
  if (a.size() != b.size()) {
    throw LengthMismatch("vectors have lengths " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()));
  }
  if (a.size() < minimum) {
    throw LengthMismatch("need at least " + std::to_string(minimum) + " values");
  }
}

bool is_set_statistic(cpl::Algorithm a) {
  return a == cpl::Algorithm::kIntersectionSize || a == cpl::Algorithm::kJaccardIndex;
}

// Pearson from the five sufficient sums; shared by the plain and blinded paths
// so both see identical arithmetic once the cross product is known.
double pearson_from_sums(double n, double sa, double sb, double saa, double sbb,
                         double sab) {
  const double cov = sab - sa * sb / n;
  const double va = saa - sa * sa / n;
  const double vb = sbb - sb * sb / n;
  if (!(va > 0.0) || !(vb > 0.0)) throw ZeroVariance("column has zero variance");
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

double cosine_from_sums(double saa, double sbb, double sab) {
  if (!(saa > 0.0) || !(sbb > 0.0)) throw ZeroNorm("vector has zero norm");
  return std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

struct Moments {
  double n, sum, sumsq;
};

Moments moments(std::span<const double> v) {
  return {static_cast<double>(v.size()), simd::sum(v), simd::dot(v, v)};
}

std::string to_hex(std::span<const unsigned char> bytes) {
  std::string out(bytes.size() * 2 + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), bytes.data(), bytes.size());
  out.pop_back();
  return out;
}

void ensure_sodium() {
  static const int status = sodium_init();
  if (status < 0) throw std::runtime_error("libsodium initialisation failed");
}

std::vector<std::string> salted_digests(std::span<const std::string> items,
                                        std::span<const unsigned char> salt) {
  std::vector<std::string> out;
  for (std::string_view v : distinct(items)) {
    unsigned char digest[32];
    crypto_generichash(digest, sizeof(digest),
                       reinterpret_cast<const unsigned char*>(v.data()), v.size(),
                       salt.data(), salt.size());
    out.push_back(to_hex(digest));
  }
  std::sort(out.begin(), out.end());
  return out;
}

DDOutcome blinded_set(const cpl::Evaluate& cond, const DataRef& requester,
                      const DataRef& owner, const DDOptions& options) {
  ensure_sodium();
  DDOutcome outcome;
  std::mt19937_64 rng(options.session_seed);
  std::vector<unsigned char> salt(crypto_generichash_KEYBYTES);
  for (auto& b : salt) b = static_cast<unsigned char>(rng());

  const auto mine = salted_digests(requester.items, salt);
  outcome.transcript.push_back(
      {requester.member_id, owner.member_id, "dd-request",
       {{"algorithm", std::string(cpl::algorithm_name(cond.algorithm))},
        {"threshold", cond.threshold},
        {"column", requester.column},
        {"salt", to_hex(salt)},
        {"digests", mine}}});

  const auto theirs = salted_digests(owner.items, salt);
  std::vector<std::string> common;
  std::set_intersection(mine.begin(), mine.end(), theirs.begin(), theirs.end(),
                        std::back_inserter(common));
  const double inter = static_cast<double>(common.size());
  if (cond.algorithm == cpl::Algorithm::kIntersectionSize) {
    outcome.statistic = inter;
  } else {
    const double uni = static_cast<double>(mine.size() + theirs.size()) - inter;
    if (uni == 0.0) throw EmptyUnion("both columns are empty");
    outcome.statistic = inter / uni;
  }
  return outcome;
}

DDOutcome blinded_vector(const cpl::Evaluate& cond, const DataRef& requester,
                         const DataRef& owner, const DDOptions& options) {
  const std::span<const double> a = requester.values;
  const std::span<const double> b = owner.values;
  const bool is_pearson = cond.algorithm == cpl::Algorithm::kPearsonCorrelation;
  require_same_length(a, b, is_pearson ? 2 : 1);
  const std::size_t n = a.size();

  // Commodity dealer: Ra, Rb random and ra + rb = Ra . Rb.
  std::mt19937_64 rng(options.session_seed);
  double scale = 1.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  for (double v : b) scale = std::max(scale, std::abs(v));
  std::uniform_real_distribution<double> mask(-scale, scale);
  std::vector<double> ra_vec(n), rb_vec(n);
  for (auto& v : ra_vec) v = mask(rng);
  for (auto& v : rb_vec) v = mask(rng);
  const double ra = mask(rng) * static_cast<double>(n);
  const double rb = simd::dot(ra_vec, rb_vec) - ra;
  const double owner_secret = mask(rng) * static_cast<double>(n);

  DDOutcome outcome;
  const Moments ma = moments(a);
  std::vector<double> a_hat(n);
  for (std::size_t i = 0; i < n; ++i) a_hat[i] = a[i] + ra_vec[i];
  outcome.transcript.push_back(
      {requester.member_id, owner.member_id, "dd-request",
       {{"algorithm", std::string(cpl::algorithm_name(cond.algorithm))},
        {"threshold", cond.threshold},
        {"column", requester.column},
        {"masked", a_hat},
        {"sum", ma.sum},
        {"sumsq", ma.sumsq}}});

  std::vector<double> b_hat(n);
  for (std::size_t i = 0; i < n; ++i) b_hat[i] = b[i] + rb_vec[i];
  const double t = simd::dot(a_hat, b) + rb - owner_secret;
  outcome.transcript.push_back({owner.member_id, requester.member_id,
                                "dd-masked-share",
                                {{"masked", b_hat}, {"share", t}}});

  const double u = t - simd::dot(ra_vec, b_hat) + ra;
  outcome.transcript.push_back(
      {requester.member_id, owner.member_id, "dd-share", {{"share", u}}});

  const double sab = u + owner_secret;
  const Moments mb = moments(b);
  outcome.statistic =
      is_pearson ? pearson_from_sums(static_cast<double>(n), ma.sum, mb.sum,
                                     ma.sumsq, mb.sumsq, sab)
                 : cosine_from_sums(ma.sumsq, mb.sumsq, sab);
  return outcome;
}

}  // namespace

std::size_t intersection_size(std::span<const std::string> a,
                              std::span<const std::string> b) {
  const auto sa = distinct(a);
  const auto sb = distinct(b);
  std::size_t n = 0;
  for (std::string_view v : sa) n += sb.contains(v) ? 1 : 0;
  return n;
}

std::size_t union_size(std::span<const std::string> a,
                       std::span<const std::string> b) {
  auto s = distinct(a);
  for (const std::string& v : b) s.insert(v);
  return s.size();
}

double jaccard(std::span<const std::string> a, std::span<const std::string> b) {
  const std::size_t uni = union_size(a, b);
  if (uni == 0) throw EmptyUnion("both sets are empty");
  return static_cast<double>(intersection_size(a, b)) / static_cast<double>(uni);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b, 2);
  const double n = static_cast<double>(a.size());
  const double mean_a = simd::sum(a) / n;
  const double mean_b = simd::sum(b) / n;
  std::vector<double> ca(a.size()), cb(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[i] = a[i] - mean_a;
    cb[i] = b[i] - mean_b;
  }
  const double va = simd::dot(ca, ca);
  const double vb = simd::dot(cb, cb);
  if (!(va > 0.0) || !(vb > 0.0)) throw ZeroVariance("vector has zero variance");
  return std::clamp(simd::dot(ca, cb) / std::sqrt(va * vb), -1.0, 1.0);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b, 1);
  return cosine_from_sums(simd::dot(a, a), simd::dot(b, b), simd::dot(a, b));
}

DataRef extract(const data::Dataset& ds, std::string_view column,
                std::string member_id) {
  const auto idx = ds.schema().find(column);
  if (!idx) {
    throw ColumnMismatch("member '" + member_id + "' has no column '" +
                         std::string(column) + "'");
  }
  DataRef ref;
  ref.member_id = std::move(member_id);
  ref.column = std::string(column);
  ref.numeric = ds.schema().columns()[*idx].is_numeric();
  ref.items.reserve(ds.rows());
  for (std::size_t r = 0; r < ds.rows(); ++r) ref.items.push_back(ds.cell_text(r, *idx));
  if (ref.numeric) {
    const auto col = ds.column(*idx);
    ref.values.assign(col.begin(), col.end());
  }
  return ref;
}

double statistic(cpl::Algorithm algorithm, const DataRef& a, const DataRef& b) {
  switch (algorithm) {
    case cpl::Algorithm::kIntersectionSize:
      return static_cast<double>(intersection_size(a.items, b.items));
    case cpl::Algorithm::kJaccardIndex:
      return jaccard(a.items, b.items);
    case cpl::Algorithm::kPearsonCorrelation:
    case cpl::Algorithm::kCosineSimilarity:
      if (!a.numeric || !b.numeric) {
        throw ColumnMismatch("column '" + a.column +
                             "' is not numeric; vector statistics need numbers");
      }
      return algorithm == cpl::Algorithm::kPearsonCorrelation
                 ? pearson(a.values, b.values)
                 : cosine(a.values, b.values);
  }
  return 0.0;
}

bool decide(double statistic, double threshold, Comparator comparator) {
  return comparator == Comparator::kBelow ? statistic < threshold
                                          : statistic > threshold;
}

DDOutcome evaluate_dd(const cpl::Evaluate& cond, const DataRef& requester,
                      const DataRef& owner, const DDOptions& options) {
  if (requester.column != owner.column || requester.numeric != owner.numeric) {
    throw ColumnMismatch("data references disagree on column '" +
                         requester.column + "' / '" + owner.column + "'");
  }
  DDOutcome outcome;
  if (options.mode == Mode::kPlain) {
    outcome.statistic = statistic(cond.algorithm, requester, owner);
    outcome.transcript.push_back(
        {requester.member_id, owner.member_id, "dd-request",
         {{"algorithm", std::string(cpl::algorithm_name(cond.algorithm))},
          {"threshold", cond.threshold},
          {"column", requester.column},
          {"values", requester.numeric && !is_set_statistic(cond.algorithm)
                         ? nlohmann::json(requester.values)
                         : nlohmann::json(requester.items)}}});
  } else if (is_set_statistic(cond.algorithm)) {
    outcome = blinded_set(cond, requester, owner, options);
  } else {
    if (!requester.numeric) {
      throw ColumnMismatch("column '" + requester.column +
                           "' is not numeric; vector statistics need numbers");
    }
    outcome = blinded_vector(cond, requester, owner, options);
  }
  outcome.decision = decide(outcome.statistic, cond.threshold, options.comparator);
  nlohmann::json response = {{"decision", outcome.decision}};
  if (options.audit) response["statistic"] = outcome.statistic;
  outcome.transcript.push_back(
      {owner.member_id, requester.member_id, "dd-response", std::move(response)});
  return outcome;
}

nlohmann::json audit_record(const cpl::Evaluate& cond, const DDOutcome& outcome) {
  return {{"algorithm", std::string(cpl::algorithm_name(cond.algorithm))},
          {"data_ref", cond.data_ref},
          {"threshold", cond.threshold},
          {"statistic", outcome.statistic},
          {"decision", outcome.decision}};
}

}  // namespace curie::dd

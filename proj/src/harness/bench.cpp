#include <gmpxx.h>

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>

#include "curie/harness/harness.hpp"

namespace curie::harness {
namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

aggregation::LocalStats random_member(std::size_t rows, std::size_t features,
                                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  data::DesignMatrix dm;
  dm.rows = rows;
  dm.cols = features;
  dm.x.resize(rows * features);
  dm.y.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    dm.x[r * features] = 1.0;
    for (std::size_t c = 1; c < features; ++c) dm.x[r * features + c] = u(rng);
    dm.y[r] = u(rng);
  }
  return aggregation::local_stats(dm);
}

// Times a fixed batch of modular exponentiations at the session key size.
double reference_seconds(std::size_t key_bits) {
  gmp_randclass gen(gmp_randinit_mt);
  gen.seed(1);
  const mpz_class mod = gen.get_z_bits(2 * key_bits) | 1;
  const mpz_class base = gen.get_z_bits(2 * key_bits - 8);
  const mpz_class exp = gen.get_z_bits(key_bits);
  mpz_class out;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 20; ++i) {
    mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  }
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

BenchAxis parse_axis(std::string_view text) {
  if (text == "members") return BenchAxis::kMembers;
  if (text == "rows") return BenchAxis::kRows;
  if (text == "features") return BenchAxis::kFeatures;
  throw ConfigError("axis: expected members, rows or features, got '" + std::string(text) + "'");
}

std::string_view axis_name(BenchAxis axis) {
  switch (axis) {
    case BenchAxis::kMembers: return "members";
    case BenchAxis::kRows: return "rows";
    case BenchAxis::kFeatures: return "features";
  }
  return "?";
}

std::vector<BenchPoint> bench(const ConsortiumConfig& cfg, BenchAxis axis,
                              const std::vector<double>& values, const BenchOptions& options) {
  std::vector<BenchOptions> shapes;
  for (double value : values) {
    BenchOptions shape = options;
    const auto v = static_cast<std::size_t>(value);
    if (!(value >= 1.0) || static_cast<double>(v) != value) {
      throw ConfigError("values: expected positive integers");
    }
    switch (axis) {
      case BenchAxis::kMembers: shape.members = v; break;
      case BenchAxis::kRows: shape.rows = v; break;
      case BenchAxis::kFeatures: shape.features = v; break;
    }
    if (shape.members < 2) throw ConfigError("values: a ring needs at least 2 members");
    shapes.push_back(shape);
  }

  // Runs are interleaved across values so that slow spells of the machine
  // spread over every point instead of landing on one.
  const std::size_t runs = std::max<std::size_t>(options.runs, 1);
  std::vector<std::vector<aggregation::SessionTiming>> timings(shapes.size());
  std::vector<std::vector<double>> references(shapes.size());
  for (std::size_t run = 0; run < runs; ++run) {
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      const BenchOptions& shape = shapes[k];
      std::mt19937_64 rng(cfg.seed * 1000003ULL + run);
      std::vector<aggregation::RingParty> parties;
      for (std::size_t i = 0; i < shape.members; ++i) {
        parties.push_back({"B" + std::to_string(i + 1), random_member(shape.rows, shape.features, rng)});
      }
      aggregation::SessionOptions so;
      so.he = cfg.he;
      so.seed = cfg.seed + run;
      const double before = reference_seconds(cfg.he.key_bits);
      timings[k].push_back(aggregation::run_ring_session(parties, so).timing);
      references[k].push_back(0.5 * (before + reference_seconds(cfg.he.key_bits)));
    }
  }

  std::vector<BenchPoint> out;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    auto med = [&](double aggregation::SessionTiming::*field) {
      std::vector<double> v;
      for (const auto& t : timings[k]) v.push_back(t.*field);
      return median(v);
    };
    BenchPoint p;
    p.value = values[k];
    p.timing = {med(&aggregation::SessionTiming::keygen), med(&aggregation::SessionTiming::encrypt),
                med(&aggregation::SessionTiming::evaluate), med(&aggregation::SessionTiming::decrypt)};
    p.encrypted_phase = p.timing.encrypted_phase();
    p.total_with_keygen = p.encrypted_phase + p.timing.keygen;
    std::vector<double> rk, re;
    for (std::size_t run = 0; run < runs; ++run) {
      rk.push_back(timings[k][run].keygen / references[k][run]);
      re.push_back(timings[k][run].encrypted_phase() / references[k][run]);
    }
    p.reference = median(references[k]);
    p.relative_keygen = median(rk);
    p.relative_encrypted_phase = median(re);
    out.push_back(p);
  }
  return out;
}

nlohmann::json to_json(const std::vector<BenchPoint>& points, BenchAxis axis) {
  nlohmann::json rows = nlohmann::json::array();
  for (const BenchPoint& p : points) {
    rows.push_back({{std::string(axis_name(axis)), p.value},
                    {"keygen", p.timing.keygen},
                    {"encrypt", p.timing.encrypt},
                    {"evaluate", p.timing.evaluate},
                    {"decrypt", p.timing.decrypt},
                    {"without_keygen", p.encrypted_phase},
                    {"with_keygen", p.total_with_keygen},
                    {"reference", p.reference},
                    {"relative_keygen", p.relative_keygen},
                    {"relative_without_keygen", p.relative_encrypted_phase}});
  }
  return {{"report_version", kReportVersion}, {"axis", std::string(axis_name(axis))}, {"rows", rows}};
}

std::string to_csv(const std::vector<BenchPoint>& points, BenchAxis axis) {
  std::ostringstream out;
  out.precision(6);
  out << axis_name(axis) << ",keygen,encrypt,evaluate,decrypt,without_keygen,with_keygen,reference,relative_keygen,relative_without_keygen\n";
  for (const BenchPoint& p : points) {
    out << p.value << ',' << p.timing.keygen << ',' << p.timing.encrypt << ','
        << p.timing.evaluate << ',' << p.timing.decrypt << ',' << p.encrypted_phase << ','
        << p.total_with_keygen << ',' << p.reference << ',' << p.relative_keygen << ','
        << p.relative_encrypted_phase << '\n';
  }
  return out.str();
}

}  // namespace curie::harness

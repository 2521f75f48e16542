#include "curie/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "curie/data/design.hpp"

namespace curie::data {
namespace {

constexpr double kMinDose = 0.5;

void check_mix(const std::vector<double>& mix, std::size_t levels,
               const std::string& what, const std::string& member) {
  if (mix.size() != levels) {
    throw InvalidProfile(member + ": " + what + " mix has " +
                         std::to_string(mix.size()) + " entries, expected " +
                         std::to_string(levels));
  }
  const double total = std::accumulate(mix.begin(), mix.end(), 0.0);
  const bool negative =
      std::any_of(mix.begin(), mix.end(), [](double p) { return p < 0.0; });
  if (negative || std::abs(total - 1.0) > 1e-9) {
    throw InvalidProfile(member + ": " + what + " mix must be non-negative and sum to 1");
  }
}

}  // namespace

Schema warfarin_schema() {
  std::vector<ColumnSpec> cols = {
      {"age", ColumnType::kInteger, {}, std::make_pair(10.0, 100.0)},
      {"height", ColumnType::kReal, {}, std::make_pair(120.0, 210.0)},
      {"weight", ColumnType::kReal, {}, std::make_pair(30.0, 180.0)},
      {"VKORC1", ColumnType::kCategorical, {"G/G", "A/G", "A/A"}, std::nullopt},
      {"CYP2C9",
       ColumnType::kCategorical,
       {"*1/*1", "*1/*2", "*1/*3", "*2/*2", "*2/*3", "*3/*3"},
       std::nullopt},
      {"race", ColumnType::kCategorical, {"White", "Asian", "Black"}, std::nullopt},
      {"enzyme_inducer", ColumnType::kBoolean, {}, std::nullopt},
      {"amiodarone", ColumnType::kBoolean, {}, std::nullopt},
      {"dose", ColumnType::kReal, {}, std::make_pair(0.0, 20.0)},
  };
  return Schema(std::move(cols), "dose");
}

std::vector<double> default_dose_coefficients() {
  // intercept, age, height, weight, VKORC1 A/G, A/A,
  // CYP2C9 *1/*2, *1/*3, *2/*2, *2/*3, *3/*3, race Asian, Black,
  // enzyme_inducer, amiodarone
  return {5.0,  -0.025, 0.02, 0.015, -0.9, -1.9, -0.5, -0.9,
          -1.1, -1.4,   -1.9, -0.6,  0.4,  1.2,  -0.8};
}

std::map<std::string, std::vector<double>> race_dependent_coefficients() {
  std::vector<double> white = default_dose_coefficients();
  std::vector<double> asian = white;
  asian[0] = 4.5;    // intercept
  asian[3] = -0.004; // weight barely matters
  asian[4] = -0.3;   // VKORC1 effects shrink
  asian[5] = -0.8;
  asian[11] = 0.0;   // race effect absorbed by intercept
  std::vector<double> black = white;
  black[0] = 2.0;
  black[3] = 0.045;  // strong weight dependence
  black[1] = -0.01;
  black[12] = 0.0;
  return {{"White", white}, {"Asian", asian}, {"Black", black}};
}

std::vector<Dataset> synth_members(std::uint64_t seed,
                                   const std::vector<MemberProfile>& profiles) {
  const Schema schema = warfarin_schema();
  const DesignEncoding encoding(schema);
  const auto& cols = schema.columns();
  const std::size_t vk = schema.index_of("VKORC1");
  const std::size_t cyp = schema.index_of("CYP2C9");
  const std::size_t race = schema.index_of("race");
  const std::vector<double> default_cyp = {0.70, 0.13, 0.09, 0.02, 0.04, 0.02};

  std::vector<Dataset> out;
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    const MemberProfile& prof = profiles[p];
    check_mix(prof.race_mix, cols[race].levels.size(), "race", prof.member_id);
    check_mix(prof.vkorc1_mix, cols[vk].levels.size(), "VKORC1", prof.member_id);
    const std::vector<double>& cyp_mix =
        prof.cyp2c9_mix.empty() ? default_cyp : prof.cyp2c9_mix;
    check_mix(cyp_mix, cols[cyp].levels.size(), "CYP2C9", prof.member_id);
    if (prof.coefficients.size() != encoding.width()) {
      throw InvalidProfile(prof.member_id + ": expected " +
                           std::to_string(encoding.width()) + " coefficients");
    }
    for (const auto& [level, coef] : prof.race_coefficients) {
      if (coef.size() != encoding.width() ||
          std::find(cols[race].levels.begin(), cols[race].levels.end(), level) ==
              cols[race].levels.end()) {
        throw InvalidProfile(prof.member_id + ": bad race coefficients for '" +
                             level + "'");
      }
    }
    if (!(prof.age_min <= prof.age_max) || prof.noise_sigma < 0.0) {
      throw InvalidProfile(prof.member_id + ": invalid age range or noise");
    }

    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(p)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<int> age(static_cast<int>(prof.age_min),
                                           static_cast<int>(prof.age_max));
    std::normal_distribution<double> height(168.0, 10.0);
    std::normal_distribution<double> weight(78.0, 16.0);
    std::discrete_distribution<int> race_d(prof.race_mix.begin(), prof.race_mix.end());
    std::discrete_distribution<int> vk_d(prof.vkorc1_mix.begin(), prof.vkorc1_mix.end());
    std::discrete_distribution<int> cyp_d(cyp_mix.begin(), cyp_mix.end());
    std::bernoulli_distribution inducer(prof.inducer_rate);
    std::bernoulli_distribution amio(prof.amiodarone_rate);
    std::normal_distribution<double> noise(0.0, prof.noise_sigma > 0 ? prof.noise_sigma : 1.0);

    Dataset ds(schema, prof.member_id);
    ds.reserve(prof.rows);
    std::vector<double> cells(schema.size());
    std::vector<double> x(encoding.width());
    for (std::size_t r = 0; r < prof.rows; ++r) {
      cells[0] = age(rng);
      cells[1] = std::round(std::clamp(height(rng), 135.0, 205.0) * 10.0) / 10.0;
      cells[2] = std::round(std::clamp(weight(rng), 35.0, 170.0) * 10.0) / 10.0;
      cells[vk] = vk_d(rng);
      cells[cyp] = cyp_d(rng);
      cells[race] = race_d(rng);
      cells[schema.index_of("enzyme_inducer")] = inducer(rng) ? 1.0 : 0.0;
      cells[schema.index_of("amiodarone")] = amio(rng) ? 1.0 : 0.0;
      cells[schema.target_index()] = 0.0;
      encoding.encode_row(cells, x);

      const std::string& race_level = cols[race].levels[static_cast<std::size_t>(cells[race])];
      auto it = prof.race_coefficients.find(race_level);
      const std::vector<double>& coef =
          it != prof.race_coefficients.end() ? it->second : prof.coefficients;
      double mean = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) mean += coef[j] * x[j];
      double dose = mean;
      if (prof.noise_sigma > 0.0) {
        int attempts = 0;
        do {
          dose = mean + noise(rng);
        } while (dose < kMinDose && ++attempts < 64);
        dose = std::max(dose, kMinDose);
      } else if (dose <= 0.0) {
        throw InvalidProfile(prof.member_id +
                             ": noiseless dose is not positive for a generated row");
      }
      cells[schema.target_index()] = dose;
      ds.append_row(cells);
    }
    out.push_back(std::move(ds));
  }
  return out;
}

}  // namespace curie::data

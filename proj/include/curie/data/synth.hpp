#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "curie/data/dataset.hpp"

namespace curie::data {

// The eight dosing inputs plus the daily dose target:
// age, height, weight, VKORC1, CYP2C9, race, enzyme_inducer, amiodarone, dose.
Schema warfarin_schema();

// Design-space coefficients (15 entries, warfarin_schema() encoding order)
// of a plausible daily-dose model in mg/day.
std::vector<double> default_dose_coefficients();

// Per-race coefficient vectors whose slopes differ by population.
std::map<std::string, std::vector<double>> race_dependent_coefficients();

struct MemberProfile {
  std::string member_id;
  std::size_t rows = 0;
  std::vector<double> race_mix;     // over the race levels; sums to 1
  double age_min = 20.0;
  double age_max = 90.0;
  std::vector<double> vkorc1_mix;   // over VKORC1 levels; sums to 1
  std::vector<double> cyp2c9_mix;   // empty = population default
  std::vector<double> coefficients; // design-space ground truth
  // Optional per-race override of `coefficients`, keyed by race level.
  std::map<std::string, std::vector<double>> race_coefficients;
  double noise_sigma = 1.0;
  double inducer_rate = 0.05;
  double amiodarone_rate = 0.12;
};

// Generates one dataset per profile: inputs drawn from the profile's
// population, dose = coefficients . encode(x) + N(0, sigma^2). Negative
// noisy doses are redrawn. Reproducible from `seed`. Throws InvalidProfile.
std::vector<Dataset> synth_members(std::uint64_t seed,
                                   const std::vector<MemberProfile>& profiles);

}  // namespace curie::data

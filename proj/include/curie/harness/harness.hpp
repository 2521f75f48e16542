#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "curie/aggregation/ring.hpp"
#include "curie/crypto/paillier.hpp"
#include "curie/data/dataset.hpp"
#include "curie/data/synth.hpp"
#include "curie/error.hpp"
#include "curie/policy/engine.hpp"
#include "curie/regression/model.hpp"
#include "json.hpp"

namespace curie::harness {

// Config files are JSON objects with "version": kConfigVersion. See the
// README for the full layout.
inline constexpr int kConfigVersion = 1;
inline constexpr int kReportVersion = 1;

// A module error tagged with the scenario phase it came from. code() is the
// original error code.
class PhaseError : public Error {
 public:
  PhaseError(std::string phase, const Error& cause)
      : Error(cause.code(), phase + ": " + cause.what()), phase_(std::move(phase)) {}
  const std::string& phase() const noexcept { return phase_; }

 private:
  std::string phase_;
};

// Either a CSV file or a synthetic warfarin profile.
struct DataSource {
  std::optional<std::filesystem::path> dataset;
  std::optional<data::MemberProfile> synth;
};

struct MemberConfig {
  std::string id;
  std::filesystem::path policy;
  DataSource data;
  std::map<std::string, std::string> attributes;
  std::set<std::string> alliances;
};

struct DPSettings {
  bool enabled = false;
  std::vector<double> epsilons = {0.25, 1.0, 5.0, 20.0, 50.0, 100.0};
  std::size_t repetitions = 100;
  std::optional<std::string> initiator;  // defaults to the first initiator
};

struct ConsortiumConfig {
  std::string name;
  data::Schema schema;
  std::vector<MemberConfig> members;
  std::vector<std::string> ring;        // permutation of member ids
  std::vector<std::string> initiators;  // members that build a model
  crypto::HEParams he;
  DPSettings dp;
  std::optional<DataSource> validation;  // held-out cohort
  std::uint64_t seed = 1;
  std::filesystem::path base_dir;       // relative paths resolve here
};

// Throws ConfigError naming the offending field path (e.g. "members[2].id").
ConsortiumConfig parse_config(const nlohmann::json& doc,
                              const std::filesystem::path& base_dir = {});
// Reads and parses `path`; CURIE_SEED, when set, overrides the seed.
ConsortiumConfig load_config(const std::filesystem::path& path);

// Parses the member policies and materialises the datasets, in ring order.
std::vector<policy::MemberContext> build_contexts(const ConsortiumConfig& cfg);

// Validation cohort; falls back to a mixed synthetic population.
data::Dataset validation_cohort(const ConsortiumConfig& cfg);

enum class Mode { kNegotiateOnly, kFull, kFullWithDP };

struct PhaseTimings {
  double negotiation = 0.0;
  double dd = 0.0;
  double keygen = 0.0;
  double encrypt = 0.0;
  double evaluate = 0.0;
  double decrypt = 0.0;
};

struct MemberReport {
  std::string id;
  std::size_t rows = 0;
  regression::ClinicalReport local;
  bool local_regularized = false;
};

struct SessionReport {
  std::string initiator;
  std::vector<std::string> contributors;  // members that released rows
  std::size_t pooled_rows = 0;
  std::size_t key_messages = 0;
  std::size_t ring_messages = 0;
  std::size_t transcript_messages = 0;
  aggregation::SessionTiming timing;
  // Largest relative coefficient gap against OLS on the concatenated
  // released rows.
  double oracle_gap = 0.0;
  bool regularized = false;
  regression::ClinicalReport pooled;
  regression::DoseModel model;
};

struct DPRow {
  double epsilon = 0.0;
  double mean_mae = 0.0;
  std::optional<regression::Interval> ci;  // absent for a single repetition
  std::vector<double> maes;
};

struct DPTable {
  std::string initiator;
  double non_private_mae = 0.0;
  double local_mae = 0.0;  // initiator's own non-private model
  std::vector<DPRow> rows;
};

struct ScenarioReport {
  std::string consortium;
  Mode mode = Mode::kNegotiateOnly;
  std::uint64_t seed = 0;
  std::vector<policy::Agreement> agreements;
  std::size_t negotiation_messages = 0;
  std::size_t dd_messages = 0;
  PhaseTimings timings;
  std::vector<MemberReport> members;
  std::vector<SessionReport> sessions;
  std::optional<DPTable> dp;

  // `timings` is omitted when false so that reports compare byte for byte.
  nlohmann::json to_json(bool include_timings = true) const;
};

std::string_view mode_name(Mode mode);

// Fits OLS on normalised statistics. Falls back to a small ridge when the
// system is singular (a member lacking a categorical level) and says so.
regression::DoseModel fit_model(const aggregation::LocalStats& stats, const data::Schema& schema,
                                bool* regularized = nullptr);

ScenarioReport run_scenario(const ConsortiumConfig& cfg, Mode mode);

// Noise is added to the pooled statistics of one ring session; each
// (epsilon, repetition) draws from its own stream of the master seed.
// Throws BudgetError for a non-positive epsilon or zero repetitions.
DPTable dp_sweep(const ConsortiumConfig& cfg, const std::vector<double>& epsilons,
                 std::size_t repetitions);

enum class BenchAxis { kMembers, kRows, kFeatures };
BenchAxis parse_axis(std::string_view text);  // throws ConfigError
std::string_view axis_name(BenchAxis axis);

struct BenchPoint {
  double value = 0.0;
  aggregation::SessionTiming timing;  // medians over the runs
  double encrypted_phase = 0.0;
  double total_with_keygen = 0.0;
  // Seconds for a fixed modular-exponentiation workload timed around each
  // session, and the phase times expressed in units of it (median of per-run
  // ratios). The ratios cancel changes in machine speed between runs.
  double reference = 0.0;
  double relative_keygen = 0.0;
  double relative_encrypted_phase = 0.0;
};

struct BenchOptions {
  std::size_t members = 5;
  std::size_t rows = 1000;
  std::size_t features = 15;  // design width including the intercept
  std::size_t runs = 3;
};

// Random [-1, 1] members of the requested shape; one ring session per run.
std::vector<BenchPoint> bench(const ConsortiumConfig& cfg, BenchAxis axis,
                              const std::vector<double>& values,
                              const BenchOptions& options = {});

nlohmann::json to_json(const DPTable& table);
nlohmann::json to_json(const std::vector<BenchPoint>& points, BenchAxis axis);
std::string to_csv(const DPTable& table);
std::string to_csv(const std::vector<BenchPoint>& points, BenchAxis axis);

}  // namespace curie::harness

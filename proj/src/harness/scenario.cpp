#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "curie/data/design.hpp"
#include "curie/harness/harness.hpp"

namespace curie::harness {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename F>
auto in_phase(const std::string& phase, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PhaseError&) {
    throw;
  } catch (const Error& e) {
    throw PhaseError(phase, e);
  }
}

std::uint64_t mix(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
  for (unsigned char c : label) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

struct Prepared {
  std::vector<policy::MemberContext> contexts;
  policy::ConsortiumResult negotiation;
  PhaseTimings timings;
  data::NormalizationMap normalization;
};

Prepared prepare(const ConsortiumConfig& cfg) {
  Prepared p;
  p.contexts = in_phase("load", [&] { return build_contexts(cfg); });
  p.normalization = in_phase("load", [&] { return data::NormalizationMap::from_schema(cfg.schema); });
  policy::NegotiationOptions options;
  options.seed = cfg.seed;
  const auto start = Clock::now();
  p.negotiation = in_phase("negotiation", [&] {
    return policy::negotiate_consortium(p.contexts, options);
  });
  const double elapsed = seconds_since(start);
  p.timings.dd = p.negotiation.log.dd_seconds;
  p.timings.negotiation = std::max(0.0, elapsed - p.timings.dd);
  return p;
}

const policy::MemberContext& context(const Prepared& p, const std::string& id) {
  for (const auto& c : p.contexts) {
    if (c.member_id == id) return c;
  }
  throw ConfigError("unknown member '" + id + "'");
}

// Released rows of `owner` for `requester`; the requester's own data is
// released in full.
std::optional<data::Dataset> released(const Prepared& p, const std::string& requester,
                                      const policy::MemberContext& owner) {
  if (owner.member_id == requester) return *owner.dataset;
  for (const policy::Agreement& a : p.negotiation.agreements) {
    if (a.requester != requester || a.owner != owner.member_id) continue;
    if (a.status == policy::Status::kEmpty) return std::nullopt;
    data::Dataset rows = data::apply_selections(*owner.dataset, a.selections);
    if (rows.rows() == 0) return std::nullopt;
    return rows;
  }
  return std::nullopt;
}

aggregation::LocalStats normalized_stats(const data::Dataset& ds,
                                         const data::NormalizationMap& map) {
  return aggregation::local_stats(data::to_design_matrix(data::normalize_with(ds, map)));
}

double relative_gap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double denom = std::max(b.cwiseAbs().maxCoeff(), 1e-12);
  return (a - b).cwiseAbs().maxCoeff() / denom;
}

struct SessionRun {
  SessionReport report;
  aggregation::LocalStats pooled;
};

SessionRun run_session(const ConsortiumConfig& cfg, const Prepared& p,
                       const std::string& initiator, const data::Dataset& cohort) {
  SessionRun run;
  SessionReport& rep = run.report;
  rep.initiator = initiator;

  // Ring order rotated so the initiator comes first.
  const auto at = std::find(cfg.ring.begin(), cfg.ring.end(), initiator);
  std::vector<std::string> order(at, cfg.ring.end());
  order.insert(order.end(), cfg.ring.begin(), at);

  std::vector<aggregation::RingParty> parties;
  std::optional<data::Dataset> concatenated;
  in_phase("aggregation", [&] {
    for (const std::string& id : order) {
      aggregation::RingParty party{id, std::nullopt};
      if (auto rows = released(p, initiator, context(p, id))) {
        party.stats = normalized_stats(*rows, p.normalization);
        rep.contributors.push_back(id);
        rep.pooled_rows += rows->rows();
        concatenated = concatenated ? concatenated->concat(*rows) : *rows;
      }
      parties.push_back(std::move(party));
    }
    return 0;
  });

  if (rep.contributors.size() == 1) {
    // Nothing to pool: the initiator's local statistics are the answer.
    run.pooled = *parties.front().stats;
  } else {
    aggregation::SessionOptions options;
    options.he = cfg.he;
    options.seed = mix(cfg.seed, "session/" + initiator);
    options.bounds = crypto::SessionBounds{static_cast<double>(rep.pooled_rows),
                                           static_cast<double>(parties.front().stats->width()),
                                           1.0};
    const aggregation::SessionResult result =
        in_phase("aggregation", [&] { return aggregation::run_ring_session(parties, options); });
    run.pooled = result.pooled;
    rep.key_messages = result.key_messages;
    rep.ring_messages = result.ring_messages;
    rep.transcript_messages = result.transcript.entries.size();
    rep.timing = result.timing;
  }

  in_phase("model", [&] {
    rep.model = fit_model(run.pooled, cfg.schema, &rep.regularized);
    const regression::DoseModel oracle =
        fit_model(normalized_stats(*concatenated, p.normalization), cfg.schema);
    rep.oracle_gap = relative_gap(rep.model.eta, oracle.eta);
    rep.pooled = regression::clinical_metrics(rep.model, cohort);
    return 0;
  });
  return run;
}

DPTable sweep(const ConsortiumConfig& cfg, const aggregation::LocalStats& pooled,
              const regression::DoseModel& non_private, const regression::DoseModel& local,
              const std::string& initiator, const data::Dataset& cohort,
              const std::vector<double>& epsilons, std::size_t repetitions) {
  if (repetitions == 0) throw regression::BudgetError("the sweep needs at least one repetition");
  DPTable table;
  table.initiator = initiator;
  table.non_private_mae = regression::clinical_metrics(non_private, cohort).mae;
  table.local_mae = regression::clinical_metrics(local, cohort).mae;
  const std::size_t d = pooled.width();
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    DPRow row;
    row.epsilon = epsilons[e];
    for (std::size_t r = 0; r < repetitions; ++r) {
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(r)};
      std::mt19937_64 rng(seq);
      regression::DoseModel model = non_private;
      model.eta = regression::functional_mechanism(pooled.o, pooled.v, pooled.n, d, row.epsilon, rng);
      model.epsilon = row.epsilon;
      row.maes.push_back(regression::clinical_metrics(model, cohort).mae);
    }
    row.mean_mae = std::accumulate(row.maes.begin(), row.maes.end(), 0.0) /
                   static_cast<double>(row.maes.size());
    if (repetitions > 1) row.ci = regression::bootstrap_mean(row.maes, 2000, mix(cfg.seed, "ci") + e);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string dp_initiator(const ConsortiumConfig& cfg) {
  if (cfg.dp.initiator) return *cfg.dp.initiator;
  if (cfg.initiators.empty()) throw ConfigError("dp: no initiator configured");
  return cfg.initiators.front();
}

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::kNegotiateOnly: return "NegotiateOnly";
    case Mode::kFull: return "Full";
    case Mode::kFullWithDP: return "FullWithDP";
  }
  return "?";
}

regression::DoseModel fit_model(const aggregation::LocalStats& stats, const data::Schema& schema,
                                bool* regularized) {
  regression::DoseModel model;
  model.schema = schema;
  model.encoding = data::DesignEncoding(schema);
  model.normalization = data::NormalizationMap::from_schema(schema);
  if (regularized) *regularized = false;
  try {
    model.eta = regression::solve_ols(stats.o, stats.v);
  } catch (const regression::SingularMatrix&) {
    const Eigen::Index m = stats.o.rows();
    const double lambda = 1e-3 * std::max(stats.o.trace() / static_cast<double>(m), 1.0);
    const Eigen::MatrixXd ridge = stats.o + lambda * Eigen::MatrixXd::Identity(m, m);
    model.eta = ridge.ldlt().solve(stats.v);
    if (regularized) *regularized = true;
  }
  return model;
}

ScenarioReport run_scenario(const ConsortiumConfig& cfg, Mode mode) {
  ScenarioReport rep;
  rep.consortium = cfg.name;
  rep.mode = mode;
  rep.seed = cfg.seed;
  Prepared p = prepare(cfg);
  rep.agreements = p.negotiation.agreements;
  rep.negotiation_messages = p.negotiation.log.count();
  rep.dd_messages = p.negotiation.log.dd.size();
  rep.timings = p.timings;
  if (mode == Mode::kNegotiateOnly) return rep;

  const data::Dataset cohort = in_phase("validation", [&] { return validation_cohort(cfg); });
  std::map<std::string, regression::DoseModel> local_models;
  in_phase("model", [&] {
    for (const policy::MemberContext& c : p.contexts) {
      MemberReport m;
      m.id = c.member_id;
      m.rows = c.dataset->rows();
      local_models[m.id] =
          fit_model(normalized_stats(*c.dataset, p.normalization), cfg.schema, &m.local_regularized);
      m.local = regression::clinical_metrics(local_models[m.id], cohort);
      rep.members.push_back(std::move(m));
    }
    return 0;
  });

  const std::string dp_id = mode == Mode::kFullWithDP ? dp_initiator(cfg) : std::string();
  for (const std::string& initiator : cfg.initiators) {
    SessionRun run = run_session(cfg, p, initiator, cohort);
    rep.timings.keygen += run.report.timing.keygen;
    rep.timings.encrypt += run.report.timing.encrypt;
    rep.timings.evaluate += run.report.timing.evaluate;
    rep.timings.decrypt += run.report.timing.decrypt;
    if (initiator == dp_id) {
      rep.dp = in_phase("dp", [&] {
        return sweep(cfg, run.pooled, run.report.model, local_models.at(initiator), initiator,
                     cohort, cfg.dp.epsilons, cfg.dp.repetitions);
      });
    }
    rep.sessions.push_back(std::move(run.report));
  }
  if (mode == Mode::kFullWithDP && !rep.dp) {
    // The DP initiator is not a model-building member; run its session anyway.
    SessionRun run = run_session(cfg, p, dp_id, cohort);
    rep.dp = in_phase("dp", [&] {
      return sweep(cfg, run.pooled, run.report.model, local_models.at(dp_id), dp_id, cohort,
                   cfg.dp.epsilons, cfg.dp.repetitions);
    });
  }
  return rep;
}

DPTable dp_sweep(const ConsortiumConfig& cfg, const std::vector<double>& epsilons,
                 std::size_t repetitions) {
  if (repetitions == 0) throw regression::BudgetError("the sweep needs at least one repetition");
  for (double e : epsilons) {
    if (!(e > 0.0)) throw regression::BudgetError("privacy budget must be positive");
  }
  Prepared p = prepare(cfg);
  const std::string id = dp_initiator(cfg);
  const data::Dataset cohort = in_phase("validation", [&] { return validation_cohort(cfg); });
  SessionRun run = run_session(cfg, p, id, cohort);
  const regression::DoseModel local =
      fit_model(normalized_stats(*context(p, id).dataset, p.normalization), cfg.schema);
  return in_phase("dp", [&] {
    return sweep(cfg, run.pooled, run.report.model, local, id, cohort, epsilons, repetitions);
  });
}

nlohmann::json ScenarioReport::to_json(bool include_timings) const {
  nlohmann::json agreements_json = nlohmann::json::array();
  for (const auto& a : agreements) agreements_json.push_back(policy::to_json(a));
  std::size_t ring_total = 0;
  nlohmann::json sessions_json = nlohmann::json::array();
  for (const SessionReport& s : sessions) {
    ring_total += s.key_messages + s.ring_messages;
    nlohmann::json sj = {{"initiator", s.initiator},
                         {"contributors", s.contributors},
                         {"pooled_rows", s.pooled_rows},
                         {"messages", {{"key", s.key_messages},
                                       {"ring", s.ring_messages},
                                       {"transcript", s.transcript_messages}}},
                         {"oracle_gap", s.oracle_gap},
                         {"regularized", s.regularized},
                         {"report", regression::to_json(s.pooled)},
                         {"model", regression::to_json(s.model)}};
    if (include_timings) {
      sj["timings"] = {{"keygen", s.timing.keygen},
                       {"encrypt", s.timing.encrypt},
                       {"evaluate", s.timing.evaluate},
                       {"decrypt", s.timing.decrypt}};
    }
    sessions_json.push_back(std::move(sj));
  }
  nlohmann::json members_json = nlohmann::json::array();
  for (const MemberReport& m : members) {
    members_json.push_back({{"id", m.id},
                            {"rows", m.rows},
                            {"local", regression::to_json(m.local)},
                            {"local_regularized", m.local_regularized}});
  }
  nlohmann::json j = {{"report_version", kReportVersion},
                      {"consortium", consortium},
                      {"mode", std::string(mode_name(mode))},
                      {"seed", seed},
                      {"agreements", agreements_json},
                      {"messages", {{"negotiation", negotiation_messages},
                                    {"dd", dd_messages},
                                    {"aggregation", ring_total}}},
                      {"members", members_json},
                      {"sessions", sessions_json}};
  if (include_timings) {
    j["timings"] = {{"negotiation", timings.negotiation}, {"dd", timings.dd},
                    {"keygen", timings.keygen},           {"encrypt", timings.encrypt},
                    {"evaluate", timings.evaluate},       {"decrypt", timings.decrypt}};
  }
  if (dp) j["dp"] = harness::to_json(*dp);
  return j;
}

nlohmann::json to_json(const DPTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const DPRow& r : table.rows) {
    nlohmann::json row = {{"epsilon", r.epsilon}, {"mean_mae", r.mean_mae},
                          {"repetitions", r.maes.size()}};
    if (r.ci) row["ci"] = {r.ci->lower, r.ci->upper};
    rows.push_back(std::move(row));
  }
  return {{"initiator", table.initiator},
          {"non_private_mae", table.non_private_mae},
          {"local_mae", table.local_mae},
          {"rows", rows}};
}

std::string to_csv(const DPTable& table) {
  std::ostringstream out;
  out.precision(10);
  out << "epsilon,mean_mae,ci_lower,ci_upper,repetitions\n";
  for (const DPRow& r : table.rows) {
    out << r.epsilon << ',' << r.mean_mae << ',';
    if (r.ci) out << r.ci->lower << ',' << r.ci->upper;
    else out << ',';
    out << ',' << r.maes.size() << '\n';
  }
  return out.str();
}

}  // namespace curie::harness

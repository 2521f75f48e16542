// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "curie/aggregation/ring.hpp"
#include "curie/cpl/parser.hpp"
#include "curie/cpl/serialize.hpp"
#include "curie/cpl/validate.hpp"
#include "curie/crypto/paillier.hpp"
#include "curie/dd/statistics.hpp"
#include "curie/harness/harness.hpp"
#include "curie/policy/engine.hpp"
#include "curie/regression/model.hpp"
#include "test_paths.hpp"

using namespace curie;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few are reported.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) failed_.push_back(what);
  }
  bool ok() const { return failures_ == 0; }
  std::size_t checks() const { return checks_; }
  std::string failures() const {
    std::string out;
    for (const auto& f : failed_) out += (out.empty() ? "" : "; ") + f;
    if (failures_ > failed_.size()) out += "; +" + std::to_string(failures_ - failed_.size()) + " more";
    return out;
  }
  Outcome outcome(const std::string& summary) const {
    if (ok()) return {true, summary};
    return {false, summary + " | failed: " + failures()};
  }

 private:
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
  std::vector<std::string> failed_;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::uint64_t master_seed() {
  if (const char* env = std::getenv("CURIE_SEED")) return std::stoull(env);
  return 20240611;
}

// 1. Grammar corpus --------------------------------------------------------

Outcome grammar_corpus() {
  Checker c;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(test::corpus_dir())) {
    if (e.path().extension() == ".cpl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  c.expect(files.size() >= 25, "corpus has " + std::to_string(files.size()) + " files");

  cpl::ProductionSet seen;
  std::size_t parsed = 0, round_trips = 0;
  std::vector<std::string> seeds;
  std::size_t worked_clauses = 0;
  for (const auto& f : files) {
    const std::string text = slurp(f);
    seeds.push_back(text);
    try {
      const cpl::PolicyAst ast = cpl::parse_policy(text, &seen);
      ++parsed;
      const cpl::PolicyAst again = cpl::parse_policy(cpl::serialize(ast));
      if (again == ast) ++round_trips;
      const std::string stem = f.stem().string();
      if (stem == "worked_m1" || stem == "worked_m2" || stem == "worked_m3") worked_clauses += ast.clause_count();
    } catch (const std::exception& e) {
      c.expect(false, f.filename().string() + ": " + e.what());
    }
  }
  c.expect(parsed == files.size(), "parsed " + std::to_string(parsed));
  c.expect(round_trips == files.size(), "round-tripped " + std::to_string(round_trips));
  c.expect(worked_clauses == 15, "worked example has " + std::to_string(worked_clauses) + " clauses");
  for (std::size_t i = 0; i < seen.size(); ++i) {
    c.expect(seen.test(i), std::string("production ") +
                               std::string(cpl::production_name(static_cast<cpl::Production>(i))) +
                               " not covered");
  }

  const std::string alphabet = ":;,$&'\"(){}<>=!# \n\tabcXYZ019.-_K";
  std::mt19937_64 rng(master_seed());
  std::size_t fuzz = 0, crashes = 0;
  for (int i = 0; i < 1000; ++i, ++fuzz) {
    std::string text = seeds[rng() % seeds.size()];
    const int edits = 1 + static_cast<int>(rng() % 8);
    for (int e = 0; e < edits && !text.empty(); ++e) {
      const std::size_t pos = rng() % text.size();
      switch (rng() % 4) {
        case 0: text[pos] = alphabet[rng() % alphabet.size()]; break;
        case 1: text.erase(pos, 1 + rng() % 4); break;
        case 2: text.insert(pos, 1, alphabet[rng() % alphabet.size()]); break;
        default: text.resize(pos); break;
      }
    }
    try {
      const cpl::PolicyAst ast = cpl::parse_policy(text);
      if (!(cpl::parse_policy(cpl::serialize(ast)) == ast)) ++crashes;
      cpl::validate(ast);
    } catch (const cpl::SyntaxError&) {
    } catch (...) {
      ++crashes;
    }
  }
  c.expect(crashes == 0, std::to_string(crashes) + " fuzz inputs crashed");
  return c.outcome(std::to_string(files.size()) + " files parse and round-trip, " +
                   std::to_string(seen.count()) + "/" + std::to_string(seen.size()) +
                   " productions, " + std::to_string(fuzz) + " fuzz inputs");
}

// 2. Negotiation fidelity ------------------------------------------------

// One way to satisfy a clause: the sub-clause alternatives entered and the
// filters they produce.
struct Expansion {
  std::size_t clause = 0;
  std::vector<std::size_t> path;
  std::vector<data::RowFilter> filters;
};

struct Oracle {
  std::span<const policy::MemberContext> ctx;

  bool holds(const cpl::Conditional& cond, const policy::MemberContext& author,
             const policy::MemberContext& other) const {
    if (const auto* cmp = std::get_if<cpl::Comparison>(&cond.body)) {
      return policy::eval_conditional(*cmp, policy::Env(author, other, ctx));
    }
    const auto& ev = std::get<cpl::Evaluate>(cond.body);
    const auto a = dd::extract(*author.dataset, ev.data_ref, author.member_id);
    const auto b = dd::extract(*other.dataset, ev.data_ref, other.member_id);
    dd::Comparator cmp = dd::Comparator::kBelow;
    if (const auto* attr = author.policy.find_attribute(policy::kComparatorAttribute)) {
      if (!attr->values.empty() && cpl::to_string(attr->values[0]).find('>') != std::string::npos) {
        cmp = dd::Comparator::kAbove;
      }
    }
    return dd::decide(dd::statistic(ev.algorithm, a, b), ev.threshold, cmp);
  }

  // Every satisfying expansion of `sel`, in source order.
  std::vector<Expansion> expand(const cpl::Selections& sel, const policy::MemberContext& author,
                                const policy::MemberContext& other, int depth) const {
    if (depth > 16) throw policy::CycleError("oracle: tag depth");
    const policy::Env env(author, other, ctx);
    if (const auto* filters = std::get_if<std::vector<cpl::Filter>>(&sel)) {
      Expansion e;
      for (const auto& f : *filters) e.filters.push_back(policy::resolve_filter(f, env));
      return {e};
    }
    const auto& tag = std::get<cpl::TagRef>(sel).tag;
    std::vector<Expansion> out;
    const auto& subs = author.policy.sub_clauses;
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i].tag != tag) continue;
      bool all = true;
      for (const auto& cond : subs[i].conditionals) all = all && holds(cond, author, other);
      if (!all) continue;
      for (auto e : expand(subs[i].selections, author, other, depth + 1)) {
        e.path.insert(e.path.begin(), i);
        out.push_back(std::move(e));
      }
    }
    return out;
  }

  std::vector<Expansion> all(cpl::ClauseKind kind, const policy::MemberContext& author,
                             const policy::MemberContext& other) const {
    std::vector<Expansion> out;
    const auto& clauses = author.policy.clauses;
    for (std::size_t i = 0; i < clauses.size(); ++i) {
      const auto& cl = clauses[i];
      if (cl.kind != kind || !cl.applies_to(other.member_id)) continue;
      bool ok = true;
      for (const auto& cond : cl.conditionals) ok = ok && holds(cond, author, other);
      if (!ok) continue;
      for (auto e : expand(cl.selections, author, other, 0)) {
        e.clause = i;
        out.push_back(std::move(e));
      }
    }
    return out;
  }

  static bool before(const Expansion& a, const Expansion& b) {
    if (a.clause != b.clause) return a.clause < b.clause;
    return a.path < b.path;
  }

  policy::Agreement agree(const policy::MemberContext& req, const policy::MemberContext& own) const {
    policy::Agreement a;
    a.requester = req.member_id;
    a.owner = own.member_id;
    auto acq = all(cpl::ClauseKind::kAcquire, req, own);
    if (acq.empty()) return a;
    const Expansion& x = *std::min_element(acq.begin(), acq.end(), before);
    a.requester_clause = x.clause;
    a.selections = x.filters;
    auto shr = all(cpl::ClauseKind::kShare, own, req);
    if (shr.empty()) return a;
    const Expansion& y = *std::min_element(shr.begin(), shr.end(), before);
    a.owner_clause = y.clause;
    a.selections.insert(a.selections.end(), y.filters.begin(), y.filters.end());
    a.requested_rows = data::count_selected(*own.dataset, x.filters);
    a.released_rows = data::count_selected(*own.dataset, a.selections);
    if (a.released_rows == 0) {
      a.status = policy::Status::kEmpty;
    } else {
      a.status = a.released_rows == a.requested_rows ? policy::Status::kFull : policy::Status::kPartial;
    }
    return a;
  }
};

std::vector<std::string> selection_text(const policy::Agreement& a) {
  std::vector<std::string> out;
  for (const auto& f : a.selections) out.push_back(data::to_string(f));
  return out;
}

policy::MemberContext& member(std::vector<policy::MemberContext>& ctx, const std::string& id) {
  return *std::find_if(ctx.begin(), ctx.end(), [&](const auto& c) { return c.member_id == id; });
}

// Hand-derived expected agreement for one ordered pair.
struct Expected {
  std::string requester, owner;
  policy::Status status;
  std::vector<std::string> selections;
  std::optional<std::size_t> owner_clause;
};

Outcome negotiation_fidelity() {
  Checker c;
  const auto cfg = harness::load_config(test::config_dir() / "m123" / "consortium.json");
  const auto base = harness::build_contexts(cfg);
  using S = policy::Status;
  const std::string asian = "race = \"Asian\"", age = "age > 25";

  struct Variant {
    std::string name;
    std::function<void(std::vector<policy::MemberContext>&)> change;
    std::vector<Expected> expected;
  };
  const std::vector<Expected> baseline = {
      {"M1", "M2", S::kPartial, {age, "citizenship = \"NATO-EU\""}, 1},
      {"M1", "M3", S::kPartial, {asian, "weight > 150"}, 2},
      {"M2", "M1", S::kFull, {}, 1},
      {"M2", "M3", S::kFull, {}, 4},
      {"M3", "M1", S::kFull, {"Genotype = \"A/A\""}, 3},
      {"M3", "M2", S::kFull, {}, 3},
  };
  std::vector<Variant> variants;
  variants.push_back({"as traced", [](auto&) {}, baseline});
  {
    auto e = baseline;
    e[0].selections = {age, "race = \"White\""};
    variants.push_back({"requester outside North America",
                        [](auto& ctx) { member(ctx, "M1").attributes["continent"] = "Europe"; }, e});
  }
  {
    auto e = baseline;
    e[1] = {"M1", "M3", S::kFull, {asian}, 1};
    variants.push_back({"few shared patients", [](auto& ctx) {
                          auto& m3 = member(ctx, "M3");
                          const std::vector<data::RowFilter> keep = {{"patient_id", cpl::Op::kGt, {600.0}}};
                          m3.dataset = std::make_shared<data::Dataset>(data::apply_selections(*m3.dataset, keep));
                        }, e});
  }
  {
    auto e = baseline;
    e[0] = {"M1", "M2", S::kEmpty, {}, std::nullopt};
    variants.push_back({"requester leaves NATO",
                        [](auto& ctx) { member(ctx, "M1").alliances.clear(); }, e});
  }

  std::size_t compared = 0;
  for (const auto& v : variants) {
    auto ctx = base;
    v.change(ctx);
    const auto result = policy::negotiate_consortium(ctx);
    const Oracle oracle{ctx};
    c.expect(result.agreements.size() == v.expected.size(), v.name + ": agreement count");
    for (const auto& exp : v.expected) {
      const auto it = std::find_if(result.agreements.begin(), result.agreements.end(), [&](const auto& a) {
        return a.requester == exp.requester && a.owner == exp.owner;
      });
      const std::string pair = v.name + " " + exp.requester + "<-" + exp.owner;
      if (it == result.agreements.end()) {
        c.expect(false, pair + ": missing");
        continue;
      }
      c.expect(it->status == exp.status, pair + ": status " + std::string(policy::status_name(it->status)));
      if (exp.status != S::kEmpty) {
        c.expect(selection_text(*it) == exp.selections, pair + ": selections");
      }
      c.expect(it->owner_clause == exp.owner_clause, pair + ": owner clause");

      const auto o = oracle.agree(member(ctx, exp.requester), member(ctx, exp.owner));
      c.expect(o.status == it->status, pair + ": oracle status");
      c.expect(selection_text(o) == selection_text(*it), pair + ": oracle selections");
      c.expect(o.requester_clause == it->requester_clause, pair + ": oracle acquire clause");
      c.expect(o.owner_clause == it->owner_clause, pair + ": oracle share clause");
      c.expect(o.released_rows == it->released_rows, pair + ": oracle released rows");
      ++compared;
    }
  }
  return c.outcome(std::to_string(variants.size()) + " variants, " + std::to_string(compared) +
                   " agreements match the fixture and the exhaustive oracle");
}

// 3. Message-count law ---------------------------------------------------

Outcome message_count_law() {
  Checker c;
  std::string counts;
  for (std::size_t n : {3u, 13u, 21u, 25u}) {
    data::Schema schema({{"age", data::ColumnType::kInteger, {}, std::make_pair(0.0, 100.0)},
                         {"dose", data::ColumnType::kReal, {}, std::make_pair(0.0, 20.0)}},
                        "dose");
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("P" + std::to_string(i + 1));
    std::vector<policy::MemberContext> ctx;
    for (const auto& id : ids) {
      std::string others;
      for (const auto& o : ids) {
        if (o == id) continue;
        others += (others.empty() ? "" : ", ") + o;
      }
      policy::MemberContext m;
      m.member_id = id;
      m.policy = cpl::parse_policy("acquire : " + others + " : :: ;\nshare : " + others + " : :: ;");
      auto ds = std::make_shared<data::Dataset>(schema, id);
      ds->append_row(std::vector<double>{40.0, 5.0});
      m.dataset = ds;
      ctx.push_back(std::move(m));
    }
    const auto r = policy::negotiate_consortium(ctx);
    const std::size_t expected = 2 * n * (n - 1);
    c.expect(r.log.count() == expected, "n=" + std::to_string(n) + " logged " + std::to_string(r.log.count()));
    counts += (counts.empty() ? "" : ", ") + std::to_string(n) + "->" + std::to_string(r.log.count());
  }
  return c.outcome("messages " + counts + " equal 2n(n-1)");
}

// 4. Pooling equals centralisation -------------------------------------

Outcome pooling_equivalence() {
  Checker c;
  std::mt19937_64 rng(master_seed() + 4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  // 1024-bit keys keep the sweep inside its budget on one core; every tenth
  // consortium uses the default key size.
  const crypto::HEParams quick{1024, 20};
  const crypto::HEParams full;
  std::size_t full_size = 0;
  double worst_rel = 0.0, worst_fp_ratio = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 9;
    const std::size_t m = 1 + rng() % 40;
    const std::size_t total = std::max<std::size_t>(2 * m + n, 50) +
                              rng() % (5000 - std::max<std::size_t>(2 * m + n, 50) + 1);
    std::vector<std::size_t> sizes(n, 1);
    for (std::size_t r = n; r < total; ++r) ++sizes[rng() % n];
    Eigen::VectorXd beta(static_cast<Eigen::Index>(m));
    for (auto& b : beta) b = u(rng);

    Eigen::MatrixXd all_x(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(m));
    Eigen::VectorXd all_y(static_cast<Eigen::Index>(total));
    std::vector<aggregation::RingParty> parties;
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < n; ++i) {
      data::DesignMatrix dm;
      dm.rows = sizes[i];
      dm.cols = m;
      dm.x.resize(sizes[i] * m);
      dm.y.resize(sizes[i]);
      for (std::size_t r = 0; r < sizes[i]; ++r, ++row) {
        double y = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          const double x = k == 0 ? 1.0 : u(rng);
          dm.x[r * m + k] = x;
          all_x(row, static_cast<Eigen::Index>(k)) = x;
          y += x * beta(static_cast<Eigen::Index>(k));
        }
        y += noise(rng);
        dm.y[r] = y;
        all_y(row) = y;
      }
      parties.push_back({"T" + std::to_string(i + 1), aggregation::local_stats(dm)});
    }

    const crypto::HEParams& he = trial % 10 == 0 ? full : quick;
    full_size += trial % 10 == 0 ? 1 : 0;
    aggregation::SessionOptions so;
    so.he = he;
    so.seed = rng();
    const auto session = aggregation::run_ring_session(parties, so);

    // Centralised oracle: QR on the concatenated rows.
    const Eigen::VectorXd central = all_x.colPivHouseholderQr().solve(all_y);
    const Eigen::VectorXd pooled = regression::solve_ols(session.pooled.o, session.pooled.v);
    const double rel = (pooled - central).cwiseAbs().maxCoeff() / central.cwiseAbs().maxCoeff();
    worst_rel = std::max(worst_rel, rel);
    c.expect(rel <= 1e-6, "trial " + std::to_string(trial) + " relative gap " + fmt(rel));

    aggregation::LocalStats plain = aggregation::LocalStats::zeros(m);
    for (const auto& p : parties) plain = plain + *p.stats;
    const double bound = static_cast<double>(n * m * m) / he.scale();
    const double err = std::max((session.pooled.o - plain.o).cwiseAbs().maxCoeff(),
                                (session.pooled.v - plain.v).cwiseAbs().maxCoeff());
    worst_fp_ratio = std::max(worst_fp_ratio, err / bound);
    c.expect(err <= bound, "trial " + std::to_string(trial) + " fixed-point error " + fmt(err));
    c.expect(session.pooled.n == static_cast<double>(total), "trial " + std::to_string(trial) + " row count");
  }
  return c.outcome("50 consortia (" + std::to_string(full_size) + " at " +
                   std::to_string(full.key_bits) + " bits), worst coefficient gap " + fmt(worst_rel) +
                   ", worst fixed-point error " + fmt(worst_fp_ratio) + " of n*m^2/S");
}

// 5. Masks and keys -----------------------------------------------------

Outcome mask_and_key_properties() {
  Checker c;
  std::mt19937_64 rng(master_seed() + 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<aggregation::RingParty> parties;
  for (int i = 0; i < 4; ++i) {
    data::DesignMatrix dm;
    dm.rows = 200;
    dm.cols = 6;
    dm.x.resize(dm.rows * dm.cols);
    dm.y.resize(dm.rows);
    for (double& x : dm.x) x = u(rng);
    for (double& y : dm.y) y = u(rng);
    parties.push_back({"K" + std::to_string(i + 1), aggregation::local_stats(dm)});
  }
  aggregation::SessionOptions so;
  so.he = {1024, 20};
  std::optional<aggregation::LocalStats> first;
  for (std::uint64_t draw = 0; draw < 5; ++draw) {
    so.seed = 1000 + draw;
    const auto r = aggregation::run_ring_session(parties, so);
    if (!first) {
      first = r.pooled;
      continue;
    }
    c.expect(r.pooled.o == first->o && r.pooled.v == first->v && r.pooled.n == first->n,
             "mask draw " + std::to_string(draw) + " changed the output");
  }

  crypto::Random krng(master_seed());
  const auto keys = crypto::keygen({1024, 20}, krng);
  const double s = std::ldexp(1.0, 20);
  std::size_t pairs = 0;
  for (int i = 0; i < 1000; ++i, ++pairs) {
    const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng() % 3);
    const Eigen::Index cols = 1 + static_cast<Eigen::Index>(rng() % 4);
    Eigen::MatrixXd a(rows, cols), b(rows, cols);
    for (auto& x : a.reshaped()) x = 1e3 * u(rng);
    for (auto& x : b.reshaped()) x = 1e3 * u(rng);
    const auto ca = crypto::encrypt_matrix(keys.pk, a, 20, krng);
    const auto cb = crypto::encrypt_matrix(keys.pk, b, 20, krng);
    const Eigen::MatrixXd sum = crypto::decrypt_matrix(keys.sk, crypto::add_cipher(keys.pk, ca, cb));
    bool exact = true;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      const auto fa = crypto::encode_fixed(a.reshaped()(k), s);
      const auto fb = crypto::encode_fixed(b.reshaped()(k), s);
      exact = exact && sum.reshaped()(k) == crypto::decode_fixed(fa + fb, s);
    }
    c.expect(exact, "homomorphism failed on pair " + std::to_string(i));
  }
  return c.outcome("decoded output identical across 5 mask draws, homomorphism exact on " +
                   std::to_string(pairs) + " matrix pairs");
}

// 6. Leakage predicates -------------------------------------------------

Outcome leakage_predicates() {
  Checker c;
  std::mt19937_64 rng(master_seed() + 6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto ring = [&](std::size_t n) {
    std::vector<aggregation::RingParty> parties;
    for (std::size_t i = 0; i < n; ++i) {
      data::DesignMatrix dm;
      dm.rows = 30;
      dm.cols = 3;
      dm.x.resize(90);
      dm.y.resize(30);
      for (double& x : dm.x) x = u(rng);
      for (double& y : dm.y) y = u(rng);
      parties.push_back({"L" + std::to_string(i + 1), aggregation::local_stats(dm)});
    }
    return parties;
  };
  aggregation::SessionOptions so;
  so.he = {1024, 20};
  std::size_t cases = 0;

  auto exposed = [](const aggregation::LeakageReport& r) {
    std::set<std::string> out;
    for (const auto& f : r.findings) {
      if (f.kind == "recoverable-input") out.insert(f.member);
    }
    return out;
  };

  // Two parties: the initiator learns the other's input from the total.
  {
    const auto p = ring(2);
    const auto s = aggregation::run_ring_session(p, so);
    const auto r = aggregation::audit_transcript(s.transcript, {"L1"}, p);
    c.expect(exposed(r) == std::set<std::string>{"L2"}, "2-party case");
    ++cases;
  }
  // Three parties: initiator and L3 box in L2.
  {
    const auto p = ring(3);
    const auto s = aggregation::run_ring_session(p, so);
    const auto r = aggregation::audit_transcript(s.transcript, {"L1", "L3"}, p);
    c.expect(exposed(r) == std::set<std::string>{"L2"}, "3-party case");
    ++cases;
  }
  // n parties: every honest member whose neighbours are both corrupted.
  {
    const auto p = ring(7);
    const auto s = aggregation::run_ring_session(p, so);
    const auto r = aggregation::audit_transcript(s.transcript, {"L1", "L3", "L5", "L6"}, p);
    c.expect(exposed(r) == std::set<std::string>{"L2", "L4", "L7"}, "n-party case");
    const auto honest_run = aggregation::audit_transcript(s.transcript, {"L1", "L5"}, p);
    c.expect(exposed(honest_run).empty(), "honest run of three is reported as exposed");
    ++cases;
  }
  // Honest-but-curious non-initiators see nothing.
  std::size_t curious = 0;
  {
    const auto p = ring(6);
    const auto s = aggregation::run_ring_session(p, so);
    for (std::size_t i = 1; i < p.size(); ++i) {
      const auto r = aggregation::audit_transcript(s.transcript, {p[i].member_id}, p);
      c.expect(r.findings.empty() && r.payload_clean, p[i].member_id + " curious sees findings");
      ++curious;
    }
    const auto all_but_one = aggregation::audit_transcript(s.transcript, {"L2", "L3", "L4", "L5"}, p);
    c.expect(all_but_one.findings.empty(), "colluding non-initiators see findings");
  }
  return c.outcome(std::to_string(cases) + " corruption cases flagged, " + std::to_string(curious) +
                   " curious non-initiators clean");
}

// 7. Data-dependent statistics -------------------------------------------

std::vector<std::string> distinct(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

double oracle_intersection(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto da = distinct(a), db = distinct(b);
  double count = 0;
  for (const auto& x : da) {
    for (const auto& y : db) count += x == y ? 1 : 0;
  }
  return count;
}

double oracle_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::set<std::string> uni(a.begin(), a.end());
  uni.insert(b.begin(), b.end());
  return oracle_intersection(a, b) / static_cast<double>(uni.size());
}

double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const long double n = static_cast<long double>(a.size());
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(ab / std::sqrt(aa * bb));
}

dd::DataRef set_ref(const std::string& member, std::vector<std::string> items) {
  dd::DataRef r;
  r.member_id = member;
  r.column = "patient_id";
  r.items = std::move(items);
  return r;
}

dd::DataRef vec_ref(const std::string& member, const std::vector<double>& values) {
  dd::DataRef r;
  r.member_id = member;
  r.column = "weight";
  r.numeric = true;
  r.values = values;
  for (double v : values) r.items.push_back(std::to_string(v));
  return r;
}

Outcome dd_statistics() {
  Checker c;
  std::mt19937_64 rng(master_seed() + 7);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  std::size_t oracle_pairs = 0, blinded_pairs = 0;

  auto random_sets = [&](std::vector<std::string>& a, std::vector<std::string>& b) {
    const std::size_t universe = 20 + rng() % 500;
    const std::size_t na = 1 + rng() % 300, nb = 1 + rng() % 300;
    a.clear();
    b.clear();
    for (std::size_t i = 0; i < na; ++i) a.push_back("id-" + std::to_string(rng() % universe));
    for (std::size_t i = 0; i < nb; ++i) b.push_back("id-" + std::to_string(rng() % universe));
  };
  auto random_vectors = [&](std::vector<double>& a, std::vector<double>& b) {
    const std::size_t n = 3 + rng() % 400;
    const double rho = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    a.resize(n);
    b.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = 50.0 + 10.0 * g(rng);
      b[i] = rho * a[i] + 10.0 * g(rng);
    }
  };

  for (int i = 0; i < 500; ++i, ++oracle_pairs) {
    std::vector<std::string> sa, sb;
    random_sets(sa, sb);
    const double is = static_cast<double>(dd::intersection_size(sa, sb));
    const double js = dd::jaccard(sa, sb);
    c.expect(is == oracle_intersection(sa, sb), "intersection pair " + std::to_string(i));
    const double je = std::abs(js - oracle_jaccard(sa, sb));
    worst = std::max(worst, je);
    c.expect(je <= 1e-12, "jaccard pair " + std::to_string(i));

    std::vector<double> va, vb;
    random_vectors(va, vb);
    const double pe = std::abs(dd::pearson(va, vb) - oracle_pearson(va, vb));
    const double ce = std::abs(dd::cosine(va, vb) - oracle_cosine(va, vb));
    worst = std::max({worst, pe, ce});
    c.expect(pe <= 1e-12, "pearson pair " + std::to_string(i));
    c.expect(ce <= 1e-12, "cosine pair " + std::to_string(i));
  }

  for (int i = 0; i < 100; ++i, ++blinded_pairs) {
    std::vector<std::string> sa, sb;
    random_sets(sa, sb);
    std::vector<double> va, vb;
    random_vectors(va, vb);
    const auto a_set = set_ref("A", sa), b_set = set_ref("B", sb);
    const auto a_vec = vec_ref("A", va), b_vec = vec_ref("B", vb);
    for (auto alg : {cpl::Algorithm::kIntersectionSize, cpl::Algorithm::kJaccardIndex,
                     cpl::Algorithm::kPearsonCorrelation, cpl::Algorithm::kCosineSimilarity}) {
      const bool numeric = alg == cpl::Algorithm::kPearsonCorrelation ||
                           alg == cpl::Algorithm::kCosineSimilarity;
      const auto& ra = numeric ? a_vec : a_set;
      const auto& rb = numeric ? b_vec : b_set;
      const double truth = dd::statistic(alg, ra, rb);
      // Thresholds straddle the true value so both decisions occur.
      const double threshold = truth + (rng() % 2 ? 1.0 : -1.0) * (numeric ? 0.01 : 0.5);
      const cpl::Evaluate cond{ra.column, alg, threshold};
      dd::DDOptions plain{dd::Mode::kPlain};
      dd::DDOptions blind{dd::Mode::kBlinded};
      blind.session_seed = rng();
      const auto p = dd::evaluate_dd(cond, ra, rb, plain);
      const auto q = dd::evaluate_dd(cond, ra, rb, blind);
      const std::string name(cpl::algorithm_name(alg));
      c.expect(p.decision == q.decision, name + " pair " + std::to_string(i) + " decision differs");

      for (const auto& msg : q.transcript) {
        const auto& own = msg.from == "A" ? ra : rb;
        const std::string dump = msg.payload.dump();
        bool leaked = false;
        if (!numeric) {
          for (const auto& item : own.items) leaked = leaked || dump.find("\"" + item + "\"") != std::string::npos;
        } else {
          std::set<double> raw(own.values.begin(), own.values.end());
          std::function<void(const nlohmann::json&)> scan = [&](const nlohmann::json& j) {
            if (j.is_number_float() && raw.count(j.get<double>())) leaked = true;
            if (j.is_structured()) {
              for (const auto& child : j) scan(child);
            }
          };
          scan(msg.payload);
        }
        c.expect(!leaked, name + " pair " + std::to_string(i) + " transcript holds raw values");
      }
    }
  }
  return c.outcome(std::to_string(oracle_pairs) + " pairs match oracles (worst " + fmt(worst) + "), " +
                   std::to_string(blinded_pairs) + " pairs blinded-equivalent with clean transcripts");
}

// 8. DP direction -------------------------------------------------------

Outcome dp_direction() {
  Checker c;
  auto cfg = harness::load_config(test::config_dir() / "p5_global.json");
  const std::vector<double> eps = {0.25, 1.0, 5.0, 20.0, 50.0, 100.0};
  const auto table = harness::dp_sweep(cfg, eps, 100);
  std::ostringstream row;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    row << (i ? ", " : "") << "eps " << r.epsilon << ": " << fmt(r.mean_mae, 4);
    if (!r.ci) {
      c.expect(false, "no interval at eps " + fmt(r.epsilon));
      continue;
    }
    if (i > 0 && table.rows[i - 1].ci) {
      // Non-increasing unless the larger budget is significantly worse.
      c.expect(r.ci->lower <= table.rows[i - 1].ci->upper,
               "MAE rises significantly from eps " + fmt(table.rows[i - 1].epsilon) + " to " + fmt(r.epsilon));
    }
  }

  auto advantage = [&](const harness::DPRow& r) {
    std::vector<double> gap;
    for (double mae : r.maes) gap.push_back(table.local_mae - mae);
    return regression::bootstrap_mean(gap, 2000, cfg.seed ^ 0xadadULL);
  };
  std::ostringstream adv;
  for (const auto& r : table.rows) {
    const auto ci = advantage(r);
    const bool present = ci.lower > 0.0;
    if (r.epsilon >= 100.0) c.expect(present, "no advantage at eps " + fmt(r.epsilon));
    if (r.epsilon <= 20.0) c.expect(!present, "advantage persists at eps " + fmt(r.epsilon));
    if (r.epsilon >= 20.0) {
      adv << (adv.tellp() ? ", " : "") << "eps " << r.epsilon << " [" << fmt(ci.lower, 3) << ", "
          << fmt(ci.upper, 3) << "]";
    }
  }
  return c.outcome("100 reps on the global consortium, local " + fmt(table.local_mae, 4) +
                   ", non-private " + fmt(table.non_private_mae, 4) + "; mean MAE " + row.str() +
                   "; advantage CI " + adv.str());
}

// 9. Policy-benefit direction -------------------------------------------

nlohmann::json profile(std::size_t rows, const std::string& race) {
  static const std::map<std::string, std::vector<double>> race_mix = {
      {"White", {0.90, 0.05, 0.05}}, {"Asian", {0.05, 0.90, 0.05}}, {"Black", {0.05, 0.05, 0.90}}};
  static const std::map<std::string, std::vector<double>> vkorc1 = {
      {"White", {0.37, 0.47, 0.16}}, {"Asian", {0.02, 0.18, 0.80}}, {"Black", {0.80, 0.18, 0.02}}};
  return {{"rows", rows},
          {"race_mix", race_mix.at(race)},
          {"vkorc1_mix", vkorc1.at(race)},
          {"coefficients", "race_dependent"},
          {"noise_sigma", 1.0}};
}

struct Heterogeneous {
  nlohmann::json doc;
  std::vector<std::string> ids;
  std::map<std::string, std::string> dominant;  // member -> race
};

// Nine members, three per race, each drawn mostly from one population.
Heterogeneous heterogeneous(std::uint64_t seed) {
  Heterogeneous h;
  const std::vector<std::string> races = {"White", "Asian", "Black"};
  const std::vector<std::size_t> sizes = {90, 140, 200};
  nlohmann::json members = nlohmann::json::array();
  for (const auto& race : races) {
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const std::string id = race.substr(0, 1) + std::to_string(k + 1);
      h.ids.push_back(id);
      h.dominant[id] = race;
      members.push_back({{"id", id}, {"policy", "policies/p5_global.cpl"},
                         {"synth", profile(sizes[k], race)}});
    }
  }
  h.doc = {{"version", 1}, {"name", "heterogeneous"}, {"schema", "warfarin"},
           {"members", members}, {"ring", h.ids}, {"initiators", {h.ids.front()}},
           {"he", {{"key_bits", 1024}, {"scale_bits", 20}}}, {"seed", seed}};
  return h;
}

Outcome policy_benefit() {
  Checker c;
  const std::vector<std::string> races = {"White", "Asian", "Black"};
  std::size_t beaten = 0, locals = 0, seeds_ok = 0;
  std::map<std::string, double> targeted_sum, pooled_sum;
  std::map<std::string, std::size_t> targeted_wins;
  const std::uint64_t base = master_seed();
  for (std::uint64_t s = 0; s < 10; ++s) {
    const std::uint64_t seed = base + 101 * s;
    const Heterogeneous h = heterogeneous(seed);
    const auto cfg = harness::parse_config(h.doc, test::config_dir());
    const auto report = harness::run_scenario(cfg, harness::Mode::kFull);
    const auto& global = report.sessions.front();
    std::size_t seed_beaten = 0;
    for (const auto& m : report.members) {
      seed_beaten += global.pooled.mae < m.local.mae ? 1 : 0;
    }
    beaten += seed_beaten;
    locals += report.members.size();
    const bool ok = static_cast<double>(seed_beaten) >= 0.8 * static_cast<double>(report.members.size());
    seeds_ok += ok ? 1 : 0;
    c.expect(ok, "seed " + std::to_string(seed) + ": global beats " + std::to_string(seed_beaten) + "/" +
                     std::to_string(report.members.size()));

    for (const auto& race : races) {
      // Per-race held-out cohort.
      nlohmann::json vdoc = h.doc;
      nlohmann::json vprof = profile(1000, race);
      vprof["race_mix"] = race == "White" ? std::vector<double>{1, 0, 0}
                          : race == "Asian" ? std::vector<double>{0, 1, 0}
                                            : std::vector<double>{0, 0, 1};
      vdoc["validation"] = {{"synth", vprof}};
      auto targeted_doc = vdoc;
      const std::string lower = race == "White" ? "white" : race == "Asian" ? "asian" : "black";
      const std::string initiator = race.substr(0, 1) + "3";
      for (auto& m : targeted_doc["members"]) {
        if (m["id"] == initiator) m["policy"] = "policies/race_" + lower + ".cpl";
      }
      targeted_doc["initiators"] = {initiator};
      const auto tcfg = harness::parse_config(targeted_doc, test::config_dir());
      const auto cohort = harness::validation_cohort(tcfg);
      const auto targeted = harness::run_scenario(tcfg, harness::Mode::kFull);
      const double t_mae = targeted.sessions.front().pooled.mae;
      const double p_mae = regression::clinical_metrics(global.model, cohort).mae;
      targeted_sum[race] += t_mae;
      pooled_sum[race] += p_mae;
      targeted_wins[race] += t_mae < p_mae ? 1 : 0;
    }
  }
  std::ostringstream per_race;
  for (const auto& race : races) {
    const double t = targeted_sum[race] / 10.0, p = pooled_sum[race] / 10.0;
    c.expect(t < p, race + ": targeted " + fmt(t, 4) + " vs pooled " + fmt(p, 4));
    per_race << (per_race.tellp() ? ", " : "") << race << " " << fmt(t, 4) << " vs " << fmt(p, 4) << " ("
             << targeted_wins[race] << "/10)";
  }
  return c.outcome("global beats " + std::to_string(beaten) + "/" + std::to_string(locals) +
                   " single-source models (>=80% in " + std::to_string(seeds_ok) +
                   "/10 seeds); per-race MAE targeted vs unselected pooling: " + per_race.str());
}

// 10. Benchmark shape --------------------------------------------------

Outcome benchmark_shape() {
  Checker c;
  harness::ConsortiumConfig cfg;  // default key size
  cfg.seed = master_seed();
  harness::BenchOptions o;
  o.runs = 3;
  o.rows = 1000;
  o.features = 15;

  const auto members = harness::bench(cfg, harness::BenchAxis::kMembers, {2, 6, 12, 24}, o);
  std::ostringstream m_line;
  for (std::size_t i = 0; i < members.size(); ++i) {
    m_line << (i ? ", " : "") << members[i].value << ":" << fmt(members[i].encrypted_phase, 3);
    if (i > 0) {
      c.expect(members[i].relative_encrypted_phase > members[i - 1].relative_encrypted_phase,
               "encrypted phase not monotone at " + fmt(members[i].value) + " members");
    }
  }
  // Shape checks use times relative to the reference workload timed around
  // each session; wall-clock speed on a shared host drifts by more than the
  // tolerances. Keygen invariance is the least-squares trend over the member
  // range, relative to its mean.
  double mx = 0.0, my = 0.0;
  for (const auto& p : members) {
    mx += p.value;
    my += p.relative_keygen;
  }
  mx /= static_cast<double>(members.size());
  my /= static_cast<double>(members.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& p : members) {
    sxy += (p.value - mx) * (p.relative_keygen - my);
    sxx += (p.value - mx) * (p.value - mx);
  }
  const double kg_trend = std::abs(sxy / sxx) * (members.back().value - members.front().value) / my;
  std::ostringstream kg_line;
  for (const auto& p : members) kg_line << (kg_line.tellp() ? ", " : "") << fmt(p.relative_keygen, 3);
  c.expect(kg_trend < 0.2, "keygen trend " + fmt(100 * kg_trend) + "% over the member range");

  const auto rows = harness::bench(cfg, harness::BenchAxis::kRows, {500, 1000, 2000, 5000}, o);
  double r_min = 1e300, r_max = 0.0;
  for (const auto& p : rows) {
    r_min = std::min(r_min, p.relative_encrypted_phase);
    r_max = std::max(r_max, p.relative_encrypted_phase);
  }
  const double r_spread = (r_max - r_min) / r_min;
  c.expect(r_spread < 0.2, "encrypted phase varies by " + fmt(100 * r_spread) + "% with row count");
  return c.outcome("encrypted phase by members (s) " + m_line.str() + "; row variation " +
                   fmt(100 * r_spread) + "%; keygen trend " + fmt(100 * kg_trend) + "% over 2-24 members (relative keygen " + kg_line.str() + ")");
}

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;  // 0 = no limit
  std::function<Outcome()> run;
};

}  // namespace

// With arguments, runs only the listed criteria.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<Criterion> criteria = {
      {1, "grammar corpus", 5.0, grammar_corpus},
      {2, "negotiation fidelity", 1.0, negotiation_fidelity},
      {3, "message-count law", 0.0, message_count_law},
      {4, "pooling equals centralisation", 120.0, pooling_equivalence},
      {5, "mask and key properties", 0.0, mask_and_key_properties},
      {6, "leakage predicates", 0.0, leakage_predicates},
      {7, "data-dependent statistics", 0.0, dd_statistics},
      {8, "DP direction", 600.0, dp_direction},
      {9, "policy-benefit direction", 0.0, policy_benefit},
      {10, "benchmark shape", 0.0, benchmark_shape},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    if (!only.empty() && !only.count(cr.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = cr.run();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.budget_seconds > 0.0 && secs > cr.budget_seconds) {
      out.pass = false;
      out.detail += " | over the " + fmt(cr.budget_seconds) + " s budget";
    }
    failed += out.pass ? 0 : 1;
    std::printf("%s %d: %s | %s | %.2f s\n", out.pass ? "PASS" : "FAIL", cr.id, cr.title.c_str(),
                out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "curie/cpl/ast.hpp"
#include "curie/data/dataset.hpp"
#include "curie/dd/statistics.hpp"
#include "curie/error.hpp"
#include "json.hpp"

namespace curie::policy {

CURIE_DEFINE_ERROR(EnvError);
CURIE_DEFINE_ERROR(CycleError);

struct MemberContext {
  std::string member_id;
  std::map<std::string, std::string> attributes;  // e.g. country, continent
  std::set<std::string> alliances;                // e.g. NATO, EU
  std::shared_ptr<const data::Dataset> dataset;
  cpl::PolicyAst policy;
};

// A resolved operand: number, text, or a list of member ids / values.
using EnvValue = std::variant<double, std::string, std::vector<std::string>>;

std::string to_string(const EnvValue& value);

// Evaluation scope for one policy author looking at one counterparty.
//
// `$name` resolves against the author's policy attributes first, then the
// counterparty's context attributes, then the alliance of that name (the
// member ids of every consortium member that belongs to it). `size(data)` is
// the counterparty's row count. A bare identifier on the left of a
// comparison names a counterparty attribute when one exists, otherwise it is
// taken literally (typically a member id).
class Env {
 public:
  Env(const MemberContext& author, const MemberContext& counterparty,
      std::span<const MemberContext> consortium = {});

  const MemberContext& author() const { return *author_; }
  const MemberContext& counterparty() const { return *counterparty_; }

  // Throws EnvError when `name` is unbound.
  EnvValue lookup(std::string_view name) const;
  EnvValue resolve(const cpl::Operand& operand) const;
  EnvValue resolve(const cpl::Value& value) const;
  std::size_t data_size() const;

 private:
  EnvValue lookup(std::string_view name, int depth) const;
  EnvValue resolve(const cpl::Value& value, int depth) const;

  const MemberContext* author_;
  const MemberContext* counterparty_;
  std::span<const MemberContext> consortium_;
};

// Throws TypeError on incomparable operands and EnvError on unbound names.
bool eval_conditional(const cpl::Comparison& cond, const Env& env);

// Filters with every value resolved to a literal. Throws EnvError/TypeError.
data::RowFilter resolve_filter(const cpl::Filter& filter, const Env& env);

struct ConditionalTrace {
  std::string author;
  std::string text;
  bool data_dependent = false;
  bool value = false;
  std::optional<double> statistic;  // audit mode only
};

struct ResolvedClause {
  std::size_t clause_index = 0;
  std::vector<std::string> tag_path;        // sub-clause tags entered
  std::vector<ConditionalTrace> conditionals;
  std::vector<cpl::Evaluate> deferred;      // data-dependent, not yet run
  std::vector<data::RowFilter> filters;
};

// Decides a data-dependent conditional during resolution. Returns the
// decision and, in audit mode, the statistic.
using DDEvaluator =
    std::function<std::pair<bool, std::optional<double>>(const cpl::Evaluate&)>;

// First clause of `kind` at or after `from_index` that applies to the
// counterparty and whose conditionals hold. Tag selections expand
// recursively: the first sub-clause alternative whose conditionals hold
// supplies the selections, and a tag with no matching alternative makes the
// enclosing clause fail. Without `dd`, data-dependent conditionals are
// returned in `deferred` and treated as true for matching. Throws CycleError.
std::optional<ResolvedClause> resolve_clause(const cpl::PolicyAst& policy,
                                             cpl::ClauseKind kind,
                                             std::string_view counterparty,
                                             const Env& env,
                                             std::size_t from_index = 0,
                                             const DDEvaluator& dd = nullptr);

enum class Status { kFull, kPartial, kEmpty };
std::string_view status_name(Status status);

struct Agreement {
  std::string owner;
  std::string requester;
  Status status = Status::kEmpty;
  std::vector<ConditionalTrace> conditionals;  // requester's then owner's
  std::vector<data::RowFilter> selections;     // requester's then owner's
  std::optional<std::size_t> requester_clause;
  std::optional<std::size_t> owner_clause;
  std::size_t requested_rows = 0;  // owner rows under the requester's filters
  std::size_t released_rows = 0;   // owner rows under the merged filters
  std::string reason;              // why the agreement is empty
};

struct Message {
  std::size_t seq = 0;
  std::string from;
  std::string to;
  std::string kind;
  nlohmann::json payload;
};

struct MessageLog {
  std::vector<Message> messages;        // negotiation request/response
  std::vector<dd::DDMessage> dd;        // blinded sub-exchanges, not counted
  double dd_seconds = 0.0;              // wall time spent in dd evaluation

  void post(std::string from, std::string to, std::string kind,
            nlohmann::json payload);
  std::size_t count() const { return messages.size(); }
};

struct NegotiationOptions {
  dd::Mode dd_mode = dd::Mode::kBlinded;
  bool audit = false;
  std::uint64_t seed = 0;
};

// Policy attribute that flips data-dependent decisions to "statistic >
// threshold": `dd_comparator := <">">;`
inline constexpr std::string_view kComparatorAttribute = "dd_comparator";

// Resolves the requester's acquire clause for the owner and the owner's share
// clause for the requester, ANDs their conditionals and selections and
// classifies the result against the owner's data: Full when the owner's
// selections remove nothing beyond the requester's own, Partial when they
// release a proper nonempty subset, Empty when nothing is released or either
// side has no matching clause. Throws SchemaMismatch when the datasets'
// schemas differ.
Agreement negotiate_pair(const MemberContext& requester,
                         const MemberContext& owner,
                         std::span<const MemberContext> consortium = {},
                         const NegotiationOptions& options = {},
                         MessageLog* log = nullptr);

// True when some acquire clause of `requester` applies to `owner`.
bool names(const MemberContext& requester, std::string_view owner);

struct ConsortiumResult {
  std::vector<Agreement> agreements;
  MessageLog log;
};

// One request and one response per ordered pair whose requester names the
// owner. Per-pair failures become Empty agreements carrying the reason.
ConsortiumResult negotiate_consortium(std::span<const MemberContext> contexts,
                                      const NegotiationOptions& options = {});

nlohmann::json to_json(const Agreement& agreement);
nlohmann::json to_json(const ConsortiumResult& result);

}  // namespace curie::policy

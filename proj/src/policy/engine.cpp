#include "curie/policy/engine.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <optional>

#include "curie/cpl/serialize.hpp"

namespace curie::policy {
namespace {

constexpr int kMaxLookupDepth = 16;

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::optional<double> parse_number(std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return v;
}

std::string scalar_text(const EnvValue& v) {
  if (const double* d = std::get_if<double>(&v)) return format_number(*d);
  return std::get<std::string>(v);
}

EnvValue from_text(const std::string& text) {
  if (auto d = parse_number(text)) return *d;
  return text;
}

// Numeric when both sides are numbers or one is a number and the other
// parses as one; textual when both are text.
std::optional<std::pair<double, double>> as_numbers(const EnvValue& a,
                                                    const EnvValue& b) {
  auto num = [](const EnvValue& v) -> std::optional<double> {
    if (const double* d = std::get_if<double>(&v)) return *d;
    if (const std::string* s = std::get_if<std::string>(&v)) return parse_number(*s);
    return std::nullopt;
  };
  const bool any_number =
      std::holds_alternative<double>(a) || std::holds_alternative<double>(b);
  if (!any_number) return std::nullopt;
  auto x = num(a);
  auto y = num(b);
  if (!x || !y) {
    throw TypeError("cannot compare '" + to_string(a) + "' with '" +
                    to_string(b) + "'");
  }
  return std::pair{*x, *y};
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view text) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

dd::Comparator comparator_of(const cpl::PolicyAst& policy) {
  const cpl::Attribute* attr = policy.find_attribute(kComparatorAttribute);
  if (attr == nullptr || attr->values.size() != 1) return dd::Comparator::kBelow;
  const cpl::Value& v = attr->values.front();
  std::string text;
  if (const auto* s = std::get_if<cpl::StringLit>(&v)) text = s->text;
  if (const auto* i = std::get_if<cpl::Identifier>(&v)) text = i->name;
  if (text == ">") return dd::Comparator::kAbove;
  if (text == "<") return dd::Comparator::kBelow;
  throw TypeError("dd_comparator must be \"<\" or \">\"");
}

class Resolver {
 public:
  Resolver(const cpl::PolicyAst& policy, const Env& env, const DDEvaluator& dd)
      : policy_(policy), env_(env), dd_(dd) {}

  // Conditionals of one clause: plain ones first, data-dependent ones only
  // once every plain one holds.
  bool conditionals_hold(const std::vector<cpl::Conditional>& conds,
                         ResolvedClause& out) {
    std::vector<ConditionalTrace> trace;
    for (const cpl::Conditional& c : conds) {
      const auto* cmp = std::get_if<cpl::Comparison>(&c.body);
      if (cmp == nullptr) continue;
      const bool value = eval_conditional(*cmp, env_);
      trace.push_back({env_.author().member_id, cpl::to_string(c), false, value, {}});
      if (!value) return false;
    }
    std::vector<cpl::Evaluate> deferred;
    for (const cpl::Conditional& c : conds) {
      const auto* ev = std::get_if<cpl::Evaluate>(&c.body);
      if (ev == nullptr) continue;
      if (!dd_) {
        deferred.push_back(*ev);
        continue;
      }
      auto [value, stat] = dd_(*ev);
      trace.push_back({env_.author().member_id, cpl::to_string(c), true, value, stat});
      if (!value) return false;
    }
    out.conditionals.insert(out.conditionals.end(), trace.begin(), trace.end());
    out.deferred.insert(out.deferred.end(), deferred.begin(), deferred.end());
    return true;
  }

  bool expand(const cpl::Selections& selections, ResolvedClause& out,
              std::vector<std::string>& stack) {
    if (const auto* filters = std::get_if<std::vector<cpl::Filter>>(&selections)) {
      for (const cpl::Filter& f : *filters) out.filters.push_back(resolve_filter(f, env_));
      return true;
    }
    const std::string& tag = std::get<cpl::TagRef>(selections).tag;
    if (std::find(stack.begin(), stack.end(), tag) != stack.end()) {
      throw CycleError("sub-clause '" + tag + "' refers back to itself");
    }
    stack.push_back(tag);
    bool matched = false;
    for (const cpl::Clause& sub : policy_.sub_clauses) {
      if (sub.tag != tag) continue;
      ResolvedClause attempt = out;
      if (!conditionals_hold(sub.conditionals, attempt)) continue;
      attempt.tag_path.push_back(tag);
      if (!expand(sub.selections, attempt, stack)) continue;
      out = std::move(attempt);
      matched = true;
      break;
    }
    stack.pop_back();
    return matched;
  }

 private:
  const cpl::PolicyAst& policy_;
  const Env& env_;
  const DDEvaluator& dd_;
};

data::Literal to_literal(const EnvValue& v) {
  if (const double* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

nlohmann::json to_json(const ConditionalTrace& t) {
  nlohmann::json j = {{"author", t.author},
                      {"conditional", t.text},
                      {"data_dependent", t.data_dependent},
                      {"value", t.value}};
  if (t.statistic) j["statistic"] = *t.statistic;
  return j;
}

}  // namespace

std::string to_string(const EnvValue& value) {
  if (const auto* list = std::get_if<std::vector<std::string>>(&value)) {
    return "{" + join(*list, ", ") + "}";
  }
  return scalar_text(value);
}

Env::Env(const MemberContext& author, const MemberContext& counterparty,
         std::span<const MemberContext> consortium)
    : author_(&author), counterparty_(&counterparty), consortium_(consortium) {}

EnvValue Env::lookup(std::string_view name) const { return lookup(name, 0); }

EnvValue Env::lookup(std::string_view name, int depth) const {
  if (depth > kMaxLookupDepth) {
    throw EnvError("variable '$" + std::string(name) + "' does not resolve");
  }
  if (const cpl::Attribute* attr = author_->policy.find_attribute(name)) {
    if (!attr->is_list && attr->values.size() == 1) {
      return resolve(attr->values.front(), depth + 1);
    }
    std::vector<std::string> list;
    for (const cpl::Value& v : attr->values) {
      EnvValue item = resolve(v, depth + 1);
      if (auto* nested = std::get_if<std::vector<std::string>>(&item)) {
        list.insert(list.end(), nested->begin(), nested->end());
      } else {
        list.push_back(scalar_text(item));
      }
    }
    return list;
  }
  const auto it = counterparty_->attributes.find(std::string(name));
  if (it != counterparty_->attributes.end()) return from_text(it->second);

  std::vector<std::string> members;
  bool known = false;
  auto consider = [&](const MemberContext& m) {
    if (m.alliances.contains(std::string(name))) {
      known = true;
      if (std::find(members.begin(), members.end(), m.member_id) == members.end()) {
        members.push_back(m.member_id);
      }
    }
  };
  for (const MemberContext& m : consortium_) consider(m);
  consider(*author_);
  consider(*counterparty_);
  if (known) {
    std::sort(members.begin(), members.end());
    return members;
  }
  throw EnvError("unbound variable '$" + std::string(name) + "'");
}

EnvValue Env::resolve(const cpl::Value& value) const { return resolve(value, 0); }

EnvValue Env::resolve(const cpl::Value& value, int depth) const {
  return std::visit(
      [&](const auto& v) -> EnvValue {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, cpl::StringLit>) {
          return v.text;
        } else if constexpr (std::is_same_v<T, cpl::NumberLit>) {
          return v.value;
        } else if constexpr (std::is_same_v<T, cpl::Identifier>) {
          return v.name;
        } else {
          return lookup(v.name, depth);
        }
      },
      value);
}

EnvValue Env::resolve(const cpl::Operand& operand) const {
  return std::visit(
      [&](const auto& v) -> EnvValue {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, cpl::VarRef>) {
          return lookup(v.name);
        } else if constexpr (std::is_same_v<T, cpl::Identifier>) {
          const auto it = counterparty_->attributes.find(v.name);
          if (it != counterparty_->attributes.end()) return from_text(it->second);
          return v.name;
        } else {
          return static_cast<double>(data_size());
        }
      },
      operand);
}

std::size_t Env::data_size() const {
  if (!counterparty_->dataset) {
    throw EnvError("size(data): member '" + counterparty_->member_id +
                   "' has no dataset");
  }
  return counterparty_->dataset->rows();
}

bool eval_conditional(const cpl::Comparison& cond, const Env& env) {
  const EnvValue lhs = env.resolve(cond.lhs);
  const EnvValue rhs = env.resolve(cond.rhs);
  if (std::holds_alternative<std::vector<std::string>>(lhs)) {
    throw TypeError("left side of a comparison cannot be a list");
  }
  if (cond.op == cpl::Op::kIn) {
    const std::string needle = scalar_text(lhs);
    if (const auto* list = std::get_if<std::vector<std::string>>(&rhs)) {
      return std::find(list->begin(), list->end(), needle) != list->end();
    }
    if (std::holds_alternative<double>(rhs)) {
      throw TypeError("'in' needs a list or a name, got " + to_string(rhs));
    }
    return needle == std::get<std::string>(rhs);
  }
  if (std::holds_alternative<std::vector<std::string>>(rhs)) {
    throw TypeError("operator '" + std::string(cpl::op_symbol(cond.op)) +
                    "' cannot take a list");
  }
  if (auto nums = as_numbers(lhs, rhs)) {
    const auto [a, b] = *nums;
    switch (cond.op) {
      case cpl::Op::kEq: return a == b;
      case cpl::Op::kNe: return a != b;
      case cpl::Op::kLt: return a < b;
      case cpl::Op::kGt: return a > b;
      case cpl::Op::kIn: break;
    }
  }
  const std::string& a = std::get<std::string>(lhs);
  const std::string& b = std::get<std::string>(rhs);
  switch (cond.op) {
    case cpl::Op::kEq: return a == b;
    case cpl::Op::kNe: return a != b;
    case cpl::Op::kLt: return a < b;
    case cpl::Op::kGt: return a > b;
    case cpl::Op::kIn: break;
  }
  return false;
}

data::RowFilter resolve_filter(const cpl::Filter& filter, const Env& env) {
  data::RowFilter out;
  out.op = filter.op;
  if (filter.column_is_var) {
    const EnvValue col = env.lookup(filter.column);
    if (std::holds_alternative<std::vector<std::string>>(col)) {
      throw TypeError("filter column '$" + filter.column + "' is a list");
    }
    out.column = scalar_text(col);
  } else {
    out.column = filter.column;
  }
  const EnvValue v = env.resolve(filter.value);
  if (const auto* list = std::get_if<std::vector<std::string>>(&v)) {
    if (filter.op != cpl::Op::kIn) {
      throw TypeError("filter on '" + out.column + "' compares with a list; use 'in'");
    }
    for (const std::string& item : *list) out.values.push_back(to_literal(from_text(item)));
  } else {
    out.values.push_back(to_literal(v));
  }
  return out;
}

std::optional<ResolvedClause> resolve_clause(const cpl::PolicyAst& policy,
                                             cpl::ClauseKind kind,
                                             std::string_view counterparty,
                                             const Env& env,
                                             std::size_t from_index,
                                             const DDEvaluator& dd) {
  Resolver resolver(policy, env, dd);
  for (std::size_t i = from_index; i < policy.clauses.size(); ++i) {
    const cpl::Clause& clause = policy.clauses[i];
    if (clause.kind != kind || !clause.applies_to(counterparty)) continue;
    ResolvedClause out;
    out.clause_index = i;
    if (!resolver.conditionals_hold(clause.conditionals, out)) continue;
    std::vector<std::string> stack;
    if (!resolver.expand(clause.selections, out, stack)) continue;
    return out;
  }
  return std::nullopt;
}

std::string_view status_name(Status status) {
  switch (status) {
    case Status::kFull: return "Full";
    case Status::kPartial: return "Partial";
    case Status::kEmpty: return "Empty";
  }
  return "?";
}

void MessageLog::post(std::string from, std::string to, std::string kind,
                      nlohmann::json payload) {
  messages.push_back({messages.size(), std::move(from), std::move(to),
                      std::move(kind), std::move(payload)});
}

bool names(const MemberContext& requester, std::string_view owner) {
  return std::any_of(requester.policy.clauses.begin(), requester.policy.clauses.end(),
                     [&](const cpl::Clause& c) {
                       return c.kind == cpl::ClauseKind::kAcquire && c.applies_to(owner);
                     });
}

namespace {

Agreement negotiate(const MemberContext& requester, const MemberContext& owner,
                    std::span<const MemberContext> consortium,
                    const NegotiationOptions& options, MessageLog* log) {
  Agreement agreement;
  agreement.owner = owner.member_id;
  agreement.requester = requester.member_id;

  if (requester.dataset && owner.dataset) {
    const auto report = data::check_shared_schema(requester.dataset->schema(),
                                                  owner.dataset->schema());
    if (!report.ok) throw SchemaMismatch(join(report.mismatches, "; "));
  }

  std::uint64_t dd_counter = 0;
  auto evaluator_for = [&](const MemberContext& author) -> DDEvaluator {
    const dd::Comparator comparator = comparator_of(author.policy);
    return [&, comparator](const cpl::Evaluate& cond) {
      if (!requester.dataset || !owner.dataset) {
        throw EnvError("data-dependent conditional needs both datasets");
      }
      dd::DDOptions dd_options;
      dd_options.mode = options.dd_mode;
      dd_options.comparator = comparator;
      dd_options.audit = options.audit;
      std::uint64_t h = fnv1a(0xcbf29ce484222325ULL ^ options.seed, requester.member_id);
      h = fnv1a(h, "/" + owner.member_id + "/" + std::to_string(dd_counter++));
      dd_options.session_seed = h;
      const auto start = std::chrono::steady_clock::now();
      const auto outcome = dd::evaluate_dd(
          cond, dd::extract(*requester.dataset, cond.data_ref, requester.member_id),
          dd::extract(*owner.dataset, cond.data_ref, owner.member_id), dd_options);
      if (log) {
        log->dd.insert(log->dd.end(), outcome.transcript.begin(), outcome.transcript.end());
        log->dd_seconds += std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start).count();
      }
      return std::pair{outcome.decision,
                       options.audit ? std::optional(outcome.statistic) : std::nullopt};
    };
  };

  const Env requester_env(requester, owner, consortium);
  const auto acquire = resolve_clause(requester.policy, cpl::ClauseKind::kAcquire,
                                      owner.member_id, requester_env, 0,
                                      evaluator_for(requester));
  if (!acquire) {
    agreement.reason = "no acquire clause of '" + requester.member_id +
                       "' matches '" + owner.member_id + "'";
    return agreement;
  }
  agreement.requester_clause = acquire->clause_index;
  agreement.conditionals = acquire->conditionals;
  agreement.selections = acquire->filters;

  const Env owner_env(owner, requester, consortium);
  const auto share = resolve_clause(owner.policy, cpl::ClauseKind::kShare,
                                    requester.member_id, owner_env, 0,
                                    evaluator_for(owner));
  if (!share) {
    agreement.reason = "no share clause of '" + owner.member_id + "' matches '" +
                       requester.member_id + "'";
    return agreement;
  }
  agreement.owner_clause = share->clause_index;
  agreement.conditionals.insert(agreement.conditionals.end(),
                                share->conditionals.begin(), share->conditionals.end());
  agreement.selections.insert(agreement.selections.end(), share->filters.begin(),
                              share->filters.end());

  if (!owner.dataset) {
    agreement.status = share->filters.empty() ? Status::kFull : Status::kPartial;
    return agreement;
  }
  agreement.requested_rows = data::count_selected(*owner.dataset, acquire->filters);
  agreement.released_rows = data::count_selected(*owner.dataset, agreement.selections);
  if (agreement.released_rows == 0) {
    agreement.status = Status::kEmpty;
    agreement.reason = "merged selections release no rows";
  } else if (agreement.released_rows == agreement.requested_rows) {
    agreement.status = Status::kFull;
  } else {
    agreement.status = Status::kPartial;
  }
  return agreement;
}

nlohmann::json request_payload(const MemberContext& requester, std::string_view owner) {
  nlohmann::json clauses = nlohmann::json::array();
  for (const cpl::Clause& c : requester.policy.clauses) {
    if (c.kind == cpl::ClauseKind::kAcquire && c.applies_to(owner)) {
      clauses.push_back(cpl::to_string(c));
    }
  }
  return {{"acquire", clauses}};
}

}  // namespace

Agreement negotiate_pair(const MemberContext& requester, const MemberContext& owner,
                         std::span<const MemberContext> consortium,
                         const NegotiationOptions& options, MessageLog* log) {
  if (log) {
    log->post(requester.member_id, owner.member_id, "request",
              request_payload(requester, owner.member_id));
  }
  Agreement agreement = negotiate(requester, owner, consortium, options, log);
  if (log) {
    log->post(owner.member_id, requester.member_id, "response", to_json(agreement));
  }
  return agreement;
}

ConsortiumResult negotiate_consortium(std::span<const MemberContext> contexts,
                                      const NegotiationOptions& options) {
  if (contexts.size() < 2) throw ConfigError("a consortium needs at least 2 members");
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    for (std::size_t j = i + 1; j < contexts.size(); ++j) {
      if (contexts[i].member_id == contexts[j].member_id) {
        throw ConfigError("duplicate member id '" + contexts[i].member_id + "'");
      }
    }
  }
  ConsortiumResult result;
  for (const MemberContext& requester : contexts) {
    for (const MemberContext& owner : contexts) {
      if (&requester == &owner || !names(requester, owner.member_id)) continue;
      result.log.post(requester.member_id, owner.member_id, "request",
                      request_payload(requester, owner.member_id));
      Agreement agreement;
      try {
        agreement = negotiate(requester, owner, contexts, options, &result.log);
      } catch (const Error& e) {
        agreement = Agreement{};
        agreement.owner = owner.member_id;
        agreement.requester = requester.member_id;
        agreement.reason = e.code() + ": " + e.what();
      }
      result.log.post(owner.member_id, requester.member_id, "response",
                      to_json(agreement));
      result.agreements.push_back(std::move(agreement));
    }
  }
  return result;
}

nlohmann::json to_json(const Agreement& a) {
  nlohmann::json conds = nlohmann::json::array();
  for (const ConditionalTrace& t : a.conditionals) conds.push_back(to_json(t));
  nlohmann::json filters = nlohmann::json::array();
  for (const data::RowFilter& f : a.selections) filters.push_back(data::to_string(f));
  nlohmann::json j = {{"owner", a.owner},
                      {"requester", a.requester},
                      {"status", std::string(status_name(a.status))},
                      {"conditionals", conds},
                      {"selections", filters},
                      {"requested_rows", a.requested_rows},
                      {"released_rows", a.released_rows}};
  j["requester_clause"] = a.requester_clause ? nlohmann::json(*a.requester_clause)
                                             : nlohmann::json(nullptr);
  j["owner_clause"] =
      a.owner_clause ? nlohmann::json(*a.owner_clause) : nlohmann::json(nullptr);
  if (!a.reason.empty()) j["reason"] = a.reason;
  return j;
}

nlohmann::json to_json(const ConsortiumResult& result) {
  nlohmann::json agreements = nlohmann::json::array();
  for (const Agreement& a : result.agreements) agreements.push_back(to_json(a));
  nlohmann::json messages = nlohmann::json::array();
  for (const Message& m : result.log.messages) {
    messages.push_back(
        {{"seq", m.seq}, {"from", m.from}, {"to", m.to}, {"kind", m.kind}});
  }
  return {{"agreements", agreements},
          {"message_count", result.log.count()},
          {"messages", messages}};
}

}  // namespace curie::policy

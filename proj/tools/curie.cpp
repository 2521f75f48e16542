// curie: command-line front end for policies, negotiation and simulation.
//
// Exit codes: 0 success, 1 diagnostics with errors, 2 runtime failure.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "curie/cpl/parser.hpp"
#include "curie/cpl/serialize.hpp"
#include "curie/cpl/validate.hpp"
#include "curie/harness/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kDiagnostics = 1;
constexpr int kFailure = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw curie::ConfigError(path + ": cannot open file");
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw curie::ConfigError(out_path + ": cannot write file");
  out << text;
}

std::string syntax_message(const std::string& file, const curie::cpl::SyntaxError& e) {
  return file + ":" + std::to_string(e.span().line) + ":" + std::to_string(e.span().column) +
         ": error[" + e.code() + "]: " + e.what();
}

int cmd_parse(const std::string& file) {
  const std::string text = read_file(file);
  try {
    std::cout << curie::cpl::serialize(curie::cpl::parse_policy(text));
  } catch (const curie::cpl::SyntaxError& e) {
    std::cerr << syntax_message(file, e) << "\n";
    return kDiagnostics;
  }
  return kOk;
}

int cmd_lint(const std::string& file) {
  const std::string text = read_file(file);
  curie::cpl::PolicyAst ast;
  try {
    ast = curie::cpl::parse_policy(text);
  } catch (const curie::cpl::SyntaxError& e) {
    std::cerr << syntax_message(file, e) << "\n";
    return kDiagnostics;
  }
  const auto diagnostics = curie::cpl::validate(ast);
  for (const auto& d : diagnostics) std::cerr << d.format(file) << "\n";
  return curie::cpl::has_errors(diagnostics) ? kDiagnostics : kOk;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw curie::ConfigError("values: not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw curie::ConfigError("values: empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curie consortium policy tools"};
  app.require_subcommand(1);

  std::string file, config, out, csv, axis, values, epsilons;
  bool dp = false, timings = false;
  std::size_t reps = 0;
  curie::harness::BenchOptions bench_opts;

  auto* parse = app.add_subcommand("parse", "Parse a policy and print its canonical form");
  parse->add_option("file", file, "Policy file")->required();
  auto* lint = app.add_subcommand("lint", "Parse and statically check a policy");
  lint->add_option("file", file, "Policy file")->required();

  auto* negotiate = app.add_subcommand("negotiate", "Negotiate agreements and print the report");
  negotiate->add_option("config", config, "Consortium config")->required();
  negotiate->add_option("-o,--out", out, "Write the JSON report here");
  negotiate->add_flag("--timings", timings, "Include wall-clock timings");

  auto* simulate = app.add_subcommand("simulate", "Negotiate, aggregate, fit and evaluate");
  simulate->add_option("config", config, "Consortium config")->required();
  simulate->add_flag("--dp", dp, "Also run the privacy sweep");
  simulate->add_option("-o,--out", out, "Write the JSON report here");

  auto* sweep = app.add_subcommand("dp-sweep", "Error of private models across budgets");
  sweep->add_option("config", config, "Consortium config")->required();
  sweep->add_option("--epsilons", epsilons, "Comma-separated budgets (default from config)");
  sweep->add_option("--reps", reps, "Repetitions per budget (default from config)");
  sweep->add_option("-o,--out", out, "Write the JSON table here");
  sweep->add_option("--csv", csv, "Also write a CSV table");

  auto* bench = app.add_subcommand("bench", "Time ring sessions along one axis");
  bench->add_option("config", config, "Consortium config (HE parameters and seed)")->required();
  bench->add_option("--axis", axis, "members, rows or features")->required();
  bench->add_option("--values", values, "Comma-separated axis values")->required();
  bench->add_option("--members", bench_opts.members, "Members when not on the axis");
  bench->add_option("--rows", bench_opts.rows, "Rows per member when not on the axis");
  bench->add_option("--features", bench_opts.features, "Design width when not on the axis");
  bench->add_option("--runs", bench_opts.runs, "Runs per point (median reported)");
  bench->add_option("-o,--out", out, "Write the JSON table here");
  bench->add_option("--csv", csv, "Also write a CSV table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kFailure;
  }

  namespace h = curie::harness;
  try {
    if (*parse) return cmd_parse(file);
    if (*lint) return cmd_lint(file);
    if (*negotiate) {
      const auto cfg = h::load_config(config);
      const auto report = h::run_scenario(cfg, h::Mode::kNegotiateOnly);
      emit(report.to_json(timings).dump(2) + "\n", out);
      return kOk;
    }
    if (*simulate) {
      const auto cfg = h::load_config(config);
      if (dp && !cfg.dp.enabled) throw curie::ConfigError("dp.enabled: the config does not enable DP");
      const auto report = h::run_scenario(cfg, dp ? h::Mode::kFullWithDP : h::Mode::kFull);
      emit(report.to_json().dump(2) + "\n", out);
      return kOk;
    }
    if (*sweep) {
      const auto cfg = h::load_config(config);
      if (!cfg.dp.enabled) throw curie::ConfigError("dp.enabled: the config does not enable DP");
      const auto eps = epsilons.empty() ? cfg.dp.epsilons : parse_list(epsilons);
      const auto table = h::dp_sweep(cfg, eps, reps ? reps : cfg.dp.repetitions);
      emit(h::to_json(table).dump(2) + "\n", out);
      if (!csv.empty()) emit(h::to_csv(table), csv);
      return kOk;
    }
    if (*bench) {
      const auto cfg = h::load_config(config);
      const auto ax = h::parse_axis(axis);
      const auto points = h::bench(cfg, ax, parse_list(values), bench_opts);
      emit(h::to_json(points, ax).dump(2) + "\n", out);
      if (!csv.empty()) emit(h::to_csv(points, ax), csv);
      return kOk;
    }
  } catch (const curie::Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

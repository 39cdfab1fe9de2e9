#include "fml/cli.hpp"

#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fml/constraints.hpp"
#include "fml/gen.hpp"
#include "fml/oracle.hpp"

namespace fml::cli {

namespace {

template <class... Ts>
struct overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overload(Ts...) -> overload<Ts...>;

}  // namespace

// ---------------------------------------------------------------------------
// Prelude
// ---------------------------------------------------------------------------

Result<std::vector<PreludeEntry>, ParseError> parse_prelude(
    std::string_view text, NameSupply& supply) {
  std::vector<PreludeEntry> out;
  std::istringstream lines{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    std::string trimmed = line;
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(
                                   trimmed.front()))) {
      trimmed.erase(trimmed.begin());
    }
    while (!trimmed.empty() &&
           std::isspace(static_cast<unsigned char>(trimmed.back()))) {
      trimmed.pop_back();
    }
    if (trimmed.empty() || trimmed[0] == '#') continue;
    SourceSpan span{0, 0, line_no, 1};
    if (trimmed.rfind("val ", 0) != 0) {
      return ParseError{span, "prelude lines must look like 'val NAME : TYPE'",
                        {}};
    }
    const std::size_t colon = trimmed.find(':');
    if (colon == std::string::npos) {
      return ParseError{span, "missing ':' in prelude line", {}};
    }
    std::string name = trimmed.substr(4, colon - 4);
    while (!name.empty() &&
           std::isspace(static_cast<unsigned char>(name.back()))) {
      name.pop_back();
    }
    if (name.empty()) {
      return ParseError{span, "missing name in prelude line", {}};
    }
    auto type = parse_type(trimmed.substr(colon + 1), supply);
    if (!type.ok()) {
      ParseError err = type.error();
      err.span.line = line_no;
      return err;
    }
    for (const auto& entry : out) {
      if (entry.name == name) {
        return ParseError{span, "duplicate prelude binding '" + name + "'",
                          {}};
      }
    }
    if (!ftv_ordered(type.value()).empty()) {
      return ParseError{span, "prelude type for '" + name + "' is not closed",
                        {}};
    }
    out.push_back(PreludeEntry{std::move(name), type.value()});
  }
  return out;
}

std::vector<PreludeEntry> default_prelude(NameSupply& supply) {
  static constexpr const char* kSource =
      "val id : forall a. a -> a\n"
      "val choose : forall a. a -> a -> a\n"
      "val single : forall a. a -> List a\n"
      "val pair : forall a. forall b. a -> b -> (a, b)\n"
      "val const : forall a. forall b. a -> b -> a\n";
  auto parsed = parse_prelude(kSource, supply);
  return parsed.value();
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

const char* status_text(Report::Status s) {
  switch (s) {
    case Report::Status::Ok: return "ok";
    case Report::Status::TypeError: return "type-error";
    case Report::Status::ParseError: return "parse-error";
  }
  return "?";
}

void collect_literal_vars(const Term& m, std::set<std::string>& out) {
  std::visit(overload{
                 [&](const TmFrozen& t) {
                   if (std::isdigit(static_cast<unsigned char>(t.var[0]))) {
                     out.insert(t.var);
                   }
                 },
                 [&](const TmVar& t) {
                   if (std::isdigit(static_cast<unsigned char>(t.var[0]))) {
                     out.insert(t.var);
                   }
                 },
                 [&](const TmApp& t) {
                   collect_literal_vars(t.fn, out);
                   collect_literal_vars(t.arg, out);
                 },
                 [&](const TmLam& t) { collect_literal_vars(t.body, out); },
                 [&](const TmLamAnn& t) { collect_literal_vars(t.body, out); },
                 [&](const TmLet& t) {
                   collect_literal_vars(t.bound, out);
                   collect_literal_vars(t.body, out);
                 },
                 [&](const TmLetAnn& t) {
                   collect_literal_vars(t.bound, out);
                   collect_literal_vars(t.body, out);
                 },
             },
             m->v);
}

void collect_unbound_vars(const Term& m, std::set<std::string> bound,
                          std::vector<std::pair<std::string, SourceSpan>>& out) {
  std::visit(
      overload{
          [&](const TmFrozen& t) {
            if (!bound.count(t.var)) out.emplace_back(t.var, m->span);
          },
          [&](const TmVar& t) {
            if (!bound.count(t.var)) out.emplace_back(t.var, m->span);
          },
          [&](const TmApp& t) {
            collect_unbound_vars(t.fn, bound, out);
            collect_unbound_vars(t.arg, bound, out);
          },
          [&](const TmLam& t) {
            bound.insert(t.param);
            collect_unbound_vars(t.body, bound, out);
          },
          [&](const TmLamAnn& t) {
            bound.insert(t.param);
            collect_unbound_vars(t.body, bound, out);
          },
          [&](const TmLet& t) {
            collect_unbound_vars(t.bound, bound, out);
            bound.insert(t.var);
            collect_unbound_vars(t.body, bound, out);
          },
          [&](const TmLetAnn& t) {
            collect_unbound_vars(t.bound, bound, out);
            bound.insert(t.var);
            collect_unbound_vars(t.body, bound, out);
          },
      },
      m->v);
}

}  // namespace

Report infer_report(const std::string& source,
                    const std::vector<PreludeEntry>& prelude, bool want_trace,
                    bool want_constraint, NameSupply& supply) {
  Report report;
  auto parsed = parse_term(source, supply);
  if (!parsed.ok()) {
    report.status = Report::Status::ParseError;
    report.error_message = parsed.error().render();
    report.error_span = parsed.error().span;
    return report;
  }
  const Term term = parsed.value();

  TermContext gamma;
  for (const auto& entry : prelude) gamma.bind(entry.name, entry.type);
  std::set<std::string> literals;
  collect_literal_vars(term, literals);
  for (const auto& lit : literals) {
    if (!gamma.contains(lit)) gamma.bind(lit, make_base("Int"));
  }

  TypeContext delta;
  {
    std::set<std::string> bound;
    for (const auto& [name, type] : gamma.entries()) bound.insert(name);
    std::vector<std::pair<std::string, SourceSpan>> unbound;
    collect_unbound_vars(term, bound, unbound);
    if (!unbound.empty()) {
      report.status = Report::Status::TypeError;
      report.error_message = "unbound variable '" + unbound.front().first +
                             "'";
      report.error_span = unbound.front().second;
      return report;
    }
  }
  if (!wf_term(delta, gamma, term)) {
    report.status = Report::Status::TypeError;
    report.error_message =
        "term is not well-formed (type annotation uses variables that are "
        "not in scope)";
    report.error_span = term->span;
    return report;
  }

  TypeVarName goal;
  Constraint constraint =
      build_inference_constraint(delta, gamma, term, supply, &goal);
  if (want_constraint) {
    report.constraint_dump = dump_constraint(constraint);
  }

  RunOptions opts;
  opts.keep_trace = want_trace;
  SolverState initial{{}, {}, {}, constraint};
  auto outcome = run(std::move(initial), supply, opts);
  if (!outcome.ok()) {
    if (auto* internal = std::get_if<InternalError>(&outcome.error())) {
      throw SolverInvariantError(internal->message);
    }
    const TypeError& err = std::get<TypeError>(outcome.error());
    report.status = Report::Status::TypeError;
    report.error_message = err.render();
    report.error_span = err.span;
    if (want_trace) report.trace = std::vector<TraceEntry>{};
    return report;
  }

  const SolverState& final_state = outcome.value().final_state;
  Type result = final_state.subst.apply(make_var(goal), supply);

  // Residual flexible variables display as _1, _2, ... in first-use order.
  PrintOptions popts;
  int next_residual = 1;
  for (const auto& v : ftv_ordered(result)) {
    if (auto r = final_state.theta_env.lookup(v)) {
      const std::string name = "_" + std::to_string(next_residual++);
      popts.var_names[v.uid] = name;
      report.residuals.emplace_back(name, *r);
    }
  }
  report.status = Report::Status::Ok;
  report.type_text = print_type(result, popts);
  if (want_trace) report.trace = outcome.value().trace;
  return report;
}

std::string report_type_line(const Report& report) {
  std::string out = report.type_text;
  std::vector<std::string> mono;
  for (const auto& [name, r] : report.residuals) {
    if (r == Restriction::Mono) mono.push_back(name);
  }
  if (!mono.empty()) {
    out += " where ";
    for (std::size_t i = 0; i < mono.size(); ++i) {
      if (i > 0) out += i + 1 == mono.size() ? " and " : ", ";
      out += mono[i];
    }
    out += mono.size() == 1 ? " is monomorphic" : " are monomorphic";
  }
  return out;
}

std::string report_to_json(const Report& report) {
  nlohmann::json doc;
  doc["status"] = status_text(report.status);
  if (report.status == Report::Status::Ok) {
    doc["type"] = report.type_text;
    nlohmann::json residuals = nlohmann::json::array();
    for (const auto& [name, r] : report.residuals) {
      residuals.push_back({{"name", name},
                           {"restriction", restriction_name(r)}});
    }
    doc["residuals"] = residuals;
  } else {
    nlohmann::json error;
    error["message"] = report.error_message;
    if (report.error_span) {
      error["span"] = {{"start", report.error_span->start},
                       {"end", report.error_span->end},
                       {"line", report.error_span->line},
                       {"column", report.error_span->column}};
    }
    doc["error"] = error;
  }
  if (report.trace) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& entry : *report.trace) {
      trace.push_back({{"step", entry.step},
                       {"rule", rule_name(entry.rule)},
                       {"stack", entry.stack_size},
                       {"measure", entry.measure},
                       {"constraint", entry.constraint_text}});
    }
    doc["trace"] = trace;
  }
  if (report.constraint_dump) {
    doc["constraint"] = *report.constraint_dump;
  }
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_infer(const InferOptions& opts, std::ostream& out, std::ostream& err) {
  NameSupply supply;

  std::vector<PreludeEntry> prelude;
  if (opts.prelude_file.empty()) {
    prelude = default_prelude(supply);
  } else {
    std::ifstream in(opts.prelude_file);
    if (!in) {
      err << "error: cannot open prelude file '" << opts.prelude_file << "'"
          << std::endl;
      return kExitParseError;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto parsed = parse_prelude(buffer.str(), supply);
    if (!parsed.ok()) {
      err << "error in prelude: " << parsed.error().render() << std::endl;
      return kExitParseError;
    }
    prelude = std::move(parsed.value());
  }

  std::string source = opts.expression;
  if (!opts.file.empty()) {
    std::ifstream in(opts.file);
    if (!in) {
      err << "error: cannot open '" << opts.file << "'" << std::endl;
      return kExitParseError;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    source = buffer.str();
  }

  Report report;
  try {
    report = infer_report(source, prelude, opts.trace, opts.constraint,
                          supply);
  } catch (const SolverInvariantError& e) {
    err << "internal error: " << e.what() << std::endl;
    return kExitInternalError;
  }

  if (opts.json) {
    out << report_to_json(report) << std::endl;
  } else {
    if (report.constraint_dump) {
      out << "constraint: " << *report.constraint_dump << std::endl;
    }
    switch (report.status) {
      case Report::Status::Ok:
        out << report_type_line(report) << std::endl;
        break;
      case Report::Status::TypeError:
        err << "type error: " << report.error_message << std::endl;
        break;
      case Report::Status::ParseError:
        err << report.error_message << std::endl;
        break;
    }
    if (report.trace) {
      for (const auto& entry : *report.trace) {
        out << render_trace_entry(entry) << std::endl;
      }
    }
  }

  switch (report.status) {
    case Report::Status::Ok: return kExitOk;
    case Report::Status::TypeError: return kExitTypeError;
    case Report::Status::ParseError: return kExitParseError;
  }
  return kExitInternalError;
}

// ---------------------------------------------------------------------------
// Selftest
// ---------------------------------------------------------------------------

namespace {

struct SelftestStats {
  int generated = 0;
  int typed = 0;
  int determinism_failures = 0;
  int measure_failures = 0;
  int wf_failures = 0;
  int partition_failures = 0;
  int soundness_failures = 0;
  std::vector<std::string> counterexamples;
};

// Shrinks a failing term while the predicate keeps failing.
Term shrink_while_failing(Term failing, const TermContext& gamma,
                          const std::function<bool(const Term&)>& fails) {
  bool progressed = true;
  while (progressed) {
    progressed = false;
    for (const auto& candidate : gen::shrink_term(failing, gamma)) {
      if (fails(candidate)) {
        failing = candidate;
        progressed = true;
        break;
      }
    }
  }
  return failing;
}

}  // namespace

int cmd_selftest(const SelftestOptions& opts, std::ostream& out) {
  NameSupply supply;
  const std::vector<PreludeEntry> prelude = default_prelude(supply);
  TermContext gamma;
  for (const auto& entry : prelude) gamma.bind(entry.name, entry.type);
  TypeContext delta;

  gen::Rng rng(opts.seed);
  SelftestStats stats;

  // Checks one term against all machine invariants; returns false and a
  // reason when something is violated.
  auto machine_check = [&](const Term& term,
                           std::string* reason) -> bool {
    bool partition_ok = true;
    StepHooks hooks;
    hooks.on_partition = [&](const PartitionCall& call) {
      Partition ranked =
          rank_partition(call.xi, call.subst, call.stack_lower,
                         call.stack_upper, supply);
      const bool same = ranked.kept_out.size() == call.result.kept_out.size() &&
                        ranked.lowered.size() == call.result.lowered.size() &&
                        std::equal(ranked.kept_out.begin(),
                                   ranked.kept_out.end(),
                                   call.result.kept_out.begin()) &&
                        std::equal(ranked.lowered.begin(),
                                   ranked.lowered.end(),
                                   call.result.lowered.begin());
      if (!same) partition_ok = false;
    };
    Constraint constraint =
        build_inference_constraint(delta, gamma, term, supply);
    SolverState state{{}, {}, {}, constraint};
    if (!state_wf(state, supply)) {
      *reason = "initial state not well-formed";
      return false;
    }
    Measure last = measure(state);
    const std::int64_t budget = default_step_budget(state);
    std::int64_t steps = 0;
    while (true) {
      if (is_final(state)) {
        if (!matching_rules(state).empty()) {
          *reason = "rule matches a final state";
          return false;
        }
        break;
      }
      const auto rules = matching_rules(state);
      if (rules.size() != 1) {
        *reason = "expected exactly one matching rule, got " +
                  std::to_string(rules.size());
        return false;
      }
      StepOutcome outcome = step(state, supply, &hooks);
      if (outcome.kind == StepOutcome::Kind::Stuck) break;  // type error
      if (outcome.kind == StepOutcome::Kind::Final) break;
      if (++steps > budget) {
        *reason = "step budget exceeded";
        return false;
      }
      Measure next = measure(outcome.next);
      if (!measure_less(next, last)) {
        *reason = std::string("measure did not decrease at ") +
                  rule_name(outcome.rule);
        return false;
      }
      if (!state_wf(outcome.next, supply)) {
        *reason = std::string("well-formedness broken by ") +
                  rule_name(outcome.rule);
        return false;
      }
      last = next;
      state = std::move(outcome.next);
    }
    if (!partition_ok) {
      *reason = "partition and rank_partition disagree";
      return false;
    }
    return true;
  };

  auto soundness_check = [&](const Term& term, std::string* reason,
                             bool* was_typed) -> bool {
    *was_typed = false;
    Result<InferResult, TypeError> result = infer(delta, gamma, term, supply);
    if (!result.ok()) return true;  // rejection is fine here
    *was_typed = true;
    std::map<std::int64_t, Type> grounding;
    for (const auto& [name, r] : result.value().residual.entries()) {
      grounding[name.uid] = make_base("Int");
    }
    Type grounded = apply_type_subst(grounding, result.value().type, supply);
    if (!oracle::check_typing(delta, gamma, term, grounded, supply)) {
      *reason = "oracle rejects inferred type " + print_type(grounded);
      return false;
    }
    return true;
  };

  for (int i = 0; i < opts.count; ++i) {
    Term term = random_term(rng, supply, gamma, 3 + rng.below(18));
    if (!wf_term(delta, gamma, term)) continue;
    ++stats.generated;

    std::string reason;
    if (!machine_check(term, &reason)) {
      if (reason.find("partition") != std::string::npos) {
        ++stats.partition_failures;
      } else if (reason.find("measure") != std::string::npos ||
                 reason.find("budget") != std::string::npos) {
        ++stats.measure_failures;
      } else if (reason.find("well-formed") != std::string::npos) {
        ++stats.wf_failures;
      } else {
        ++stats.determinism_failures;
      }
      Term shrunk = shrink_while_failing(
          term, gamma,
          [&](const Term& t) {
            std::string r;
            return wf_term(delta, gamma, t) && !machine_check(t, &r);
          });
      stats.counterexamples.push_back(reason + ": " + print_term(shrunk));
      continue;
    }

    bool was_typed = false;
    if (!soundness_check(term, &reason, &was_typed)) {
      ++stats.soundness_failures;
      Term shrunk = shrink_while_failing(
          term, gamma,
          [&](const Term& t) {
            std::string r;
            bool typed = false;
            return wf_term(delta, gamma, t) &&
                   !soundness_check(t, &r, &typed);
          });
      stats.counterexamples.push_back(reason + ": " + print_term(shrunk));
      continue;
    }
    if (was_typed) ++stats.typed;
  }

  const int failures = stats.determinism_failures + stats.measure_failures +
                       stats.wf_failures + stats.partition_failures +
                       stats.soundness_failures;
  out << "selftest: " << stats.generated << " terms (" << stats.typed
      << " typed)" << std::endl;
  out << "  determinism failures: " << stats.determinism_failures
      << std::endl;
  out << "  measure failures:     " << stats.measure_failures << std::endl;
  out << "  wf failures:          " << stats.wf_failures << std::endl;
  out << "  partition failures:   " << stats.partition_failures << std::endl;
  out << "  soundness failures:   " << stats.soundness_failures << std::endl;
  for (const auto& cex : stats.counterexamples) {
    out << "  counterexample: " << cex << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace fml::cli

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fml/constraints.hpp"
#include "fml/core.hpp"
#include "fml/gen.hpp"
#include "fml/oracle.hpp"
#include "fml/solver.hpp"
#include "fml/unify.hpp"
#include "fml/surface.hpp"
#include "testutil.hpp"

using namespace fml;
using fml::test::tm;
using fml::test::ty;

namespace {

TermContext prelude(NameSupply& supply) {
  return fml::test::prelude_gamma(supply);
}

Result<InferResult, TypeError> infer_src(const std::string& src,
                                         NameSupply& supply) {
  TermContext gamma = prelude(supply);
  // Numeric literals are ordinary variables; the CLI binds them at Int.
  for (int digit = 0; digit < 10; ++digit) {
    gamma.bind(std::to_string(digit), make_base("Int"));
  }
  TypeContext delta;
  return infer(delta, gamma, fml::test::tm(src, supply), supply);
}

}  // namespace

TEST_CASE("extraction operators") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  TypeVarName b = supply.fresh("b");
  TypeVarName c = supply.fresh("c");

  SUBCASE("delta_of collects forall frames") {
    std::vector<Frame> stack{make_frame(FForall{a}), make_frame(FExists{b})};
    auto delta = delta_of(stack);
    REQUIRE(delta.size() == 1);
    CHECK(delta.vars()[0] == a);
  }
  SUBCASE("xi_of collects exists and let frames bottom-up") {
    std::vector<Frame> stack{
        make_frame(FForall{a}),
        make_frame(FLet{Restriction::Poly, "x", b, ctrue()}),
        make_frame(FExists{c})};
    auto xi = xi_of(stack);
    REQUIRE(xi.size() == 2);
    CHECK(xi.vars()[0] == b);
    CHECK(xi.vars()[1] == c);
  }
  SUBCASE("gamma_of collects def frames") {
    std::vector<Frame> stack{make_frame(FDef{"x", make_base("Int")})};
    auto gamma = gamma_of(stack);
    auto t = gamma.lookup("x");
    REQUIRE(t.has_value());
    CHECK(alpha_equal(*t, make_base("Int")));
  }
}

TEST_CASE("partition") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  TypeVarName b = supply.fresh("b");
  TypeVarName c = supply.fresh("c");

  SUBCASE("raw definition on a non-idempotent substitution") {
    // theta = [a |-> a, b |-> a, c |-> b], Xi = {a, b}
    Subst subst;
    subst.bind(a, make_var(a));
    subst.bind(b, make_var(a));
    subst.bind(c, make_var(b));
    RestrictionContext theta;
    theta.bind(a, Restriction::Poly);
    theta.bind(b, Restriction::Poly);
    theta.bind(c, Restriction::Poly);
    Partition p = partition({a, b}, subst, theta, supply);
    REQUIRE(p.kept_out.size() == 1);
    REQUIRE(p.lowered.size() == 1);
    CHECK(p.kept_out[0] == a);
    CHECK(p.lowered[0] == b);
  }
  SUBCASE("nothing below depends on the variable") {
    Subst subst;
    subst.bind(a, make_var(a));
    RestrictionContext theta;
    theta.bind(a, Restriction::Poly);
    Partition p = partition({a}, subst, theta, supply);
    CHECK(p.kept_out.size() == 1);
    CHECK(p.lowered.empty());
  }
  SUBCASE("a variable referenced from below is lowered") {
    // theta = [a |-> a, b |-> b, c |-> a -> a], Xi = {a, b}
    Subst subst;
    subst.bind(a, make_var(a));
    subst.bind(b, make_var(b));
    subst.bind(c, make_arrow(make_var(a), make_var(a)));
    RestrictionContext theta;
    theta.bind(a, Restriction::Poly);
    theta.bind(b, Restriction::Poly);
    theta.bind(c, Restriction::Poly);
    Partition p = partition({a, b}, subst, theta, supply);
    REQUIRE(p.kept_out.size() == 1);
    REQUIRE(p.lowered.size() == 1);
    CHECK(p.kept_out[0] == b);
    CHECK(p.lowered[0] == a);
  }
}

TEST_CASE("rank_partition") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  TypeVarName b = supply.fresh("b");
  TypeVarName c = supply.fresh("c");

  SUBCASE("identity substitution keeps everything") {
    Subst subst;
    subst.bind(c, make_var(c));
    subst.bind(a, make_var(a));
    subst.bind(b, make_var(b));
    std::vector<Frame> lower{make_frame(FExists{c}),
                             make_frame(FDef{"x", make_base("Int")})};
    std::vector<Frame> upper{make_frame(FExists{a}), make_frame(FExists{b})};
    Partition p = rank_partition({a, b}, subst, lower, upper, supply);
    CHECK(p.kept_out.size() == 2);
    CHECK(p.lowered.empty());
  }
  SUBCASE("eliminated variables stay out, referenced ones lower") {
    // theta = [a |-> a, b |-> a, c |-> a]: b and c eliminated, a kept; the
    // lower frame binds c, so a (referenced from c's image) lowers and b
    // stays out.
    Subst subst;
    subst.bind(a, make_var(a));
    subst.bind(b, make_var(a));
    subst.bind(c, make_var(a));
    RestrictionContext theta;
    theta.bind(c, Restriction::Poly);
    theta.bind(a, Restriction::Poly);
    theta.bind(b, Restriction::Poly);
    std::vector<Frame> lower{make_frame(FExists{c})};
    std::vector<Frame> upper{make_frame(FExists{a}), make_frame(FExists{b})};
    Partition ranked = rank_partition({a, b}, subst, lower, upper, supply);
    REQUIRE(ranked.lowered.size() == 1);
    CHECK(ranked.lowered[0] == a);
    REQUIRE(ranked.kept_out.size() == 1);
    CHECK(ranked.kept_out[0] == b);
    // And it agrees with partition on the same inputs.
    Partition plain = partition({a, b}, subst, theta, supply);
    CHECK(plain.lowered == ranked.lowered);
    CHECK(plain.kept_out == ranked.kept_out);
  }
  SUBCASE("a variable eliminated by theta has rank infinity") {
    Subst subst;
    subst.bind(a, make_base("Int"));
    std::vector<Frame> lower{make_frame(FDef{"x", make_base("Int")})};
    std::vector<Frame> upper{make_frame(FExists{a})};
    Partition p = rank_partition({a}, subst, lower, upper, supply);
    CHECK(p.kept_out.size() == 1);
    CHECK(p.lowered.empty());
  }
}

TEST_CASE("constraint size and inst count") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  CHECK(constraint_size(ctrue()) == 0);
  CHECK(constraint_size(make_constraint(CMono{a})) == 1);
  CHECK(constraint_size(make_constraint(
            CEq{make_var(a), make_var(a)})) == 1);
  CHECK(constraint_size(make_constraint(CFreeze{"x", make_var(a)})) == 2);
  CHECK(constraint_size(make_constraint(CInst{"x", make_var(a)})) == 2);
  CHECK(constraint_size(make_constraint(CExists{a, ctrue()})) == 1);
  CHECK(constraint_size(make_constraint(CForall{a, ctrue()})) == 1);
  CHECK(constraint_size(make_constraint(
            CDef{"x", make_var(a), ctrue()})) == 1);
  Constraint inst = make_constraint(CInst{"x", make_var(a)});
  CHECK(constraint_size(make_constraint(CAnd{inst, ctrue()})) == 3);
  CHECK(constraint_size(make_constraint(
            CLetPoly{"x", a, inst, inst})) == 3 + 2 + 2);
  CHECK(inst_count(make_constraint(CLetPoly{"x", a, inst, inst})) == 2);
}

TEST_CASE("measure of a final state") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  TypeVarName b = supply.fresh("b");
  SolverState s;
  s.stack = {make_frame(FForall{a}), make_frame(FExists{b})};
  s.theta_env.bind(b, Restriction::Poly);
  s.subst.bind(b, make_var(b));
  s.current = ctrue();
  REQUIRE(is_final(s));
  Measure m = measure(s);
  CHECK(m[0] == 0);
  CHECK(m[1] == 2);  // |forall a. exists b. true|
  CHECK(m[2] == 0);
  CHECK(m[3] == 1);  // topmost exists frame index
}

TEST_CASE("step: S-Inst freshens the quantifier prefix") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  Type scheme = ty("forall c. c -> c", supply);
  SolverState s;
  s.stack = {make_frame(FExists{a}), make_frame(FDef{"x", scheme})};
  s.theta_env.bind(a, Restriction::Poly);
  s.subst.bind(a, make_var(a));
  s.current = make_constraint(CInst{"x", make_var(a)});
  REQUIRE(state_wf(s, supply));

  StepOutcome out = step(s, supply);
  REQUIRE(out.kind == StepOutcome::Kind::Stepped);
  CHECK(out.rule == Rule::Inst);
  const auto* ex = constraint_as<CExists>(out.next.current);
  REQUIRE(ex != nullptr);
  // The binder is fresh: distinct from the scheme's own binder.
  CHECK(ex->binder != as_forall(scheme)->binder);
  const auto* eq = constraint_as<CEq>(ex->body);
  REQUIRE(eq != nullptr);
  CHECK(alpha_equal(eq->lhs, make_arrow(make_var(ex->binder),
                                        make_var(ex->binder))));
}

TEST_CASE("step: rigid escape is stuck") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  TypeVarName b = supply.fresh("b");
  // Stack: [] :: box/\true :: exists b :: forall a  with theta(b) = a -> a.
  // Popping forall a must report the escape.
  SolverState s;
  s.stack = {make_frame(FConj{ctrue()}), make_frame(FExists{b}),
             make_frame(FForall{a})};
  s.theta_env.bind(b, Restriction::Poly);
  s.subst.bind(b, make_arrow(make_var(a), make_var(a)));
  s.current = ctrue();
  StepOutcome out = step(s, supply);
  REQUIRE(out.kind == StepOutcome::Kind::Stuck);
  REQUIRE(out.err.has_value());
  CHECK(std::holds_alternative<TypeError::RigidEscape>(out.err->v));
}

TEST_CASE("step: conj pop") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  Constraint rest = make_constraint(CMono{a});
  SolverState s;
  s.stack = {make_frame(FExists{a}), make_frame(FConj{rest})};
  s.theta_env.bind(a, Restriction::Poly);
  s.subst.bind(a, make_var(a));
  s.current = ctrue();
  StepOutcome out = step(s, supply);
  REQUIRE(out.kind == StepOutcome::Kind::Stepped);
  CHECK(out.rule == Rule::ConjPop);
  CHECK(out.next.current == rest);
  CHECK(out.next.stack.size() == 1);
}

TEST_CASE("state_wf") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");

  SUBCASE("initial inference state is well-formed") {
    TermContext gamma = prelude(supply);
    TypeContext delta;
    Constraint c = build_inference_constraint(
        delta, gamma, tm("id ~id", supply), supply);
    SolverState s{{}, {}, {}, c};
    CHECK(state_wf(s, supply));
  }
  SUBCASE("duplicate binders are rejected") {
    SolverState s;
    s.stack = {make_frame(FExists{a}), make_frame(FExists{a})};
    s.theta_env.bind(a, Restriction::Poly);
    s.subst.bind(a, make_var(a));
    s.current = ctrue();
    CHECK_FALSE(state_wf(s, supply));
  }
  SUBCASE("def annotations must have monomorphic flexible variables") {
    SolverState s;
    s.stack = {make_frame(FExists{a}),
               make_frame(FDef{"x", make_arrow(make_var(a), make_var(a))})};
    s.theta_env.bind(a, Restriction::Poly);
    s.subst.bind(a, make_var(a));
    s.current = ctrue();
    CHECK_FALSE(state_wf(s, supply));
    // Demoting the variable fixes it.
    s.theta_env.set(a, Restriction::Mono);
    CHECK(state_wf(s, supply));
  }
}

TEST_CASE("reify_state") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");

  SUBCASE("empty state") {
    SolverState s{{}, {}, {}, ctrue()};
    Constraint c = reify_state(s);
    const auto* conj = constraint_as<CAnd>(c);
    REQUIRE(conj != nullptr);
    CHECK(constraint_as<CTrue>(conj->lhs) != nullptr);
    CHECK(constraint_as<CTrue>(conj->rhs) != nullptr);
  }
  SUBCASE("mono entries and equations in context order") {
    SolverState s;
    s.stack = {make_frame(FExists{a})};
    s.theta_env.bind(a, Restriction::Mono);
    s.subst.bind(a, make_var(a));
    s.current = ctrue();
    Constraint c = reify_state(s);
    // exists a. (true /\ (mono(a) /\ a = a))
    const auto* ex = constraint_as<CExists>(c);
    REQUIRE(ex != nullptr);
    const auto* outer = constraint_as<CAnd>(ex->body);
    REQUIRE(outer != nullptr);
    CHECK(constraint_as<CTrue>(outer->lhs) != nullptr);
    const auto* u = constraint_as<CAnd>(outer->rhs);
    REQUIRE(u != nullptr);
    CHECK(constraint_as<CMono>(u->lhs) != nullptr);
    CHECK(constraint_as<CEq>(u->rhs) != nullptr);
  }
  SUBCASE("plugging order for conjunction frames") {
    TypeVarName b = supply.fresh("b");
    Constraint c2 = make_constraint(CMono{b});
    Constraint c1 = make_constraint(CFreeze{"x", make_var(b)});
    SolverState s;
    s.stack = {make_frame(FForall{a}), make_frame(FConj{c2})};
    s.current = c1;
    Constraint reified = reify_state(s);
    // forall a. ((C1 /\ U) /\ C2)
    const auto* all = constraint_as<CForall>(reified);
    REQUIRE(all != nullptr);
    const auto* outer = constraint_as<CAnd>(all->body);
    REQUIRE(outer != nullptr);
    CHECK(outer->rhs == c2);
    const auto* inner = constraint_as<CAnd>(outer->lhs);
    REQUIRE(inner != nullptr);
    CHECK(inner->lhs == c1);
  }
}

TEST_CASE("run: classic rejections") {
  NameSupply supply;
  SUBCASE("frozen id applied to an argument") {
    auto r = infer_src("~id 3", supply);
    REQUIRE_FALSE(r.ok());
    const auto* unify_err = std::get_if<TypeError::Unify>(&r.error().v);
    REQUIRE(unify_err != nullptr);
    CHECK(std::holds_alternative<QuantifierMismatch>(unify_err->err.v));
  }
  SUBCASE("self application without annotation") {
    auto r = infer_src("fun f -> f f", supply);
    CHECK_FALSE(r.ok());
  }
}

TEST_CASE("run: identity checks against a flexible goal") {
  NameSupply supply;
  auto r = infer_src("fun x -> x", supply);
  REQUIRE(r.ok());
  // theta(a) = b -> b with b flexible.
  const auto* arrow = as_ctor(r.value().type);
  REQUIRE(arrow != nullptr);
  const auto* dom = as_var(arrow->args[0]);
  const auto* cod = as_var(arrow->args[1]);
  REQUIRE(dom != nullptr);
  REQUIRE(cod != nullptr);
  CHECK(dom->name == cod->name);
  CHECK(r.value().residual.contains(dom->name));
}

TEST_CASE("infer: worked examples") {
  NameSupply supply;
  SUBCASE("id ~id") {
    auto r = infer_src("id ~id", supply);
    REQUIRE(r.ok());
    CHECK(alpha_equal(r.value().type, ty("forall b. b -> b", supply)));
    CHECK(r.value().residual.empty());
  }
  SUBCASE("explicit generalisation") {
    auto r = infer_src("let f = fun x -> x in ~f", supply);
    REQUIRE(r.ok());
    CHECK(alpha_equal(r.value().type, ty("forall a. a -> a", supply)));
  }
  SUBCASE("frozen choose under single") {
    auto r = infer_src(
        "let f2 = fun (x : Unit) -> single ~choose in ~f2", supply);
    REQUIRE(r.ok());
    CHECK(alpha_equal(
        r.value().type,
        ty("Unit -> List (forall a. a -> a -> a)", supply)));
  }
  SUBCASE("value restriction keeps the residual monomorphic") {
    auto r = infer_src("let x = id id in x", supply);
    REQUIRE(r.ok());
    const auto* arrow = as_ctor(r.value().type);
    REQUIRE(arrow != nullptr);
    const auto* dom = as_var(arrow->args[0]);
    REQUIRE(dom != nullptr);
    CHECK(r.value().residual.lookup(dom->name) == Restriction::Mono);
  }
}

TEST_CASE("infer: alpha invariance under binder renaming") {
  NameSupply supply;
  auto r1 = infer_src("let f = fun x -> x in pair (f 3) ~f", supply);
  auto r2 = infer_src("let g = fun y -> y in pair (g 3) ~g", supply);
  REQUIRE(r1.ok());
  REQUIRE(r2.ok());
  CHECK(alpha_equal(r1.value().type, r2.value().type));
}

TEST_CASE("run: trace and measure strictly decrease") {
  NameSupply supply;
  TermContext gamma = prelude(supply);
  TypeContext delta;
  Constraint c = build_inference_constraint(
      delta, gamma, tm("let f = fun x -> x in f ~id", supply), supply);
  RunOptions opts;
  opts.keep_trace = true;
  auto r = run(SolverState{{}, {}, {}, c}, supply, opts);
  REQUIRE(r.ok());
  const auto& trace = r.value().trace;
  REQUIRE(trace.size() > 3);
  for (std::size_t i = 1; i < trace.size(); ++i) {
    CHECK(measure_less(trace[i].measure, trace[i - 1].measure));
  }
  // Trace entries render in the documented line format.
  CHECK(render_trace_entry(trace[0]).rfind("step=1 rule=", 0) == 0);
}

TEST_CASE("numeric literal variables type as Int through the prelude") {
  NameSupply supply;
  TermContext gamma = prelude(supply);
  gamma.bind("3", make_base("Int"));
  TypeContext delta;
  auto r = infer(delta, gamma, tm("id 3", supply), supply);
  REQUIRE(r.ok());
  CHECK(alpha_equal(r.value().type, make_base("Int")));
}

TEST_CASE("run reports internal errors on corrupted states") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  TypeVarName b = supply.fresh("b");
  // A non-idempotent substitution violates state well-formedness.
  SolverState s;
  s.stack = {make_frame(FExists{a}), make_frame(FExists{b})};
  s.theta_env.bind(a, Restriction::Poly);
  s.theta_env.bind(b, Restriction::Poly);
  s.subst.bind(a, make_var(b));
  s.subst.bind(b, make_base("Int"));
  s.current = make_constraint(CEq{make_var(a), make_var(a)});
  auto r = run(s, supply);
  REQUIRE_FALSE(r.ok());
  CHECK(std::holds_alternative<InternalError>(r.error()));
}

TEST_CASE("infer results subsume known valid types via residual matching") {
  NameSupply supply;
  struct Case {
    const char* term;
    const char* type;
    bool expect;
  };
  const Case cases[] = {
      {"id", "Int -> Int", true},
      {"fun x -> x", "Bool -> Bool", true},
      {"let x = id id in x", "Bool -> Bool", true},
      {"let x = id id in x", "forall d. d -> d", false},
      {"fun (f : forall a. a -> a) -> f f",
       "(forall a. a -> a) -> (forall b. b -> b) -> forall b. b -> b",
       true},
  };
  for (const auto& c : cases) {
    auto r = infer_src(c.term, supply);
    REQUIRE(r.ok());
    // Quantify the residual variables and match the demanded type against
    // the result; images must respect the recorded restrictions.
    Type scheme = r.value().type;
    std::vector<std::pair<TypeVarName, Restriction>> residuals;
    for (const auto& [name, restriction] : r.value().residual.entries()) {
      residuals.emplace_back(name, restriction);
    }
    for (auto it = residuals.rbegin(); it != residuals.rend(); ++it) {
      scheme = make_forall(it->first, scheme);
    }
    auto inst = fml::oracle::match_instance(scheme,
                                            fml::test::ty(c.type, supply));
    bool ok = inst.has_value();
    if (ok) {
      for (const auto& [name, restriction] : residuals) {
        auto image = inst->lookup(name);
        if (restriction == Restriction::Mono && image &&
            !is_monotype(*image)) {
          ok = false;
        }
      }
    }
    CHECK_MESSAGE(ok == c.expect, c.term << " : " << c.type);
  }
}

TEST_CASE("step: S-Mono demotes and checks the instantiation") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  TypeVarName b = supply.fresh("b");

  SUBCASE("success demotes the free variables of theta(a)") {
    // exists a, b. (a = b -> b /\ mono(a))
    Constraint c = make_constraint(CExists{
        a, make_constraint(CExists{
               b, make_constraint(CAnd{
                      make_constraint(CEq{
                          make_var(a),
                          make_arrow(make_var(b), make_var(b))}),
                      make_constraint(CMono{a})})})});
    auto r = run(SolverState{{}, {}, {}, c}, supply);
    REQUIRE(r.ok());
    const auto& final_state = r.value().final_state;
    for (const auto& [name, restriction] : final_state.theta_env.entries()) {
      if (name == b) CHECK(restriction == Restriction::Mono);
    }
  }
  SUBCASE("failure when theta(a) cannot become monomorphic") {
    NameSupply s2;
    TypeVarName a2 = s2.fresh("a");
    TypeVarName c2 = s2.fresh("c");
    // exists a. (a = (forall c. c -> c) -> Int /\ mono(a))
    Type poly_arrow = make_arrow(
        make_forall(c2, make_arrow(make_var(c2), make_var(c2))),
        make_base("Int"));
    Constraint c = make_constraint(CExists{
        a2, make_constraint(
                CAnd{make_constraint(CEq{make_var(a2), poly_arrow}),
                     make_constraint(CMono{a2})})});
    auto r = run(SolverState{{}, {}, {}, c}, s2);
    REQUIRE_FALSE(r.ok());
    const auto* te = std::get_if<TypeError>(&r.error());
    REQUIRE(te != nullptr);
    CHECK(std::holds_alternative<TypeError::MonoFailure>(te->v));
  }
}

TEST_CASE("reified mid-run states solve to the same verdict") {
  // Stop a run midway, reify the state as a constraint, and solve that
  // constraint from scratch: satisfiability must agree with the original
  // run. The reified unification context reintroduces mono constraints, so
  // this also drives S-Mono.
  NameSupply supply;
  gen::Rng rng(808);
  TermContext gamma = prelude(supply);
  TypeContext delta;
  int compared = 0;
  for (int i = 0; i < 120; ++i) {
    Term m = gen::random_term(rng, supply, gamma, 3 + rng.below(12));
    if (!wf_term(delta, gamma, m)) continue;
    Constraint c = build_inference_constraint(delta, gamma, m, supply);
    SolverState state{{}, {}, {}, c};
    const bool original_ok = run(state, supply).ok();

    // Walk a random number of steps, then reify.
    int steps = rng.below(20);
    for (int k = 0; k < steps; ++k) {
      StepOutcome out = step(state, supply);
      if (out.kind != StepOutcome::Kind::Stepped) break;
      state = std::move(out.next);
    }
    Constraint reified = reify_state(state);
    const bool replay_ok =
        run(SolverState{{}, {}, {}, reified}, supply).ok();
    CHECK_MESSAGE(replay_ok == original_ok,
                  "reify verdict differs for " << print_term(m) << " after "
                                               << steps << " steps");
    ++compared;
  }
  CHECK(compared > 50);
}

TEST_CASE("unify arity mismatches on hand-built constructors") {
  NameSupply supply;
  RestrictionContext theta;
  TypeContext delta;
  Type one = make_ctor(kListCtor, {make_base("Int")});
  Type two = make_ctor(kListCtor, {make_base("Int"), make_base("Int")});
  auto r = unify(delta, theta, one, two, supply);
  REQUIRE_FALSE(r.ok());
  CHECK(std::holds_alternative<ArityMismatch>(r.error().v));
}

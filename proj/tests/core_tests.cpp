#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "fml/core.hpp"
#include "fml/gen.hpp"
#include "fml/surface.hpp"
#include "testutil.hpp"

using namespace fml;
using fml::test::tm;
using fml::test::ty;

namespace {

// Independent free-variable oracle: plain recursive traversal collecting
// free occurrences into a set.
void naive_ftv(const Type& t, std::set<std::int64_t> bound,
               std::set<std::int64_t>& out) {
  if (const auto* v = as_var(t)) {
    if (!bound.count(v->name.uid)) out.insert(v->name.uid);
  } else if (const auto* c = as_ctor(t)) {
    for (const auto& arg : c->args) naive_ftv(arg, bound, out);
  } else if (const auto* f = as_forall(t)) {
    bound.insert(f->binder.uid);
    naive_ftv(f->body, bound, out);
  }
}

}  // namespace

TEST_CASE("ftv_ordered: bound variables excluded") {
  NameSupply supply;
  Type t = ty("forall a. a -> b", supply);
  auto vars = ftv_ordered(t);
  REQUIRE(vars.size() == 1);
  CHECK(vars[0].text == "b");
}

TEST_CASE("ftv_ordered: first-appearance order") {
  NameSupply supply;
  Type t = ty("b -> a -> b", supply);
  auto vars = ftv_ordered(t);
  REQUIRE(vars.size() == 2);
  CHECK(vars[0].text == "b");
  CHECK(vars[1].text == "a");
}

TEST_CASE("ftv_ordered agrees with a naive traversal") {
  NameSupply supply;
  // c -> (forall a. a -> c) -> d
  Type t = ty("c -> (forall a. a -> c) -> d", supply);
  auto vars = ftv_ordered(t);
  REQUIRE(vars.size() == 2);
  CHECK(vars[0].text == "c");
  CHECK(vars[1].text == "d");

  std::set<std::int64_t> expect;
  naive_ftv(t, {}, expect);
  std::set<std::int64_t> got;
  for (const auto& v : vars) got.insert(v.uid);
  CHECK(got == expect);
}

TEST_CASE("ftv_ordered matches naive oracle on random types") {
  NameSupply supply;
  gen::Rng rng(7);
  TypeContext rigid;
  rigid.push(supply.fresh("r1"));
  rigid.push(supply.fresh("r2"));
  for (int i = 0; i < 200; ++i) {
    gen::TypeGenOptions opts;
    opts.max_depth = 6;
    Type t = gen::random_type(rng, supply, rigid, opts);
    std::set<std::int64_t> expect;
    naive_ftv(t, {}, expect);
    auto vars = ftv_ordered(t);
    std::set<std::int64_t> got;
    for (const auto& v : vars) got.insert(v.uid);
    CHECK(got == expect);
    CHECK(vars.size() == got.size());  // no duplicates
  }
}

TEST_CASE("alpha_equal: renaming of bound variables") {
  NameSupply supply;
  CHECK(alpha_equal(ty("forall a. a -> a", supply),
                    ty("forall b. b -> b", supply)));
}

TEST_CASE("alpha_equal: quantifier order matters") {
  NameSupply supply;
  CHECK_FALSE(alpha_equal(ty("forall a. forall b. a -> b", supply),
                          ty("forall b. forall a. a -> b", supply)));
}

TEST_CASE("alpha_equal: superfluous quantifiers matter") {
  NameSupply supply;
  CHECK_FALSE(alpha_equal(ty("forall a. forall b. a -> b", supply),
                          ty("forall a. forall b. forall c. a -> b", supply)));
}

TEST_CASE("alpha_equal is an equivalence relation on random types") {
  NameSupply supply;
  gen::Rng rng(11);
  TypeContext rigid;
  std::vector<Type> types;
  for (int i = 0; i < 60; ++i) {
    gen::TypeGenOptions opts;
    opts.max_depth = 6;
    types.push_back(gen::random_type(rng, supply, rigid, opts));
  }
  for (const auto& t : types) CHECK(alpha_equal(t, t));
  for (std::size_t i = 0; i < types.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      CHECK(alpha_equal(types[i], types[j]) ==
            alpha_equal(types[j], types[i]));
    }
  }
  // Transitivity over the (sparse) equal pairs.
  for (std::size_t i = 0; i < types.size(); ++i) {
    for (std::size_t j = 0; j < types.size(); ++j) {
      for (std::size_t k = 0; k < types.size(); ++k) {
        if (alpha_equal(types[i], types[j]) &&
            alpha_equal(types[j], types[k])) {
          CHECK(alpha_equal(types[i], types[k]));
        }
      }
    }
  }
}

TEST_CASE("classify_value") {
  NameSupply supply;
  CHECK(classify_value(tm("fun x -> x", supply)) ==
        ValueClass::GuardedValue);
  CHECK(classify_value(tm("~id", supply)) == ValueClass::ValueOnly);
  CHECK(classify_value(tm("id id", supply)) == ValueClass::NonValue);
  // let with a frozen body is a value but not guarded.
  CHECK(classify_value(tm("let x = fun y -> y in ~x", supply)) ==
        ValueClass::ValueOnly);
  // let whose bound term is an application is not a value.
  CHECK(classify_value(tm("let x = id id in x", supply)) ==
        ValueClass::NonValue);
  // guarded values are values
  for (const char* src : {"x", "fun x -> x", "let y = x in y"}) {
    if (classify_value(tm(src, supply)) == ValueClass::GuardedValue) {
      CHECK(classify_value(tm(src, supply)) != ValueClass::NonValue);
    }
  }
}

TEST_CASE("split") {
  NameSupply supply;
  SUBCASE("maximal prefix for guarded values") {
    auto [prefix, body] = split(ty("forall a. a -> a", supply),
                                tm("fun x -> x", supply));
    CHECK(prefix.size() == 1);
    CHECK(print_type(body) == "a -> a");
  }
  SUBCASE("empty prefix for non guarded values") {
    auto [prefix, body] = split(ty("forall a. a -> a", supply),
                                tm("id id", supply));
    CHECK(prefix.empty());
    CHECK(print_type(body) == "forall a. a -> a");
  }
  SUBCASE("no quantifiers") {
    auto [prefix, body] =
        split(ty("Int -> Int", supply), tm("fun x -> x", supply));
    CHECK(prefix.empty());
    CHECK(print_type(body) == "Int -> Int");
  }
}

TEST_CASE("wf_type") {
  NameSupply supply;
  TypeVarName a = supply.fresh("a");
  TypeVarName b = supply.fresh("b");

  SUBCASE("rigid variables are monomorphic") {
    TypeContext delta;
    delta.push(a);
    RestrictionContext theta;
    CHECK(wf_type(delta, theta, Restriction::Mono, make_var(a)));
    CHECK(wf_type(delta, theta, Restriction::Poly, make_var(a)));
  }
  SUBCASE("a poly flexible variable is not wf at mono") {
    TypeContext delta;
    RestrictionContext theta;
    theta.bind(b, Restriction::Poly);
    CHECK_FALSE(wf_type(delta, theta, Restriction::Mono, make_var(b)));
    CHECK(wf_type(delta, theta, Restriction::Poly, make_var(b)));
  }
  SUBCASE("closed polytype at poly") {
    TypeContext delta;
    RestrictionContext theta;
    CHECK(wf_type(delta, theta, Restriction::Poly,
                  ty("forall a. a -> a", supply)));
    CHECK_FALSE(wf_type(delta, theta, Restriction::Mono,
                        ty("forall a. a -> a", supply)));
  }
  SUBCASE("unknown variables are rejected, not thrown") {
    TypeContext delta;
    RestrictionContext theta;
    CHECK_FALSE(wf_type(delta, theta, Restriction::Poly, make_var(a)));
  }
  SUBCASE("mono subsumes into poly") {
    NameSupply s2;
    gen::Rng rng(3);
    TypeContext delta;
    delta.push(a);
    RestrictionContext theta;
    theta.bind(b, Restriction::Mono);
    TypeContext scope;
    scope.push(a);
    scope.push(b);
    for (int i = 0; i < 100; ++i) {
      gen::TypeGenOptions opts;
      opts.max_depth = 5;
      Type t = gen::random_type(rng, s2, scope, opts);
      if (wf_type(delta, theta, Restriction::Mono, t)) {
        CHECK(wf_type(delta, theta, Restriction::Poly, t));
      }
    }
  }
}

TEST_CASE("wf_term") {
  NameSupply supply;
  TypeContext delta;

  SUBCASE("variable in gamma") {
    TermContext gamma;
    gamma.bind("id", ty("forall a. a -> a", supply));
    CHECK(wf_term(delta, gamma, tm("id", supply)));
  }
  SUBCASE("unbound variable") {
    TermContext gamma;
    CHECK_FALSE(wf_term(delta, gamma, tm("x", supply)));
  }
  SUBCASE("annotation variable unbound") {
    TermContext gamma;
    CHECK_FALSE(wf_term(delta, gamma, tm("fun (x : a) -> x", supply)));
  }
  SUBCASE("let annotation quantifiers are in scope in a guarded value") {
    TermContext gamma;
    Term m = tm(
        "let (f : forall a. a -> a) = (fun (x : a) -> x) in f",
        supply);
    CHECK(wf_term(delta, gamma, m));
  }
  SUBCASE("let annotation quantifiers are not in scope otherwise") {
    TermContext gamma;
    gamma.bind("id", ty("forall a. a -> a", supply));
    // id id is not a guarded value, so `a` is out of scope in the bound term.
    Term m = tm(
        "let (f : forall a. a -> a) = (fun (x : a) -> x) (id id) in f",
        supply);
    CHECK_FALSE(wf_term(delta, gamma, m));
  }
}

TEST_CASE("apply_type_subst") {
  NameSupply supply;

  SUBCASE("simple substitution") {
    Type t = ty("a -> a", supply);
    auto vars = ftv_ordered(t);
    REQUIRE(vars.size() == 1);
    std::map<std::int64_t, Type> map{{vars[0].uid, make_base("Int")}};
    CHECK(print_type(apply_type_subst(map, t, supply)) == "Int -> Int");
  }
  SUBCASE("identity") {
    Type t = ty("forall a. a -> b", supply);
    CHECK(apply_type_subst({}, t, supply) == t);
  }
  SUBCASE("capture avoidance") {
    // [a |-> b], forall b. b -> a  —  with the bound b sharing the free
    // image's uid, forcing a rename.
    TypeVarName a = supply.fresh("a");
    TypeVarName b = supply.fresh("b");
    Type t = make_forall(b, make_arrow(make_var(b), make_var(a)));
    std::map<std::int64_t, Type> map{{a.uid, make_var(b)}};
    Type result = apply_type_subst(map, t, supply);
    // The binder must have been renamed: result is forall b'. b' -> b.
    const auto* f = as_forall(result);
    REQUIRE(f != nullptr);
    const auto* arrow = as_ctor(f->body);
    REQUIRE(arrow != nullptr);
    const auto* dom = as_var(arrow->args[0]);
    const auto* cod = as_var(arrow->args[1]);
    REQUIRE(dom != nullptr);
    REQUIRE(cod != nullptr);
    CHECK(dom->name == f->binder);
    CHECK(cod->name == b);
    CHECK(f->binder != b);
  }
  SUBCASE("disjoint maps commute") {
    NameSupply s2;
    gen::Rng rng(5);
    TypeVarName a = s2.fresh("a");
    TypeVarName b = s2.fresh("b");
    TypeContext scope;
    scope.push(a);
    scope.push(b);
    for (int i = 0; i < 50; ++i) {
      gen::TypeGenOptions opts;
      opts.max_depth = 4;
      Type t = gen::random_type(rng, s2, scope, opts);
      Type image_a = make_base("Int");
      Type image_b = make_arrow(make_base("Bool"), make_base("Bool"));
      std::map<std::int64_t, Type> ma{{a.uid, image_a}};
      std::map<std::int64_t, Type> mb{{b.uid, image_b}};
      std::map<std::int64_t, Type> both{{a.uid, image_a}, {b.uid, image_b}};
      Type seq1 = apply_type_subst(mb, apply_type_subst(ma, t, s2), s2);
      Type seq2 = apply_type_subst(ma, apply_type_subst(mb, t, s2), s2);
      Type sim = apply_type_subst(both, t, s2);
      CHECK(alpha_equal(seq1, sim));
      CHECK(alpha_equal(seq2, sim));
    }
  }
}

TEST_CASE("uniquify_binders renames shadowing binders") {
  NameSupply supply;
  TermContext gamma;
  gamma.bind("id", ty("forall a. a -> a", supply));
  Term m = tm("fun x -> let x = id x in x", supply);
  Term u = uniquify_binders(m, gamma, supply);
  const auto* lam = std::get_if<TmLam>(&u->v);
  REQUIRE(lam != nullptr);
  const auto* let = std::get_if<TmLet>(&lam->body->v);
  REQUIRE(let != nullptr);
  CHECK(lam->param != let->var);
  // The let body references the let-bound variable.
  const auto* body_var = std::get_if<TmVar>(&let->body->v);
  REQUIRE(body_var != nullptr);
  CHECK(body_var->var == let->var);
  // The bound term references the lambda parameter.
  const auto* app = std::get_if<TmApp>(&let->bound->v);
  REQUIRE(app != nullptr);
  const auto* arg_var = std::get_if<TmVar>(&app->arg->v);
  REQUIRE(arg_var != nullptr);
  CHECK(arg_var->var == lam->param);
}

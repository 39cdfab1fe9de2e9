#include "fml/oracle.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "fml/surface.hpp"

namespace fml::oracle {

namespace {

template <class... Ts>
struct overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overload(Ts...) -> overload<Ts...>;

}  // namespace

// ---------------------------------------------------------------------------
// Instantiation
// ---------------------------------------------------------------------------

bool Instantiation::contains(const TypeVarName& v) const {
  return lookup(v).has_value();
}

std::optional<Type> Instantiation::lookup(const TypeVarName& v) const {
  // Later bindings shadow earlier ones, matching apply().
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->first == v) return it->second;
  }
  return std::nullopt;
}

void Instantiation::bind(TypeVarName v, Type t) {
  entries_.emplace_back(std::move(v), std::move(t));
}

Instantiation Instantiation::extended(TypeVarName v, Type t) const {
  Instantiation out = *this;
  out.bind(std::move(v), std::move(t));
  return out;
}

Type Instantiation::apply(const Type& t, NameSupply& supply) const {
  if (entries_.empty()) return t;
  std::map<std::int64_t, Type> map;
  for (const auto& [name, ty] : entries_) map[name.uid] = ty;
  return apply_type_subst(map, t, supply);
}

// ---------------------------------------------------------------------------
// Instantiation judgement
// ---------------------------------------------------------------------------

namespace {

bool type_closed_over(const Type& t, const TypeContext& ctx) {
  for (const auto& v : ftv_ordered(t)) {
    if (!ctx.contains(v)) return false;
  }
  return true;
}

}  // namespace

bool check_instantiation(const TypeContext& delta, const Instantiation& inst,
                         const TypeContext& domain, Restriction r,
                         const TypeContext& extra) {
  TypeContext scope = delta;
  for (const auto& v : extra.vars()) scope.push(v);
  for (const auto& v : domain.vars()) {
    auto image = inst.lookup(v);
    if (!image) return false;
    if (!type_closed_over(*image, scope)) return false;
    if (r == Restriction::Mono && !is_monotype(*image)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

namespace {

struct MatchState {
  std::set<std::int64_t> match_vars;
  // Correspondence between binders opened on the two sides.
  std::map<std::int64_t, std::int64_t> left_to_right;
  std::map<std::int64_t, std::int64_t> right_to_left;
  std::vector<std::pair<TypeVarName, Type>> solution;

  std::optional<Type> solved(const TypeVarName& v) const {
    for (const auto& [name, t] : solution) {
      if (name == v) return t;
    }
    return std::nullopt;
  }
};

bool image_escapes(const Type& image, const MatchState& st) {
  for (const auto& v : ftv_ordered(image)) {
    if (st.right_to_left.count(v.uid)) return true;
  }
  return false;
}

bool match_walk(const Type& pattern, const Type& target, MatchState& st) {
  if (const auto* pv = as_var(pattern)) {
    if (st.match_vars.count(pv->name.uid)) {
      if (image_escapes(target, st)) return false;
      if (auto prev = st.solved(pv->name)) {
        return alpha_equal(*prev, target);
      }
      st.solution.emplace_back(pv->name, target);
      return true;
    }
    const auto* tv = as_var(target);
    if (!tv) return false;
    auto it = st.left_to_right.find(pv->name.uid);
    if (it != st.left_to_right.end()) return it->second == tv->name.uid;
    // Free rigid variable: must be identical and not a bound var on the
    // target side.
    if (st.right_to_left.count(tv->name.uid)) return false;
    return pv->name == tv->name;
  }
  if (const auto* pc = as_ctor(pattern)) {
    const auto* tc = as_ctor(target);
    if (!tc || pc->ctor != tc->ctor || pc->args.size() != tc->args.size()) {
      return false;
    }
    for (std::size_t i = 0; i < pc->args.size(); ++i) {
      if (!match_walk(pc->args[i], tc->args[i], st)) return false;
    }
    return true;
  }
  const auto* pf = as_forall(pattern);
  const auto* tf = as_forall(target);
  if (!pf || !tf) return false;
  st.left_to_right[pf->binder.uid] = tf->binder.uid;
  st.right_to_left[tf->binder.uid] = pf->binder.uid;
  const bool ok = match_walk(pf->body, tf->body, st);
  st.left_to_right.erase(pf->binder.uid);
  st.right_to_left.erase(tf->binder.uid);
  return ok;
}

}  // namespace

std::optional<Instantiation> match_instance(const Type& scheme,
                                            const Type& target) {
  auto [prefix, body] = strip_forall_prefix(scheme);
  MatchState st;
  for (const auto& v : prefix) st.match_vars.insert(v.uid);
  if (!match_walk(body, target, st)) return std::nullopt;
  Instantiation out;
  for (const auto& v : prefix) {
    if (auto t = st.solved(v)) {
      out.bind(v, *t);
    } else {
      out.bind(v, make_base("Int"));  // superfluous quantifier
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Principality via the solver
// ---------------------------------------------------------------------------

Result<PrincipalType, TypeError> principal_via_solver(const TypeContext& delta,
                                                      const TermContext& gamma,
                                                      const Term& m,
                                                      NameSupply& supply) {
  auto result = infer(delta, gamma, m, supply);
  if (!result.ok()) return result.error();
  PrincipalType out;
  out.type = result.value().type;
  for (const auto& [name, r] : result.value().residual.entries()) {
    out.fresh_vars.emplace_back(name, r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidate pools
// ---------------------------------------------------------------------------

namespace {

void collect_subtypes(const Type& t, std::vector<Type>& out) {
  out.push_back(t);
  if (const auto* c = as_ctor(t)) {
    for (const auto& arg : c->args) collect_subtypes(arg, out);
  } else if (const auto* f = as_forall(t)) {
    collect_subtypes(f->body, out);
  }
}

void dedup_types(std::vector<Type>& pool) {
  std::vector<Type> out;
  for (const auto& t : pool) {
    bool seen = false;
    for (const auto& u : out) {
      if (alpha_equal(t, u)) {
        seen = true;
        break;
      }
    }
    if (!seen) out.push_back(t);
  }
  pool = std::move(out);
}

// Types likely to be needed as instantiation witnesses: subterms of the goal
// type and the environment, the base types, and a couple of simple compounds.
std::vector<Type> candidate_pool(const TypeContext& delta,
                                 const TermContext& gamma, const Type& goal) {
  std::vector<Type> pool;
  collect_subtypes(goal, pool);
  NameSupply scratch;
  for (const auto& [name, t] : gamma.entries()) {
    if (!t) continue;
    collect_subtypes(t, pool);
    // Scheme bodies grounded at Int give the shapes applications of this
    // binding can demand (e.g. Int -> Int -> Int from choose).
    auto [prefix, body] = strip_forall_prefix(t);
    if (!prefix.empty()) {
      std::map<std::int64_t, Type> at_int;
      for (const auto& v : prefix) at_int[v.uid] = make_base("Int");
      collect_subtypes(apply_type_subst(at_int, body, scratch), pool);
    }
  }
  pool.push_back(make_base("Int"));
  pool.push_back(make_base("Bool"));
  pool.push_back(make_base("Unit"));
  for (const auto& v : delta.vars()) pool.push_back(make_var(v));
  pool.push_back(make_arrow(make_base("Int"), make_base("Int")));
  pool.push_back(make_list(make_base("Int")));
  dedup_types(pool);
  return pool;
}

std::vector<Type> mono_pool(const TypeContext& delta, const TermContext& gamma,
                            const Type& goal) {
  std::vector<Type> pool = candidate_pool(delta, gamma, goal);
  std::vector<Type> out;
  for (const auto& t : pool) {
    if (is_monotype(t) && type_closed_over(t, delta)) out.push_back(t);
  }
  return out;
}

// Searches instantiations of vars, ordered by the number of variables that
// deviate from the Int default: all-Int first, then single deviations, and
// so on, until fn succeeds or the budget runs out. Variables restricted to
// Mono draw from mono_fill, the rest from poly_fill.
bool search_assignments(
    const std::vector<std::pair<TypeVarName, Restriction>>& vars,
    const std::vector<Type>& mono_fill, const std::vector<Type>& poly_fill,
    int budget,
    const std::function<bool(const std::map<std::int64_t, Type>&)>& fn) {
  const Type int_type = make_base("Int");
  std::map<std::int64_t, Type> assignment;
  for (const auto& [name, r] : vars) assignment[name.uid] = int_type;
  if (fn(assignment)) return true;
  --budget;

  const std::size_t n = vars.size();
  // Deviating values per variable (Int excluded; it is the default).
  std::vector<std::vector<Type>> options(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& fill =
        vars[i].second == Restriction::Mono ? mono_fill : poly_fill;
    for (const auto& t : fill) {
      if (alpha_equal(t, int_type)) continue;
      if (vars[i].second == Restriction::Mono && !is_monotype(t)) continue;
      options[i].push_back(t);
    }
  }

  // fill positions[from..] choosing deviating indices, then values.
  std::function<bool(std::size_t, std::size_t)> deviate =
      [&](std::size_t from, std::size_t remaining) -> bool {
    if (remaining == 0) {
      --budget;
      return fn(assignment);
    }
    for (std::size_t i = from; i + remaining <= n; ++i) {
      for (const auto& t : options[i]) {
        if (budget <= 0) return false;
        assignment[vars[i].first.uid] = t;
        if (deviate(i + 1, remaining - 1)) return true;
        assignment[vars[i].first.uid] = int_type;
      }
    }
    return false;
  };

  for (std::size_t d = 1; d <= n; ++d) {
    if (budget <= 0) return false;
    if (deviate(0, d)) return true;
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// Typing oracle
// ---------------------------------------------------------------------------

namespace {

class TypingOracle {
 public:
  TypingOracle(NameSupply& supply, const OracleLimits& limits)
      : supply_(supply), limits_(limits) {}

  bool check(const TypeContext& delta, const TermContext& gamma, const Term& m,
             const Type& a) {
    return std::visit(
        overload{
            [&](const TmFrozen& t) {
              auto bound = gamma.lookup(t.var);
              return bound && *bound && alpha_equal(*bound, a);
            },
            [&](const TmVar& t) {
              auto bound = gamma.lookup(t.var);
              if (!bound || !*bound) return false;
              auto inst = match_instance(*bound, a);
              if (!inst) return false;
              // Images must be closed over the rigid context.
              for (const auto& [name, img] : inst->entries()) {
                if (!type_closed_over(img, delta)) return false;
              }
              return true;
            },
            [&](const TmApp&) { return check_app(delta, gamma, m, a); },
            [&](const TmLam& t) {
              const auto* arrow = as_ctor(a);
              if (!arrow || arrow->ctor != kArrowCtor) return false;
              const Type& dom = arrow->args[0];
              RestrictionContext empty;
              if (!is_monotype(dom) ||
                  !wf_type(delta, empty, Restriction::Mono, dom)) {
                return false;
              }
              return check(delta, gamma.extended(t.param, dom), t.body,
                           arrow->args[1]);
            },
            [&](const TmLamAnn& t) {
              const auto* arrow = as_ctor(a);
              if (!arrow || arrow->ctor != kArrowCtor) return false;
              if (!alpha_equal(arrow->args[0], t.ann)) return false;
              return check(delta, gamma.extended(t.param, t.ann), t.body,
                           arrow->args[1]);
            },
            [&](const TmLet& t) { return check_let(delta, gamma, t, a); },
            [&](const TmLetAnn& t) {
              RestrictionContext empty;
              if (!wf_type(delta, empty, Restriction::Poly, t.ann)) {
                return false;
              }
              auto [prefix, body_type] = split(t.ann, t.bound);
              TypeContext inner = delta;
              for (const auto& v : prefix) inner.push(v);
              if (!check(inner, gamma, t.bound, body_type)) return false;
              return check(delta, gamma.extended(t.var, t.ann), t.body, a);
            },
        },
        m->v);
  }

 private:
  bool check_let(const TypeContext& delta, const TermContext& gamma,
                 const TmLet& t, const Type& a) {
    auto principal = principal_via_solver(delta, gamma, t.bound, supply_);
    if (!principal.ok()) return false;
    const Type& principal_type = principal.value().type;
    std::vector<TypeVarName> fresh;
    for (const auto& [name, r] : principal.value().fresh_vars) {
      fresh.push_back(name);
    }
    if (classify_value(t.bound) == ValueClass::GuardedValue) {
      Type scheme = principal_type;
      for (auto it = fresh.rbegin(); it != fresh.rend(); ++it) {
        scheme = make_forall(*it, scheme);
      }
      return check(delta, gamma.extended(t.var, scheme), t.body, a);
    }
    // Value restriction: some monomorphic instantiation of the principal
    // type must make the body check.
    const std::vector<Type> pool = mono_pool(delta, gamma, a);
    std::vector<std::pair<TypeVarName, Restriction>> vars;
    for (const auto& v : fresh) vars.emplace_back(v, Restriction::Mono);
    return search_assignments(
        vars, pool, pool, limits_.max_assignments,
        [&](const std::map<std::int64_t, Type>& map) {
          Type instantiated = apply_type_subst(map, principal_type, supply_);
          return check(delta, gamma.extended(t.var, instantiated), t.body, a);
        });
  }

  bool check_app(const TypeContext& delta, const TermContext& gamma,
                 const Term& m, const Type& b) {
    const auto& app = std::get<TmApp>(m->v);
    auto try_arg_type = [&](const Type& arg_type) {
      return check(delta, gamma, app.fn, make_arrow(arg_type, b)) &&
             check(delta, gamma, app.arg, arg_type);
    };
    if (auto exact = synthesize_exact(delta, gamma, app.arg)) {
      // The argument's type is unique, so it is the only viable choice.
      return try_arg_type(*exact);
    }
    // Shape the candidate from the argument's principal type, filling its
    // residual variables from the candidate pool (all-Int first, the
    // grounding used everywhere else).
    auto principal = principal_via_solver(delta, gamma, app.arg, supply_);
    if (principal.ok()) {
      const Type& shape = principal.value().type;
      const auto& residuals = principal.value().fresh_vars;
      if (residuals.empty()) {
        if (try_arg_type(shape)) return true;
      } else {
        const std::vector<Type> poly_fill = candidate_pool(delta, gamma, b);
        const std::vector<Type> mono_fill = mono_pool(delta, gamma, b);
        if (search_assignments(
                residuals, mono_fill, poly_fill, limits_.max_assignments,
                [&](const std::map<std::int64_t, Type>& map) {
                  return try_arg_type(apply_type_subst(map, shape, supply_));
                })) {
          return true;
        }
      }
    }
    // Fallbacks: candidates matched off the function side and the raw pool.
    std::vector<Type> candidates;
    gather_arg_candidates(delta, gamma, app.fn, b, candidates);
    for (const auto& t : candidate_pool(delta, gamma, b)) {
      candidates.push_back(t);
    }
    dedup_types(candidates);
    if (candidates.size() > static_cast<std::size_t>(limits_.max_candidates)) {
      candidates.resize(limits_.max_candidates);
    }
    for (const auto& arg_type : candidates) {
      if (try_arg_type(arg_type)) return true;
    }
    return false;
  }

  // Argument-type candidates driven by the function side: match the
  // codomain of the function's scheme against the known result type.
  void gather_arg_candidates(const TypeContext& delta,
                             const TermContext& gamma, const Term& fn,
                             const Type& result, std::vector<Type>& out) {
    auto from_scheme = [&](const Type& scheme) {
      auto [prefix, body] = strip_forall_prefix(scheme);
      const auto* arrow = as_ctor(body);
      if (!arrow || arrow->ctor != kArrowCtor) return;
      // Match codomain against the result to pin down some variables.
      std::set<std::int64_t> vars;
      for (const auto& v : prefix) vars.insert(v.uid);
      MatchState st;
      st.match_vars = vars;
      if (match_walk(arrow->args[1], result, st)) {
        std::map<std::int64_t, Type> map;
        for (const auto& [name, ty] : st.solution) map[name.uid] = ty;
        bool complete = true;
        for (const auto& v : ftv_ordered(arrow->args[0])) {
          if (vars.count(v.uid) && !map.count(v.uid)) complete = false;
        }
        if (complete) {
          out.push_back(apply_type_subst(map, arrow->args[0], supply_));
        } else {
          // Fill remaining scheme variables from the pool.
          for (const auto& filler : candidate_pool(delta, gamma, result)) {
            std::map<std::int64_t, Type> filled = map;
            for (const auto& v : ftv_ordered(arrow->args[0])) {
              if (vars.count(v.uid) && !filled.count(v.uid)) {
                filled[v.uid] = filler;
              }
            }
            out.push_back(apply_type_subst(filled, arrow->args[0], supply_));
          }
        }
      }
    };
    if (const auto* var = std::get_if<TmVar>(&fn->v)) {
      if (auto bound = gamma.lookup(var->var); bound && *bound) {
        from_scheme(*bound);
      }
    } else if (const auto* frz = std::get_if<TmFrozen>(&fn->v)) {
      if (auto bound = gamma.lookup(frz->var); bound && *bound) {
        const auto* arrow = as_ctor(*bound);
        if (arrow && arrow->ctor == kArrowCtor) {
          out.push_back(arrow->args[0]);
        }
      }
    } else if (const auto* lam = std::get_if<TmLamAnn>(&fn->v)) {
      out.push_back(lam->ann);
    } else if (const auto* app = std::get_if<TmApp>(&fn->v)) {
      // Nested application: synthesize the inner function if possible.
      if (auto inner = synthesize_exact(delta, gamma, fn)) {
        const auto* arrow = as_ctor(*inner);
        if (arrow && arrow->ctor == kArrowCtor) out.push_back(arrow->args[0]);
      }
      (void)app;
    }
  }

  // The unique type of m, when it is derivable without search.
  std::optional<Type> synthesize_exact(const TypeContext& delta,
                                       const TermContext& gamma,
                                       const Term& m) {
    return std::visit(
        overload{
            [&](const TmFrozen& t) -> std::optional<Type> {
              auto bound = gamma.lookup(t.var);
              if (!bound || !*bound) return std::nullopt;
              return *bound;
            },
            [&](const TmVar& t) -> std::optional<Type> {
              auto bound = gamma.lookup(t.var);
              if (!bound || !*bound) return std::nullopt;
              if (as_forall(*bound)) return std::nullopt;  // instantiable
              return *bound;
            },
            [&](const TmApp& t) -> std::optional<Type> {
              auto fn = synthesize_exact(delta, gamma, t.fn);
              if (!fn) return std::nullopt;
              const auto* arrow = as_ctor(*fn);
              if (!arrow || arrow->ctor != kArrowCtor) return std::nullopt;
              if (!check(delta, gamma, t.arg, arrow->args[0])) {
                return std::nullopt;
              }
              return arrow->args[1];
            },
            [&](const TmLam&) -> std::optional<Type> { return std::nullopt; },
            [&](const TmLamAnn& t) -> std::optional<Type> {
              auto body = synthesize_exact(delta, gamma.extended(t.param,
                                                                 t.ann),
                                           t.body);
              if (!body) return std::nullopt;
              return make_arrow(t.ann, *body);
            },
            [&](const TmLet& t) -> std::optional<Type> {
              auto principal =
                  principal_via_solver(delta, gamma, t.bound, supply_);
              if (!principal.ok()) return std::nullopt;
              std::vector<TypeVarName> fresh;
              for (const auto& [name, r] : principal.value().fresh_vars) {
                fresh.push_back(name);
              }
              Type bound_type = principal.value().type;
              if (classify_value(t.bound) == ValueClass::GuardedValue) {
                for (auto it = fresh.rbegin(); it != fresh.rend(); ++it) {
                  bound_type = make_forall(*it, bound_type);
                }
              } else if (!fresh.empty()) {
                return std::nullopt;  // ambiguous monomorphic instantiation
              }
              return synthesize_exact(
                  delta, gamma.extended(t.var, bound_type), t.body);
            },
            [&](const TmLetAnn& t) -> std::optional<Type> {
              return synthesize_exact(delta, gamma.extended(t.var, t.ann),
                                      t.body);
            },
        },
        m->v);
  }

  NameSupply& supply_;
  OracleLimits limits_;
};

}  // namespace

bool check_typing(const TypeContext& delta, const TermContext& gamma,
                  const Term& m, const Type& a, NameSupply& supply,
                  const OracleLimits& limits) {
  TypingOracle oracle(supply, limits);
  return oracle.check(delta, gamma, m, a);
}

// ---------------------------------------------------------------------------
// Constraint satisfiability oracle
// ---------------------------------------------------------------------------

namespace {

class SatOracle {
 public:
  SatOracle(NameSupply& supply, const OracleLimits& limits)
      : supply_(supply), limits_(limits) {}

  bool check(const TypeContext& delta, const TypeContext& xi,
             const TermContext& gamma, const Instantiation& inst,
             const Constraint& c) {
    return std::visit(
        overload{
            [&](const CTrue&) { return true; },
            [&](const CAnd& n) {
              return check(delta, xi, gamma, inst, n.lhs) &&
                     check(delta, xi, gamma, inst, n.rhs);
            },
            [&](const CEq& n) {
              if (!wf_over(delta, xi, n.lhs) || !wf_over(delta, xi, n.rhs)) {
                return false;
              }
              return alpha_equal(inst.apply(n.lhs, supply_),
                                 inst.apply(n.rhs, supply_));
            },
            [&](const CFreeze& n) {
              auto bound = gamma.lookup(n.var);
              if (!bound || !*bound) return false;
              return alpha_equal(*bound, inst.apply(n.type, supply_));
            },
            [&](const CInst& n) {
              auto bound = gamma.lookup(n.var);
              if (!bound || !*bound) return false;
              auto delta_inst =
                  match_instance(*bound, inst.apply(n.type, supply_));
              if (!delta_inst) return false;
              for (const auto& [name, img] : delta_inst->entries()) {
                if (!type_closed_over(img, delta)) return false;
              }
              return true;
            },
            [&](const CForall& n) {
              return check(delta.extended(n.binder), xi, gamma, inst, n.body);
            },
            [&](const CExists& n) {
              return check_exists(delta, xi, gamma, inst, n);
            },
            [&](const CMono& n) {
              Type image = inst.apply(make_var(n.var), supply_);
              return is_monotype(image) && type_closed_over(image, delta);
            },
            [&](const CDef& n) {
              for (const auto& v : ftv_ordered(n.type)) {
                if (delta.contains(v)) continue;
                Type image = inst.apply(make_var(v), supply_);
                if (!is_monotype(image) || !type_closed_over(image, delta)) {
                  return false;
                }
              }
              Type bound_type = inst.apply(n.type, supply_);
              return check(delta, xi, gamma.extended(n.var, bound_type), inst,
                           n.body);
            },
            [&](const CLetPoly& n) {
              return check_let(delta, xi, gamma, inst, n.var, n.binder,
                               n.bound, n.body, Restriction::Poly);
            },
            [&](const CLetMono& n) {
              return check_let(delta, xi, gamma, inst, n.var, n.binder,
                               n.bound, n.body, Restriction::Mono);
            },
        },
        c->v);
  }

 private:
  bool wf_over(const TypeContext& delta, const TypeContext& xi,
               const Type& t) {
    for (const auto& v : ftv_ordered(t)) {
      if (!delta.contains(v) && !xi.contains(v)) return false;
    }
    return true;
  }

  bool check_exists(const TypeContext& delta, const TypeContext& xi,
                    const TermContext& gamma, const Instantiation& inst,
                    const CExists& n) {
    if (inst.contains(n.binder)) {
      return check(delta, xi.extended(n.binder), gamma, inst, n.body);
    }
    std::vector<Type> witnesses =
        harvest_witnesses(delta, gamma, inst, n.binder, n.body);
    for (const auto& t : enumerate_witnesses(delta)) witnesses.push_back(t);
    dedup_types(witnesses);
    if (witnesses.size() > static_cast<std::size_t>(limits_.max_witnesses)) {
      witnesses.resize(limits_.max_witnesses);
    }
    for (const auto& w : witnesses) {
      if (!type_closed_over(w, delta)) continue;
      if (check(delta, xi.extended(n.binder), gamma,
                inst.extended(n.binder, w), n.body)) {
        return true;
      }
    }
    return false;
  }

  // Witness candidates pulled from the constraint itself: from equations
  // involving the binder (solved by one-sided matching) and from freeze
  // constraints on it.
  std::vector<Type> harvest_witnesses(const TypeContext& delta,
                                      const TermContext& gamma,
                                      const Instantiation& inst,
                                      const TypeVarName& binder,
                                      const Constraint& c) {
    std::vector<Type> out;
    harvest_walk(delta, gamma, inst, binder, c, out);
    return out;
  }

  // Unification-based candidate extraction: the two sides of a (possibly
  // still open) equation are unified with all unknowns flexible, and the
  // binder's image, when fully determined, becomes a witness candidate. The
  // candidate is only a suggestion; the caller re-checks it declaratively.
  void harvest_unify(const TypeContext& delta, const Instantiation& inst,
                     const TypeVarName& binder, const Type& lhs,
                     const Type& rhs, std::vector<Type>& out) {
    Type left = inst.apply(lhs, supply_);
    Type right = inst.apply(rhs, supply_);
    RestrictionContext theta;
    bool saw_binder = false;
    for (const Type& side : {left, right}) {
      for (const auto& v : ftv_ordered(side)) {
        if (delta.contains(v) || theta.contains(v)) continue;
        theta.bind(v, Restriction::Poly);
        if (v == binder) saw_binder = true;
      }
    }
    if (!saw_binder) return;
    auto unified = unify(delta, theta, left, right, supply_);
    if (!unified.ok()) return;
    Type candidate =
        unified.value().subst.apply(make_var(binder), supply_);
    if (const auto* v = as_var(candidate); v && v->name == binder) return;
    if (!type_closed_over(candidate, delta)) return;
    out.push_back(candidate);
  }

  void harvest_walk(const TypeContext& delta, const TermContext& gamma,
                    const Instantiation& inst, const TypeVarName& binder,
                    const Constraint& c, std::vector<Type>& out) {
    std::visit(
        overload{
            [&](const CTrue&) {},
            [&](const CAnd& n) {
              harvest_walk(delta, gamma, inst, binder, n.lhs, out);
              harvest_walk(delta, gamma, inst, binder, n.rhs, out);
            },
            [&](const CEq& n) {
              harvest_unify(delta, inst, binder, n.lhs, n.rhs, out);
            },
            [&](const CFreeze& n) {
              if (auto bound = gamma.lookup(n.var); bound && *bound) {
                harvest_unify(delta, inst, binder, n.type, *bound, out);
              }
            },
            [&](const CInst& n) {
              // x <= T: open the scheme's prefix with fresh unknowns and
              // unify the body against T.
              if (auto bound = gamma.lookup(n.var); bound && *bound) {
                auto [prefix, body] = strip_forall_prefix(*bound);
                std::map<std::int64_t, Type> opened;
                for (const auto& v : prefix) {
                  opened[v.uid] = make_var(supply_.fresh_numbered("h"));
                }
                Type guess = apply_type_subst(opened, body, supply_);
                harvest_unify(delta, inst, binder, n.type, guess, out);
              }
            },
            [&](const CForall& n) {
              harvest_walk(delta, gamma, inst, binder, n.body, out);
            },
            [&](const CExists& n) {
              if (n.binder == binder) return;
              harvest_walk(delta, gamma, inst, binder, n.body, out);
            },
            [&](const CMono&) {},
            [&](const CDef& n) {
              TermContext inner =
                  gamma.extended(n.var, inst.apply(n.type, supply_));
              harvest_walk(delta, inner, inst, binder, n.body, out);
            },
            [&](const CLetPoly& n) {
              harvest_walk(delta, gamma, inst, binder, n.bound, out);
              harvest_walk(delta, gamma, inst, binder, n.body, out);
            },
            [&](const CLetMono& n) {
              harvest_walk(delta, gamma, inst, binder, n.bound, out);
              harvest_walk(delta, gamma, inst, binder, n.body, out);
            },
        },
        c->v);
  }

  // Bounded blind enumeration: depth <= 3 over the registry with at most two
  // quantifiers; documented as incomplete.
  std::vector<Type> enumerate_witnesses(const TypeContext& delta) {
    std::vector<Type> level1;
    level1.push_back(make_base("Int"));
    level1.push_back(make_base("Bool"));
    level1.push_back(make_base("Unit"));
    for (const auto& v : delta.vars()) {
      level1.push_back(make_var(v));
      if (level1.size() > 8) break;
    }
    std::vector<Type> out = level1;
    for (const auto& a : level1) {
      out.push_back(make_list(a));
      for (const auto& b : level1) {
        out.push_back(make_arrow(a, b));
        out.push_back(make_prod(a, b));
      }
    }
    // Quantified shapes.
    {
      TypeVarName qa = supply_.fresh("q");
      out.push_back(make_forall(qa, make_var(qa)));
    }
    {
      TypeVarName qa = supply_.fresh("q");
      out.push_back(
          make_forall(qa, make_arrow(make_var(qa), make_var(qa))));
    }
    {
      TypeVarName qa = supply_.fresh("q");
      out.push_back(make_forall(
          qa, make_arrow(make_var(qa),
                         make_arrow(make_var(qa), make_var(qa)))));
    }
    {
      TypeVarName qa = supply_.fresh("q");
      out.push_back(make_forall(qa, make_list(make_var(qa))));
    }
    {
      TypeVarName qa = supply_.fresh("q");
      TypeVarName qb = supply_.fresh("q");
      out.push_back(make_forall(
          qa, make_forall(qb, make_arrow(make_var(qa), make_var(qb)))));
    }
    return out;
  }

  // let_R x = ^a. C1 in C2
  bool check_let(const TypeContext& delta, const TypeContext& xi,
                 const TermContext& gamma, const Instantiation& inst,
                 const std::string& var, const TypeVarName& binder,
                 const Constraint& bound, const Constraint& body,
                 Restriction restriction) {
    // mostgen via the solver: solve C1 as forall delta. exists (xi, a).
    // def gamma in C1, the same shape infer uses.
    Constraint wrapped = bound;
    for (auto it = gamma.entries().rbegin(); it != gamma.entries().rend();
         ++it) {
      if (!it->second) return false;
      wrapped = make_constraint(CDef{it->first, it->second, wrapped});
    }
    wrapped = make_constraint(CExists{binder, wrapped});
    for (auto it = xi.vars().rbegin(); it != xi.vars().rend(); ++it) {
      wrapped = make_constraint(CExists{*it, wrapped});
    }
    for (auto it = delta.vars().rbegin(); it != delta.vars().rend(); ++it) {
      wrapped = make_constraint(CForall{*it, wrapped});
    }
    SolverState initial{{}, {}, {}, wrapped};
    auto solved = run(initial, supply_);
    if (!solved.ok()) {
      // No model for C1 at all.
      return false;
    }
    const SolverState& final_state = solved.value().final_state;

    // delta_o: most-general-model variables reachable from the model of xi;
    // they belong to the outer scope.
    std::vector<TypeVarName> delta_o;
    {
      std::set<std::int64_t> seen;
      for (const auto& v : xi.vars()) {
        Type image = final_state.subst.apply(make_var(v), supply_);
        for (const auto& u : ftv_ordered(image)) {
          if (delta.contains(u)) continue;
          if (seen.insert(u.uid).second) delta_o.push_back(u);
        }
      }
    }
    auto in_delta_o = [&](const TypeVarName& v) {
      return std::find(delta_o.begin(), delta_o.end(), v) != delta_o.end();
    };

    Type model_of_a = final_state.subst.apply(make_var(binder), supply_);
    std::vector<TypeVarName> generalised;  // b-bar, in ftv order
    std::vector<TypeVarName> shared;       // delta_o ∩ ftv of the model
    for (const auto& v : ftv_ordered(model_of_a)) {
      if (delta.contains(v)) continue;
      if (in_delta_o(v)) {
        shared.push_back(v);
      } else if (final_state.theta_env.contains(v)) {
        generalised.push_back(v);
      }
    }

    // The monomorphic delta' is only relevant on variables occurring in the
    // model of a. On the shared part it is pinned by matching the model of
    // xi against the ambient instantiation; the rule's C1 premise enforces
    // compatibility for everything else.
    MatchState st;
    for (const auto& [name, r] : final_state.theta_env.entries()) {
      if (!delta.contains(name)) st.match_vars.insert(name.uid);
    }
    for (const auto& v : xi.vars()) {
      Type pattern = final_state.subst.apply(make_var(v), supply_);
      auto ambient = inst.lookup(v);
      if (!ambient) return false;
      if (!match_walk(pattern, *ambient, st)) return false;
    }
    std::map<std::int64_t, Type> outer_inst;
    for (const auto& v : shared) {
      std::optional<Type> img;
      for (const auto& [name, image] : st.solution) {
        if (name == v) img = image;
      }
      if (!img) return false;  // underdetermined shared variable
      if (!is_monotype(*img) || !type_closed_over(*img, delta)) return false;
      outer_inst[v.uid] = *img;
    }

    if (restriction == Restriction::Poly) {
      Type instantiated = apply_type_subst(outer_inst, model_of_a, supply_);
      // Premise: C1 holds under (delta, b-bar) with a |-> A.
      TypeContext delta_ext = delta;
      for (const auto& v : generalised) delta_ext.push(v);
      if (!check(delta_ext, xi.extended(binder), gamma,
                 inst.extended(binder, instantiated), bound)) {
        return false;
      }
      Type scheme = instantiated;
      for (auto it = generalised.rbegin(); it != generalised.rend(); ++it) {
        scheme = make_forall(*it, scheme);
      }
      return check(delta, xi, gamma.extended(var, scheme), inst, body);
    }

    // Monomorphic let: the would-be-generalised variables are instantiated
    // monomorphically as well, found by bounded search.
    const std::vector<Type> pool = mono_pool(delta, gamma, model_of_a);
    std::vector<std::pair<TypeVarName, Restriction>> vars;
    for (const auto& v : generalised) vars.emplace_back(v, Restriction::Mono);
    return search_assignments(
        vars, pool, pool, limits_.max_assignments,
        [&](const std::map<std::int64_t, Type>& assignment) {
          std::map<std::int64_t, Type> full = outer_inst;
          for (const auto& [uid, ty] : assignment) full[uid] = ty;
          Type instantiated = apply_type_subst(full, model_of_a, supply_);
          if (!check(delta, xi.extended(binder), gamma,
                     inst.extended(binder, instantiated), bound)) {
            return false;
          }
          return check(delta, xi, gamma.extended(var, instantiated), inst,
                       body);
        });
  }

  NameSupply& supply_;
  OracleLimits limits_;
};

}  // namespace

bool check_constraint_sat(const TypeContext& delta, const TypeContext& xi,
                          const TermContext& gamma, const Instantiation& inst,
                          const Constraint& c, NameSupply& supply,
                          const OracleLimits& limits) {
  SatOracle oracle(supply, limits);
  return oracle.check(delta, xi, gamma, inst, c);
}

}  // namespace fml::oracle

#include "fml/solver.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <set>
#include <sstream>

#include "fml/surface.hpp"

namespace fml {

namespace {

template <class... Ts>
struct overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overload(Ts...) -> overload<Ts...>;

}  // namespace

Frame make_frame(std::variant<FConj, FForall, FExists, FLet, FDef> v,
                 SourceSpan span) {
  return std::make_shared<FrameNode>(FrameNode{std::move(v), span});
}

const char* rule_name(Rule r) {
  switch (r) {
    case Rule::Eq: return "S-Eq";
    case Rule::Freeze: return "S-Freeze";
    case Rule::Inst: return "S-Inst";
    case Rule::Mono: return "S-Mono";
    case Rule::ConjPush: return "S-ConjPush";
    case Rule::ConjPop: return "S-ConjPop";
    case Rule::ExistsPush: return "S-ExistsPush";
    case Rule::ExistsLower: return "S-ExistsLower";
    case Rule::ForallPush: return "S-ForallPush";
    case Rule::ForallPop: return "S-ForallPop";
    case Rule::DefPush: return "S-DefPush";
    case Rule::DefPop: return "S-DefPop";
    case Rule::LetPush: return "S-LetPush";
    case Rule::LetPolyPop: return "S-LetPolyPop";
    case Rule::LetMonoPop: return "S-LetMonoPop";
  }
  return "?";
}

std::string TypeError::render() const {
  std::ostringstream out;
  std::visit(overload{
                 [&](const Unify& e) { out << e.err.render(); },
                 [&](const MonoFailure& e) {
                   out << "variable '" << e.var.text
                       << "' must be monomorphic but has type '"
                       << print_type(e.type) << "'";
                 },
                 [&](const DefMonoFailure& e) {
                   out << "binding '" << e.var << "' requires variable '"
                       << e.offending.text
                       << "' to be monomorphic but it has type '"
                       << print_type(e.type) << "'";
                 },
                 [&](const RigidEscape& e) {
                   out << "rigid type variable '" << e.var.text
                       << "' escapes its scope";
                 },
                 [&](const UnboundVariable& e) {
                   out << "unbound variable '" << e.var << "'";
                 },
             },
             v);
  if (span && span->valid()) {
    out << " (at " << span->line << ":" << span->column << ")";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Extraction operators
// ---------------------------------------------------------------------------

TypeContext delta_of(const std::vector<Frame>& stack) {
  TypeContext out;
  for (const auto& f : stack) {
    if (const auto* fa = frame_as<FForall>(f)) out.push(fa->binder);
  }
  return out;
}

TypeContext xi_of(const std::vector<Frame>& stack) {
  TypeContext out;
  for (const auto& f : stack) {
    if (const auto* fe = frame_as<FExists>(f)) {
      out.push(fe->binder);
    } else if (const auto* fl = frame_as<FLet>(f)) {
      out.push(fl->binder);
    }
  }
  return out;
}

TermContext gamma_of(const std::vector<Frame>& stack) {
  TermContext out;
  for (const auto& f : stack) {
    if (const auto* fd = frame_as<FDef>(f)) out.bind(fd->var, fd->type);
  }
  return out;
}

std::vector<TypeVarName> atv_of(const std::vector<Frame>& stack) {
  std::vector<TypeVarName> out;
  for (const auto& f : stack) {
    if (const auto* fa = frame_as<FForall>(f)) {
      out.push_back(fa->binder);
    } else if (const auto* fe = frame_as<FExists>(f)) {
      out.push_back(fe->binder);
    } else if (const auto* fl = frame_as<FLet>(f)) {
      out.push_back(fl->binder);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

Partition partition(const std::vector<TypeVarName>& xi, const Subst& subst,
                    const RestrictionContext& theta_env, NameSupply& supply) {
  (void)supply;
  auto in_xi = [&](const TypeVarName& v) {
    return std::find(xi.begin(), xi.end(), v) != xi.end();
  };
  // Free variables of the substitution restricted to ftv(Theta) - Xi.
  std::set<std::int64_t> referenced;
  for (const auto& [key, image] : subst.entries()) {
    if (!theta_env.contains(key) || in_xi(key)) continue;
    for (const auto& v : ftv_ordered(image)) referenced.insert(v.uid);
  }
  Partition out;
  for (const auto& v : xi) {
    if (referenced.count(v.uid)) {
      out.lowered.push_back(v);
    } else {
      out.kept_out.push_back(v);
    }
  }
  return out;
}

Partition rank_partition(const std::vector<TypeVarName>& xi,
                         const Subst& subst,
                         const std::vector<Frame>& stack_lower,
                         const std::vector<Frame>& stack_upper,
                         NameSupply& supply) {
  (void)supply;
  std::vector<Frame> whole = stack_lower;
  whole.insert(whole.end(), stack_upper.begin(), stack_upper.end());
  const std::vector<TypeVarName> atv = atv_of(whole);
  const std::size_t threshold = atv_of(stack_lower).size() + 1;

  // rank(b) = smallest 1-based atv index i with b in ftv(theta(a_i)), where
  // rigid variables are mapped to themselves; absent means eliminated.
  auto rank_of = [&](const TypeVarName& b) -> std::size_t {
    for (std::size_t i = 0; i < atv.size(); ++i) {
      const TypeVarName& at = atv[i];
      Type image = subst.contains(at) ? subst.lookup(at) : make_var(at);
      for (const auto& v : ftv_ordered(image)) {
        if (v == b) return i + 1;
      }
    }
    return static_cast<std::size_t>(-1);  // infinity
  };

  Partition out;
  for (const auto& v : xi) {
    if (rank_of(v) < threshold) {
      out.lowered.push_back(v);
    } else {
      out.kept_out.push_back(v);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Measure
// ---------------------------------------------------------------------------

std::int64_t constraint_size(const Constraint& c) {
  return std::visit(
      overload{
          [](const CTrue&) -> std::int64_t { return 0; },
          [](const CMono&) -> std::int64_t { return 1; },
          [](const CEq&) -> std::int64_t { return 1; },
          [](const CFreeze&) -> std::int64_t { return 2; },
          [](const CInst&) -> std::int64_t { return 2; },
          [](const CExists& n) { return 1 + constraint_size(n.body); },
          [](const CForall& n) { return 1 + constraint_size(n.body); },
          [](const CDef& n) { return 1 + constraint_size(n.body); },
          [](const CAnd& n) {
            return 1 + constraint_size(n.lhs) + constraint_size(n.rhs);
          },
          [](const CLetPoly& n) {
            return 3 + constraint_size(n.bound) + constraint_size(n.body);
          },
          [](const CLetMono& n) {
            return 3 + constraint_size(n.bound) + constraint_size(n.body);
          },
      },
      c->v);
}

std::int64_t inst_count(const Constraint& c) {
  return std::visit(
      overload{
          [](const CTrue&) -> std::int64_t { return 0; },
          [](const CMono&) -> std::int64_t { return 0; },
          [](const CEq&) -> std::int64_t { return 0; },
          [](const CFreeze&) -> std::int64_t { return 0; },
          [](const CInst&) -> std::int64_t { return 1; },
          [](const CExists& n) { return inst_count(n.body); },
          [](const CForall& n) { return inst_count(n.body); },
          [](const CDef& n) { return inst_count(n.body); },
          [](const CAnd& n) { return inst_count(n.lhs) + inst_count(n.rhs); },
          [](const CLetPoly& n) {
            return inst_count(n.bound) + inst_count(n.body);
          },
          [](const CLetMono& n) {
            return inst_count(n.bound) + inst_count(n.body);
          },
      },
      c->v);
}

namespace {

std::int64_t frame_size_contribution(const Frame& f) {
  return std::visit(
      overload{
          [](const FConj& n) { return 1 + constraint_size(n.rest); },
          [](const FForall&) -> std::int64_t { return 1; },
          [](const FExists&) -> std::int64_t { return 1; },
          [](const FLet& n) { return 3 + constraint_size(n.rest); },
          [](const FDef&) -> std::int64_t { return 1; },
      },
      f->v);
}

std::int64_t frame_inst_contribution(const Frame& f) {
  return std::visit(overload{
                        [](const FConj& n) { return inst_count(n.rest); },
                        [](const FForall&) -> std::int64_t { return 0; },
                        [](const FExists&) -> std::int64_t { return 0; },
                        [](const FLet& n) { return inst_count(n.rest); },
                        [](const FDef&) -> std::int64_t { return 0; },
                    },
                    f->v);
}

}  // namespace

Measure measure(const SolverState& s) {
  std::int64_t plugged = constraint_size(s.current);
  // Counting instantiation constraints in the plugged constraint F[C] (not
  // just C) is what makes pop rules measure-decreasing.
  std::int64_t insts = inst_count(s.current);
  for (const auto& f : s.stack) {
    plugged += frame_size_contribution(f);
    insts += frame_inst_contribution(f);
  }
  std::int64_t top_exists = 0;
  for (std::size_t i = 0; i < s.stack.size(); ++i) {
    if (frame_as<FExists>(s.stack[i])) {
      top_exists = static_cast<std::int64_t>(i);
    }
  }
  return Measure{insts, plugged, constraint_size(s.current), top_exists};
}

bool measure_less(const Measure& a, const Measure& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// ---------------------------------------------------------------------------
// Reification
// ---------------------------------------------------------------------------

Constraint reify_state(const SolverState& s) {
  std::vector<Constraint> parts;
  for (const auto& [name, r] : s.theta_env.entries()) {
    if (r == Restriction::Mono) {
      parts.push_back(make_constraint(CMono{name}));
    }
  }
  for (const auto& [name, r] : s.theta_env.entries()) {
    parts.push_back(
        make_constraint(CEq{make_var(name), s.subst.lookup(name)}));
  }
  Constraint u = ctrue();
  if (!parts.empty()) {
    u = parts.back();
    for (auto it = std::next(parts.rbegin()); it != parts.rend(); ++it) {
      u = make_constraint(CAnd{*it, u});
    }
  }
  Constraint plugged = make_constraint(CAnd{s.current, u});
  for (auto it = s.stack.rbegin(); it != s.stack.rend(); ++it) {
    const Frame& f = *it;
    plugged = std::visit(
        overload{
            [&](const FConj& n) {
              return make_constraint(CAnd{plugged, n.rest});
            },
            [&](const FForall& n) {
              return make_constraint(CForall{n.binder, plugged});
            },
            [&](const FExists& n) {
              return make_constraint(CExists{n.binder, plugged});
            },
            [&](const FLet& n) {
              if (n.restriction == Restriction::Poly) {
                return make_constraint(
                    CLetPoly{n.var, n.binder, plugged, n.rest});
              }
              return make_constraint(
                  CLetMono{n.var, n.binder, plugged, n.rest});
            },
            [&](const FDef& n) {
              return make_constraint(CDef{n.var, n.type, plugged});
            },
        },
        f->v);
  }
  return plugged;
}

// ---------------------------------------------------------------------------
// State well-formedness
// ---------------------------------------------------------------------------

bool state_wf(const SolverState& s, NameSupply& supply) {
  const TypeContext delta = delta_of(s.stack);
  const TypeContext xi = xi_of(s.stack);

  // Restriction context keys = flexible variables bound by the stack.
  if (xi.size() != s.theta_env.size()) return false;
  for (const auto& v : xi.vars()) {
    if (!s.theta_env.contains(v)) return false;
  }

  // Substitution domain = restriction context keys; bindings respect
  // restrictions; idempotence.
  for (const auto& [name, r] : s.theta_env.entries()) {
    if (!s.subst.contains(name)) return false;
    if (!wf_type(delta, s.theta_env, r, s.subst.lookup(name))) return false;
  }
  for (const auto& [name, image] : s.subst.entries()) {
    if (!s.theta_env.contains(name)) return false;
    if (!alpha_equal(s.subst.apply(image, supply), image)) return false;
  }

  // Binders pairwise distinct.
  std::set<std::int64_t> type_binders;
  std::set<std::string> term_binders;
  for (const auto& f : s.stack) {
    if (const auto* fa = frame_as<FForall>(f)) {
      if (!type_binders.insert(fa->binder.uid).second) return false;
    } else if (const auto* fe = frame_as<FExists>(f)) {
      if (!type_binders.insert(fe->binder.uid).second) return false;
    } else if (const auto* fl = frame_as<FLet>(f)) {
      if (!type_binders.insert(fl->binder.uid).second) return false;
      if (!term_binders.insert(fl->var).second) return false;
    } else if (const auto* fd = frame_as<FDef>(f)) {
      if (!term_binders.insert(fd->var).second) return false;
    }
  }

  // Frame-local conditions, peeling flexible binders from the top down.
  std::set<std::int64_t> peeled;
  for (std::size_t i = s.stack.size(); i-- > 0;) {
    const Frame& f = s.stack[i];
    std::vector<Frame> below(s.stack.begin(), s.stack.begin() + i);
    auto xi_below = [&]() {
      TypeContext out;
      for (const auto& [name, r] : s.theta_env.entries()) {
        if (!peeled.count(name.uid)) out.push(name);
      }
      return out;
    };
    if (const auto* fe = frame_as<FExists>(f)) {
      if (!s.theta_env.contains(fe->binder)) return false;
      peeled.insert(fe->binder.uid);
    } else if (const auto* fl = frame_as<FLet>(f)) {
      if (!s.theta_env.contains(fl->binder)) return false;
      peeled.insert(fl->binder.uid);
      ConstraintContext ctx{delta_of(below), xi_below(),
                            gamma_of(below).extended(fl->var, nullptr)};
      if (!wf_constraint(ctx, fl->rest)) return false;
    } else if (const auto* fc = frame_as<FConj>(f)) {
      ConstraintContext ctx{delta_of(below), xi_below(), gamma_of(below)};
      if (!wf_constraint(ctx, fc->rest)) return false;
    } else if (const auto* fd = frame_as<FDef>(f)) {
      const TypeContext delta_below = delta_of(below);
      for (const auto& v : ftv_ordered(fd->type)) {
        if (delta_below.contains(v)) continue;
        auto r = s.theta_env.lookup(v);
        if (!r || *r != Restriction::Mono) return false;
        if (peeled.count(v.uid)) return false;
      }
    }
  }

  // Current constraint well-formed in the synthesized context.
  ConstraintContext ctx{delta, xi, gamma_of(s.stack)};
  return wf_constraint(ctx, s.current);
}

// ---------------------------------------------------------------------------
// Rule dispatch
// ---------------------------------------------------------------------------

namespace {

// Maximal run of exists frames at the top of the stack, bottom-up order.
struct TopRun {
  std::size_t start;  // index of the first frame of the run
  std::vector<TypeVarName> binders;
};

TopRun top_exists_run(const std::vector<Frame>& stack) {
  std::size_t start = stack.size();
  while (start > 0 && frame_as<FExists>(stack[start - 1])) --start;
  TopRun run{start, {}};
  for (std::size_t i = start; i < stack.size(); ++i) {
    run.binders.push_back(frame_as<FExists>(stack[i])->binder);
  }
  return run;
}

bool all_forall_below(const std::vector<Frame>& stack, std::size_t limit) {
  for (std::size_t i = 0; i < limit; ++i) {
    if (!frame_as<FForall>(stack[i])) return false;
  }
  return true;
}

}  // namespace

bool is_final(const SolverState& s) {
  if (!constraint_as<CTrue>(s.current)) return false;
  std::size_t i = 0;
  while (i < s.stack.size() && frame_as<FForall>(s.stack[i])) ++i;
  while (i < s.stack.size() && frame_as<FExists>(s.stack[i])) ++i;
  return i == s.stack.size();
}

std::vector<Rule> matching_rules(const SolverState& s) {
  std::vector<Rule> out;
  std::visit(
      overload{
          [&](const CAnd&) { out.push_back(Rule::ConjPush); },
          [&](const CEq&) { out.push_back(Rule::Eq); },
          [&](const CFreeze&) { out.push_back(Rule::Freeze); },
          [&](const CInst&) { out.push_back(Rule::Inst); },
          [&](const CMono&) { out.push_back(Rule::Mono); },
          [&](const CForall&) { out.push_back(Rule::ForallPush); },
          [&](const CExists&) { out.push_back(Rule::ExistsPush); },
          [&](const CDef&) { out.push_back(Rule::DefPush); },
          [&](const CLetPoly&) { out.push_back(Rule::LetPush); },
          [&](const CLetMono&) { out.push_back(Rule::LetPush); },
          [&](const CTrue&) {
            if (s.stack.empty()) return;
            const Frame& top = s.stack.back();
            if (frame_as<FConj>(top)) {
              out.push_back(Rule::ConjPop);
            } else if (frame_as<FDef>(top)) {
              out.push_back(Rule::DefPop);
            } else if (frame_as<FForall>(top)) {
              if (!all_forall_below(s.stack, s.stack.size() - 1)) {
                out.push_back(Rule::ForallPop);
              }
            } else if (const auto* fl = frame_as<FLet>(top)) {
              out.push_back(fl->restriction == Restriction::Poly
                                ? Rule::LetPolyPop
                                : Rule::LetMonoPop);
            } else if (frame_as<FExists>(top)) {
              const TopRun run = top_exists_run(s.stack);
              if (run.start == 0) return;  // final: pure exists stack
              const Frame& below = s.stack[run.start - 1];
              if (const auto* let_below = frame_as<FLet>(below)) {
                out.push_back(let_below->restriction == Restriction::Poly
                                  ? Rule::LetPolyPop
                                  : Rule::LetMonoPop);
              } else if (frame_as<FForall>(below)) {
                if (!all_forall_below(s.stack, run.start)) {
                  out.push_back(Rule::ExistsLower);
                }
              } else {
                out.push_back(Rule::ExistsLower);
              }
            }
          },
      },
      s.current->v);
  return out;
}

// ---------------------------------------------------------------------------
// Constraint-level binder renaming (collision avoidance on push)
// ---------------------------------------------------------------------------

namespace {

Constraint rename_tv_in_constraint(const Constraint& c, std::int64_t old_uid,
                                   const Type& image, NameSupply& supply) {
  const std::map<std::int64_t, Type> map{{old_uid, image}};
  auto subst_ty = [&](const Type& t) {
    return apply_type_subst(map, t, supply);
  };
  return std::visit(
      overload{
          [&](const CTrue&) { return c; },
          [&](const CAnd& n) {
            return make_constraint(
                CAnd{rename_tv_in_constraint(n.lhs, old_uid, image, supply),
                     rename_tv_in_constraint(n.rhs, old_uid, image, supply)},
                c->span);
          },
          [&](const CEq& n) {
            return make_constraint(CEq{subst_ty(n.lhs), subst_ty(n.rhs)},
                                   c->span);
          },
          [&](const CFreeze& n) {
            return make_constraint(CFreeze{n.var, subst_ty(n.type)}, c->span);
          },
          [&](const CInst& n) {
            return make_constraint(CInst{n.var, subst_ty(n.type)}, c->span);
          },
          [&](const CForall& n) {
            if (n.binder.uid == old_uid) return c;
            return make_constraint(
                CForall{n.binder,
                        rename_tv_in_constraint(n.body, old_uid, image,
                                                supply)},
                c->span);
          },
          [&](const CExists& n) {
            if (n.binder.uid == old_uid) return c;
            return make_constraint(
                CExists{n.binder,
                        rename_tv_in_constraint(n.body, old_uid, image,
                                                supply)},
                c->span);
          },
          [&](const CMono& n) {
            if (n.var.uid == old_uid) {
              if (const auto* v = as_var(image)) {
                return make_constraint(CMono{v->name}, c->span);
              }
            }
            return c;
          },
          [&](const CDef& n) {
            return make_constraint(
                CDef{n.var, subst_ty(n.type),
                     rename_tv_in_constraint(n.body, old_uid, image, supply)},
                c->span);
          },
          [&](const CLetPoly& n) {
            Constraint bound =
                n.binder.uid == old_uid
                    ? n.bound
                    : rename_tv_in_constraint(n.bound, old_uid, image, supply);
            return make_constraint(
                CLetPoly{n.var, n.binder, bound,
                         rename_tv_in_constraint(n.body, old_uid, image,
                                                 supply)},
                c->span);
          },
          [&](const CLetMono& n) {
            Constraint bound =
                n.binder.uid == old_uid
                    ? n.bound
                    : rename_tv_in_constraint(n.bound, old_uid, image, supply);
            return make_constraint(
                CLetMono{n.var, n.binder, bound,
                         rename_tv_in_constraint(n.body, old_uid, image,
                                                 supply)},
                c->span);
          },
      },
      c->v);
}

bool binder_in_stack(const std::vector<Frame>& stack, const TypeVarName& v) {
  for (const auto& name : atv_of(stack)) {
    if (name == v) return true;
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// Step
// ---------------------------------------------------------------------------

namespace {

StepOutcome stepped(Rule rule, SolverState next) {
  return StepOutcome{StepOutcome::Kind::Stepped, rule, std::move(next),
                     std::nullopt};
}

StepOutcome stuck(TypeError err) {
  return StepOutcome{StepOutcome::Kind::Stuck, Rule::Eq, {}, std::move(err)};
}

// Collects survivors of xi (in binding order) and rebuilds exists frames for
// them, reusing original frame spans where available.
std::vector<Frame> exists_frames_for(
    const std::vector<TypeVarName>& survivors,
    const std::map<std::int64_t, SourceSpan>& spans) {
  std::vector<Frame> out;
  for (const auto& v : survivors) {
    SourceSpan span;
    if (auto it = spans.find(v.uid); it != spans.end()) span = it->second;
    out.push_back(make_frame(FExists{v}, span));
  }
  return out;
}

}  // namespace

StepOutcome step(const SolverState& s, NameSupply& supply,
                 const StepHooks* hooks) {
  if (is_final(s)) {
    return StepOutcome{StepOutcome::Kind::Final, Rule::Eq, {}, std::nullopt};
  }
  const std::vector<Rule> rules = matching_rules(s);
  if (rules.empty()) {
    throw SolverInvariantError("no rule matches a non-final state");
  }
  assert(rules.size() == 1 && "solver determinism violated");
  const Rule rule = rules.front();
  const TypeContext delta = delta_of(s.stack);

  auto call_partition = [&](const std::vector<TypeVarName>& xi,
                            std::size_t upper_start) {
    Partition p = partition(xi, s.subst, s.theta_env, supply);
    if (hooks && hooks->on_partition) {
      PartitionCall call;
      call.xi = xi;
      call.subst = s.subst;
      call.theta_env = s.theta_env;
      call.stack_lower.assign(s.stack.begin(),
                              s.stack.begin() + upper_start);
      call.stack_upper.assign(s.stack.begin() + upper_start, s.stack.end());
      call.result = p;
      hooks->on_partition(call);
    }
    return p;
  };

  switch (rule) {
    case Rule::ConjPush: {
      const auto& n = std::get<CAnd>(s.current->v);
      SolverState next = s;
      next.stack.push_back(make_frame(FConj{n.rhs}, s.current->span));
      next.current = n.lhs;
      return stepped(rule, std::move(next));
    }
    case Rule::ConjPop: {
      const auto& top = std::get<FConj>(s.stack.back()->v);
      SolverState next = s;
      next.stack.pop_back();
      next.current = top.rest;
      return stepped(rule, std::move(next));
    }
    case Rule::Eq: {
      const auto& n = std::get<CEq>(s.current->v);
      Type lhs = s.subst.apply(n.lhs, supply);
      Type rhs = s.subst.apply(n.rhs, supply);
      auto result = unify(delta, s.theta_env, lhs, rhs, supply);
      if (!result.ok()) {
        return stuck(TypeError{TypeError::Unify{result.error()},
                               s.current->span});
      }
      SolverState next = s;
      next.theta_env = std::move(result.value().theta_env);
      next.subst = compose(result.value().subst, s.subst, supply);
      next.current = ctrue();
      return stepped(rule, std::move(next));
    }
    case Rule::Freeze: {
      const auto& n = std::get<CFreeze>(s.current->v);
      auto bound = gamma_of(s.stack).lookup(n.var);
      if (!bound || !*bound) {
        return stuck(
            TypeError{TypeError::UnboundVariable{n.var}, s.current->span});
      }
      SolverState next = s;
      next.current = make_constraint(CEq{*bound, n.type}, s.current->span);
      return stepped(rule, std::move(next));
    }
    case Rule::Inst: {
      const auto& n = std::get<CInst>(s.current->v);
      auto bound = gamma_of(s.stack).lookup(n.var);
      if (!bound || !*bound) {
        return stuck(
            TypeError{TypeError::UnboundVariable{n.var}, s.current->span});
      }
      auto [prefix, body] = strip_forall_prefix(*bound);
      // Freshen the quantified variables; they become existential binders.
      std::map<std::int64_t, Type> renames;
      std::vector<TypeVarName> fresh;
      fresh.reserve(prefix.size());
      for (const auto& v : prefix) {
        TypeVarName nv = supply.fresh_numbered("a");
        renames[v.uid] = make_var(nv);
        fresh.push_back(nv);
      }
      Type head = apply_type_subst(renames, body, supply);
      Constraint inner =
          make_constraint(CEq{head, n.type}, s.current->span);
      for (auto it = fresh.rbegin(); it != fresh.rend(); ++it) {
        inner = make_constraint(CExists{*it, inner}, s.current->span);
      }
      SolverState next = s;
      next.current = std::move(inner);
      return stepped(rule, std::move(next));
    }
    case Rule::Mono: {
      const auto& n = std::get<CMono>(s.current->v);
      Type image = s.subst.apply(make_var(n.var), supply);
      std::vector<TypeVarName> flexibles;
      for (const auto& v : ftv_ordered(image)) {
        if (!delta.contains(v)) flexibles.push_back(v);
      }
      RestrictionContext demoted =
          demote(Restriction::Mono, s.theta_env, flexibles);
      if (!wf_type(delta, demoted, Restriction::Mono, image)) {
        return stuck(
            TypeError{TypeError::MonoFailure{n.var, image}, s.current->span});
      }
      SolverState next = s;
      next.theta_env = std::move(demoted);
      next.current = ctrue();
      return stepped(rule, std::move(next));
    }
    case Rule::ForallPush: {
      const auto& n = std::get<CForall>(s.current->v);
      TypeVarName binder = n.binder;
      Constraint body = n.body;
      if (binder_in_stack(s.stack, binder) || s.theta_env.contains(binder)) {
        TypeVarName fresh = supply.fresh(binder.text);
        body = rename_tv_in_constraint(body, binder.uid, make_var(fresh),
                                       supply);
        binder = fresh;
      }
      SolverState next = s;
      next.stack.push_back(make_frame(FForall{binder}, s.current->span));
      next.current = body;
      return stepped(rule, std::move(next));
    }
    case Rule::ForallPop: {
      const auto& top = std::get<FForall>(s.stack.back()->v);
      for (const auto& [name, image] : s.subst.entries()) {
        for (const auto& v : ftv_ordered(image)) {
          if (v == top.binder) {
            return stuck(TypeError{TypeError::RigidEscape{top.binder},
                                   s.stack.back()->span});
          }
        }
      }
      SolverState next = s;
      next.stack.pop_back();
      return stepped(rule, std::move(next));
    }
    case Rule::ExistsPush: {
      const auto& n = std::get<CExists>(s.current->v);
      TypeVarName binder = n.binder;
      Constraint body = n.body;
      if (binder_in_stack(s.stack, binder) || s.theta_env.contains(binder)) {
        TypeVarName fresh = supply.fresh(binder.text);
        body = rename_tv_in_constraint(body, binder.uid, make_var(fresh),
                                       supply);
        binder = fresh;
      }
      SolverState next = s;
      next.stack.push_back(make_frame(FExists{binder}, s.current->span));
      next.theta_env.bind(binder, Restriction::Poly);
      next.subst.bind(binder, make_var(binder));
      next.current = body;
      return stepped(rule, std::move(next));
    }
    case Rule::ExistsLower: {
      const TopRun run = top_exists_run(s.stack);
      assert(!run.binders.empty() && run.start >= 1);
      std::map<std::int64_t, SourceSpan> spans;
      for (std::size_t i = run.start; i < s.stack.size(); ++i) {
        spans[frame_as<FExists>(s.stack[i])->binder.uid] = s.stack[i]->span;
      }
      const Partition p = call_partition(run.binders, run.start);
      SolverState next = s;
      next.stack.resize(run.start);
      Frame pivot = next.stack.back();
      next.stack.pop_back();
      for (const auto& f : exists_frames_for(p.lowered, spans)) {
        next.stack.push_back(f);
      }
      next.stack.push_back(pivot);
      next.theta_env.remove_all(p.kept_out);
      next.subst = next.subst.restricted_to(next.theta_env.keys());
      return stepped(rule, std::move(next));
    }
    case Rule::DefPush: {
      const auto& n = std::get<CDef>(s.current->v);
      Type applied = s.subst.apply(n.type, supply);
      // Demote the annotation's flexible variables, both as written and
      // after substitution; the latter covers variables introduced by theta,
      // the former keeps eliminated annotation variables marked.
      std::vector<TypeVarName> flexibles;
      auto add_flexibles = [&](const Type& t) {
        for (const auto& v : ftv_ordered(t)) {
          if (!delta.contains(v)) flexibles.push_back(v);
        }
      };
      add_flexibles(n.type);
      add_flexibles(applied);
      RestrictionContext demoted =
          demote(Restriction::Mono, s.theta_env, flexibles);
      for (const auto& v : ftv_ordered(n.type)) {
        if (delta.contains(v)) continue;
        Type image = s.subst.apply(make_var(v), supply);
        if (!wf_type(delta, demoted, Restriction::Mono, image)) {
          return stuck(TypeError{TypeError::DefMonoFailure{n.var, v, image},
                                 s.current->span});
        }
      }
      SolverState next = s;
      next.theta_env = std::move(demoted);
      next.stack.push_back(make_frame(FDef{n.var, n.type}, s.current->span));
      next.current = n.body;
      return stepped(rule, std::move(next));
    }
    case Rule::DefPop: {
      SolverState next = s;
      next.stack.pop_back();
      return stepped(rule, std::move(next));
    }
    case Rule::LetPush: {
      SolverState next = s;
      if (const auto* p = constraint_as<CLetPoly>(s.current)) {
        TypeVarName binder = p->binder;
        Constraint bound = p->bound;
        if (binder_in_stack(s.stack, binder) ||
            s.theta_env.contains(binder)) {
          TypeVarName fresh = supply.fresh(binder.text);
          bound = rename_tv_in_constraint(bound, binder.uid, make_var(fresh),
                                          supply);
          binder = fresh;
        }
        next.stack.push_back(make_frame(
            FLet{Restriction::Poly, p->var, binder, p->body},
            s.current->span));
        next.theta_env.bind(binder, Restriction::Poly);
        next.subst.bind(binder, make_var(binder));
        next.current = bound;
      } else {
        const auto& m = std::get<CLetMono>(s.current->v);
        TypeVarName binder = m.binder;
        Constraint bound = m.bound;
        if (binder_in_stack(s.stack, binder) ||
            s.theta_env.contains(binder)) {
          TypeVarName fresh = supply.fresh(binder.text);
          bound = rename_tv_in_constraint(bound, binder.uid, make_var(fresh),
                                          supply);
          binder = fresh;
        }
        next.stack.push_back(make_frame(
            FLet{Restriction::Mono, m.var, binder, m.body},
            s.current->span));
        next.theta_env.bind(binder, Restriction::Poly);
        next.subst.bind(binder, make_var(binder));
        next.current = bound;
      }
      return stepped(Rule::LetPush, std::move(next));
    }
    case Rule::LetPolyPop:
    case Rule::LetMonoPop: {
      const TopRun run = top_exists_run(s.stack);
      const std::size_t let_index = run.start - (run.start > 0 ? 1 : 0);
      assert(run.start >= 1);
      const auto& let = std::get<FLet>(s.stack[let_index]->v);
      std::map<std::int64_t, SourceSpan> spans;
      spans[let.binder.uid] = s.stack[let_index]->span;
      for (std::size_t i = run.start; i < s.stack.size(); ++i) {
        spans[frame_as<FExists>(s.stack[i])->binder.uid] = s.stack[i]->span;
      }
      // The let binder is bound below the run; partition (a-bar, b) keeps
      // original binding order: binder first, then the run.
      std::vector<TypeVarName> xi;
      xi.push_back(let.binder);
      xi.insert(xi.end(), run.binders.begin(), run.binders.end());
      const Partition p = call_partition(xi, let_index);

      Type applied = s.subst.apply(make_var(let.binder), supply);
      std::vector<TypeVarName> generalisable;  // ftv(A) ∩ kept_out, ftv order
      for (const auto& v : ftv_ordered(applied)) {
        if (std::find(p.kept_out.begin(), p.kept_out.end(), v) !=
            p.kept_out.end()) {
          generalisable.push_back(v);
        }
      }

      SolverState next = s;
      next.stack.resize(let_index);

      if (rule == Rule::LetPolyPop) {
        Type scheme = applied;
        for (auto it = generalisable.rbegin(); it != generalisable.rend();
             ++it) {
          scheme = make_forall(*it, scheme);
        }
        for (const auto& f : exists_frames_for(p.lowered, spans)) {
          next.stack.push_back(f);
        }
        next.theta_env.remove_all(p.kept_out);
        next.subst = next.subst.restricted_to(next.theta_env.keys());
        next.current = make_constraint(CDef{let.var, scheme, let.rest},
                                       s.stack[let_index]->span);
      } else {
        // Keep the would-be-generalised variables existential below.
        std::vector<TypeVarName> dropped;
        for (const auto& v : p.kept_out) {
          if (std::find(generalisable.begin(), generalisable.end(), v) ==
              generalisable.end()) {
            dropped.push_back(v);
          }
        }
        // Survivors in original binding order.
        std::vector<TypeVarName> survivors;
        for (const auto& v : xi) {
          const bool is_dropped =
              std::find(dropped.begin(), dropped.end(), v) != dropped.end();
          if (!is_dropped) survivors.push_back(v);
        }
        for (const auto& f : exists_frames_for(survivors, spans)) {
          next.stack.push_back(f);
        }
        next.theta_env.remove_all(dropped);
        next.subst = next.subst.restricted_to(next.theta_env.keys());
        next.current = make_constraint(CDef{let.var, applied, let.rest},
                                       s.stack[let_index]->span);
      }
      return stepped(rule, std::move(next));
    }
  }
  assert(false && "unreachable");
  return StepOutcome{StepOutcome::Kind::Final, Rule::Eq, {}, std::nullopt};
}

// ---------------------------------------------------------------------------
// Run / infer
// ---------------------------------------------------------------------------

std::int64_t default_step_budget(const SolverState& initial) {
  return 10 * (measure(initial)[1] + 100);
}

std::string render_trace_entry(const TraceEntry& e) {
  std::ostringstream out;
  out << "step=" << e.step << " rule=" << rule_name(e.rule)
      << " stack=" << e.stack_size << " measure=(" << e.measure[0] << ","
      << e.measure[1] << "," << e.measure[2] << "," << e.measure[3] << ")"
      << " constraint=" << e.constraint_text;
  return out.str();
}

namespace {

std::string truncated_constraint(const Constraint& c) {
  std::string text = dump_constraint(c);
  constexpr std::size_t kLimit = 80;
  if (text.size() > kLimit) {
    text.resize(kLimit - 3);
    text += "...";
  }
  return text;
}

}  // namespace

RunOutcome run(SolverState initial, NameSupply& supply,
               const RunOptions& opts) {
  const std::int64_t budget =
      opts.step_budget > 0 ? opts.step_budget : default_step_budget(initial);
  if (opts.check_invariants && !state_wf(initial, supply)) {
    return std::variant<TypeError, InternalError>(
        InternalError{"initial state is not well-formed"});
  }
  RunResult result;
  result.final_state = std::move(initial);
  Measure last = measure(result.final_state);
  while (true) {
    StepOutcome outcome = step(result.final_state, supply, opts.hooks);
    if (outcome.kind == StepOutcome::Kind::Final) {
      return result;
    }
    if (outcome.kind == StepOutcome::Kind::Stuck) {
      return std::variant<TypeError, InternalError>(std::move(*outcome.err));
    }
    ++result.steps;
    if (result.steps > budget) {
      return std::variant<TypeError, InternalError>(InternalError{
          "step budget exceeded; termination measure must be broken"});
    }
    const Measure next_measure = measure(outcome.next);
    if (!measure_less(next_measure, last)) {
      return std::variant<TypeError, InternalError>(InternalError{
          std::string("measure did not decrease at rule ") +
          rule_name(outcome.rule)});
    }
    if (opts.check_invariants && !state_wf(outcome.next, supply)) {
      return std::variant<TypeError, InternalError>(
          InternalError{std::string("state well-formedness broken by ") +
                        rule_name(outcome.rule)});
    }
    if (opts.keep_trace) {
      TraceEntry entry;
      entry.step = static_cast<int>(result.steps);
      entry.rule = outcome.rule;
      entry.stack_size = outcome.next.stack.size();
      entry.measure = next_measure;
      entry.constraint_text = truncated_constraint(outcome.next.current);
      result.trace.push_back(std::move(entry));
    }
    last = next_measure;
    result.final_state = std::move(outcome.next);
  }
}

Constraint build_inference_constraint(const TypeContext& delta,
                                      const TermContext& gamma, const Term& m,
                                      NameSupply& supply,
                                      TypeVarName* out_goal) {
  Term prepared = uniquify_binders(m, gamma, supply);
  TypeVarName goal = supply.fresh_numbered("a");
  if (out_goal) *out_goal = goal;
  Constraint c = congen(prepared, make_var(goal), supply);
  for (auto it = gamma.entries().rbegin(); it != gamma.entries().rend();
       ++it) {
    c = make_constraint(CDef{it->first, it->second, c});
  }
  c = make_constraint(CExists{goal, c});
  const auto& rigid = delta.vars();
  for (auto it = rigid.rbegin(); it != rigid.rend(); ++it) {
    c = make_constraint(CForall{*it, c});
  }
  return c;
}

Result<InferResult, TypeError> infer(const TypeContext& delta,
                                     const TermContext& gamma, const Term& m,
                                     NameSupply& supply,
                                     const RunOptions& opts) {
  TypeVarName goal;
  Constraint c = build_inference_constraint(delta, gamma, m, supply, &goal);
  SolverState initial{{}, {}, {}, c};
  auto outcome = run(std::move(initial), supply, opts);
  if (!outcome.ok()) {
    if (auto* te = std::get_if<TypeError>(&outcome.error())) {
      return *te;
    }
    throw SolverInvariantError(
        std::get<InternalError>(outcome.error()).message);
  }
  const SolverState& final_state = outcome.value().final_state;
  InferResult result;
  result.type = final_state.subst.apply(make_var(goal), supply);
  for (const auto& v : ftv_ordered(result.type)) {
    if (auto r = final_state.theta_env.lookup(v)) {
      result.residual.bind(v, *r);
    }
  }
  result.trace = std::move(outcome.value().trace);
  return result;
}

}  // namespace fml

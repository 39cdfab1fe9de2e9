#include "fml/constraints.hpp"

#include <map>
#include <set>

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

Constraint make_constraint(
    std::variant<CTrue, CAnd, CEq, CFreeze, CInst, CForall, CExists, CMono,
                 CDef, CLetPoly, CLetMono>
        v,
    SourceSpan span) {
  return std::make_shared<ConstraintNode>(
      ConstraintNode{std::move(v), span});
}

Constraint ctrue() {
  static const Constraint t = make_constraint(CTrue{});
  return t;
}

// ---------------------------------------------------------------------------
// Translation
// ---------------------------------------------------------------------------

namespace {

Constraint congen_walk(const Term& m, const Type& a, NameSupply& supply) {
  const SourceSpan span = m->span;
  return std::visit(
      overload{
          [&](const TmFrozen& t) {
            return make_constraint(CFreeze{t.var, a}, span);
          },
          [&](const TmVar& t) {
            return make_constraint(CInst{t.var, a}, span);
          },
          [&](const TmApp& t) {
            TypeVarName a1 = supply.fresh_numbered("a");
            Constraint fn = congen_walk(t.fn, make_arrow(make_var(a1), a),
                                        supply);
            Constraint arg = congen_walk(t.arg, make_var(a1), supply);
            return make_constraint(
                CExists{a1, make_constraint(CAnd{fn, arg}, span)}, span);
          },
          [&](const TmLam& t) {
            TypeVarName a1 = supply.fresh_numbered("a");
            TypeVarName a2 = supply.fresh_numbered("a");
            Constraint eq = make_constraint(
                CEq{make_arrow(make_var(a1), make_var(a2)), a}, span);
            Constraint body = congen_walk(t.body, make_var(a2), supply);
            Constraint def = make_constraint(
                CDef{t.param, make_var(a1), body}, span);
            return make_constraint(
                CExists{a1,
                        make_constraint(
                            CExists{a2, make_constraint(CAnd{eq, def}, span)},
                            span)},
                span);
          },
          [&](const TmLamAnn& t) {
            TypeVarName a1 = supply.fresh_numbered("a");
            Constraint eq = make_constraint(
                CEq{make_arrow(t.ann, make_var(a1)), a}, span);
            Constraint body = congen_walk(t.body, make_var(a1), supply);
            Constraint def = make_constraint(CDef{t.param, t.ann, body}, span);
            return make_constraint(
                CExists{a1, make_constraint(CAnd{eq, def}, span)}, span);
          },
          [&](const TmLet& t) {
            TypeVarName b = supply.fresh_numbered("a");
            Constraint bound = congen_walk(t.bound, make_var(b), supply);
            Constraint body = congen_walk(t.body, a, supply);
            if (classify_value(t.bound) == ValueClass::GuardedValue) {
              return make_constraint(CLetPoly{t.var, b, bound, body}, span);
            }
            return make_constraint(CLetMono{t.var, b, bound, body}, span);
          },
          [&](const TmLetAnn& t) {
            Constraint body = congen_walk(t.body, a, supply);
            Constraint def = make_constraint(CDef{t.var, t.ann, body}, span);
            if (classify_value(t.bound) == ValueClass::GuardedValue) {
              auto [prefix, guarded] = strip_forall_prefix(t.ann);
              Constraint bound = congen_walk(t.bound, guarded, supply);
              for (auto it = prefix.rbegin(); it != prefix.rend(); ++it) {
                bound = make_constraint(CForall{*it, bound}, span);
              }
              return make_constraint(CAnd{bound, def}, span);
            }
            Constraint bound = congen_walk(t.bound, t.ann, supply);
            return make_constraint(CAnd{bound, def}, span);
          },
      },
      m->v);
}

}  // namespace

Constraint congen(const Term& m, const Type& a, NameSupply& supply) {
  return congen_walk(m, a, supply);
}

// ---------------------------------------------------------------------------
// Well-formedness
// ---------------------------------------------------------------------------

namespace {

bool wf_constraint_type(const ConstraintContext& ctx, const Type& a) {
  RestrictionContext flexibles;
  for (const auto& v : ctx.xi.vars()) {
    flexibles.bind(v, Restriction::Poly);
  }
  return wf_type(ctx.delta, flexibles, Restriction::Poly, a);
}

}  // namespace

bool wf_constraint(const ConstraintContext& ctx, const Constraint& c) {
  return std::visit(
      overload{
          [&](const CTrue&) { return true; },
          [&](const CAnd& n) {
            return wf_constraint(ctx, n.lhs) && wf_constraint(ctx, n.rhs);
          },
          [&](const CEq& n) {
            return wf_constraint_type(ctx, n.lhs) &&
                   wf_constraint_type(ctx, n.rhs);
          },
          [&](const CFreeze& n) {
            return ctx.gamma.contains(n.var) &&
                   wf_constraint_type(ctx, n.type);
          },
          [&](const CInst& n) {
            return ctx.gamma.contains(n.var) &&
                   wf_constraint_type(ctx, n.type);
          },
          [&](const CForall& n) {
            ConstraintContext inner = ctx;
            inner.delta.push(n.binder);
            return wf_constraint(inner, n.body);
          },
          [&](const CExists& n) {
            ConstraintContext inner = ctx;
            inner.xi.push(n.binder);
            return wf_constraint(inner, n.body);
          },
          [&](const CMono& n) {
            return ctx.delta.contains(n.var) || ctx.xi.contains(n.var);
          },
          [&](const CDef& n) {
            if (!wf_constraint_type(ctx, n.type)) return false;
            ConstraintContext inner = ctx;
            inner.gamma.bind(n.var, n.type);
            return wf_constraint(inner, n.body);
          },
          [&](const CLetPoly& n) {
            ConstraintContext bound_ctx = ctx;
            bound_ctx.xi.push(n.binder);
            if (!wf_constraint(bound_ctx, n.bound)) return false;
            ConstraintContext body_ctx = ctx;
            body_ctx.gamma.bind(n.var, nullptr);
            return wf_constraint(body_ctx, n.body);
          },
          [&](const CLetMono& n) {
            ConstraintContext bound_ctx = ctx;
            bound_ctx.xi.push(n.binder);
            if (!wf_constraint(bound_ctx, n.bound)) return false;
            ConstraintContext body_ctx = ctx;
            body_ctx.gamma.bind(n.var, nullptr);
            return wf_constraint(body_ctx, n.body);
          },
      },
      c->v);
}

// ---------------------------------------------------------------------------
// Dump format
// ---------------------------------------------------------------------------

namespace {

// One shared display-name table across the whole constraint so that the same
// uid prints the same everywhere in a dump.
class DumpNamer {
 public:
  explicit DumpNamer(const Constraint& c) { collect(c); }

  std::string type_text(const Type& t) const {
    PrintOptions opts;
    opts.var_names = names_;
    return print_type(t, opts);
  }

  std::string var_text(const TypeVarName& v) const {
    auto it = names_.find(v.uid);
    return it != names_.end() ? it->second : v.text;
  }

 private:
  void note(const TypeVarName& v) {
    if (names_.count(v.uid)) return;
    std::string name = v.text;
    while (!taken_.insert(name).second) name += "'";
    names_[v.uid] = name;
  }

  void note_type(const Type& t) {
    for (const auto& v : ftv_ordered(t)) note(v);
  }

  void collect(const Constraint& c) {
    std::visit(overload{
                   [&](const CTrue&) {},
                   [&](const CAnd& n) {
                     collect(n.lhs);
                     collect(n.rhs);
                   },
                   [&](const CEq& n) {
                     note_type(n.lhs);
                     note_type(n.rhs);
                   },
                   [&](const CFreeze& n) { note_type(n.type); },
                   [&](const CInst& n) { note_type(n.type); },
                   [&](const CForall& n) {
                     note(n.binder);
                     collect(n.body);
                   },
                   [&](const CExists& n) {
                     note(n.binder);
                     collect(n.body);
                   },
                   [&](const CMono& n) { note(n.var); },
                   [&](const CDef& n) {
                     note_type(n.type);
                     collect(n.body);
                   },
                   [&](const CLetPoly& n) {
                     note(n.binder);
                     collect(n.bound);
                     collect(n.body);
                   },
                   [&](const CLetMono& n) {
                     note(n.binder);
                     collect(n.bound);
                     collect(n.body);
                   },
               },
               c->v);
  }

  std::map<std::int64_t, std::string> names_;
  std::set<std::string> taken_;
};

void dump_walk(const Constraint& c, const DumpNamer& namer, std::string& out) {
  std::visit(
      overload{
          [&](const CTrue&) { out += "true"; },
          [&](const CAnd& n) {
            out += "(";
            dump_walk(n.lhs, namer, out);
            out += " /\\ ";
            dump_walk(n.rhs, namer, out);
            out += ")";
          },
          [&](const CEq& n) {
            out += "(" + namer.type_text(n.lhs) + " = " +
                   namer.type_text(n.rhs) + ")";
          },
          [&](const CFreeze& n) {
            out += "(~" + n.var + " : " + namer.type_text(n.type) + ")";
          },
          [&](const CInst& n) {
            out += "(" + n.var + " <= " + namer.type_text(n.type) + ")";
          },
          [&](const CForall& n) {
            out += "(forall " + namer.var_text(n.binder) + ". ";
            dump_walk(n.body, namer, out);
            out += ")";
          },
          [&](const CExists& n) {
            out += "(exists " + namer.var_text(n.binder) + ". ";
            dump_walk(n.body, namer, out);
            out += ")";
          },
          [&](const CMono& n) { out += "mono(" + namer.var_text(n.var) + ")"; },
          [&](const CDef& n) {
            out += "(def (" + n.var + " : " + namer.type_text(n.type) +
                   ") in ";
            dump_walk(n.body, namer, out);
            out += ")";
          },
          [&](const CLetPoly& n) {
            out += "(let* " + n.var + " = ^" + namer.var_text(n.binder) + ". ";
            dump_walk(n.bound, namer, out);
            out += " in ";
            dump_walk(n.body, namer, out);
            out += ")";
          },
          [&](const CLetMono& n) {
            out += "(let@ " + n.var + " = ^" + namer.var_text(n.binder) + ". ";
            dump_walk(n.bound, namer, out);
            out += " in ";
            dump_walk(n.body, namer, out);
            out += ")";
          },
      },
      c->v);
}

}  // namespace

std::string dump_constraint(const Constraint& c) {
  DumpNamer namer(c);
  std::string out;
  dump_walk(c, namer, out);
  return out;
}

}  // namespace fml

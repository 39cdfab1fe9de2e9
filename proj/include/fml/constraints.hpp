#pragma once

#include <memory>
#include <string>
#include <variant>

#include "fml/core.hpp"

namespace fml {

struct ConstraintNode;
using Constraint = std::shared_ptr<const ConstraintNode>;

struct CTrue {};
struct CAnd {
  Constraint lhs;
  Constraint rhs;
};
struct CEq {
  Type lhs;
  Type rhs;
};
struct CFreeze {
  std::string var;
  Type type;
};
struct CInst {
  std::string var;
  Type type;
};
struct CForall {
  TypeVarName binder;
  Constraint body;
};
struct CExists {
  TypeVarName binder;
  Constraint body;
};
struct CMono {
  TypeVarName var;
};
struct CDef {
  std::string var;
  Type type;
  Constraint body;
};
struct CLetPoly {
  std::string var;
  TypeVarName binder;
  Constraint bound;
  Constraint body;
};
struct CLetMono {
  std::string var;
  TypeVarName binder;
  Constraint bound;
  Constraint body;
};

struct ConstraintNode {
  std::variant<CTrue, CAnd, CEq, CFreeze, CInst, CForall, CExists, CMono, CDef,
               CLetPoly, CLetMono>
      v;
  SourceSpan span;
};

Constraint make_constraint(
    std::variant<CTrue, CAnd, CEq, CFreeze, CInst, CForall, CExists, CMono,
                 CDef, CLetPoly, CLetMono>
        v,
    SourceSpan span = {});

Constraint ctrue();

template <class T>
const T* constraint_as(const Constraint& c) {
  return std::get_if<T>(&c->v);
}

struct ConstraintContext {
  TypeContext delta;
  TypeContext xi;
  TermContext gamma;
};

/// Translates a term and an expected type to a constraint. Fresh flexible
/// variables are allocated eagerly left-to-right; the let cases dispatch on
/// annotation presence and on whether the bound term is a guarded value.
/// wf_term for the intended context is a precondition.
Constraint congen(const Term& m, const Type& a, NameSupply& supply);

/// Constraint well-formedness over a rigid context, a flexible context, and a
/// term context tracked by binding presence only.
bool wf_constraint(const ConstraintContext& ctx, const Constraint& c);

/// Fully parenthesized textual dump, one binder per exists/forall; let
/// constraints render as "let* x = ^a. C1 in C2" (poly) and
/// "let@ x = ^a. C1 in C2" (mono).
std::string dump_constraint(const Constraint& c);

}  // namespace fml

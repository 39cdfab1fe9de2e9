#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fml/constraints.hpp"
#include "fml/core.hpp"
#include "fml/result.hpp"
#include "fml/solver.hpp"

namespace fml::oracle {

/// Finite map from type variables to types (the delta of the satisfiability
/// judgement and the instantiation judgement).
class Instantiation {
 public:
  Instantiation() = default;

  bool contains(const TypeVarName& v) const;
  std::optional<Type> lookup(const TypeVarName& v) const;
  void bind(TypeVarName v, Type t);
  Instantiation extended(TypeVarName v, Type t) const;

  /// Applies the map to a type, leaving unmapped variables in place.
  Type apply(const Type& t, NameSupply& supply) const;

  const std::vector<std::pair<TypeVarName, Type>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<TypeVarName, Type>> entries_;
};

/// The judgement "delta |- inst : domain =>_r extra": every domain variable
/// maps to a type well-formed over (delta, extra) at restriction r.
bool check_instantiation(const TypeContext& delta, const Instantiation& inst,
                         const TypeContext& domain, Restriction r,
                         const TypeContext& extra);

/// First-order matching of a prenex scheme's body against a target over the
/// scheme's quantified variables. Matching under binders refuses images that
/// would capture bound rigids; quantified variables that do not occur in the
/// body default to Int.
std::optional<Instantiation> match_instance(const Type& scheme,
                                            const Type& target);

struct PrincipalType {
  /// Residual variables of the principal type, read as fresh rigids, with
  /// the restriction the solver recorded for them.
  std::vector<std::pair<TypeVarName, Restriction>> fresh_vars;
  Type type;
};

/// Runs the solver and re-reads residual flexible variables as the fresh
/// rigid context of the principal pair.
Result<PrincipalType, TypeError> principal_via_solver(const TypeContext& delta,
                                                      const TermContext& gamma,
                                                      const Term& m,
                                                      NameSupply& supply);

struct OracleLimits {
  int max_candidates = 64;        // argument-type candidates per application
  int max_assignments = 4096;     // instantiation tuples per enumeration
  int max_witnesses = 400;        // witness candidates per exists binder
};

/// Declarative typing check, syntax-directed over the typing rules. The
/// solver is consulted only for the principality requirement of plain lets;
/// the remaining non-determinism (application argument types, monomorphic
/// instantiation of non-value lets) is resolved by bounded candidate search
/// and is therefore incomplete in principle, adequate at desk scale.
bool check_typing(const TypeContext& delta, const TermContext& gamma,
                  const Term& m, const Type& a, NameSupply& supply,
                  const OracleLimits& limits = {});

/// Direct structural evaluation of the constraint satisfiability judgement.
/// Witnesses for exists binders are taken from inst when present, otherwise
/// harvested from equations and enumerated up to a bounded depth. Let
/// constraints obtain their most general model by delegating to the solver.
bool check_constraint_sat(const TypeContext& delta, const TypeContext& xi,
                          const TermContext& gamma, const Instantiation& inst,
                          const Constraint& c, NameSupply& supply,
                          const OracleLimits& limits = {});

}  // namespace fml::oracle

#pragma once

#include <string>
#include <variant>
#include <vector>

#include "fml/core.hpp"
#include "fml/result.hpp"

namespace fml {

/// Idempotent substitution over flexible variables. The domain equals the key
/// set of the associated restriction context; variables mapped to themselves
/// are "undetermined".
class Subst {
 public:
  Subst() = default;

  bool contains(const TypeVarName& v) const;
  Type lookup(const TypeVarName& v) const;  // v itself if unbound
  void bind(TypeVarName v, Type t);
  void set(const TypeVarName& v, Type t);
  void remove_all(const std::vector<TypeVarName>& vs);
  Subst restricted_to(const std::vector<TypeVarName>& keep) const;

  /// Applies the substitution to a type (capture-avoiding).
  Type apply(const Type& t, NameSupply& supply) const;

  bool is_idempotent(NameSupply& supply) const;

  const std::vector<std::pair<TypeVarName, Type>>& entries() const {
    return entries_;
  }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<std::pair<TypeVarName, Type>> entries_;
};

struct CtorClash {
  std::string lhs;
  std::string rhs;
};
struct ArityMismatch {
  std::string ctor;
  std::size_t lhs;
  std::size_t rhs;
};
struct OccursViolation {
  TypeVarName var;
  Type type;
};
struct RestrictionViolation {
  TypeVarName var;
  Type type;
};
struct QuantifierEscape {
  TypeVarName var;
};
struct QuantifierMismatch {
  Type lhs;
  Type rhs;
};

struct UnifyError {
  std::variant<CtorClash, ArityMismatch, OccursViolation, RestrictionViolation,
               QuantifierEscape, QuantifierMismatch>
      v;
  std::string render() const;
};

struct UnifyResult {
  RestrictionContext theta_env;
  Subst subst;
};

/// Restriction-aware first-order unification with ordered quantifiers.
/// Inputs must already have the caller's substitution applied. On success the
/// restriction context keeps its key set, with restrictions possibly demoted
/// from Poly to Mono, and the substitution is a most general unifier.
Result<UnifyResult, UnifyError> unify(const TypeContext& delta,
                                      const RestrictionContext& theta_env,
                                      const Type& a, const Type& b,
                                      NameSupply& supply);

/// demote(Poly, ...) is the identity; demote(Mono, theta, vars) marks every
/// listed variable monomorphic and leaves the rest unchanged.
RestrictionContext demote(Restriction r, const RestrictionContext& theta_env,
                          const std::vector<TypeVarName>& vars);

/// Composition: the result applies inner first, then outer. Asserts that the
/// result is idempotent.
Subst compose(const Subst& outer, const Subst& inner, NameSupply& supply);

}  // namespace fml

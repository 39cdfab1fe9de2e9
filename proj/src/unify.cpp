#include "fml/unify.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <sstream>

#include "fml/surface.hpp"

namespace fml {

// ---------------------------------------------------------------------------
// Subst
// ---------------------------------------------------------------------------

bool Subst::contains(const TypeVarName& v) const {
  for (const auto& [name, t] : entries_) {
    if (name == v) return true;
  }
  return false;
}

Type Subst::lookup(const TypeVarName& v) const {
  for (const auto& [name, t] : entries_) {
    if (name == v) return t;
  }
  return make_var(v);
}

void Subst::bind(TypeVarName v, Type t) {
  assert(!contains(v));
  entries_.emplace_back(std::move(v), std::move(t));
}

void Subst::set(const TypeVarName& v, Type t) {
  for (auto& [name, cur] : entries_) {
    if (name == v) {
      cur = std::move(t);
      return;
    }
  }
  entries_.emplace_back(v, std::move(t));
}

void Subst::remove_all(const std::vector<TypeVarName>& vs) {
  entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                [&](const auto& e) {
                                  return std::find(vs.begin(), vs.end(),
                                                   e.first) != vs.end();
                                }),
                 entries_.end());
}

Subst Subst::restricted_to(const std::vector<TypeVarName>& keep) const {
  Subst out;
  for (const auto& [name, t] : entries_) {
    if (std::find(keep.begin(), keep.end(), name) != keep.end()) {
      out.entries_.emplace_back(name, t);
    }
  }
  return out;
}

Type Subst::apply(const Type& t, NameSupply& supply) const {
  if (entries_.empty()) return t;
  std::map<std::int64_t, Type> map;
  for (const auto& [name, ty] : entries_) {
    // Identity bindings need no work.
    if (const auto* v = as_var(ty); v && v->name == name) continue;
    map[name.uid] = ty;
  }
  return apply_type_subst(map, t, supply);
}

bool Subst::is_idempotent(NameSupply& supply) const {
  for (const auto& [name, ty] : entries_) {
    if (!alpha_equal(apply(ty, supply), ty)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

std::string UnifyError::render() const {
  std::ostringstream out;
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, CtorClash>) {
          out << "cannot unify '" << e.lhs << "' with '" << e.rhs << "'";
        } else if constexpr (std::is_same_v<T, ArityMismatch>) {
          out << "constructor '" << e.ctor << "' applied to " << e.lhs
              << " and " << e.rhs << " arguments";
        } else if constexpr (std::is_same_v<T, OccursViolation>) {
          out << "occurs check failed: '" << e.var.text << "' occurs in '"
              << print_type(e.type) << "'";
        } else if constexpr (std::is_same_v<T, RestrictionViolation>) {
          out << "monomorphic variable '" << e.var.text
              << "' cannot take polymorphic type '" << print_type(e.type)
              << "'";
        } else if constexpr (std::is_same_v<T, QuantifierEscape>) {
          out << "quantified variable '" << e.var.text
              << "' escapes its scope";
        } else if constexpr (std::is_same_v<T, QuantifierMismatch>) {
          out << "quantifier mismatch between '" << print_type(e.lhs)
              << "' and '" << print_type(e.rhs) << "'";
        }
      },
      v);
  return out.str();
}

// ---------------------------------------------------------------------------
// Unification
// ---------------------------------------------------------------------------

RestrictionContext demote(Restriction r, const RestrictionContext& theta_env,
                          const std::vector<TypeVarName>& vars) {
  if (r == Restriction::Poly) return theta_env;
  RestrictionContext out = theta_env;
  for (const auto& v : vars) {
    if (out.contains(v)) out.set(v, Restriction::Mono);
  }
  return out;
}

namespace {

std::string type_head_text(const Type& t) {
  if (const auto* v = as_var(t)) return v->name.text;
  if (const auto* c = as_ctor(t)) return c->ctor;
  return "forall";
}

struct Unifier {
  NameSupply& supply;

  Result<UnifyResult, UnifyError> go(const TypeContext& delta,
                                     const RestrictionContext& theta,
                                     const Type& a, const Type& b) {
    // Identical variables (rigid or flexible).
    if (const auto* va = as_var(a)) {
      if (const auto* vb = as_var(b); vb && va->name == vb->name) {
        return UnifyResult{theta, Subst{}};
      }
    }
    // Matching constructors, pointwise with substitution threading.
    if (const auto* ca = as_ctor(a)) {
      if (const auto* cb = as_ctor(b)) {
        if (ca->ctor != cb->ctor) {
          return UnifyError{CtorClash{ca->ctor, cb->ctor}};
        }
        if (ca->args.size() != cb->args.size()) {
          return UnifyError{
              ArityMismatch{ca->ctor, ca->args.size(), cb->args.size()}};
        }
        RestrictionContext cur_theta = theta;
        Subst cur_subst;
        for (std::size_t i = 0; i < ca->args.size(); ++i) {
          Type lhs = cur_subst.apply(ca->args[i], supply);
          Type rhs = cur_subst.apply(cb->args[i], supply);
          auto sub = go(delta, cur_theta, lhs, rhs);
          if (!sub.ok()) return sub.error();
          cur_theta = std::move(sub.value().theta_env);
          cur_subst = compose(sub.value().subst, cur_subst, supply);
        }
        return UnifyResult{std::move(cur_theta), std::move(cur_subst)};
      }
    }
    // Flexible variable against an arbitrary type.
    if (const auto* va = as_var(a)) {
      if (auto r = theta.lookup(va->name)) {
        return bind_var(delta, theta, va->name, *r, b);
      }
    }
    if (const auto* vb = as_var(b)) {
      if (auto r = theta.lookup(vb->name)) {
        return bind_var(delta, theta, vb->name, *r, a);
      }
    }
    // Quantified types: open both under a shared fresh rigid variable.
    if (const auto* fa = as_forall(a)) {
      if (const auto* fb = as_forall(b)) {
        TypeVarName fresh = supply.fresh_numbered("c");
        std::map<std::int64_t, Type> ra{{fa->binder.uid, make_var(fresh)}};
        std::map<std::int64_t, Type> rb{{fb->binder.uid, make_var(fresh)}};
        Type body_a = apply_type_subst(ra, fa->body, supply);
        Type body_b = apply_type_subst(rb, fb->body, supply);
        auto sub = go(delta.extended(fresh), theta, body_a, body_b);
        if (!sub.ok()) return sub.error();
        for (const auto& [name, image] : sub.value().subst.entries()) {
          for (const auto& free : ftv_ordered(image)) {
            if (free == fresh) {
              return UnifyError{QuantifierEscape{fresh}};
            }
          }
        }
        return sub;
      }
    }
    if (as_forall(a) != nullptr || as_forall(b) != nullptr) {
      return UnifyError{QuantifierMismatch{a, b}};
    }
    // Remaining mismatches (e.g. distinct rigid variables, rigid vs ctor).
    return UnifyError{CtorClash{type_head_text(a), type_head_text(b)}};
  }

  Result<UnifyResult, UnifyError> bind_var(const TypeContext& delta,
                                           const RestrictionContext& theta,
                                           const TypeVarName& var,
                                           Restriction r, const Type& image) {
    for (const auto& free : ftv_ordered(image)) {
      if (free == var) {
        return UnifyError{OccursViolation{var, image}};
      }
    }
    std::vector<TypeVarName> flexibles;
    for (const auto& free : ftv_ordered(image)) {
      if (!delta.contains(free)) flexibles.push_back(free);
    }
    RestrictionContext demoted = demote(r, theta, flexibles);
    if (!wf_type(delta, demoted, r, image)) {
      return UnifyError{RestrictionViolation{var, image}};
    }
    Subst subst;
    subst.bind(var, image);
    return UnifyResult{std::move(demoted), std::move(subst)};
  }
};

}  // namespace

Result<UnifyResult, UnifyError> unify(const TypeContext& delta,
                                      const RestrictionContext& theta_env,
                                      const Type& a, const Type& b,
                                      NameSupply& supply) {
  Unifier u{supply};
  return u.go(delta, theta_env, a, b);
}

Subst compose(const Subst& outer, const Subst& inner, NameSupply& supply) {
  Subst out;
  for (const auto& [name, image] : inner.entries()) {
    out.bind(name, outer.apply(image, supply));
  }
  for (const auto& [name, image] : outer.entries()) {
    if (!out.contains(name)) out.bind(name, image);
  }
  assert(out.is_idempotent(supply));
  return out;
}

}  // namespace fml

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace fml {

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

/// A type variable. Identity is the uid; the text is a printing hint only.
struct TypeVarName {
  std::int64_t uid = 0;
  std::string text;

  friend bool operator==(const TypeVarName& a, const TypeVarName& b) {
    return a.uid == b.uid;
  }
  friend bool operator!=(const TypeVarName& a, const TypeVarName& b) {
    return a.uid != b.uid;
  }
  friend bool operator<(const TypeVarName& a, const TypeVarName& b) {
    return a.uid < b.uid;
  }
};

/// Allocates globally unique variable names for one inference run.
class NameSupply {
 public:
  TypeVarName fresh(std::string_view hint) {
    return TypeVarName{next_++, std::string(hint)};
  }
  /// Fresh variable whose text carries its uid, e.g. "a12".
  TypeVarName fresh_numbered(std::string_view prefix) {
    const std::int64_t id = next_++;
    return TypeVarName{id, std::string(prefix) + std::to_string(id)};
  }
  /// Freshens a term-variable name (used to eliminate shadowing).
  std::string fresh_term(std::string_view base) {
    return std::string(base) + "#" + std::to_string(next_++);
  }

 private:
  std::int64_t next_ = 1;
};

// ---------------------------------------------------------------------------
// Source spans
// ---------------------------------------------------------------------------

struct SourceSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  int line = 1;
  int column = 1;

  bool valid() const { return end > 0 || start > 0 || line > 1 || column > 1; }
};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct TypeNode;
using Type = std::shared_ptr<const TypeNode>;

struct TVar {
  TypeVarName name;
};
struct TCtor {
  std::string ctor;
  std::vector<Type> args;
};
struct TForall {
  TypeVarName binder;
  Type body;
};

struct TypeNode {
  std::variant<TVar, TCtor, TForall> v;
};

Type make_var(TypeVarName name);
Type make_ctor(std::string ctor, std::vector<Type> args);
Type make_forall(TypeVarName binder, Type body);
Type make_arrow(Type dom, Type cod);
Type make_prod(Type a, Type b);
Type make_list(Type elem);
Type make_base(std::string name);

inline const TVar* as_var(const Type& t) { return std::get_if<TVar>(&t->v); }
inline const TCtor* as_ctor(const Type& t) { return std::get_if<TCtor>(&t->v); }
inline const TForall* as_forall(const Type& t) {
  return std::get_if<TForall>(&t->v);
}

/// Names of the built-in constructors.
inline constexpr const char* kArrowCtor = "->";
inline constexpr const char* kProdCtor = "*";
inline constexpr const char* kListCtor = "List";

/// Arity table for type constructors. The built-in table carries ->, *, Int,
/// Unit, Bool and List; more constructors may be registered.
class ConstructorTable {
 public:
  static const ConstructorTable& builtins();

  void add(std::string name, int arity) { arity_[std::move(name)] = arity; }
  bool known(const std::string& name) const { return arity_.count(name) > 0; }
  int arity(const std::string& name) const { return arity_.at(name); }

 private:
  std::map<std::string, int> arity_;
};

// ---------------------------------------------------------------------------
// Terms
// ---------------------------------------------------------------------------

struct TermNode;
using Term = std::shared_ptr<const TermNode>;

struct TmFrozen {
  std::string var;
};
struct TmVar {
  std::string var;
};
struct TmApp {
  Term fn;
  Term arg;
};
struct TmLam {
  std::string param;
  Term body;
};
struct TmLamAnn {
  std::string param;
  Type ann;
  Term body;
};
struct TmLet {
  std::string var;
  Term bound;
  Term body;
};
struct TmLetAnn {
  std::string var;
  Type ann;
  Term bound;
  Term body;
};

struct TermNode {
  std::variant<TmFrozen, TmVar, TmApp, TmLam, TmLamAnn, TmLet, TmLetAnn> v;
  SourceSpan span;
};

Term make_term(std::variant<TmFrozen, TmVar, TmApp, TmLam, TmLamAnn, TmLet,
                            TmLetAnn> v,
               SourceSpan span = {});

// ---------------------------------------------------------------------------
// Contexts and restrictions
// ---------------------------------------------------------------------------

/// Restriction on a flexible variable: monomorphic-only or unrestricted.
enum class Restriction { Mono, Poly };

inline const char* restriction_name(Restriction r) {
  return r == Restriction::Mono ? "monomorphic" : "polymorphic";
}

/// Ordered list of type variables, used for both rigid and flexible roles.
/// Duplicates are disallowed; order is kept for deterministic printing.
class TypeContext {
 public:
  TypeContext() = default;
  explicit TypeContext(std::vector<TypeVarName> vars)
      : vars_(std::move(vars)) {}

  bool contains(const TypeVarName& v) const;
  void push(TypeVarName v) { vars_.push_back(std::move(v)); }
  TypeContext extended(TypeVarName v) const;

  const std::vector<TypeVarName>& vars() const { return vars_; }
  bool empty() const { return vars_.empty(); }
  std::size_t size() const { return vars_.size(); }

 private:
  std::vector<TypeVarName> vars_;
};

/// Restriction context Theta: an ordered map from flexible variables to their
/// restrictions.
class RestrictionContext {
 public:
  RestrictionContext() = default;

  bool contains(const TypeVarName& v) const;
  std::optional<Restriction> lookup(const TypeVarName& v) const;
  void bind(TypeVarName v, Restriction r);
  void set(const TypeVarName& v, Restriction r);
  void remove_all(const std::vector<TypeVarName>& vs);
  RestrictionContext restricted_to(const std::vector<TypeVarName>& keep) const;

  const std::vector<std::pair<TypeVarName, Restriction>>& entries() const {
    return entries_;
  }
  std::vector<TypeVarName> keys() const;
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<TypeVarName, Restriction>> entries_;
};

/// Term context Gamma: term variables with their types, in insertion order.
class TermContext {
 public:
  TermContext() = default;

  bool contains(const std::string& name) const;
  std::optional<Type> lookup(const std::string& name) const;
  void bind(std::string name, Type type);
  TermContext extended(std::string name, Type type) const;

  const std::vector<std::pair<std::string, Type>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, Type>> entries_;
};

// ---------------------------------------------------------------------------
// Structural operations
// ---------------------------------------------------------------------------

/// Free type variables of t in order of first appearance (pre-order,
/// arguments left to right); bound variables excluded, no duplicates.
std::vector<TypeVarName> ftv_ordered(const Type& t);

/// Equality up to consistent renaming of Forall-bound variables. Quantifier
/// order and superfluous quantifiers are significant.
bool alpha_equal(const Type& a, const Type& b);

/// True iff no Forall occurs anywhere in t.
bool is_monotype(const Type& t);

/// True iff the root of t is not a Forall.
bool is_guarded(const Type& t);

enum class ValueClass { GuardedValue, ValueOnly, NonValue };

/// Classifies m against the value grammars: guarded values exclude frozen
/// variables, values additionally admit them, applications are neither.
ValueClass classify_value(const Term& m);

/// The maximal top-level quantifier prefix of t and the remaining body.
std::pair<std::vector<TypeVarName>, Type> strip_forall_prefix(const Type& t);

/// split(A, M): the quantifier prefix is maximal if M is a guarded value and
/// empty otherwise.
std::pair<std::vector<TypeVarName>, Type> split(const Type& a, const Term& m);

/// Well-formedness of a type at restriction r: rigid variables are
/// monomorphic, flexible variables carry their recorded restriction, Forall
/// forces Poly, and every Mono type is also Poly. Returns false (never
/// throws) on unknown variables.
bool wf_type(const TypeContext& delta, const RestrictionContext& theta_env,
             Restriction r, const Type& a);

/// Term well-formedness: free term variables bound in gamma, annotations
/// closed over the rigid context, with LetAnn scoping through split.
bool wf_term(const TypeContext& delta, const TermContext& gamma,
             const Term& m);

/// Simultaneous capture-avoiding substitution. Forall binders are renamed
/// with fresh uids when an image would be captured.
Type apply_type_subst(const std::map<std::int64_t, Type>& map, const Type& t,
                      NameSupply& supply);

/// Renames shadowing term binders so that all binders in the result are
/// distinct from each other and from anything already in scope.
Term uniquify_binders(const Term& m, const TermContext& gamma,
                      NameSupply& supply);

/// Structural equality of terms, ignoring spans.
bool term_equal(const Term& a, const Term& b);

}  // namespace fml

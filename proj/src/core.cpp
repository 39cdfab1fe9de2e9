#include "fml/core.hpp"

#include <algorithm>
#include <cassert>
#include <set>

namespace fml {

namespace {

template <class... Ts>
struct overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overload(Ts...) -> overload<Ts...>;

}  // namespace

// ---------------------------------------------------------------------------
// Type builders
// ---------------------------------------------------------------------------

Type make_var(TypeVarName name) {
  return std::make_shared<TypeNode>(TypeNode{TVar{std::move(name)}});
}

Type make_ctor(std::string ctor, std::vector<Type> args) {
  return std::make_shared<TypeNode>(
      TypeNode{TCtor{std::move(ctor), std::move(args)}});
}

Type make_forall(TypeVarName binder, Type body) {
  return std::make_shared<TypeNode>(
      TypeNode{TForall{std::move(binder), std::move(body)}});
}

Type make_arrow(Type dom, Type cod) {
  return make_ctor(kArrowCtor, {std::move(dom), std::move(cod)});
}

Type make_prod(Type a, Type b) {
  return make_ctor(kProdCtor, {std::move(a), std::move(b)});
}

Type make_list(Type elem) { return make_ctor(kListCtor, {std::move(elem)}); }

Type make_base(std::string name) { return make_ctor(std::move(name), {}); }

const ConstructorTable& ConstructorTable::builtins() {
  static const ConstructorTable table = [] {
    ConstructorTable t;
    t.add(kArrowCtor, 2);
    t.add(kProdCtor, 2);
    t.add("Int", 0);
    t.add("Unit", 0);
    t.add("Bool", 0);
    t.add(kListCtor, 1);
    return t;
  }();
  return table;
}

Term make_term(std::variant<TmFrozen, TmVar, TmApp, TmLam, TmLamAnn, TmLet,
                            TmLetAnn> v,
               SourceSpan span) {
  return std::make_shared<TermNode>(TermNode{std::move(v), span});
}

// ---------------------------------------------------------------------------
// Contexts
// ---------------------------------------------------------------------------

bool TypeContext::contains(const TypeVarName& v) const {
  return std::find(vars_.begin(), vars_.end(), v) != vars_.end();
}

TypeContext TypeContext::extended(TypeVarName v) const {
  TypeContext out = *this;
  out.push(std::move(v));
  return out;
}

bool RestrictionContext::contains(const TypeVarName& v) const {
  return lookup(v).has_value();
}

std::optional<Restriction> RestrictionContext::lookup(
    const TypeVarName& v) const {
  for (const auto& [name, r] : entries_) {
    if (name == v) return r;
  }
  return std::nullopt;
}

void RestrictionContext::bind(TypeVarName v, Restriction r) {
  assert(!contains(v));
  entries_.emplace_back(std::move(v), r);
}

void RestrictionContext::set(const TypeVarName& v, Restriction r) {
  for (auto& [name, cur] : entries_) {
    if (name == v) {
      cur = r;
      return;
    }
  }
  assert(false && "RestrictionContext::set on unbound variable");
}

void RestrictionContext::remove_all(const std::vector<TypeVarName>& vs) {
  entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                [&](const auto& e) {
                                  return std::find(vs.begin(), vs.end(),
                                                   e.first) != vs.end();
                                }),
                 entries_.end());
}

RestrictionContext RestrictionContext::restricted_to(
    const std::vector<TypeVarName>& keep) const {
  RestrictionContext out;
  for (const auto& [name, r] : entries_) {
    if (std::find(keep.begin(), keep.end(), name) != keep.end()) {
      out.entries_.emplace_back(name, r);
    }
  }
  return out;
}

std::vector<TypeVarName> RestrictionContext::keys() const {
  std::vector<TypeVarName> out;
  out.reserve(entries_.size());
  for (const auto& [name, r] : entries_) out.push_back(name);
  return out;
}

bool TermContext::contains(const std::string& name) const {
  return lookup(name).has_value();
}

std::optional<Type> TermContext::lookup(const std::string& name) const {
  // Later bindings shadow earlier ones.
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->first == name) return it->second;
  }
  return std::nullopt;
}

void TermContext::bind(std::string name, Type type) {
  entries_.emplace_back(std::move(name), std::move(type));
}

TermContext TermContext::extended(std::string name, Type type) const {
  TermContext out = *this;
  out.bind(std::move(name), std::move(type));
  return out;
}

// ---------------------------------------------------------------------------
// Structural operations
// ---------------------------------------------------------------------------

namespace {

void ftv_walk(const Type& t, std::set<std::int64_t>& bound,
              std::set<std::int64_t>& seen, std::vector<TypeVarName>& out) {
  std::visit(overload{
                 [&](const TVar& v) {
                   if (bound.count(v.name.uid)) return;
                   if (seen.insert(v.name.uid).second) out.push_back(v.name);
                 },
                 [&](const TCtor& c) {
                   for (const auto& arg : c.args) {
                     ftv_walk(arg, bound, seen, out);
                   }
                 },
                 [&](const TForall& f) {
                   const bool fresh = bound.insert(f.binder.uid).second;
                   ftv_walk(f.body, bound, seen, out);
                   if (fresh) bound.erase(f.binder.uid);
                 },
             },
             t->v);
}

}  // namespace

std::vector<TypeVarName> ftv_ordered(const Type& t) {
  std::set<std::int64_t> bound;
  std::set<std::int64_t> seen;
  std::vector<TypeVarName> out;
  ftv_walk(t, bound, seen, out);
  return out;
}

namespace {

bool alpha_walk(const Type& a, const Type& b,
                std::map<std::int64_t, std::int64_t>& left,
                std::map<std::int64_t, std::int64_t>& right) {
  if (const auto* va = as_var(a)) {
    const auto* vb = as_var(b);
    if (!vb) return false;
    const auto la = left.find(va->name.uid);
    const auto rb = right.find(vb->name.uid);
    if (la != left.end() || rb != right.end()) {
      // At least one side is bound; both must be, mapped to each other.
      return la != left.end() && rb != right.end() &&
             la->second == vb->name.uid && rb->second == va->name.uid;
    }
    return va->name.uid == vb->name.uid;
  }
  if (const auto* ca = as_ctor(a)) {
    const auto* cb = as_ctor(b);
    if (!cb || ca->ctor != cb->ctor || ca->args.size() != cb->args.size()) {
      return false;
    }
    for (std::size_t i = 0; i < ca->args.size(); ++i) {
      if (!alpha_walk(ca->args[i], cb->args[i], left, right)) return false;
    }
    return true;
  }
  const auto* fa = as_forall(a);
  const auto* fb = as_forall(b);
  if (!fa || !fb) return false;
  auto saved_l = left.find(fa->binder.uid) != left.end()
                     ? std::optional(left[fa->binder.uid])
                     : std::nullopt;
  auto saved_r = right.find(fb->binder.uid) != right.end()
                     ? std::optional(right[fb->binder.uid])
                     : std::nullopt;
  left[fa->binder.uid] = fb->binder.uid;
  right[fb->binder.uid] = fa->binder.uid;
  const bool ok = alpha_walk(fa->body, fb->body, left, right);
  if (saved_l) {
    left[fa->binder.uid] = *saved_l;
  } else {
    left.erase(fa->binder.uid);
  }
  if (saved_r) {
    right[fb->binder.uid] = *saved_r;
  } else {
    right.erase(fb->binder.uid);
  }
  return ok;
}

}  // namespace

bool alpha_equal(const Type& a, const Type& b) {
  std::map<std::int64_t, std::int64_t> left, right;
  return alpha_walk(a, b, left, right);
}

bool is_monotype(const Type& t) {
  return std::visit(overload{
                        [](const TVar&) { return true; },
                        [](const TCtor& c) {
                          for (const auto& arg : c.args) {
                            if (!is_monotype(arg)) return false;
                          }
                          return true;
                        },
                        [](const TForall&) { return false; },
                    },
                    t->v);
}

bool is_guarded(const Type& t) { return as_forall(t) == nullptr; }

ValueClass classify_value(const Term& m) {
  return std::visit(
      overload{
          [](const TmFrozen&) { return ValueClass::ValueOnly; },
          [](const TmVar&) { return ValueClass::GuardedValue; },
          [](const TmApp&) { return ValueClass::NonValue; },
          [](const TmLam&) { return ValueClass::GuardedValue; },
          [](const TmLamAnn&) { return ValueClass::GuardedValue; },
          [](const TmLet& l) {
            if (classify_value(l.bound) == ValueClass::NonValue) {
              return ValueClass::NonValue;
            }
            return classify_value(l.body);
          },
          [](const TmLetAnn& l) {
            if (classify_value(l.bound) == ValueClass::NonValue) {
              return ValueClass::NonValue;
            }
            return classify_value(l.body);
          },
      },
      m->v);
}

std::pair<std::vector<TypeVarName>, Type> strip_forall_prefix(const Type& t) {
  std::vector<TypeVarName> prefix;
  Type body = t;
  while (const auto* f = as_forall(body)) {
    prefix.push_back(f->binder);
    body = f->body;
  }
  return {std::move(prefix), std::move(body)};
}

std::pair<std::vector<TypeVarName>, Type> split(const Type& a, const Term& m) {
  if (classify_value(m) == ValueClass::GuardedValue) {
    return strip_forall_prefix(a);
  }
  return {{}, a};
}

bool wf_type(const TypeContext& delta, const RestrictionContext& theta_env,
             Restriction r, const Type& a) {
  return std::visit(
      overload{
          [&](const TVar& v) {
            if (delta.contains(v.name)) return true;  // rigid: monomorphic
            if (auto rec = theta_env.lookup(v.name)) {
              return *rec == Restriction::Mono || r == Restriction::Poly;
            }
            return false;
          },
          [&](const TCtor& c) {
            const auto& table = ConstructorTable::builtins();
            if (!table.known(c.ctor) ||
                table.arity(c.ctor) != static_cast<int>(c.args.size())) {
              return false;
            }
            for (const auto& arg : c.args) {
              if (!wf_type(delta, theta_env, r, arg)) return false;
            }
            return true;
          },
          [&](const TForall& f) {
            if (r != Restriction::Poly) return false;
            return wf_type(delta.extended(f.binder), theta_env,
                           Restriction::Poly, f.body);
          },
      },
      a->v);
}

namespace {

bool wf_annotation(const TypeContext& delta, const Type& a) {
  RestrictionContext empty;
  return wf_type(delta, empty, Restriction::Poly, a);
}

}  // namespace

bool wf_term(const TypeContext& delta, const TermContext& gamma,
             const Term& m) {
  return std::visit(
      overload{
          [&](const TmFrozen& t) { return gamma.contains(t.var); },
          [&](const TmVar& t) { return gamma.contains(t.var); },
          [&](const TmApp& t) {
            return wf_term(delta, gamma, t.fn) &&
                   wf_term(delta, gamma, t.arg);
          },
          [&](const TmLam& t) {
            // The bound type is irrelevant to well-formedness.
            return wf_term(delta, gamma.extended(t.param, nullptr), t.body);
          },
          [&](const TmLamAnn& t) {
            return wf_annotation(delta, t.ann) &&
                   wf_term(delta, gamma.extended(t.param, t.ann), t.body);
          },
          [&](const TmLet& t) {
            return wf_term(delta, gamma, t.bound) &&
                   wf_term(delta, gamma.extended(t.var, nullptr), t.body);
          },
          [&](const TmLetAnn& t) {
            if (!wf_annotation(delta, t.ann)) return false;
            auto [prefix, body] = split(t.ann, t.bound);
            TypeContext inner = delta;
            for (const auto& v : prefix) inner.push(v);
            return wf_term(inner, gamma, t.bound) &&
                   wf_term(delta, gamma.extended(t.var, t.ann), t.body);
          },
      },
      m->v);
}

namespace {

Type subst_walk(const std::map<std::int64_t, Type>& map, const Type& t,
                NameSupply& supply,
                std::map<std::int64_t, Type>& binder_renames) {
  if (const auto* v = as_var(t)) {
    if (auto it = binder_renames.find(v->name.uid);
        it != binder_renames.end()) {
      return it->second;
    }
    if (auto it = map.find(v->name.uid); it != map.end()) return it->second;
    return t;
  }
  if (const auto* c = as_ctor(t)) {
    std::vector<Type> args;
    args.reserve(c->args.size());
    bool changed = false;
    for (const auto& arg : c->args) {
      Type next = subst_walk(map, arg, supply, binder_renames);
      changed = changed || next != arg;
      args.push_back(std::move(next));
    }
    if (!changed) return t;
    return make_ctor(c->ctor, std::move(args));
  }
  const auto& f = std::get<TForall>(t->v);
  // Capture check: if any image substituted under this binder mentions the
  // binder's uid free, rename the binder first.
  bool capture = false;
  for (const auto& free : ftv_ordered(f.body)) {
    if (free == f.binder) continue;
    auto it = map.find(free.uid);
    if (it == map.end()) {
      auto rn = binder_renames.find(free.uid);
      if (rn == binder_renames.end()) continue;
      for (const auto& img : ftv_ordered(rn->second)) {
        if (img == f.binder) capture = true;
      }
      continue;
    }
    for (const auto& img : ftv_ordered(it->second)) {
      if (img == f.binder) capture = true;
    }
  }
  TypeVarName binder = f.binder;
  bool renamed = false;
  if (capture) {
    binder = supply.fresh(f.binder.text);
    binder_renames[f.binder.uid] = make_var(binder);
    renamed = true;
  } else if (map.count(f.binder.uid) || binder_renames.count(f.binder.uid)) {
    // Shadowing: the binder hides an outer mapping of the same uid.
    binder_renames[f.binder.uid] = make_var(binder);
    renamed = true;
  }
  Type body = subst_walk(map, f.body, supply, binder_renames);
  if (renamed) binder_renames.erase(f.binder.uid);
  if (!capture && body == f.body) return t;
  return make_forall(binder, std::move(body));
}

}  // namespace

Type apply_type_subst(const std::map<std::int64_t, Type>& map, const Type& t,
                      NameSupply& supply) {
  if (map.empty()) return t;
  std::map<std::int64_t, Type> binder_renames;
  return subst_walk(map, t, supply, binder_renames);
}

namespace {

Term uniquify_walk(const Term& m, std::map<std::string, std::string>& renames,
                   std::set<std::string>& used, NameSupply& supply) {
  auto bind = [&](const std::string& name) -> std::string {
    if (used.insert(name).second) return name;
    std::string fresh = supply.fresh_term(name);
    while (!used.insert(fresh).second) fresh = supply.fresh_term(name);
    return fresh;
  };
  auto resolve = [&](const std::string& name) -> std::string {
    auto it = renames.find(name);
    return it != renames.end() ? it->second : name;
  };
  auto with_binding = [&](const std::string& orig, const std::string& fresh,
                          const Term& body) -> Term {
    auto saved = renames.find(orig) != renames.end()
                     ? std::optional(renames[orig])
                     : std::nullopt;
    renames[orig] = fresh;
    Term out = uniquify_walk(body, renames, used, supply);
    if (saved) {
      renames[orig] = *saved;
    } else {
      renames.erase(orig);
    }
    return out;
  };
  return std::visit(
      overload{
          [&](const TmFrozen& t) {
            return make_term(TmFrozen{resolve(t.var)}, m->span);
          },
          [&](const TmVar& t) {
            return make_term(TmVar{resolve(t.var)}, m->span);
          },
          [&](const TmApp& t) {
            return make_term(TmApp{uniquify_walk(t.fn, renames, used, supply),
                                   uniquify_walk(t.arg, renames, used, supply)},
                             m->span);
          },
          [&](const TmLam& t) {
            std::string fresh = bind(t.param);
            return make_term(TmLam{fresh, with_binding(t.param, fresh, t.body)},
                             m->span);
          },
          [&](const TmLamAnn& t) {
            std::string fresh = bind(t.param);
            return make_term(
                TmLamAnn{fresh, t.ann, with_binding(t.param, fresh, t.body)},
                m->span);
          },
          [&](const TmLet& t) {
            Term bound = uniquify_walk(t.bound, renames, used, supply);
            std::string fresh = bind(t.var);
            return make_term(
                TmLet{fresh, bound, with_binding(t.var, fresh, t.body)},
                m->span);
          },
          [&](const TmLetAnn& t) {
            Term bound = uniquify_walk(t.bound, renames, used, supply);
            std::string fresh = bind(t.var);
            return make_term(
                TmLetAnn{fresh, t.ann, bound,
                         with_binding(t.var, fresh, t.body)},
                m->span);
          },
      },
      m->v);
}

}  // namespace

Term uniquify_binders(const Term& m, const TermContext& gamma,
                      NameSupply& supply) {
  std::map<std::string, std::string> renames;
  std::set<std::string> used;
  for (const auto& [name, type] : gamma.entries()) used.insert(name);
  return uniquify_walk(m, renames, used, supply);
}

bool term_equal(const Term& a, const Term& b) {
  if (a->v.index() != b->v.index()) return false;
  return std::visit(
      overload{
          [&](const TmFrozen& t) {
            return t.var == std::get<TmFrozen>(b->v).var;
          },
          [&](const TmVar& t) { return t.var == std::get<TmVar>(b->v).var; },
          [&](const TmApp& t) {
            const auto& o = std::get<TmApp>(b->v);
            return term_equal(t.fn, o.fn) && term_equal(t.arg, o.arg);
          },
          [&](const TmLam& t) {
            const auto& o = std::get<TmLam>(b->v);
            return t.param == o.param && term_equal(t.body, o.body);
          },
          [&](const TmLamAnn& t) {
            const auto& o = std::get<TmLamAnn>(b->v);
            return t.param == o.param && alpha_equal(t.ann, o.ann) &&
                   term_equal(t.body, o.body);
          },
          [&](const TmLet& t) {
            const auto& o = std::get<TmLet>(b->v);
            return t.var == o.var && term_equal(t.bound, o.bound) &&
                   term_equal(t.body, o.body);
          },
          [&](const TmLetAnn& t) {
            const auto& o = std::get<TmLetAnn>(b->v);
            return t.var == o.var && alpha_equal(t.ann, o.ann) &&
                   term_equal(t.bound, o.bound) && term_equal(t.body, o.body);
          },
      },
      a->v);
}

}  // namespace fml

#include "fml/gen.hpp"

#include <string>

namespace fml::gen {

namespace {

template <class... Ts>
struct overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overload(Ts...) -> overload<Ts...>;

Type random_type_walk(Rng& rng, NameSupply& supply,
                      std::vector<TypeVarName>& scope, int depth,
                      int quantifiers_left, bool allow_poly) {
  const bool leaf = depth <= 1 || rng.chance(35);
  if (leaf) {
    const int base = rng.below(scope.empty() ? 3 : 4);
    switch (base) {
      case 0: return make_base("Int");
      case 1: return make_base("Bool");
      case 2: return make_base("Unit");
      default: return make_var(scope[rng.below(
          static_cast<int>(scope.size()))]);
    }
  }
  int choice = rng.below(allow_poly && quantifiers_left > 0 ? 4 : 3);
  switch (choice) {
    case 0:
      return make_arrow(random_type_walk(rng, supply, scope, depth - 1,
                                         quantifiers_left, allow_poly),
                        random_type_walk(rng, supply, scope, depth - 1,
                                         quantifiers_left, allow_poly));
    case 1:
      return make_list(random_type_walk(rng, supply, scope, depth - 1,
                                        quantifiers_left, allow_poly));
    case 2:
      return make_prod(random_type_walk(rng, supply, scope, depth - 1,
                                        quantifiers_left, allow_poly),
                       random_type_walk(rng, supply, scope, depth - 1,
                                        quantifiers_left, allow_poly));
    default: {
      TypeVarName binder = supply.fresh_numbered("g");
      scope.push_back(binder);
      Type body = random_type_walk(rng, supply, scope, depth - 1,
                                   quantifiers_left - 1, allow_poly);
      scope.pop_back();
      return make_forall(binder, body);
    }
  }
}

}  // namespace

Type random_type(Rng& rng, NameSupply& supply, const TypeContext& rigid,
                 const TypeGenOptions& opts) {
  std::vector<TypeVarName> scope = rigid.vars();
  return random_type_walk(rng, supply, scope, opts.max_depth,
                          opts.max_quantifiers, opts.allow_poly);
}

namespace {

struct TermGen {
  Rng& rng;
  NameSupply& supply;
  int next_var = 0;

  std::string fresh_var() { return "v" + std::to_string(next_var++); }

  Term leaf(const std::vector<std::string>& scope) {
    const std::string& name = scope[rng.below(static_cast<int>(scope.size()))];
    if (rng.chance(25)) return make_term(TmFrozen{name});
    return make_term(TmVar{name});
  }

  Term go(std::vector<std::string>& scope, int budget) {
    if (budget <= 1) return leaf(scope);
    switch (rng.below(10)) {
      case 0:
      case 1:
      case 2:
      case 3: {  // application
        const int left = 1 + rng.below(budget - 1);
        Term fn = go(scope, left);
        Term arg = go(scope, budget - left - 1);
        return make_term(TmApp{fn, arg});
      }
      case 4:
      case 5: {  // plain lambda
        std::string param = fresh_var();
        scope.push_back(param);
        Term body = go(scope, budget - 1);
        scope.pop_back();
        return make_term(TmLam{param, body});
      }
      case 6: {  // annotated lambda
        std::string param = fresh_var();
        TypeGenOptions topts;
        topts.max_depth = 3;
        topts.max_quantifiers = rng.chance(50) ? 1 : 0;
        Type ann = random_type(rng, supply, TypeContext{}, topts);
        scope.push_back(param);
        Term body = go(scope, budget - 2);
        scope.pop_back();
        return make_term(TmLamAnn{param, ann, body});
      }
      case 7:
      case 8: {  // plain let
        std::string var = fresh_var();
        const int left = 1 + rng.below(budget - 1);
        Term bound = go(scope, left);
        scope.push_back(var);
        Term body = go(scope, budget - left - 1);
        scope.pop_back();
        return make_term(TmLet{var, bound, body});
      }
      default: {  // annotated let
        std::string var = fresh_var();
        TypeGenOptions topts;
        topts.max_depth = 3;
        topts.max_quantifiers = rng.chance(40) ? 1 : 0;
        Type ann = random_type(rng, supply, TypeContext{}, topts);
        const int left = 1 + rng.below(budget - 2 > 0 ? budget - 2 : 1);
        Term bound = go(scope, left);
        scope.push_back(var);
        Term body = go(scope, budget - left - 2 > 0 ? budget - left - 2 : 1);
        scope.pop_back();
        return make_term(TmLetAnn{var, ann, bound, body});
      }
    }
  }
};

}  // namespace

Term random_term(Rng& rng, NameSupply& supply, const TermContext& gamma,
                 int size_budget) {
  TermGen gen{rng, supply};
  std::vector<std::string> scope;
  for (const auto& [name, type] : gamma.entries()) scope.push_back(name);
  return gen.go(scope, size_budget);
}

int term_size(const Term& m) {
  return std::visit(
      overload{
          [](const TmFrozen&) { return 1; },
          [](const TmVar&) { return 1; },
          [](const TmApp& t) {
            return 1 + term_size(t.fn) + term_size(t.arg);
          },
          [](const TmLam& t) { return 1 + term_size(t.body); },
          [](const TmLamAnn& t) { return 2 + term_size(t.body); },
          [](const TmLet& t) {
            return 1 + term_size(t.bound) + term_size(t.body);
          },
          [](const TmLetAnn& t) {
            return 2 + term_size(t.bound) + term_size(t.body);
          },
      },
      m->v);
}

namespace {

void direct_subterms(const Term& m, std::vector<Term>& out) {
  std::visit(overload{
                 [](const TmFrozen&) {},
                 [](const TmVar&) {},
                 [&](const TmApp& t) {
                   out.push_back(t.fn);
                   out.push_back(t.arg);
                 },
                 [&](const TmLam& t) { out.push_back(t.body); },
                 [&](const TmLamAnn& t) { out.push_back(t.body); },
                 [&](const TmLet& t) {
                   out.push_back(t.bound);
                   out.push_back(t.body);
                 },
                 [&](const TmLetAnn& t) {
                   out.push_back(t.bound);
                   out.push_back(t.body);
                 },
             },
             m->v);
}

}  // namespace

std::vector<Term> shrink_term(const Term& m, const TermContext& gamma) {
  std::vector<Term> subterms;
  direct_subterms(m, subterms);
  std::vector<Term> out;
  TypeContext empty;
  for (const auto& sub : subterms) {
    if (wf_term(empty, gamma, sub)) out.push_back(sub);
  }
  return out;
}

}  // namespace fml::gen

#pragma once

#include <map>
#include <string>
#include <vector>

#include "fml/core.hpp"
#include "fml/result.hpp"

namespace fml {

struct ParseError {
  SourceSpan span;
  std::string message;
  std::vector<std::string> expected;

  std::string render() const;
};

/// Parses a term. Grammar:
///   M ::= x | ~x | M M | fun x -> M | fun (x : A) -> M
///       | let x = M in M | let (x : A) = M in M | (M)
/// Application is left-associative; fun/let bodies extend maximally right.
/// Numeric literals parse as plain variables (the default prelude gives them
/// type Int). Quantifiers of a let annotation are in scope while parsing the
/// bound term; wf_term decides whether the use is legal.
Result<Term, ParseError> parse_term(std::string_view src, NameSupply& supply);

/// Parses a type. Grammar:
///   A ::= a | Int | Unit | Bool | List A | A -> A | (A, A) | forall a. A
///       | (A)
/// Arrows are right-associative, forall extends maximally right, lowercase
/// identifiers are type variables, capitalized ones are constructors.
Result<Type, ParseError> parse_type(std::string_view src, NameSupply& supply);

struct PrintOptions {
  /// Display-name overrides by variable uid (used for residual variables).
  std::map<std::int64_t, std::string> var_names;
};

/// Pretty-prints a type with minimal parentheses. Bound variables are renamed
/// to stable letters a, b, c, ... in first-use order; free variables keep
/// their text unless overridden.
std::string print_type(const Type& t, const PrintOptions& opts = {});

/// Pretty-prints a term; output re-parses to a structurally equal term.
std::string print_term(const Term& m);

}  // namespace fml

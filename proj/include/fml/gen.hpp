#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fml/core.hpp"

namespace fml::gen {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  int below(int n) {
    if (n <= 1) return 0;
    return static_cast<int>(eng_() % static_cast<std::uint64_t>(n));
  }
  bool chance(int percent) { return below(100) < percent; }

 private:
  std::mt19937_64 eng_;
};

struct TypeGenOptions {
  int max_depth = 4;
  int max_quantifiers = 2;
  bool allow_poly = true;
};

/// Random closed type over the given rigid variables.
Type random_type(Rng& rng, NameSupply& supply, const TypeContext& rigid,
                 const TypeGenOptions& opts = {});

/// Random well-formed term over the given context (annotations closed).
/// size_budget bounds the node count.
Term random_term(Rng& rng, NameSupply& supply, const TermContext& gamma,
                 int size_budget);

/// Candidate smaller terms that are still well-formed over gamma.
std::vector<Term> shrink_term(const Term& m, const TermContext& gamma);

int term_size(const Term& m);

}  // namespace fml::gen

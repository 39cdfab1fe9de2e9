#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fml/constraints.hpp"
#include "fml/core.hpp"
#include "fml/result.hpp"
#include "fml/unify.hpp"

namespace fml {

// ---------------------------------------------------------------------------
// Frames and states
// ---------------------------------------------------------------------------

struct FrameNode;
using Frame = std::shared_ptr<const FrameNode>;

struct FConj {
  Constraint rest;
};
struct FForall {
  TypeVarName binder;
};
struct FExists {
  TypeVarName binder;
};
struct FLet {
  Restriction restriction;
  std::string var;
  TypeVarName binder;
  Constraint rest;
};
struct FDef {
  std::string var;
  Type type;
};

struct FrameNode {
  std::variant<FConj, FForall, FExists, FLet, FDef> v;
  SourceSpan span;
};

Frame make_frame(std::variant<FConj, FForall, FExists, FLet, FDef> v,
                 SourceSpan span = {});

template <class T>
const T* frame_as(const Frame& f) {
  return std::get_if<T>(&f->v);
}

/// Solver state: stack (bottom to top), restriction context, idempotent
/// substitution, and the in-progress constraint.
struct SolverState {
  std::vector<Frame> stack;
  RestrictionContext theta_env;
  Subst subst;
  Constraint current;
};

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

enum class Rule {
  Eq,
  Freeze,
  Inst,
  Mono,
  ConjPush,
  ConjPop,
  ExistsPush,
  ExistsLower,
  ForallPush,
  ForallPop,
  DefPush,
  DefPop,
  LetPush,
  LetPolyPop,
  LetMonoPop,
};

inline constexpr int kRuleCount = 15;
const char* rule_name(Rule r);

// ---------------------------------------------------------------------------
// Errors and outcomes
// ---------------------------------------------------------------------------

struct TypeError {
  struct Unify {
    UnifyError err;
  };
  struct MonoFailure {
    TypeVarName var;
    Type type;
  };
  struct DefMonoFailure {
    std::string var;
    TypeVarName offending;
    Type type;
  };
  struct RigidEscape {
    TypeVarName var;
  };
  struct UnboundVariable {
    std::string var;
  };

  std::variant<Unify, MonoFailure, DefMonoFailure, RigidEscape,
               UnboundVariable>
      v;
  std::optional<SourceSpan> span;

  std::string render() const;
};

struct StepOutcome {
  enum class Kind { Stepped, Final, Stuck };
  Kind kind;
  Rule rule = Rule::Eq;          // valid when Stepped
  SolverState next;              // valid when Stepped
  std::optional<TypeError> err;  // valid when Stuck
};

// ---------------------------------------------------------------------------
// Stack extraction and partition
// ---------------------------------------------------------------------------

/// Rigid context: forall frames, bottom-up.
TypeContext delta_of(const std::vector<Frame>& stack);
/// Flexible context: exists and let frames, bottom-up.
TypeContext xi_of(const std::vector<Frame>& stack);
/// Term context: def frames, bottom-up.
TermContext gamma_of(const std::vector<Frame>& stack);
/// All type variables (rigid and flexible) bound by the stack, bottom-up.
std::vector<TypeVarName> atv_of(const std::vector<Frame>& stack);

struct Partition {
  std::vector<TypeVarName> kept_out;  // droppable / generalisable
  std::vector<TypeVarName> lowered;   // referenced from below, must survive
};

/// Splits xi into variables referenced from the rest of the stack (lowered)
/// and the rest (kept_out). Relative order of xi is preserved in both parts.
Partition partition(const std::vector<TypeVarName>& xi, const Subst& subst,
                    const RestrictionContext& theta_env, NameSupply& supply);

/// Rank-based alternative: agrees with partition whenever
/// stack_lower ++ stack_upper is the current stack and xi lists the flexible
/// variables of stack_upper.
Partition rank_partition(const std::vector<TypeVarName>& xi,
                         const Subst& subst,
                         const std::vector<Frame>& stack_lower,
                         const std::vector<Frame>& stack_upper,
                         NameSupply& supply);

// ---------------------------------------------------------------------------
// Measure and reification
// ---------------------------------------------------------------------------

using Measure = std::array<std::int64_t, 4>;

std::int64_t constraint_size(const Constraint& c);
std::int64_t inst_count(const Constraint& c);

/// (insts(C), |F[C]|, |C|, index of the topmost exists frame or 0); strictly
/// lexicographically decreasing across solver steps.
Measure measure(const SolverState& s);

bool measure_less(const Measure& a, const Measure& b);

/// F[C ∧ U(Theta, theta)] — the state as a single constraint.
Constraint reify_state(const SolverState& s);

/// Checks every state invariant: substitution well-formedness and
/// idempotence, key agreement between restriction context and stack binders,
/// binder distinctness, monomorphic def annotations, stack and current
/// constraint well-formedness.
bool state_wf(const SolverState& s, NameSupply& supply);

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

/// True iff the stack is a run of forall frames followed by a run of exists
/// frames and the current constraint is true.
bool is_final(const SolverState& s);

/// The rules whose left-hand sides match s. At most one for well-formed
/// states; empty exactly at final states.
std::vector<Rule> matching_rules(const SolverState& s);

struct PartitionCall {
  std::vector<TypeVarName> xi;
  Subst subst;
  RestrictionContext theta_env;
  std::vector<Frame> stack_lower;
  std::vector<Frame> stack_upper;
  Partition result;
};

struct StepHooks {
  std::function<void(const PartitionCall&)> on_partition;
};

StepOutcome step(const SolverState& s, NameSupply& supply,
                 const StepHooks* hooks = nullptr);

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct TraceEntry {
  int step = 0;
  Rule rule = Rule::Eq;
  std::size_t stack_size = 0;
  Measure measure{};
  std::string constraint_text;
};

struct RunOptions {
  /// 0 means "derive from the initial measure".
  std::int64_t step_budget = 0;
  bool check_invariants = true;
  bool keep_trace = false;
  const StepHooks* hooks = nullptr;
};

struct RunResult {
  SolverState final_state;
  std::vector<TraceEntry> trace;
  std::int64_t steps = 0;
};

/// Iterates step to Final or Stuck. Termination is guaranteed; the budget is
/// an assertion backstop, and both a budget overrun and a failed invariant
/// check raise InternalError.
struct InternalError {
  std::string message;
};

/// Thrown when a solver-internal invariant is violated (never by ill-typed
/// programs). Maps to exit code 3 in the CLI.
struct SolverInvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

using RunOutcome =
    Result<RunResult, std::variant<TypeError, InternalError>>;

RunOutcome run(SolverState initial, NameSupply& supply,
               const RunOptions& opts = {});

/// Default assertion backstop for a state's measure.
std::int64_t default_step_budget(const SolverState& initial);

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct InferResult {
  Type type;
  /// Restrictions of the flexible variables remaining in type.
  RestrictionContext residual;
  std::vector<TraceEntry> trace;
};

/// Builds the initial state (·, ·, ∅, ∀Δ. ∃a. def Γ in ⟦m : a⟧), runs the
/// machine, and reads back θ(a) plus the residual restrictions.
Result<InferResult, TypeError> infer(const TypeContext& delta,
                                     const TermContext& gamma, const Term& m,
                                     NameSupply& supply,
                                     const RunOptions& opts = {});

/// The congen result wrapped exactly as infer's initial constraint.
Constraint build_inference_constraint(const TypeContext& delta,
                                      const TermContext& gamma, const Term& m,
                                      NameSupply& supply,
                                      TypeVarName* out_goal = nullptr);

std::string render_trace_entry(const TraceEntry& e);

}  // namespace fml

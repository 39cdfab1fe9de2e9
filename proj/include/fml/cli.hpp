#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fml/core.hpp"
#include "fml/result.hpp"
#include "fml/solver.hpp"
#include "fml/surface.hpp"

namespace fml::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitTypeError = 1;
inline constexpr int kExitParseError = 2;
inline constexpr int kExitInternalError = 3;

struct PreludeEntry {
  std::string name;
  Type type;
};

/// Parses "val NAME : TYPE" lines; blank lines and lines starting with '#'
/// are skipped.
Result<std::vector<PreludeEntry>, ParseError> parse_prelude(
    std::string_view text, NameSupply& supply);

/// id, choose, single, pair, const at their standard polymorphic types.
std::vector<PreludeEntry> default_prelude(NameSupply& supply);

struct Report {
  enum class Status { Ok, TypeError, ParseError };
  Status status = Status::Ok;
  std::string type_text;
  std::vector<std::pair<std::string, Restriction>> residuals;
  std::string error_message;
  std::optional<SourceSpan> error_span;
  std::optional<std::string> constraint_dump;
  std::optional<std::vector<TraceEntry>> trace;
};

std::string report_to_json(const Report& report);
/// The plain rendering: the type followed by a residual note when some
/// residual variable is monomorphic.
std::string report_type_line(const Report& report);

struct InferOptions {
  std::string expression;          // used when file is empty
  std::string file;                // path to a .fml file
  std::string prelude_file;        // empty = default prelude
  bool trace = false;
  bool constraint = false;
  bool json = false;
};

/// Runs inference per the options, writing results to out and diagnostics to
/// err; returns the process exit code.
int cmd_infer(const InferOptions& opts, std::ostream& out, std::ostream& err);

struct SelftestOptions {
  std::uint64_t seed = 1;
  int count = 200;
};

/// Randomized invariant suites (determinism, measure decrease,
/// well-formedness preservation, oracle soundness, partition equivalence).
int cmd_selftest(const SelftestOptions& opts, std::ostream& out);

/// Builds a report for an expression against a prelude (library entry point
/// used by both the binary and the tests).
Report infer_report(const std::string& source,
                    const std::vector<PreludeEntry>& prelude, bool want_trace,
                    bool want_constraint, NameSupply& supply);

}  // namespace fml::cli

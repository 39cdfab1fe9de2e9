#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fml/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"FreezeML constraint-based type inference"};
  app.require_subcommand(1);

  fml::cli::InferOptions infer_opts;
  CLI::App* infer = app.add_subcommand("infer", "infer the type of a term");
  infer->add_option("file", infer_opts.file, "input file (.fml)");
  infer->add_option("-e,--expr", infer_opts.expression,
                    "expression to infer");
  infer->add_option("--prelude", infer_opts.prelude_file,
                    "prelude file with 'val NAME : TYPE' lines");
  infer->add_flag("--trace", infer_opts.trace, "print the solver step trace");
  infer->add_flag("--constraint", infer_opts.constraint,
                  "print the generated constraint before solving");
  infer->add_flag("--json", infer_opts.json, "machine-readable output");

  fml::cli::SelftestOptions selftest_opts;
  CLI::App* selftest =
      app.add_subcommand("selftest", "run the randomized invariant suites");
  selftest->add_option("--seed", selftest_opts.seed, "random seed");
  selftest->add_option("--count", selftest_opts.count,
                       "number of random terms");

  CLI11_PARSE(app, argc, argv);

  if (infer->parsed()) {
    if (infer_opts.file.empty() && infer_opts.expression.empty()) {
      std::cerr << "error: provide a FILE or -e EXPR" << std::endl;
      return fml::cli::kExitParseError;
    }
    return fml::cli::cmd_infer(infer_opts, std::cout, std::cerr);
  }
  return fml::cli::cmd_selftest(selftest_opts, std::cout);
}

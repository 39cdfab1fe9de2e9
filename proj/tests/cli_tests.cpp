#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fml/cli.hpp"
#include "fml/core.hpp"
#include "fml/surface.hpp"
#include "testutil.hpp"

using namespace fml;
using namespace fml::cli;

namespace {

struct ProcessResult {
  int exit_code;
  std::string output;
};

ProcessResult run_binary(const std::string& args) {
#ifdef FML_BIN_PATH
  const std::string cmd = std::string(FML_BIN_PATH) + " " + args + " 2>&1";
#else
  const std::string cmd = "./fml " + args + " 2>&1";
#endif
  std::array<char, 256> buffer{};
  std::string output;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (fgets(buffer.data(), buffer.size(), pipe) != nullptr) {
    output += buffer.data();
  }
  const int status = pclose(pipe);
  return ProcessResult{WEXITSTATUS(status), output};
}

Report report_for(const std::string& expr, bool trace = false,
                  bool constraint = false) {
  NameSupply supply;
  auto prelude = default_prelude(supply);
  return infer_report(expr, prelude, trace, constraint, supply);
}

}  // namespace

TEST_CASE("parse_prelude") {
  NameSupply supply;
  SUBCASE("valid lines with comments") {
    auto r = parse_prelude(
        "# standard bindings\n"
        "val id : forall a. a -> a\n"
        "\n"
        "val three : Int\n",
        supply);
    REQUIRE(r.ok());
    REQUIRE(r.value().size() == 2);
    CHECK(r.value()[0].name == "id");
    CHECK(r.value()[1].name == "three");
  }
  SUBCASE("missing colon") {
    CHECK_FALSE(parse_prelude("val id forall a. a -> a\n", supply).ok());
  }
  SUBCASE("duplicate names") {
    CHECK_FALSE(
        parse_prelude("val x : Int\nval x : Bool\n", supply).ok());
  }
  SUBCASE("open types are rejected") {
    CHECK_FALSE(parse_prelude("val x : a -> a\n", supply).ok());
  }
  SUBCASE("default prelude has the documented five bindings") {
    NameSupply s2;
    auto prelude = default_prelude(s2);
    REQUIRE(prelude.size() == 5);
    CHECK(prelude[0].name == "id");
    CHECK(prelude[1].name == "choose");
    CHECK(prelude[2].name == "single");
    CHECK(prelude[3].name == "pair");
    CHECK(prelude[4].name == "const");
  }
}

TEST_CASE("infer_report statuses") {
  SUBCASE("ok") {
    Report r = report_for("id ~id");
    CHECK(r.status == Report::Status::Ok);
    CHECK(r.type_text == "forall a. a -> a");
    CHECK(r.residuals.empty());
  }
  SUBCASE("type error") {
    Report r = report_for("~id 3");
    CHECK(r.status == Report::Status::TypeError);
    CHECK(r.error_message.find("quantifier") != std::string::npos);
  }
  SUBCASE("parse error") {
    Report r = report_for("let x = in y");
    CHECK(r.status == Report::Status::ParseError);
  }
  SUBCASE("unbound variable") {
    Report r = report_for("nope");
    CHECK(r.status == Report::Status::TypeError);
    CHECK(r.error_message.find("unbound") != std::string::npos);
  }
}

TEST_CASE("residual rendering") {
  Report r = report_for("let x = id id in x");
  REQUIRE(r.status == Report::Status::Ok);
  CHECK(r.type_text == "_1 -> _1");
  REQUIRE(r.residuals.size() == 1);
  CHECK(r.residuals[0].first == "_1");
  CHECK(r.residuals[0].second == Restriction::Mono);
  CHECK(report_type_line(r) == "_1 -> _1 where _1 is monomorphic");

  Report poly = report_for("fun (f : forall a. a -> a) -> f f");
  REQUIRE(poly.status == Report::Status::Ok);
  CHECK(poly.type_text == "(forall a. a -> a) -> _1 -> _1");
  REQUIRE(poly.residuals.size() == 1);
  CHECK(poly.residuals[0].second == Restriction::Poly);
  // No note for polymorphic residuals.
  CHECK(report_type_line(poly) == "(forall a. a -> a) -> _1 -> _1");
}

TEST_CASE("json output round-trips with the documented fields") {
  SUBCASE("ok with trace") {
    Report r = report_for("id ~id", /*trace=*/true);
    auto doc = nlohmann::json::parse(report_to_json(r));
    CHECK(doc["status"] == "ok");
    CHECK(doc["type"] == "forall a. a -> a");
    CHECK(doc["residuals"].is_array());
    CHECK(doc["trace"].is_array());
    CHECK(doc["trace"].size() > 0);
    CHECK(doc["trace"][0].contains("rule"));
  }
  SUBCASE("type error carries message and span") {
    Report r = report_for("~id 3");
    auto doc = nlohmann::json::parse(report_to_json(r));
    CHECK(doc["status"] == "type-error");
    CHECK(doc["error"]["message"].is_string());
  }
  SUBCASE("constraint dump is included on request") {
    Report r = report_for("id ~id", false, /*constraint=*/true);
    auto doc = nlohmann::json::parse(report_to_json(r));
    CHECK(doc["constraint"].is_string());
    CHECK(doc["constraint"].get<std::string>().find("<=") !=
          std::string::npos);
  }
}

TEST_CASE("cmd_infer writes results to out and errors to err") {
  SUBCASE("success") {
    InferOptions opts;
    opts.expression = "id ~id";
    std::ostringstream out, err;
    CHECK(cmd_infer(opts, out, err) == kExitOk);
    CHECK(out.str() == "forall a. a -> a\n");
    CHECK(err.str().empty());
  }
  SUBCASE("type error") {
    InferOptions opts;
    opts.expression = "~id 3";
    std::ostringstream out, err;
    CHECK(cmd_infer(opts, out, err) == kExitTypeError);
    CHECK(out.str().empty());
    CHECK(err.str().find("type error") != std::string::npos);
  }
  SUBCASE("parse error") {
    InferOptions opts;
    opts.expression = "let x = in y";
    std::ostringstream out, err;
    CHECK(cmd_infer(opts, out, err) == kExitParseError);
  }
  SUBCASE("trace lines use the documented format") {
    InferOptions opts;
    opts.expression = "id ~id";
    opts.trace = true;
    std::ostringstream out, err;
    CHECK(cmd_infer(opts, out, err) == kExitOk);
    CHECK(out.str().find("step=1 rule=S-") != std::string::npos);
    CHECK(out.str().find("measure=(") != std::string::npos);
  }
}

TEST_CASE("binary: exit codes and output") {
  SUBCASE("ok") {
    auto r = run_binary("infer -e \"id ~id\"");
    CHECK(r.exit_code == 0);
    CHECK(r.output == "forall a. a -> a\n");
  }
  SUBCASE("type error exits 1") {
    auto r = run_binary("infer -e \"~id 3\"");
    CHECK(r.exit_code == 1);
  }
  SUBCASE("parse error exits 2") {
    auto r = run_binary("infer -e \"let x = in y\"");
    CHECK(r.exit_code == 2);
  }
  SUBCASE("json document") {
    auto r = run_binary("infer --json -e \"let x = id id in x\"");
    CHECK(r.exit_code == 0);
    auto doc = nlohmann::json::parse(r.output);
    CHECK(doc["status"] == "ok");
    CHECK(doc["type"] == "_1 -> _1");
    CHECK(doc["residuals"][0]["restriction"] == "monomorphic");
  }
  SUBCASE("selftest vacuous pass with count 0") {
    auto r = run_binary("selftest --count 0");
    CHECK(r.exit_code == 0);
  }
  SUBCASE("selftest small run") {
    auto r = run_binary("selftest --seed 42 --count 40");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("soundness failures:   0") != std::string::npos);
  }
}

TEST_CASE("prelude file and fml file input") {
  // Write a prelude and a program to temp files.
  const std::string dir = "/tmp/fml_cli_test";
  REQUIRE(std::system(("mkdir -p " + dir).c_str()) == 0);
  {
    FILE* f = fopen((dir + "/std.fml").c_str(), "w");
    REQUIRE(f != nullptr);
    fputs("val id : forall a. a -> a\nval four : Int\n", f);
    fclose(f);
  }
  {
    FILE* f = fopen((dir + "/prog.fml").c_str(), "w");
    REQUIRE(f != nullptr);
    fputs("id four\n", f);
    fclose(f);
  }
  auto r = run_binary("infer --prelude " + dir + "/std.fml " + dir +
                      "/prog.fml");
  CHECK(r.exit_code == 0);
  CHECK(r.output == "Int\n");
}

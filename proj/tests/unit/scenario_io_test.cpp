#include <doctest.h>

#include <string>

#include "condrisk/errors.hpp"
#include "condrisk/scenario_io.hpp"

using namespace condrisk;

namespace {

const char* kBase = R"({
  "atoms": {"labels": ["up", "down"], "probs": [0.5, 0.5]},
  "sigma_g": [["up", "down"]],
  "agents": {"utilities": [{"kind": "exponential", "alpha": 1.0}, {"kind": "exponential", "alpha": 1.0}]},
  "x": [[1.0, -1.0], [0.0, 0.0]],
  "b": -2.0
})";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

std::string schema_message(const std::string& text) {
  try {
    parse_scenario(text, "t.json");
  } catch (const SchemaError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("number formatting") {
  CHECK(format_number(0.240229013916555) == "0.240229013917");
  CHECK(format_number(-0.0) == "0.00000000000");
  CHECK(format_number(2.0) == "2.00000000000");
  CHECK(format_number(1e-20) == "1.00000000000e-20");
}

TEST_CASE("parsing defaults") {
  const auto sc = parse_scenario(kBase);
  CHECK(sc.spec.clusters().is_full_sharing());
  CHECK(sc.spec.b()(1) == -2.0);
  CHECK(sc.spec.space().labels()[1] == "down");
  CHECK_FALSE(sc.sigma_h.has_value());
  CHECK(sc.spec.tol().kkt_tol == 1e-9);

  const auto idx = parse_scenario(replace(kBase, R"([["up", "down"]])", "[[1], [0]]"));
  CHECK(idx.spec.sigma().num_blocks() == 2);
}

TEST_CASE("schema errors name the field or line") {
  CHECK(schema_message(replace(kBase, "\"b\": -2.0", "\"b\": -2.0, \"extra\": 1")).find("field /extra: unknown key") !=
        std::string::npos);
  CHECK(schema_message(replace(kBase, "\"alpha\": 1.0}, ", "\"alpha\": -1.0}, ")).find("/agents/utilities/0/alpha") !=
        std::string::npos);
  CHECK(schema_message(replace(kBase, "[0.0, 0.0]", "[0.0]")).find("/x/1") != std::string::npos);
  CHECK(schema_message(replace(kBase, "\"down\"]]", "\"sideways\"]]")).find("/sigma_g/0/1") != std::string::npos);
  CHECK(schema_message(replace(kBase, "\"kind\": \"exponential\", \"alpha\": 1.0}]", "\"kind\": \"cubic\"}]"))
            .find("unknown utility kind") != std::string::npos);
  CHECK(schema_message(replace(kBase, "\"b\": -2.0", "\"b\": ")).find("t.json: line 7") != std::string::npos);
  CHECK(schema_message(replace(kBase, "\"x\"", "\"X\"")).find("/X") != std::string::npos);
}

TEST_CASE("invariant errors stay invariant errors") {
  CHECK_THROWS_AS(parse_scenario(replace(kBase, "\"b\": -2.0", "\"b\": 1.0")), InvariantError);
  CHECK_THROWS_AS(parse_scenario(replace(kBase, "\"b\": -2.0", "\"b\": [-1.0, -2.0]")), InvariantError);
}

TEST_CASE("missing file") {
  CHECK_THROWS_AS(load_scenario("/nonexistent/nowhere.json"), SchemaError);
  const auto res = run_command("risk", "/nonexistent/nowhere.json", {});
  CHECK(res.exit_code == 1);
}

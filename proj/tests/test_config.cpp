#include <doctest.h>

#include <optional>

#include "sonamatch/config.hpp"
#include "sonamatch/errors.hpp"

using namespace sonamatch;

TEST_SUITE("config") {

TEST_CASE("parsing handles comments, blanks, and repeats") {
  const ConfigFile file = parse_config_text(
      "# header comment\n"
      "\n"
      "train.epochs = 5\n"
      "  train.lr=0.1  \n"
      "synth.images = 20  # trailing note\n"
      "train.epochs = 7\n");
  REQUIRE(file.entries.size() == 4);
  CHECK(*file.find("train.lr") == "0.1");
  CHECK(*file.find("synth.images") == "20");
  CHECK(*file.find("train.epochs") == "7");  // later line wins
  CHECK(file.find("train.batch") == nullptr);
}

TEST_CASE("malformed lines are rejected with the line number") {
  CHECK_THROWS_WITH_AS(parse_config_text("train.epochs = 5\nnonsense\n"),
                       doctest::Contains("line 2"), FormatError);
  CHECK_THROWS_WITH_AS(parse_config_text("epochs = 5\n"),
                       doctest::Contains("section"), FormatError);
  CHECK_THROWS_WITH_AS(parse_config_text("a.b.c = 5\n"),
                       doctest::Contains("one dot"), FormatError);
  CHECK_THROWS_WITH_AS(parse_config_text("tr ain.lr = 5\n"),
                       doctest::Contains("line 1"), FormatError);
}

TEST_CASE("precedence is flag over file over default") {
  ConfigResolver r(parse_config_text("train.lr = 0.2\n"));
  CHECK(r.resolve_double("train.lr", std::nullopt, 0.1) == 0.2);
  CHECK(r.resolve_double("train.momentum", std::nullopt, 0.9) == 0.9);

  ConfigResolver with_flag(parse_config_text("train.lr = 0.2\n"));
  CHECK(with_flag.resolve_double("train.lr", 0.05, 0.1) == 0.05);

  const auto& settings = with_flag.resolved();
  REQUIRE(settings.size() == 1);
  CHECK(settings[0].source == ConfigSource::Flag);
  CHECK(settings[0].value == "0.050000000000000003");
}

TEST_CASE("typed lookups validate their text") {
  ConfigResolver r(parse_config_text(
      "train.lr = fast\nsynth.images = -3\nnet.classes = 2.5\n"));
  CHECK_THROWS_WITH_AS(r.resolve_double("train.lr", std::nullopt, 0.1),
                       doctest::Contains("train.lr"), FormatError);
  CHECK_THROWS_AS(r.resolve_size("synth.images", std::nullopt, 5), FormatError);
  CHECK_THROWS_AS(r.resolve_int("net.classes", std::nullopt, 9), FormatError);

  ConfigResolver ok(parse_config_text("run.seed = 18446744073709551615\n"));
  CHECK(ok.resolve_u64("run.seed", std::nullopt, 0) ==
        18446744073709551615ull);
}

TEST_CASE("the effective rendering is itself parseable") {
  ConfigResolver r(parse_config_text("train.lr = 0.2\n"));
  r.resolve_double("train.lr", std::nullopt, 0.1);
  r.resolve_size("train.epochs", 9, 5);
  r.resolve_string("run.arch", std::nullopt, "two-chan-class");

  const std::string text = r.render_effective();
  const ConfigFile echo = parse_config_text(text);
  REQUIRE(echo.entries.size() == 3);
  CHECK(*echo.find("train.lr") == "0.2");
  CHECK(*echo.find("train.epochs") == "9");
  CHECK(*echo.find("run.arch") == "two-chan-class");
  CHECK(text.find("# config") != std::string::npos);
  CHECK(text.find("# flag") != std::string::npos);
  CHECK(text.find("# default") != std::string::npos);
}

TEST_CASE("untouched config keys are called out") {
  ConfigResolver r(parse_config_text("train.lr = 0.2\ntrain.epohcs = 9\n"));
  r.resolve_double("train.lr", std::nullopt, 0.1);
  CHECK_THROWS_WITH_AS(r.reject_unused(), doctest::Contains("train.epohcs"),
                       ConfigError);

  ConfigResolver clean(parse_config_text("train.lr = 0.2\n"));
  clean.resolve_double("train.lr", std::nullopt, 0.1);
  CHECK_NOTHROW(clean.reject_unused());
}

TEST_CASE("unused checks can be scoped to a command's sections") {
  // One file serving two commands: the synth lookup must tolerate the
  // train keys but still catch typos inside its own sections.
  ConfigResolver r(parse_config_text(
      "synth.images = 4\ntrain.lr = 0.2\nrun.seed = 7\n"));
  r.resolve_size("synth.images", std::nullopt, 200);
  r.resolve_u64("run.seed", std::nullopt, 0);
  CHECK_NOTHROW(r.reject_unused({"synth", "run"}));
  CHECK_THROWS_AS(r.reject_unused({"synth", "run", "train"}), ConfigError);

  ConfigResolver typo(parse_config_text("synth.imges = 4\n"));
  typo.resolve_size("synth.images", std::nullopt, 200);
  CHECK_THROWS_WITH_AS(typo.reject_unused({"synth"}),
                       doctest::Contains("synth.imges"), ConfigError);
}

}  // TEST_SUITE

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "blab/cli.hpp"

using namespace blab;
using namespace blab::cli;

namespace {
json unweighted_config() {
  return json::parse(R"({
    "weight": {"family": "unweighted_oracle"},
    "quad": {"radial_panels": 8, "gl_order": 10, "angular": 32, "r_max": 1.0},
    "checks": [
      {"name": "moments-oracle", "parameters": {"N": 50, "thresholds": {"max_rel_error": {"max": 1e-12}}}},
      {"name": "kernel-oracle", "parameters": {"pairs": 20}}
    ],
    "seed": 3
  })");
}

json without_timing(json r) {
  r.erase("timing");
  return r;
}

int count(const std::string& s, const std::string& what) {
  int n = 0;
  for (std::size_t i = s.find(what); i != std::string::npos; i = s.find(what, i + 1)) ++n;
  return n;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("blab-cli-" + name);
  std::filesystem::remove_all(p);
  return p;
}
}  // namespace

TEST(Config, ParsesChecksAndDefaults) {
  const RunConfig c = config_from_json(unweighted_config());
  ASSERT_EQ(c.checks.size(), 2u);
  EXPECT_EQ(c.checks[0].name, "moments-oracle");
  EXPECT_EQ(c.quad.angular, 32);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.formats, (std::set<std::string>{"json", "csv"}));
}

TEST(Config, RejectsSchemaViolations) {
  json j = unweighted_config();
  j["extra"] = 1;
  EXPECT_THROW(config_from_json(j), UsageError);
  j = unweighted_config();
  j["checks"].push_back("no-such-check");
  EXPECT_THROW(config_from_json(j), UsageError);
  j = unweighted_config();
  j["quad"]["r_max"] = 1.5;
  EXPECT_THROW(config_from_json(j), UsageError);
  j = unweighted_config();
  j["weight"] = {{"family", "exponential"}, {"c", -1.0}, {"alpha", 1.0}};
  EXPECT_THROW(config_from_json(j), UsageError);
  j = unweighted_config();
  j["output"] = {{"formats", {"pdf"}}};
  EXPECT_THROW(config_from_json(j), UsageError);
  EXPECT_THROW(config_from_json(json::array()), UsageError);
}

TEST(Config, MalformedFileIsUsageError) {
  const auto dir = scratch("malformed");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{\"checks\": [";
  EXPECT_THROW(load_config((dir / "bad.json").string()), UsageError);
  EXPECT_THROW(load_config((dir / "missing.json").string()), UsageError);
}

TEST(Run, MomentsOraclePasses) {
  const RunResult r = execute(config_from_json(unweighted_config()), "moments");
  ASSERT_EQ(r.checks.size(), 1u);
  EXPECT_TRUE(r.checks[0].pass);
  EXPECT_LT(r.checks[0].metrics.at("max_rel_error"), 1e-12);
  EXPECT_EQ(r.exit_code, 0);
}

TEST(Run, SubcommandFilters) {
  const RunConfig c = config_from_json(unweighted_config());
  EXPECT_EQ(execute(c, "kernel-verify").checks.size(), 1u);
  EXPECT_EQ(execute(c, "suite").checks.size(), 2u);
  EXPECT_THROW(execute(c, "covering"), UsageError);
  EXPECT_THROW(execute(c, "bogus"), UsageError);
}

TEST(Run, ThresholdFailureGivesExitOne) {
  json j = unweighted_config();
  j["checks"][0]["parameters"]["thresholds"] = {{"max_rel_error", {{"max", 1e-30}}}};
  const RunResult r = execute(config_from_json(j), "moments");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_FALSE(r.checks[0].pass);
  EXPECT_EQ(r.checks[0].failed, std::vector<std::string>{"max_rel_error"});
}

TEST(Run, MinThreshold) {
  json j = unweighted_config();
  j["checks"][0]["parameters"]["thresholds"] = {{"checked", {{"min", 51}}}};
  EXPECT_EQ(execute(config_from_json(j), "moments").exit_code, 0);
  j["checks"][0]["parameters"]["thresholds"] = {{"checked", {{"min", 52}}}};
  EXPECT_EQ(execute(config_from_json(j), "moments").exit_code, 1);
}

TEST(Run, UnknownMetricIsUsageError) {
  json j = unweighted_config();
  j["checks"][0]["parameters"]["thresholds"] = {{"nonsense", {{"max", 1.0}}}};
  EXPECT_THROW(execute(config_from_json(j), "moments"), UsageError);
}

TEST(Run, UnthresholdedCheckAlwaysPasses) {
  const RunResult r = execute(config_from_json(unweighted_config()), "kernel-verify");
  EXPECT_FALSE(r.checks[0].thresholded);
  EXPECT_TRUE(r.checks[0].pass);
}

TEST(Run, DeterministicBody) {
  const RunConfig c = config_from_json(unweighted_config());
  const RunResult a = execute(c, "suite"), b = execute(c, "suite");
  EXPECT_EQ(without_timing(a.report).dump(), without_timing(b.report).dump());
  EXPECT_EQ(a.checks[1].csv, b.checks[1].csv);
}

TEST(Run, SeedChangesSamples) {
  RunConfig c = config_from_json(unweighted_config());
  const std::string a = execute(c, "kernel-verify").checks[0].csv;
  c.seed = 4;
  EXPECT_NE(execute(c, "kernel-verify").checks[0].csv, a);
}

TEST(Run, WeightWithoutOracleIsUsageError) {
  json j = unweighted_config();
  j["weight"] = {{"family", "exponential"}, {"c", 1.0}, {"alpha", 2.0}};
  EXPECT_THROW(execute(config_from_json(j), "moments"), UsageError);
}

TEST(Output, WritesReportCsvAndSvg) {
  const auto dir = scratch("out");
  json j = unweighted_config();
  j["output"] = {{"dir", dir.string()}, {"formats", {"json", "csv", "svg"}}};
  const RunConfig c = config_from_json(j);
  write_outputs(c, execute(c, "suite"));
  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "01-moments-oracle.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "02-kernel-oracle.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "01-moments-oracle-moments_rel_error.svg"));
  std::ifstream in(dir / "report.json");
  const json rep = json::parse(in);
  EXPECT_TRUE(rep.at("pass").get<bool>());
  EXPECT_EQ(rep.at("checks").size(), 2u);
  EXPECT_TRUE(rep.contains("timing"));
}

TEST(Plot, LineHasOnePolyline) {
  const Series s{"ratio", "r", "ratio", Series::Kind::line, {0.0, 0.5, 0.9, 0.2}, {1.0, 1.2, 1.1, 1.05}};
  const std::string svg = plot_svg(s);
  EXPECT_EQ(count(svg, "<polyline"), 1);
  EXPECT_EQ(count(svg, "<circle"), 0);
  EXPECT_EQ(count(svg, "(log)"), 0);
  EXPECT_EQ(svg.rfind("</svg>"), svg.size() - 7);
}

TEST(Plot, LogScaleForWideSpread) {
  const Series s{"decay", "d", "v", Series::Kind::line, {0.0, 1.0}, {1e-3, 10.0}};
  EXPECT_EQ(count(plot_svg(s), "(log)"), 1);
}

TEST(Plot, EmptySeriesRejected) {
  EXPECT_THROW(plot_svg(Series{"empty", "x", "y", Series::Kind::line, {}, {}}), UsageError);
}

TEST(Plot, DecayScatterOnePointPerPair) {
  const json j = json::parse(R"({
    "weight": {"family": "exponential", "c": 1.0, "alpha": 1.0},
    "quad": {"radial_panels": 12, "gl_order": 16, "angular": 128, "r_max": 0.99},
    "checks": [{"name": "pointwise-decay", "parameters": {"M": 3, "pairs": 12}}],
    "seed": 5
  })");
  const RunResult r = execute(config_from_json(j), "kernel-verify");
  const std::string svg = plot(r.checks, "pointwise_decay");
  EXPECT_EQ(count(svg, "<circle"), 12);
  EXPECT_THROW(plot(r.checks, "missing"), UsageError);
}

TEST(Exponents, ParsesFractionsAndInfinity) {
  EXPECT_DOUBLE_EQ(exponent_from_json("4/3"), 4.0 / 3.0);
  EXPECT_TRUE(std::isinf(exponent_from_json("inf")));
  EXPECT_DOUBLE_EQ(exponent_from_json(2.5), 2.5);
}

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "mapval/commands.hpp"
#include "support.hpp"

using namespace mapval;
using namespace mapval::cli;
namespace fs = std::filesystem;
using testing_support::data_path;
using testing_support::temp_dir;

namespace {

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// NC paired data with obs_ref about 1% of births and obs_cand = f(obs_ref).
std::string nc_data(double factor, bool with_expected = false) {
  std::ostringstream os;
  os << "area_id,pop,obs_ref,obs_cand" << (with_expected ? ",expected" : "") << "\n";
  double total_ref = 0.0, total_pop = 0.0;
  for (const auto& f : testing_support::nc_features()) {
    total_pop += f.properties.at("BIR74").get<double>();
    total_ref += std::lround(0.01 * f.properties.at("BIR74").get<double>());
  }
  for (const auto& f : testing_support::nc_features()) {
    const double pop = f.properties.at("BIR74").get<double>();
    const long ref = std::lround(0.01 * pop);
    os << f.geometry.id << "," << pop << "," << ref << "," << std::lround(factor * ref);
    if (with_expected) os << "," << io::format_number(pop * total_ref / total_pop);
    os << "\n";
  }
  return os.str();
}

io::RunConfig nc_config() {
  io::RunConfig c;
  c.geometry = data_path("nc_counties.geojson");
  c.models = {ModelFamily::REM};
  c.sampler.n_warmup = 1000;
  c.sampler.n_kept = 1000;
  c.threads = 4;
  return c;
}

io::RunConfig tiny_config(const fs::path& dir) {
  write(dir / "edges.csv", "src,dst\na,b\nb,c\nc,d\n");
  io::RunConfig c;
  c.edges = (dir / "edges.csv").string();
  c.models = {ModelFamily::REM};
  c.sampler.n_warmup = 100;
  c.sampler.n_kept = 50;
  return c;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(MAPVAL_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Inputs, EdgeListIdsInOrderOfAppearance) {
  const auto dir = temp_dir("edges");
  const auto cfg = tiny_config(dir);
  const StudyArea s = load_study_area(cfg, nullptr);
  EXPECT_EQ(s.graph->area_ids(), (std::vector<std::string>{"a", "b", "c", "d"}));
  EXPECT_EQ(s.graph->n_edges(), 3);
  EXPECT_TRUE(s.features.empty());
}

TEST(Inputs, EdgeListMustMatchGeometry) {
  const auto dir = temp_dir("edges_geom");
  write(dir / "edges.csv", "src,dst\n37009,nowhere\n");
  io::RunConfig c;
  c.geometry = data_path("nc_counties.geojson");
  c.edges = (dir / "edges.csv").string();
  EXPECT_THROW(load_study_area(c, nullptr), DataError);
  c.geometry.clear();
  c.edges.clear();
  EXPECT_THROW(load_study_area(c, nullptr), UsageError);
}

TEST(Inputs, PairedDataValidation) {
  const auto dir = temp_dir("paired");
  const auto cfg = tiny_config(dir);
  auto expect_error = [&](const std::string& csv, const std::string& fragment) {
    write(dir / "d.csv", csv);
    try {
      load_paired_data((dir / "d.csv").string(), cfg, nullptr);
      ADD_FAILURE() << "accepted: " << csv;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  expect_error("area_id,pop,obs_ref,obs_cand\na,10,1,1\nzz,10,1,1\n", "'zz'");
  expect_error("area_id,pop,obs_ref,obs_cand\na,10,1,1\na,10,1,1\n", "duplicate");
  expect_error("area_id,pop,obs_ref,obs_cand\na,0,1,1\nb,10,1,1\n", "pop");
  expect_error("area_id,pop,obs_ref,obs_cand\na,10,-1,1\nb,10,1,1\n", "obs_ref");
  expect_error("area_id,pop,obs_ref,obs_cand,expected\na,10,1,1,0\nb,10,1,1,1\n", "expected");
  expect_error("area_id,pop,obs_ref,obs_cand\na,10,0,1\nb,10,0,1\n", "all zero");
}

TEST(Inputs, MissingExpectedUsesInternalStandardisation) {
  const auto dir = temp_dir("standardise");
  const auto cfg = tiny_config(dir);
  write(dir / "d.csv", "area_id,pop,obs_ref,obs_cand\nd,300,9,4\nb,100,1,2\na,200,2,3\nc,400,8,8\n");
  const PairedInput in = load_paired_data((dir / "d.csv").string(), cfg, nullptr);
  EXPECT_FALSE(in.expected_given);
  EXPECT_NEAR(in.data.expected.sum(), 20.0, 1e-12);
  // Rows are reordered into graph order: a, b, c, d.
  EXPECT_EQ(in.data.counts_ref, (std::vector<int>{2, 1, 8, 9}));
  EXPECT_NEAR(in.data.expected[0], 200.0 * 20.0 / 1000.0, 1e-12);
}

TEST(Inputs, PartialDataTakesASubgraph) {
  const auto dir = temp_dir("subset");
  const auto cfg = tiny_config(dir);
  write(dir / "d.csv", "area_id,pop,obs_ref,obs_cand\nc,10,1,1\nb,10,2,1\n");
  const PairedInput in = load_paired_data((dir / "d.csv").string(), cfg, nullptr);
  EXPECT_EQ(in.data.graph->area_ids(), (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(in.data.graph->n_edges(), 1);
}

TEST(Commands, UnknownModelIsAUsageError) {
  const auto dir = temp_dir("unknown_model");
  const auto cfg = tiny_config(dir);
  write(dir / "d.csv", "area_id,pop,obs_ref,obs_cand\na,10,1,1\nb,10,2,1\nc,10,1,3\nd,10,2,2\n");
  EXPECT_THROW(cmd_fit((dir / "d.csv").string(), "bym", cfg, dir / "out"), UsageError);
  EXPECT_THROW(parse_models("rem,leroux"), UsageError);
}

TEST(Commands, CliExitCodes) {
  const auto dir = temp_dir("cli");
  tiny_config(dir);
  write(dir / "d.csv", "area_id,pop,obs_ref,obs_cand\na,10,1,1\nb,10,2,1\nc,10,1,3\nd,10,2,2\n");
  write(dir / "bad.json", R"({"sampler": {"warmpu": 10}})");
  write(dir / "good.json", R"({"edges": "edges.csv", "sampler": {"warmup": 50, "kept": 20}})");
  const std::string data = " --data " + (dir / "d.csv").string() + " --out-dir " + (dir / "out").string();
  EXPECT_EQ(run_cli("fit --model bym --config " + (dir / "good.json").string() + data), 2);
  EXPECT_EQ(run_cli("fit --model rem --config " + (dir / "bad.json").string() + data), 2);
  EXPECT_EQ(run_cli("fit --model rem --config " + (dir / "good.json").string() + data), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "summary_rem.csv"));
  EXPECT_NE(run_cli("frobnicate"), 0);
}

TEST(Commands, FitIsByteIdenticalAcrossRunsAndThreads) {
  const auto dir = temp_dir("determinism");
  auto cfg = tiny_config(dir);
  cfg.models = {ModelFamily::SEM};
  write(dir / "d.csv", "area_id,pop,obs_ref,obs_cand\na,10,1,1\nb,10,2,1\nc,10,1,3\nd,10,2,2\n");
  cfg.threads = 1;
  const auto files = cmd_fit((dir / "d.csv").string(), "sem", cfg, dir / "one");
  cfg.threads = 4;
  cmd_fit((dir / "d.csv").string(), "sem", cfg, dir / "two");
  ASSERT_GE(files.size(), 5u);
  for (const auto& f : files) {
    if (f == "manifest.json") continue;
    EXPECT_EQ(slurp(dir / "one" / f), slurp(dir / "two" / f)) << f;
  }
  auto a = json::parse(slurp(dir / "one" / "manifest.json")), b = json::parse(slurp(dir / "two" / "manifest.json"));
  EXPECT_EQ(a["manifest_sha256"], b["manifest_sha256"]);
  for (auto* m : {&a, &b}) {
    m->erase("timestamps");
    m->erase("resolved_config");
  }
  EXPECT_EQ(a, b);
}

TEST(Commands, ReportOnNullOnlyResults) {
  const auto dir = temp_dir("report");
  std::vector<ResultRow> rows;
  for (int k = 0; k < 4; ++k) {
    ResultRow r;
    r.scenario = "S1";
    r.setting = "null";
    r.direction = "none";
    r.model = "rem";
    r.replicate = k;
    r.rule = "RCEP";
    r.threshold = "0.9";
    r.rr_median = r.rr_lower = r.rr_upper = 1.0;
    r.counts = {0, k == 0 ? 1 : 0, 0, k == 0 ? 99 : 100};
    r.metrics = score(r.counts);
    rows.push_back(r);
  }
  write(dir / "results.csv", io::results_csv(rows, {}));
  const auto files = cmd_report((dir / "results.csv").string(), io::RunConfig{}, dir / "out");
  const std::set<std::string> got(files.begin(), files.end());
  EXPECT_TRUE(got.count("aggregate_metrics.csv"));
  EXPECT_TRUE(got.count("rr_global_summary.csv"));
  EXPECT_TRUE(got.count("heatmap_specificity.csv"));
  EXPECT_TRUE(got.count("heatmap_specificity.svg"));
  EXPECT_FALSE(got.count("heatmap_sensitivity.csv"));
  EXPECT_FALSE(got.count("heatmap_mcc.csv"));
  const io::CsvTable agg = io::read_csv((dir / "out" / "aggregate_metrics.csv").string());
  EXPECT_NEAR(io::parse_double(agg.rows[0][agg.require("specificity_mean")], ""), (0.99 + 3.0) / 4.0, 1e-12);
  EXPECT_EQ(agg.rows[0][agg.require("mcc_mean")], "");

  write(dir / "broken.csv", "scenario,model\nS1,rem\n");
  EXPECT_THROW(cmd_report((dir / "broken.csv").string(), io::RunConfig{}, dir / "out2"), io::SchemaError);
}

class NcValidate : public ::testing::Test {
 protected:
  json run(const std::string& name, double factor) {
    const auto dir = temp_dir(name);
    write(dir / "d.csv", nc_data(factor));
    std::ostringstream log;
    const auto files = cmd_validate((dir / "d.csv").string(), nc_config(), dir / "out", &log);
    for (const char* f : {"areas.csv", "report.json", "manifest.json", "surface_rem.geojson", "rcep_rem.svg"})
      EXPECT_NE(std::find(files.begin(), files.end(), f), files.end()) << f;
    return json::parse(slurp(dir / "out" / "report.json"));
  }
};

TEST_F(NcValidate, IdenticalDatabasesShowNoDiscrepancy) {
  const json r = run("nc_identical", 1.0);
  EXPECT_EQ(r["dataset"]["n_areas"], 100);
  EXPECT_NEAR(r["dataset"]["total_expected"].get<double>(), r["dataset"]["total_obs_ref"].get<double>(), 1e-6);
  const json& m = r["models"]["rem"];
  ASSERT_TRUE(m["reported"].get<bool>()) << m.dump(2);
  const double rr = m["global"]["rr_global_median"].get<double>();
  EXPECT_GT(rr, 0.97);
  EXPECT_LT(rr, 1.03);
  for (const auto& rule : m["local"]["rules"]) EXPECT_EQ(rule["detections"], 0) << rule.dump();
}

TEST_F(NcValidate, UniformShiftIsGlobalNotLocal) {
  const json r = run("nc_shift", 0.93);
  const json& m = r["models"]["rem"];
  ASSERT_TRUE(m["reported"].get<bool>()) << m.dump(2);
  const double rr = m["global"]["rr_global_median"].get<double>();
  EXPECT_GT(rr, 0.90);
  EXPECT_LT(rr, 0.96);
  for (const auto& rule : m["local"]["rules"]) EXPECT_EQ(rule["detections"], 0) << rule.dump();
}

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "helpers.hpp"
#include "json.hpp"
#include "thermo/cli.hpp"

using namespace thermo;
using namespace thermo::cli;
namespace fs = std::filesystem;

namespace {

Config cfg(std::initializer_list<std::pair<std::string, std::string>> kv) {
  Config c;
  for (const auto& [k, v] : kv) c.set(k, v);
  return c;
}

void run(void (*cmd)(Config, std::ostream&), Config c) {
  std::ostringstream log;
  cmd(std::move(c), log);
}

std::size_t lines(const std::string& path) {
  const auto t = read_file(path);
  return static_cast<std::size_t>(std::count(t.begin(), t.end(), '\n'));
}

}  // namespace

// One small telemetry -> ingest -> train -> trace pipeline shared by the suite.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "thermo_cli_pipeline";
    fs::remove_all(root_);
    run(cmd_synth_telemetry, cfg({{"out", p("raw")}, {"hosts", "4"}, {"rows", "240"}, {"seed", "3"}}));
    run(cmd_ingest, cfg({{"input", p("raw")}, {"out", p("data")}}));
    run(cmd_train, cfg({{"data", p("data")}, {"out", p("models")}, {"folds", "0"}, {"rounds", "25"}}));
    run(cmd_synth_trace, cfg({{"out", p("trace")}, {"vms", "12"}, {"seed", "3"}}));
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string p(const std::string& sub) { return (root_ / sub).string(); }

  static fs::path root_;
};

fs::path Pipeline::root_;

TEST(Ingest, EmptyDirectoryNamesThePath) {
  testutil::TempDir dir;
  fs::create_directories(dir.str("in"));
  try {
    ingest(dir.str("in"), {});
    FAIL() << "expected EmptyInputError";
  } catch (const EmptyInputError& e) {
    EXPECT_NE(std::string(e.what()).find(dir.str("in")), std::string::npos);
  }
}

TEST(Ingest, TwoHostsGiveTwoDatasetFiles) {
  testutil::TempDir dir;
  std::vector<HostRecord> recs;
  for (int i = 0; i < 5; ++i) {
    recs.push_back(testutil::record("alpha", i));
    recs.push_back(testutil::record("beta", i));
  }
  fs::create_directories(dir.str("in"));
  write_file(dir.str("in/a.csv"), synth::telemetry_csv(recs));
  run(cmd_ingest, cfg({{"input", dir.str("in")}, {"out", dir.str("out")}}));
  EXPECT_TRUE(fs::exists(dir.str("out/alpha.csv")));
  EXPECT_TRUE(fs::exists(dir.str("out/beta.csv")));
  EXPECT_TRUE(fs::exists(dir.str("out/manifest.txt")));
  const auto sum = Config::load(dir.str("out/ingest_summary.txt"));
  EXPECT_EQ(sum.get("kept_rows", 0.0), 10);
  EXPECT_EQ(sum.get("hosts", 0.0), 2);
}

TEST(Ingest, DuplicateTimestampsAcrossFilesDropped) {
  testutil::TempDir dir;
  fs::create_directories(dir.str("in"));
  const std::vector<HostRecord> recs = {testutil::record("a", 1), testutil::record("a", 2)};
  write_file(dir.str("in/1.csv"), synth::telemetry_csv(recs));
  write_file(dir.str("in/2.log"), synth::telemetry_csv(recs));
  const auto s = ingest(dir.str("in"), {});
  EXPECT_EQ(s.kept, 2u);
  EXPECT_EQ(s.drop_reasons.at("duplicate_timestamp"), 2u);
}

TEST_F(Pipeline, TrainWritesOneModelPerHost) {
  std::size_t models = 0, fans = 0;
  for (const auto& e : fs::directory_iterator(p("models"))) {
    models += e.path().extension() == ".model";
    fans += e.path().extension() == ".fans";
  }
  EXPECT_EQ(models, 4u);
  EXPECT_EQ(fans, 4u);
  const auto pred = load_predictors(p("models"), {}, true);
  EXPECT_EQ(pred.size(), 4u);
  EXPECT_EQ(pred.models[0].kind(), "gbt");
}

TEST_F(Pipeline, TrainIsByteIdenticalForSameSeed) {
  testutil::TempDir dir;
  const auto again = [&](const std::string& out) {
    run(cmd_train, cfg({{"data", p("data")}, {"out", dir.str(out)}, {"folds", "0"}, {"rounds", "25"}}));
  };
  again("a");
  again("b");
  for (const auto& e : fs::directory_iterator(dir.str("a"))) {
    const auto name = e.path().filename().string();
    if (name == "run_config.txt" || name == "manifest.txt") continue;
    EXPECT_EQ(read_file(e.path().string()), read_file(dir.str("b/" + name))) << name;
    EXPECT_EQ(read_file(e.path().string()), read_file(p("models/" + name))) << name;
  }
}

TEST_F(Pipeline, TrainBaselinesWithCv) {
  testutil::TempDir dir;
  run(cmd_train, cfg({{"data", p("data")}, {"out", dir.str("m")}, {"kind", "ridge"}, {"folds", "3"},
                      {"hosts", "host00,host01"}}));
  EXPECT_EQ(lines(dir.str("m/cv_report.csv")), 3u);
  EXPECT_THROW(run(cmd_train, cfg({{"data", p("data")}, {"out", dir.str("x")}, {"kind", "svm"}})), InvalidArgument);
}

TEST_F(Pipeline, CompareTheoreticalCapsAndWarns) {
  testutil::TempDir dir;
  std::ostringstream log;
  cmd_compare_theoretical(cfg({{"models", p("models")}, {"data", p("data")}, {"out", dir.str()}, {"n", "100000"}}),
                          log);
  EXPECT_NE(log.str().find("warning"), std::string::npos);
  const auto sum = Config::load(dir.str("summary.txt"));
  EXPECT_EQ(sum.get("n", 0.0), 4 * 48);  // 20% of 240 rows per host
  EXPECT_LT(sum.get("mae_learned_c", 1e9), sum.get("mae_rc_c", 0.0));
}

TEST_F(Pipeline, SimulateDeskDayHas144Rows) {
  testutil::TempDir dir;
  const auto c = cfg({{"models", p("models")}, {"trace", p("trace")}, {"out", dir.str("tas")}, {"vms", "12"}});
  run(cmd_simulate, c);
  EXPECT_EQ(lines(dir.str("tas/intervals.csv")), 145u);
  const auto sum = Config::load(dir.str("tas/summary.txt"));
  EXPECT_EQ(sum.get("intervals", 0.0), 144);
  auto c2 = c;
  c2.set("out", dir.str("tas2"));
  run(cmd_simulate, c2);
  for (const char* f : {"intervals.csv", "summary.txt", "histogram.csv", "migrations.csv"}) {
    EXPECT_EQ(read_file(dir.str(std::string("tas/") + f)), read_file(dir.str(std::string("tas2/") + f))) << f;
  }
}

TEST_F(Pipeline, CompareAcceptsPoliciesRefusesOtherDifferences) {
  testutil::TempDir dir;
  const auto sim = [&](const std::string& out, const std::string& policy, const std::string& seed) {
    run(cmd_simulate, cfg({{"models", p("models")}, {"trace", p("trace")}, {"out", dir.str(out)}, {"vms", "12"},
                           {"intervals", "24"}, {"policy", policy}, {"seed", seed}}));
  };
  sim("tas", "tas", "1");
  sim("rr", "rr", "1");
  sim("rr2", "rr", "2");
  const auto rows = compare_dirs({dir.str("tas"), dir.str("rr")});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].saving_pct, 0.0);
  EXPECT_THROW(compare_dirs({dir.str("tas"), dir.str("rr2")}), InvalidArgument);
  const auto self = compare_dirs({dir.str("tas"), dir.str("tas")});
  EXPECT_EQ(self[1].d_total_kwh, 0.0);
}

TEST(CompareTheoretical, ExactModelHasZeroLearnedError) {
  // T_cpu = 30 + 0.1 P and T_in = 20, so the ambient target is linear in P
  std::vector<HostRecord> recs;
  for (int i = 0; i < 40; ++i) {
    auto r = testutil::record("h", i, i);
    r.power = 60 + 7.0 * i;
    r.n_cpu_used = static_cast<double>((i * 7) % 13);
    r.t_cpu1 = 30 + 0.1 * r.power;
    r.t_cpu2 = 0;
    recs.push_back(r);
  }
  const auto d = partition_by_host(recs).at("h");
  Predictors p;
  p.host_ids = {"h"};
  p.models.emplace_back(HostModel::Variant(fit_ols(d)));
  std::vector<std::size_t> hold = {1, 5, 9, 22};
  const auto rep = compare_theoretical(p, {{"h", d}}, {{"h", hold}}, 10, 1, 600, {});
  EXPECT_TRUE(rep.capped);
  EXPECT_EQ(rep.rows.size(), 4u);
  EXPECT_LT(rep.mae_learned, 1e-8);
  EXPECT_GT(rep.mae_rc, 1.0);
}

namespace {

ServeState serve_fixture() {
  ServeState st;
  st.predictors.guard.margin = 10;
  for (int h = 0; h < 3; ++h) {
    st.predictors.host_ids.push_back("h" + std::to_string(h));
    // h0 runs away with CPU load; peers stay within their ranges
    const double slope = h == 0 ? 5.0 : 0.2;
    st.predictors.models.emplace_back(HostModel::Variant(testutil::util_model(40 + h, slope, {30, 80})));
    st.versions.push_back("ols-v" + std::to_string(h));
  }
  return st;
}

std::string request(const std::string& host, double cpu, const std::string& drop = {}) {
  nlohmann::json j;
  j["host_id"] = host;
  for (const auto& name : feature_names()) {
    if (name != drop) j["features"][name] = name == "CPU" ? cpu : 1.0;
  }
  return j.dump();
}

}  // namespace

TEST(Serve, ValidRequest) {
  const auto st = serve_fixture();
  const auto r = handle_predict(st, request("h1", 10));
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = nlohmann::json::parse(r.body);
  EXPECT_DOUBLE_EQ(j["prediction"].get<double>(), 43.0);
  EXPECT_FALSE(j["guard_flag"].get<bool>());
  EXPECT_EQ(j["model_version"], "ols-v1");
}

TEST(Serve, OutOfBoundsUsesPeerAverage) {
  const auto st = serve_fixture();
  const auto r = handle_predict(st, request("h0", 95));
  ASSERT_EQ(r.status, 200);
  const auto j = nlohmann::json::parse(r.body);
  EXPECT_TRUE(j["guard_flag"].get<bool>());
  EXPECT_DOUBLE_EQ(j["raw_prediction"].get<double>(), 40 + 5 * 95.0);
  EXPECT_DOUBLE_EQ(j["prediction"].get<double>(), ((41 + 19.0) + (42 + 19.0)) / 2);
}

TEST(Serve, UnknownHostIs404) {
  const auto r = handle_predict(serve_fixture(), request("h9", 10));
  EXPECT_EQ(r.status, 404);
  EXPECT_EQ(nlohmann::json::parse(r.body)["field"], "host_id");
}

TEST(Serve, MalformedRequestsNameTheField) {
  const auto st = serve_fixture();
  EXPECT_EQ(handle_predict(st, "{not json").status, 400);
  EXPECT_EQ(handle_predict(st, "[1,2]").status, 400);
  const auto missing = handle_predict(st, request("h1", 10, "P_c"));
  EXPECT_EQ(missing.status, 400);
  EXPECT_EQ(nlohmann::json::parse(missing.body)["field"], "P_c");
  auto j = nlohmann::json::parse(request("h1", 10));
  j["features"]["N_vm"] = "three";
  const auto bad = handle_predict(st, j.dump());
  EXPECT_EQ(bad.status, 400);
  EXPECT_EQ(nlohmann::json::parse(bad.body)["field"], "N_vm");
  j["features"]["N_vm"] = 3;
  j["features"]["bogus"] = 1;
  EXPECT_EQ(nlohmann::json::parse(handle_predict(st, j.dump()).body)["field"], "bogus");
  EXPECT_EQ(handle_predict(st, R"({"host_id": 7})").status, 400);
}

TEST(Serve, Health) {
  const auto r = handle_health(serve_fixture());
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(nlohmann::json::parse(r.body)["hosts"].size(), 3u);
}

TEST(Helpers, HoldoutAndIndices) {
  const auto h = holdout_rows(50, 0.2, 4);
  EXPECT_EQ(h.size(), 10u);
  EXPECT_TRUE(std::is_sorted(h.begin(), h.end()));
  EXPECT_EQ(parse_indices(format_indices(h)), h);
  EXPECT_EQ(complement(50, h).size(), 40u);
  EXPECT_EQ(holdout_rows(50, 0.2, 4), h);
}

TEST(Helpers, GridParsing) {
  const auto g = parse_grid("eta=0.05,0.1;max_depth=2,4");
  EXPECT_EQ(g.at("eta"), (std::vector<double>{0.05, 0.1}));
  EXPECT_EQ(g.at("max_depth"), (std::vector<double>{2, 4}));
  EXPECT_THROW(parse_grid("eta"), Error);
}

TEST(Helpers, RunDirManifestListsFiles) {
  testutil::TempDir dir;
  RunDir out(dir.str("r"));
  out.write("a.txt", "hello\n");
  out.finish(cfg({{"k", "v"}}));
  const auto m = read_file(dir.str("r/manifest.txt"));
  EXPECT_NE(m.find("a.txt 6 " + hex64(fnv1a("hello\n"))), std::string::npos);
  EXPECT_EQ(read_file(dir.str("r/run_config.txt")), "k = v\n");
}

TEST(Binary, ErrorsExitWithStatusOne) {
  testutil::TempDir dir;
  const std::string bin = THERMOCTL_PATH;
  const auto status = [](const std::string& cmd) {
    const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  fs::create_directories(dir.str("empty"));
  EXPECT_EQ(status(bin + " ingest --input " + dir.str("empty") + " --out " + dir.str("o")), 1);
  EXPECT_NE(status(bin), 0);
  EXPECT_EQ(status(bin + " --help"), 0);
  EXPECT_EQ(status(bin + " synth-trace --out " + dir.str("t") + " --vms 2 --hours 1"), 0);
  EXPECT_TRUE(fs::exists(dir.str("t/vm001.csv")));
}

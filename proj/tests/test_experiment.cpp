#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "heatflow/experiment.hpp"

using namespace heatflow;

namespace {

std::string temp_dir(const char* name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_config(const std::string& out) {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::circles;
  cfg.methods = {Method::skflgp};
  cfg.n = 120;
  cfg.m = 24;
  cfg.repetitions = 2;
  cfg.seed = 31;
  cfg.out_dir = out;
  cfg.threads = 2;
  cfg.flgp.s = 40;
  cfg.flgp.r = 3;
  cfg.flgp.M = 20;
  return cfg;
}

}  // namespace

TEST_CASE("single-run experiment produces the report files") {
  const std::string out = temp_dir("heatflow_exp_single");
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::circles;
  cfg.methods = {Method::egp};
  cfg.n = 120;
  cfg.m = 24;
  cfg.repetitions = 1;
  cfg.seed = 7;
  cfg.out_dir = out;
  const auto records = run_experiment(cfg);
  REQUIRE(records.size() == 1);
  REQUIRE(records[0].ok);
  for (const char* f : {"runs.csv", "timings.csv", "summary.csv", "summary.md"})
    REQUIRE(std::filesystem::exists(std::filesystem::path(out) / f));

  const std::string runs = slurp(out + "/runs.csv");
  REQUIRE(runs.rfind("method,rep,seed,ok,epsilon,t,sigma,loglik,error_rate,rmse,nll,error\n", 0) ==
          0);
  REQUIRE(std::count(runs.begin(), runs.end(), '\n') == 2);  // header + one row
  std::filesystem::remove_all(out);
}

TEST_CASE("repeated executions are byte-identical") {
  const std::string out1 = temp_dir("heatflow_exp_det1");
  const std::string out2 = temp_dir("heatflow_exp_det2");
  run_experiment(small_config(out1));
  run_experiment(small_config(out2));
  REQUIRE(slurp(out1 + "/runs.csv") == slurp(out2 + "/runs.csv"));
  REQUIRE(slurp(out1 + "/summary.csv") == slurp(out2 + "/summary.csv"));
  std::filesystem::remove_all(out1);
  std::filesystem::remove_all(out2);
}

TEST_CASE("per-repetition datasets match across methods") {
  // paired design: the dataset seed depends only on the repetition
  const Dataset a = generate_concentric_circles(120, 24, 31 + 1);
  const Dataset b = generate_concentric_circles(120, 24, 31 + 1);
  REQUIRE(a.cloud.points == b.cloud.points);
}

TEST_CASE("summary statistics match their definition") {
  std::vector<RunRecord> records(3);
  const double vals[3] = {0.1, 0.2, 0.4};
  for (int i = 0; i < 3; ++i) {
    records[i].method = Method::egp;
    records[i].rep = i;
    records[i].ok = true;
    records[i].report.has_metrics = true;
    records[i].report.error_rate = vals[i];
    records[i].report.nll = 0.5;
  }
  const auto summary = summarize_records(records);
  REQUIRE(summary.size() == 2);
  REQUIRE(summary[0].metric == "error_rate");
  const double mean = (0.1 + 0.2 + 0.4) / 3.0;
  double ss = 0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  REQUIRE(summary[0].mean == Catch::Approx(mean).margin(1e-15));
  REQUIRE(summary[0].sd == Catch::Approx(std::sqrt(ss / 2.0)).margin(1e-15));
  REQUIRE(summary[0].n_runs == 3);
}

TEST_CASE("summary recomputed from runs.csv matches summary.csv") {
  const std::string out = temp_dir("heatflow_exp_recompute");
  auto cfg = small_config(out);
  cfg.methods = {Method::egp, Method::skflgp};
  run_experiment(cfg);

  // independent recomputation from runs.csv
  std::ifstream in(out + "/runs.csv");
  std::string line;
  std::getline(in, line);  // header
  std::map<std::string, std::vector<double>> errs;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else
        cur.push_back(c);
    }
    f.push_back(cur);
    REQUIRE(f.size() == 12);
    if (f[3] == "1" && !f[8].empty()) errs[f[0]].push_back(std::stod(f[8]));
  }
  std::ifstream sin(out + "/summary.csv");
  std::getline(sin, line);
  while (std::getline(sin, line)) {
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else
        cur.push_back(c);
    }
    f.push_back(cur);
    if (f[1] != "error_rate") continue;
    const auto& v = errs[f[0]];
    REQUIRE(!v.empty());
    const auto [mean, sd] = mean_sd(v);
    REQUIRE(std::abs(std::stod(f[2]) - mean) < 1e-12);
    REQUIRE(std::abs(std::stod(f[3]) - sd) < 1e-12);
  }
  std::filesystem::remove_all(out);
}

TEST_CASE("failed runs are recorded and the experiment continues") {
  const std::string out = temp_dir("heatflow_exp_fail");
  auto cfg = small_config(out);
  cfg.methods = {Method::glgp, Method::skflgp};
  cfg.baseline.dense_guard = 10;  // forces glgp to fail
  const auto records = run_experiment(cfg);
  Index ok = 0, failed = 0;
  for (const auto& r : records) (r.ok ? ok : failed) += 1;
  REQUIRE(failed == 2);
  REQUIRE(ok == 2);
  const std::string runs = slurp(out + "/runs.csv");
  REQUIRE(runs.find("dense guard") != std::string::npos);
  std::filesystem::remove_all(out);
}

TEST_CASE("emit_report refuses to summarize zero successes") {
  std::vector<RunRecord> records(2);
  records[0].ok = false;
  records[0].error = "boom";
  records[1].ok = false;
  records[1].error = "boom";
  REQUIRE_THROWS_AS(emit_report(records, temp_dir("heatflow_exp_none")), std::runtime_error);
}

TEST_CASE("method name round trip") {
  for (Method m : {Method::egp, Method::glgp, Method::glgp_nystrom, Method::srflgp, Method::skflgp,
                   Method::lrflgp, Method::lkflgp})
    REQUIRE(method_from_name(method_name(m)) == m);
  REQUIRE_THROWS_AS(method_from_name("nope"), std::invalid_argument);
}

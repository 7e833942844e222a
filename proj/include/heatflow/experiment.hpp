#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "heatflow/dataset.hpp"
#include "heatflow/train.hpp"

namespace heatflow {

enum class Method { egp, glgp, glgp_nystrom, srflgp, skflgp, lrflgp, lkflgp };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::egp: return "egp";
    case Method::glgp: return "glgp";
    case Method::glgp_nystrom: return "glgp-nystrom";
    case Method::srflgp: return "srflgp";
    case Method::skflgp: return "skflgp";
    case Method::lrflgp: return "lrflgp";
    case Method::lkflgp: return "lkflgp";
  }
  return "?";
}

inline Method method_from_name(const std::string& name) {
  if (name == "egp") return Method::egp;
  if (name == "glgp") return Method::glgp;
  if (name == "glgp-nystrom") return Method::glgp_nystrom;
  if (name == "srflgp") return Method::srflgp;
  if (name == "skflgp") return Method::skflgp;
  if (name == "lrflgp") return Method::lrflgp;
  if (name == "lkflgp") return Method::lkflgp;
  throw std::invalid_argument("unknown method '" + name + "'");
}

struct ExperimentConfig {
  enum class Kind { circles, spiral, csv };
  Kind kind = Kind::circles;
  std::vector<Method> methods = {Method::skflgp};
  Index n = 3000;
  Index m = 50;
  Index repetitions = 1;
  std::uint64_t seed = 0;
  double noise_sd = 0.1;                          // spiral
  std::string csv_path;                           // csv
  Task csv_task = Task::binary_classification;    // csv
  std::string out_dir = ".";
  int threads = 0;                                // 0 = hardware concurrency
  FLGPConfig flgp;                                // defaults for FLGP methods
  BaselineConfig baseline;                        // defaults for EGP/GLGP/GLGP*
  std::map<std::string, FLGPConfig> flgp_overrides;

  void validate() const {
    if (methods.empty()) throw std::invalid_argument("ExperimentConfig: no methods");
    if (repetitions < 1) throw std::invalid_argument("ExperimentConfig: repetitions must be >= 1");
    if (kind != Kind::csv) {
      if (n < 1 || m < 1 || m > n) throw std::invalid_argument("ExperimentConfig: need 1 <= m <= n");
      if (kind == Kind::circles && n % 6 != 0)
        throw std::invalid_argument("ExperimentConfig: circles needs n divisible by 6");
    } else if (csv_path.empty()) {
      throw std::invalid_argument("ExperimentConfig: csv experiment needs csv_path");
    }
  }
};

struct RunRecord {
  Method method = Method::skflgp;
  Index rep = 0;
  std::uint64_t dataset_seed = 0;
  bool ok = false;
  std::string error;
  FitReport report;
};

namespace detail {

inline Dataset make_run_dataset(const ExperimentConfig& cfg, Index rep, const Dataset* csv_full) {
  const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
  switch (cfg.kind) {
    case ExperimentConfig::Kind::circles:
      return generate_concentric_circles(cfg.n, cfg.m, seed);
    case ExperimentConfig::Kind::spiral:
      return generate_spiral(cfg.n, cfg.m, cfg.noise_sd, seed);
    case ExperimentConfig::Kind::csv:
      return mask_labels(*csv_full, cfg.m, seed);
  }
  throw std::logic_error("make_run_dataset: bad kind");
}

inline FitReport dispatch_fit(const ExperimentConfig& cfg, Method method, const Dataset& ds,
                              std::uint64_t fit_seed) {
  const auto flgp_for = [&](SubsampleMethod sub, KernelKind kern) {
    FLGPConfig fc = cfg.flgp;
    const auto it = cfg.flgp_overrides.find(method_name(method));
    if (it != cfg.flgp_overrides.end()) fc = it->second;
    fc.subsampling = sub;
    fc.kernel = kern;
    fc.seed = fit_seed;
    fc.s = std::min(fc.s, ds.n());
    return fc;
  };
  BaselineConfig bc = cfg.baseline;
  bc.seed = fit_seed;

  switch (method) {
    case Method::egp:
      return fit_egp_baseline(ds, bc);
    case Method::glgp:
      return fit_glgp_baseline(ds, bc);
    case Method::glgp_nystrom:
      return fit_nystrom_baseline(ds, std::min(cfg.flgp.s, ds.n()), bc);
    case Method::srflgp:
      return fit_flgp(ds, flgp_for(SubsampleMethod::random, KernelKind::squared_exponential));
    case Method::skflgp:
      return fit_flgp(ds, flgp_for(SubsampleMethod::kmeans, KernelKind::squared_exponential));
    case Method::lrflgp:
      return fit_flgp(ds, flgp_for(SubsampleMethod::random, KernelKind::lae));
    case Method::lkflgp:
      return fit_flgp(ds, flgp_for(SubsampleMethod::kmeans, KernelKind::lae));
  }
  throw std::logic_error("dispatch_fit: bad method");
}

inline std::string csv_field(double v) { return std::isnan(v) ? std::string() : format_g17(v); }

inline std::string sanitize_message(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

}  // namespace detail

/// Runs every method x repetition on a worker pool; results land in
/// deterministic (method, repetition) order regardless of scheduling. Fit
/// errors are recorded per run and the experiment continues.
inline std::vector<RunRecord> run_experiment_records(const ExperimentConfig& cfg) {
  cfg.validate();

  Dataset csv_full;
  if (cfg.kind == ExperimentConfig::Kind::csv) {
    csv_full = load_csv_dataset(cfg.csv_path, cfg.csv_task);
    if (csv_full.m() != csv_full.n())
      throw std::invalid_argument(
          "run_experiment: csv experiments need a fully labeled file (held-out truth)");
    if (cfg.m > csv_full.n()) throw std::invalid_argument("run_experiment: m exceeds csv rows");
  }

  const std::size_t n_tasks = cfg.methods.size() * static_cast<std::size_t>(cfg.repetitions);
  std::vector<RunRecord> records(n_tasks);

  unsigned n_threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                       : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(n_tasks));

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    while (true) {
      const std::size_t task = next.fetch_add(1);
      if (task >= n_tasks) break;
      const std::size_t mi = task / static_cast<std::size_t>(cfg.repetitions);
      const Index rep = static_cast<Index>(task % static_cast<std::size_t>(cfg.repetitions));
      RunRecord& rec = records[task];
      rec.method = cfg.methods[mi];
      rec.rep = rep;
      rec.dataset_seed = cfg.seed + static_cast<std::uint64_t>(rep);
      try {
        const Dataset ds = detail::make_run_dataset(cfg, rep, &csv_full);
        const std::uint64_t fit_seed =
            splitmix64(rec.dataset_seed ^ (0x1000u + static_cast<std::uint64_t>(mi)));
        rec.report = detail::dispatch_fit(cfg, rec.method, ds, fit_seed);
        rec.ok = true;
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
      }
    }
  };

  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return records;
}

struct SummaryRow {
  std::string method;
  std::string metric;
  double mean = 0;
  double sd = 0;
  Index n_runs = 0;
};

/// Sample mean and standard deviation (n-1 denominator; sd = 0 for one run).
inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  double mean = 0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return {mean, sd};
}

inline std::vector<SummaryRow> summarize_records(const std::vector<RunRecord>& records) {
  std::vector<SummaryRow> rows;
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, std::vector<double>>> by_method;
  for (const auto& rec : records) {
    const std::string name = method_name(rec.method);
    if (by_method.find(name) == by_method.end()) order.push_back(name);
    auto& slot = by_method[name];
    if (!rec.ok || !rec.report.has_metrics) continue;
    if (!std::isnan(rec.report.error_rate)) slot["error_rate"].push_back(rec.report.error_rate);
    if (!std::isnan(rec.report.rmse)) slot["rmse"].push_back(rec.report.rmse);
    if (!std::isnan(rec.report.nll)) slot["nll"].push_back(rec.report.nll);
  }
  for (const auto& name : order) {
    for (const char* metric : {"error_rate", "rmse", "nll"}) {
      const auto it = by_method[name].find(metric);
      if (it == by_method[name].end() || it->second.empty()) continue;
      const auto [mean, sd] = mean_sd(it->second);
      rows.push_back(SummaryRow{name, metric, mean, sd, static_cast<Index>(it->second.size())});
    }
  }
  return rows;
}

/// Writes runs.csv (deterministic per-run record), timings.csv (stage wall
/// times), summary.csv and summary.md. Column order is fixed; see README.
inline void emit_report(const std::vector<RunRecord>& records, const std::string& out_dir) {
  bool any_ok = false;
  for (const auto& r : records) any_ok |= r.ok;
  if (records.empty() || !any_ok)
    throw std::runtime_error("emit_report: no successful runs; nothing to summarize");

  std::filesystem::create_directories(out_dir);
  const auto path = [&](const char* f) { return (std::filesystem::path(out_dir) / f).string(); };

  {
    std::ofstream out(path("runs.csv"), std::ios::binary);
    if (!out) throw std::runtime_error("emit_report: cannot write runs.csv");
    out << "method,rep,seed,ok,epsilon,t,sigma,loglik,error_rate,rmse,nll,error\n";
    for (const auto& r : records) {
      out << method_name(r.method) << "," << r.rep << "," << r.dataset_seed << ","
          << (r.ok ? 1 : 0) << ",";
      if (r.ok) {
        out << detail::csv_field(r.report.epsilon) << "," << detail::csv_field(r.report.t) << ","
            << detail::csv_field(r.report.noise_sd) << ","
            << detail::csv_field(r.report.best_loglik) << ","
            << detail::csv_field(r.report.error_rate) << "," << detail::csv_field(r.report.rmse)
            << "," << detail::csv_field(r.report.nll) << ",";
      } else {
        out << ",,,,,,," << detail::sanitize_message(r.error);
      }
      out << "\n";
    }
  }
  {
    std::ofstream out(path("timings.csv"), std::ios::binary);
    if (!out) throw std::runtime_error("emit_report: cannot write timings.csv");
    out << "method,rep,t_subsample,t_kernel,t_graph,t_tsvd,t_optimize,t_predict,t_total\n";
    for (const auto& r : records) {
      const auto& st = r.report.stages;
      out << method_name(r.method) << "," << r.rep << "," << detail::format_g17(st.subsample)
          << "," << detail::format_g17(st.kernel) << "," << detail::format_g17(st.graph) << ","
          << detail::format_g17(st.tsvd) << "," << detail::format_g17(st.optimize) << ","
          << detail::format_g17(st.predict) << "," << detail::format_g17(st.total()) << "\n";
    }
  }
  const auto summary = summarize_records(records);
  {
    std::ofstream out(path("summary.csv"), std::ios::binary);
    if (!out) throw std::runtime_error("emit_report: cannot write summary.csv");
    out << "method,metric,mean,sd,n_runs\n";
    for (const auto& row : summary)
      out << row.method << "," << row.metric << "," << detail::format_g17(row.mean) << ","
          << detail::format_g17(row.sd) << "," << row.n_runs << "\n";
  }
  {
    std::ofstream out(path("summary.md"), std::ios::binary);
    if (!out) throw std::runtime_error("emit_report: cannot write summary.md");
    std::map<std::string, std::map<std::string, SummaryRow>> grid;
    std::vector<std::string> order;
    for (const auto& row : summary) {
      if (grid.find(row.method) == grid.end()) order.push_back(row.method);
      grid[row.method][row.metric] = row;
    }
    std::map<std::string, std::pair<double, Index>> mean_time;
    std::map<std::string, Index> failures;
    for (const auto& r : records) {
      if (r.ok) {
        auto& mt = mean_time[method_name(r.method)];
        mt.first += r.report.stages.total();
        mt.second += 1;
      } else {
        failures[method_name(r.method)] += 1;
      }
    }
    const auto fmt = [](double mean, double sd, const char* spec) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), spec, mean, sd);
      return std::string(buf);
    };
    out << "| method | error (%) | RMSE | NLL | time (s) | runs | failed |\n";
    out << "|---|---|---|---|---|---|---|\n";
    for (const auto& name : order) {
      auto& cells = grid[name];
      Index runs = 0;
      out << "| " << name << " | ";
      if (cells.count("error_rate")) {
        const auto& c = cells["error_rate"];
        out << fmt(100.0 * c.mean, 100.0 * c.sd, "%.1f(%.1f)");
        runs = c.n_runs;
      }
      out << " | ";
      if (cells.count("rmse")) {
        const auto& c = cells["rmse"];
        out << fmt(c.mean, c.sd, "%.3f(%.3f)");
        runs = c.n_runs;
      }
      out << " | ";
      if (cells.count("nll")) {
        const auto& c = cells["nll"];
        out << fmt(c.mean, c.sd, "%.2f(%.2f)");
        runs = c.n_runs;
      }
      out << " | ";
      if (mean_time[name].second > 0) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", mean_time[name].first / mean_time[name].second);
        out << buf;
      }
      out << " | " << runs << " | " << failures[name] << " |\n";
    }
  }
}

/// Full experiment: run all method x repetition tasks and write the report.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
  auto records = run_experiment_records(cfg);
  emit_report(records, cfg.out_dir);
  return records;
}

}  // namespace heatflow

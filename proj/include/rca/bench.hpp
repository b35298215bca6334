#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rca/metrics.hpp"
#include "rca/parallel.hpp"
#include "rca/pipeline.hpp"
#include "rca/rng.hpp"
#include "rca/synth.hpp"

namespace rca {

/// Benchmark settings: case generation plus the pipeline tuning applied to
/// every case. Cases are evaluated independently (and possibly in parallel)
/// with per-case seeds, so results do not depend on scheduling.
struct BenchConfig {
  std::size_t nodes = 10;
  std::size_t cases = 50;
  std::size_t timestamps = 2000;
  double density = 0.3;
  double anomaly_fraction = 0.25;
  std::uint64_t seed = 7;
  std::size_t random_draws = 10;  // baseline rankings averaged per case
  unsigned threads = 1;
  GenOptions gen;
  PipelineConfig pipe;

  nlohmann::json to_json() const {
    return nlohmann::json{{"nodes", nodes},
                          {"cases", cases},
                          {"timestamps", timestamps},
                          {"density", density},
                          {"anomaly_fraction", anomaly_fraction},
                          {"seed", seed},
                          {"random_draws", random_draws},
                          {"pipe", pipe.to_json()}};
  }
};

struct CaseResult {
  std::size_t id = 0;
  std::string root_cause;
  std::string trigger;
  std::size_t rank = 0;  // 1-based; 0 when absent from the ranking
  std::vector<std::string> ranking;
  std::vector<std::size_t> random_ranks;
};

/// Aggregated benchmark outcome with the random-ranking baseline evaluated on
/// the same cases.
struct EvalReport {
  std::vector<CaseResult> cases;
  double hr1 = 0.0, hr3 = 0.0, hr5 = 0.0, mrr = 0.0;
  double baseline_hr1 = 0.0, baseline_hr3 = 0.0, baseline_hr5 = 0.0, baseline_mrr = 0.0;
  nlohmann::json config;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = config;
    j["count"] = cases.size();
    j["hr"] = {{"1", hr1}, {"3", hr3}, {"5", hr5}};
    j["mrr"] = mrr;
    j["baseline_hr"] = {{"1", baseline_hr1}, {"3", baseline_hr3}, {"5", baseline_hr5}};
    j["baseline_mrr"] = baseline_mrr;
    auto arr = nlohmann::json::array();
    for (const auto& c : cases) {
      arr.push_back({{"id", c.id},
                     {"root_cause", c.root_cause},
                     {"trigger", c.trigger},
                     {"rank", c.rank},
                     {"random_ranks", c.random_ranks}});
    }
    j["cases"] = std::move(arr);
    return j;
  }

  std::string summary_table() const {
    std::ostringstream os;
    os << "metric      pipeline   random\n";
    const auto row = [&](const char* name, double a, double b) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%-10s  %8.4f %8.4f\n", name, a, b);
      os << buf;
    };
    row("HR@1", hr1, baseline_hr1);
    row("HR@3", hr3, baseline_hr3);
    row("HR@5", hr5, baseline_hr5);
    row("MRR", mrr, baseline_mrr);
    os << "cases: " << cases.size() << "\n";
    return os.str();
  }
};

namespace detail {

inline void aggregate_report(EvalReport& rep) {
  const std::size_t n = rep.cases.size();
  if (n == 0) return;
  double h1 = 0, h3 = 0, h5 = 0, rr = 0;
  double b1 = 0, b3 = 0, b5 = 0, brr = 0;
  for (const auto& c : rep.cases) {
    h1 += c.rank >= 1 && c.rank <= 1;
    h3 += c.rank >= 1 && c.rank <= 3;
    h5 += c.rank >= 1 && c.rank <= 5;
    rr += c.rank >= 1 ? 1.0 / static_cast<double>(c.rank) : 0.0;
    if (!c.random_ranks.empty()) {
      double d1 = 0, d3 = 0, d5 = 0, drr = 0;
      for (std::size_t r : c.random_ranks) {
        d1 += r >= 1 && r <= 1;
        d3 += r >= 1 && r <= 3;
        d5 += r >= 1 && r <= 5;
        drr += r >= 1 ? 1.0 / static_cast<double>(r) : 0.0;
      }
      const double m = static_cast<double>(c.random_ranks.size());
      b1 += d1 / m;
      b3 += d3 / m;
      b5 += d5 / m;
      brr += drr / m;
    }
  }
  const double m = static_cast<double>(n);
  rep.hr1 = h1 / m;
  rep.hr3 = h3 / m;
  rep.hr5 = h5 / m;
  rep.mrr = rr / m;
  rep.baseline_hr1 = b1 / m;
  rep.baseline_hr3 = b3 / m;
  rep.baseline_hr5 = b5 / m;
  rep.baseline_mrr = brr / m;
}

inline std::size_t rank_of(const std::vector<std::string>& ranking,
                           const std::string& truth) {
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (ranking[i] == truth) return i + 1;
  return 0;
}

}  // namespace detail

/// One fully evaluated case: generate, detect the trigger, normalize on the
/// normal period, run the pipeline with the trigger kept as a candidate, and
/// score the true root cause's rank plus random-baseline ranks.
inline CaseResult run_benchmark_case(const BenchConfig& cfg, std::size_t case_idx) {
  const std::uint64_t case_seed = derive_seed(cfg.seed, "bench-case", case_idx);
  auto rng = make_rng(case_seed);
  const Dag dag = generate_dag(cfg.nodes, cfg.density, rng);
  const SynthCase sc = sample_case(dag, cfg.timestamps, cfg.anomaly_fraction,
                                   derive_seed(case_seed, "sample"), cfg.gen);

  CaseResult res;
  res.id = case_idx;
  res.root_cause = sc.root_cause_name();
  res.trigger = detect_trigger(sc.series, IndexRange{1, sc.normal_len});

  const SeriesMatrix normalized =
      normalize(sc.series, IndexRange{1, sc.normal_len}).first;

  PipelineConfig pc = cfg.pipe;
  pc.seed = derive_seed(case_seed, "pipeline");
  pc.normalize_input = false;  // already z-scored on the normal period
  pc.include_trigger = true;   // the trigger may itself be the root cause
  pc.topk = cfg.nodes;         // full ranking for rank/MRR accounting
  pc.threads = 1;              // parallelism lives at the case level

  const PipelineResult pr = run_pipeline(normalized, res.trigger, pc);
  res.ranking.reserve(pr.ranking.items.size());
  for (const auto& it : pr.ranking.items) res.ranking.push_back(it.node);
  res.rank = detail::rank_of(res.ranking, res.root_cause);

  auto baseline_rng = make_rng(derive_seed(case_seed, "baseline"));
  std::vector<std::string> names = sc.series.names;
  res.random_ranks.reserve(cfg.random_draws);
  for (std::size_t d = 0; d < cfg.random_draws; ++d) {
    std::shuffle(names.begin(), names.end(), baseline_rng);
    res.random_ranks.push_back(detail::rank_of(names, res.root_cause));
  }
  return res;
}

inline EvalReport run_benchmark(const BenchConfig& cfg) {
  if (cfg.cases == 0) throw std::invalid_argument("bench: need at least one case");
  EvalReport rep;
  rep.config = cfg.to_json();
  rep.cases.resize(cfg.cases);
  parallel_for(cfg.cases, cfg.threads,
               [&](std::size_t i) { rep.cases[i] = run_benchmark_case(cfg, i); });
  detail::aggregate_report(rep);
  return rep;
}

/// Writes case CSVs plus ground-truth JSON files into dir (case_000.csv,
/// case_000.truth.json, ...).
inline void write_suite(const std::string& dir, const BenchConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < cfg.cases; ++i) {
    const std::uint64_t case_seed = derive_seed(cfg.seed, "bench-case", i);
    auto rng = make_rng(case_seed);
    const Dag dag = generate_dag(cfg.nodes, cfg.density, rng);
    const SynthCase sc = sample_case(dag, cfg.timestamps, cfg.anomaly_fraction,
                                     derive_seed(case_seed, "sample"), cfg.gen);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "case_%03zu", i);
    std::ofstream csv((fs::path(dir) / (std::string(stem) + ".csv")));
    if (!csv) throw std::runtime_error("synth: cannot write into " + dir);
    for (std::size_t c = 0; c < sc.series.n(); ++c) {
      csv << (c ? "," : "") << sc.series.names[c];
    }
    csv << "\n";
    csv.precision(17);
    for (std::size_t t = 0; t < sc.series.t(); ++t) {
      for (std::size_t c = 0; c < sc.series.n(); ++c) {
        csv << (c ? "," : "") << sc.series.values[c][t];
      }
      csv << "\n";
    }
    write_text_file((fs::path(dir) / (std::string(stem) + ".truth.json")).string(),
                    case_truth_json(sc).dump(2) + "\n");
  }
}

struct SuiteCase {
  SeriesMatrix series;
  std::string root_cause;
  std::size_t normal_len = 0;
};

inline std::vector<SuiteCase> load_suite(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto p = entry.path();
    if (p.extension() == ".csv") stems.push_back(p.stem().string());
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw std::runtime_error("bench: no case CSVs in " + dir);
  std::vector<SuiteCase> cases;
  for (const auto& stem : stems) {
    SuiteCase c;
    c.series = ingest_csv((fs::path(dir) / (stem + ".csv")).string());
    std::ifstream in(fs::path(dir) / (stem + ".truth.json"));
    if (!in) throw std::runtime_error("bench: missing truth for " + stem);
    nlohmann::json truth;
    in >> truth;
    c.root_cause = truth.at("root_cause").get<std::string>();
    c.normal_len = truth.at("normal_len").get<std::size_t>();
    cases.push_back(std::move(c));
  }
  return cases;
}

/// Benchmark over a pre-generated suite directory.
inline EvalReport run_benchmark_on_suite(const std::string& dir, const BenchConfig& cfg) {
  const auto suite = load_suite(dir);
  EvalReport rep;
  rep.config = cfg.to_json();
  rep.config["suite"] = dir;
  rep.cases.resize(suite.size());
  parallel_for(suite.size(), cfg.threads, [&](std::size_t i) {
    const SuiteCase& sc = suite[i];
    CaseResult res;
    res.id = i;
    res.root_cause = sc.root_cause;
    res.trigger = detect_trigger(sc.series, IndexRange{1, sc.normal_len});
    const SeriesMatrix normalized =
        normalize(sc.series, IndexRange{1, sc.normal_len}).first;
    PipelineConfig pc = cfg.pipe;
    pc.seed = derive_seed(cfg.seed, "suite-case", i);
    pc.normalize_input = false;
    pc.include_trigger = true;
    pc.topk = sc.series.n();
    pc.threads = 1;
    const PipelineResult pr = run_pipeline(normalized, res.trigger, pc);
    for (const auto& it : pr.ranking.items) res.ranking.push_back(it.node);
    res.rank = detail::rank_of(res.ranking, res.root_cause);
    auto baseline_rng = make_rng(derive_seed(cfg.seed, "suite-baseline", i));
    std::vector<std::string> names = sc.series.names;
    for (std::size_t d = 0; d < cfg.random_draws; ++d) {
      std::shuffle(names.begin(), names.end(), baseline_rng);
      res.random_ranks.push_back(detail::rank_of(names, res.root_cause));
    }
    rep.cases[i] = std::move(res);
  });
  detail::aggregate_report(rep);
  return rep;
}

}  // namespace rca

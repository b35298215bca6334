// Command-line front end for the root cause analysis pipeline: contrastive
// encoder pretraining, attention-masked Granger discovery, PageRank-based
// diagnosis, synthetic benchmark generation, and evaluation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rca/bench.hpp"
#include "rca/pipeline.hpp"
#include "rca/version.hpp"

namespace {

namespace fs = std::filesystem;

int exit_code_for(rca::Stage stage) {
  switch (stage) {
    case rca::Stage::kInput: return 2;
    case rca::Stage::kPretrain: return 3;
    case rca::Stage::kDiscovery: return 4;
    case rca::Stage::kDiagnosis: return 5;
    case rca::Stage::kOutput: return 6;
  }
  return 1;
}

const char* stage_name(rca::Stage stage) {
  switch (stage) {
    case rca::Stage::kInput: return "input";
    case rca::Stage::kPretrain: return "pretrain";
    case rca::Stage::kDiscovery: return "discovery";
    case rca::Stage::kDiagnosis: return "diagnosis";
    case rca::Stage::kOutput: return "output";
  }
  return "unknown";
}

int fail(rca::Stage stage, const std::string& message) {
  nlohmann::json j{{"stage", stage_name(stage)}, {"error", message}};
  std::cerr << j.dump() << "\n";
  return exit_code_for(stage);
}

void add_training_flags(CLI::App* cmd, rca::PipelineConfig& cfg) {
  cmd->add_option("--window", cfg.window, "Sliding window length");
  cmd->add_option("--epochs", cfg.epochs_discovery, "Discovery training epochs");
  cmd->add_option("--pretrain-epochs", cfg.epochs_pretrain, "Pretraining epochs");
  cmd->add_option("--lr", cfg.lr, "Learning rate");
  cmd->add_option("--batch", cfg.batch, "Batch size");
  cmd->add_option("--dim", cfg.dim, "Representation width");
  cmd->add_option("--kernel", cfg.kernel, "Moving-average kernel (odd)");
  cmd->add_option("--crops", cfg.crops_per_series, "Crop pairs per series per epoch");
  cmd->add_option("--max-crop", cfg.max_crop_len, "Maximum crop segment length");
  cmd->add_option("--seed", cfg.seed, "Root seed");
  cmd->add_option("--threads", cfg.threads, "Worker threads");
  cmd->add_flag("!--no-normalize", cfg.normalize_input,
                "Skip z-score normalization of the input");
}

rca::CausalGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  if (fs::path(path).extension() == ".dot") return rca::graph_from_dot(in);
  nlohmann::json j;
  in >> j;
  return rca::graph_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Root cause analysis for multivariate KPI series"};
  app.set_version_flag("--version", rca::kVersion);
  app.require_subcommand(1);

  // ---- pretrain ----
  auto* cmd_pre = app.add_subcommand("pretrain", "Train the backbone encoder");
  std::string pre_input, pre_out = "encoder.ckpt.json";
  rca::PipelineConfig pre_cfg;
  cmd_pre->add_option("--input", pre_input, "Input CSV")->required();
  cmd_pre->add_option("--out", pre_out, "Checkpoint path");
  add_training_flags(cmd_pre, pre_cfg);

  // ---- discover ----
  auto* cmd_disc = app.add_subcommand("discover", "Learn the causal graph");
  std::string disc_input, disc_encoder = "none", disc_outdir = ".";
  rca::PipelineConfig disc_cfg;
  cmd_disc->add_option("--input", disc_input, "Input CSV")->required();
  cmd_disc->add_option("--threshold", disc_cfg.threshold, "Attention threshold H");
  cmd_disc->add_option("--encoder", disc_encoder, "Pretrained checkpoint or 'none'");
  cmd_disc->add_option("--out-dir", disc_outdir, "Output directory");
  add_training_flags(cmd_disc, disc_cfg);

  // ---- diagnose ----
  auto* cmd_diag = app.add_subcommand("diagnose", "Rank root causes on a causal graph");
  std::string diag_graph, diag_trigger, diag_out = "ranking.json";
  rca::DiagnosisConfig diag_cfg;
  std::size_t diag_topk = 5;
  cmd_diag->add_option("--graph", diag_graph, "Causal graph (json or dot)")->required();
  cmd_diag->add_option("--trigger", diag_trigger, "Trigger point name")->required();
  cmd_diag->add_option("--topk", diag_topk, "Candidates to output");
  cmd_diag->add_option("--damping", diag_cfg.damping, "PageRank damping factor");
  cmd_diag->add_option("--pd", diag_cfg.weight_dangling, "Personalization for dangling nodes");
  cmd_diag->add_option("--pn", diag_cfg.weight_normal, "Personalization for other nodes");
  cmd_diag->add_flag("--include-trigger", diag_cfg.include_trigger,
                     "Keep the trigger among candidates");
  cmd_diag->add_option("--out", diag_out, "Ranking JSON path");

  // ---- synth ----
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic benchmark suite");
  rca::BenchConfig synth_cfg;
  std::string synth_outdir = "suite";
  cmd_synth->add_option("--nodes", synth_cfg.nodes, "Node count");
  cmd_synth->add_option("--cases", synth_cfg.cases, "Cases to generate");
  cmd_synth->add_option("--timestamps", synth_cfg.timestamps, "Series length");
  cmd_synth->add_option("--density", synth_cfg.density, "DAG edge density");
  cmd_synth->add_option("--anomaly-fraction", synth_cfg.anomaly_fraction,
                        "Fraction of timestamps after the fault");
  cmd_synth->add_option("--seed", synth_cfg.seed, "Root seed");
  cmd_synth->add_option("--out-dir", synth_outdir, "Suite directory");

  // ---- bench ----
  auto* cmd_bench = app.add_subcommand("bench", "Evaluate the pipeline on a suite");
  rca::BenchConfig bench_cfg;
  bench_cfg.threads = rca::default_thread_count();
  std::string bench_suite, bench_out = "report.json";
  bool bench_no_pretrain = false;
  cmd_bench->add_option("--suite", bench_suite, "Suite directory (from synth)");
  cmd_bench->add_option("--nodes", bench_cfg.nodes, "Node count (generated mode)");
  cmd_bench->add_option("--cases", bench_cfg.cases, "Case count (generated mode)");
  cmd_bench->add_option("--timestamps", bench_cfg.timestamps, "Series length");
  cmd_bench->add_option("--density", bench_cfg.density, "DAG edge density");
  cmd_bench->add_option("--seed", bench_cfg.seed, "Root seed");
  cmd_bench->add_flag("--no-pretrain", bench_no_pretrain, "Skip the pretraining stage");
  cmd_bench->add_option("--topk", bench_cfg.pipe.topk, "Ranking depth in the report");
  cmd_bench->add_option("--threads", bench_cfg.threads, "Parallel case workers");
  cmd_bench->add_option("--dim", bench_cfg.pipe.dim, "Representation width");
  cmd_bench->add_option("--epochs", bench_cfg.pipe.epochs_discovery, "Discovery epochs");
  cmd_bench->add_option("--pretrain-epochs", bench_cfg.pipe.epochs_pretrain,
                        "Pretraining epochs");
  cmd_bench->add_option("--window", bench_cfg.pipe.window, "Sliding window length");
  cmd_bench->add_option("--out", bench_out, "Report JSON path");

  // ---- pipeline ----
  auto* cmd_pipe = app.add_subcommand("pipeline", "Run all three stages end to end");
  std::string pipe_input, pipe_trigger = "auto", pipe_outdir = ".";
  rca::PipelineConfig pipe_cfg;
  bool pipe_no_pretrain = false;
  cmd_pipe->add_option("--input", pipe_input, "Input CSV")->required();
  cmd_pipe->add_option("--trigger", pipe_trigger, "Trigger name or 'auto'");
  cmd_pipe->add_option("--threshold", pipe_cfg.threshold, "Attention threshold H");
  cmd_pipe->add_option("--topk", pipe_cfg.topk, "Candidates to output");
  cmd_pipe->add_option("--damping", pipe_cfg.damping, "PageRank damping factor");
  cmd_pipe->add_option("--pd", pipe_cfg.weight_dangling, "Personalization for dangling nodes");
  cmd_pipe->add_option("--pn", pipe_cfg.weight_normal, "Personalization for other nodes");
  cmd_pipe->add_flag("--no-pretrain", pipe_no_pretrain, "Skip the pretraining stage");
  cmd_pipe->add_flag("--include-trigger", pipe_cfg.include_trigger,
                     "Keep the trigger among candidates");
  cmd_pipe->add_option("--out-dir", pipe_outdir, "Artifact directory");
  add_training_flags(cmd_pipe, pipe_cfg);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_pre) {
      pre_cfg.validate();
      rca::SeriesMatrix m = rca::ingest_csv(pre_input);
      if (pre_cfg.normalize_input) m = rca::normalize(m, {1, m.t()}).first;
      rca::PretrainConfig pc;
      pc.epochs = pre_cfg.epochs_pretrain;
      pc.batch = pre_cfg.batch;
      pc.lr = pre_cfg.lr;
      pc.crops_per_series = pre_cfg.crops_per_series;
      pc.dim = pre_cfg.dim;
      pc.kernel = pre_cfg.kernel;
      pc.max_crop_len = pre_cfg.max_crop_len;
      rca::PretrainTrace trace;
      const auto model =
          rca::pretrain_model(m, pc, rca::derive_seed(pre_cfg.seed, "stage-pretrain"), &trace);
      nlohmann::json ck = rca::encoder_checkpoint_json(model);
      ck["config"] = pre_cfg.to_json();
      ck["seed"] = pre_cfg.seed;
      ck["tool_version"] = rca::kVersion;
      rca::write_text_file(pre_out, ck.dump(2) + "\n");
      if (!trace.epoch_loss.empty()) {
        std::printf("contrastive loss: first epoch %.6f, last epoch %.6f\n",
                    trace.epoch_loss.front(), trace.epoch_loss.back());
      }
      std::printf("wrote %s\n", pre_out.c_str());
      return 0;
    }

    if (*cmd_disc) {
      disc_cfg.validate();
      rca::SeriesMatrix m = rca::ingest_csv(disc_input);
      if (disc_cfg.normalize_input) m = rca::normalize(m, {1, m.t()}).first;
      std::optional<rca::PretrainModel> model;
      if (disc_encoder != "none") {
        model = rca::encoder_from_checkpoint(rca::load_checkpoint(disc_encoder));
      }
      rca::DiscoveryConfig dc;
      dc.window = disc_cfg.window;
      dc.epochs = disc_cfg.epochs_discovery;
      dc.lr = disc_cfg.lr;
      dc.batch = disc_cfg.batch;
      dc.dim = model ? model->encoder.dim : disc_cfg.dim;
      dc.kernel = disc_cfg.kernel;
      dc.seed = rca::derive_seed(disc_cfg.seed, "stage-discovery");
      dc.threads = disc_cfg.threads;
      auto [bank, attn] =
          rca::train_discovery(m, model ? &model->encoder : nullptr, dc);
      rca::CausalGraph raw = rca::threshold_graph(attn, disc_cfg.threshold);
      rca::annotate_similarity(raw, m);
      const rca::CausalGraph dag = rca::prune_to_dag(raw, m);

      fs::create_directories(disc_outdir);
      const auto out = [&](const char* name) {
        return (fs::path(disc_outdir) / name).string();
      };
      nlohmann::json alpha = attn.to_json();
      alpha["config"] = disc_cfg.to_json();
      alpha["tool_version"] = rca::kVersion;
      rca::write_text_file(out("alpha.json"), alpha.dump(2) + "\n");
      rca::write_text_file(out("graph_raw.json"), rca::graph_to_json(raw).dump(2) + "\n");
      rca::write_text_file(out("graph.json"), rca::graph_to_json(dag).dump(2) + "\n");
      rca::write_text_file(out("graph_raw.dot"), rca::graph_to_dot(raw));
      rca::write_text_file(out("graph.dot"), rca::graph_to_dot(dag));
      std::printf("raw edges: %zu, dag edges: %zu -> %s\n", raw.edges.size(),
                  dag.edges.size(), disc_outdir.c_str());
      return 0;
    }

    if (*cmd_diag) {
      const rca::CausalGraph g = load_graph(diag_graph);
      const auto ranking = rca::rank_root_causes(g, diag_trigger, diag_topk, diag_cfg);
      nlohmann::json j = ranking.to_json();
      j["tool_version"] = rca::kVersion;
      rca::write_text_file(diag_out, j.dump(2) + "\n");
      std::printf("%-4s %-16s %-12s %s\n", "#", "node", "score", "ad");
      for (std::size_t i = 0; i < ranking.items.size(); ++i) {
        const auto& it = ranking.items[i];
        std::printf("%-4zu %-16s %-12.6f %zu\n", i + 1, it.node.c_str(), it.score, it.ad);
      }
      return 0;
    }

    if (*cmd_synth) {
      rca::write_suite(synth_outdir, synth_cfg);
      std::printf("wrote %zu cases to %s\n", synth_cfg.cases, synth_outdir.c_str());
      return 0;
    }

    if (*cmd_bench) {
      bench_cfg.pipe.use_pretrain = !bench_no_pretrain;
      const rca::EvalReport rep = bench_suite.empty()
                                      ? rca::run_benchmark(bench_cfg)
                                      : rca::run_benchmark_on_suite(bench_suite, bench_cfg);
      rca::write_text_file(bench_out, rep.to_json().dump(2) + "\n");
      std::fputs(rep.summary_table().c_str(), stdout);
      std::printf("wrote %s\n", bench_out.c_str());
      return 0;
    }

    if (*cmd_pipe) {
      pipe_cfg.use_pretrain = !pipe_no_pretrain;
      pipe_cfg.validate();
      const rca::SeriesMatrix m = rca::ingest_csv(pipe_input);
      const std::optional<std::string> trigger =
          pipe_trigger == "auto" ? std::nullopt : std::make_optional(pipe_trigger);
      const rca::PipelineResult result = rca::run_pipeline(m, trigger, pipe_cfg);
      rca::write_artifacts(pipe_outdir, result, pipe_cfg);
      std::printf("trigger: %s\n", result.trigger.c_str());
      std::printf("%-4s %-16s %-12s %s\n", "#", "node", "score", "ad");
      for (std::size_t i = 0; i < result.ranking.items.size(); ++i) {
        const auto& it = result.ranking.items[i];
        std::printf("%-4zu %-16s %-12.6f %zu\n", i + 1, it.node.c_str(), it.score, it.ad);
      }
      std::printf("artifacts in %s\n", pipe_outdir.c_str());
      return 0;
    }
  } catch (const rca::StageError& e) {
    return fail(e.stage, e.what());
  } catch (const std::exception& e) {
    if (*cmd_pre) return fail(rca::Stage::kPretrain, e.what());
    if (*cmd_disc) return fail(rca::Stage::kDiscovery, e.what());
    if (*cmd_diag) return fail(rca::Stage::kDiagnosis, e.what());
    return fail(rca::Stage::kInput, e.what());
  }
  return 1;
}

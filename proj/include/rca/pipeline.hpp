#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rca/diagnosis.hpp"
#include "rca/encoder.hpp"
#include "rca/granger.hpp"
#include "rca/graph.hpp"
#include "rca/series.hpp"
#include "rca/synth.hpp"
#include "rca/version.hpp"

namespace rca {

/// Settings for the whole three-stage run. Serialized verbatim into every
/// output artifact for provenance.
struct PipelineConfig {
  std::size_t window = 32;
  double threshold = 0.5;
  std::size_t epochs_pretrain = 50;
  std::size_t epochs_discovery = 50;
  double lr = 0.001;
  std::size_t batch = 128;
  std::size_t dim = 64;
  std::size_t kernel = 25;
  std::size_t crops_per_series = 4;
  std::size_t max_crop_len = 128;
  double weight_dangling = 1.0;
  double weight_normal = 0.5;
  double damping = 0.85;
  std::size_t topk = 5;
  std::uint64_t seed = 42;
  bool use_pretrain = true;
  bool normalize_input = true;
  bool include_trigger = false;
  double trigger_normal_fraction = 0.75;
  unsigned threads = 1;

  void validate() const {
    if (window < 2) throw std::invalid_argument("config: window must be >= 2");
    if (threshold < 0.0 || threshold > 1.0)
      throw std::invalid_argument("config: threshold must lie in [0, 1]");
    if (lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
    if (batch == 0 || dim == 0 || topk == 0)
      throw std::invalid_argument("config: batch, dim and topk must be positive");
    if (kernel < 3 || kernel % 2 == 0)
      throw std::invalid_argument("config: kernel must be odd and >= 3");
    if (damping <= 0.0 || damping >= 1.0)
      throw std::invalid_argument("config: damping must lie in (0, 1)");
    if (weight_dangling <= 0.0 || weight_normal <= 0.0)
      throw std::invalid_argument("config: personalization weights must be positive");
    if (trigger_normal_fraction <= 0.0 || trigger_normal_fraction >= 1.0)
      throw std::invalid_argument("config: trigger normal fraction must lie in (0, 1)");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"window", window},
                          {"threshold", threshold},
                          {"epochs_pretrain", epochs_pretrain},
                          {"epochs_discovery", epochs_discovery},
                          {"lr", lr},
                          {"batch", batch},
                          {"dim", dim},
                          {"kernel", kernel},
                          {"crops_per_series", crops_per_series},
                          {"max_crop_len", max_crop_len},
                          {"weight_dangling", weight_dangling},
                          {"weight_normal", weight_normal},
                          {"damping", damping},
                          {"topk", topk},
                          {"seed", seed},
                          {"use_pretrain", use_pretrain},
                          {"normalize_input", normalize_input},
                          {"include_trigger", include_trigger},
                          {"trigger_normal_fraction", trigger_normal_fraction}};
  }

  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.window = j.value("window", c.window);
    c.threshold = j.value("threshold", c.threshold);
    c.epochs_pretrain = j.value("epochs_pretrain", c.epochs_pretrain);
    c.epochs_discovery = j.value("epochs_discovery", c.epochs_discovery);
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.dim = j.value("dim", c.dim);
    c.kernel = j.value("kernel", c.kernel);
    c.crops_per_series = j.value("crops_per_series", c.crops_per_series);
    c.max_crop_len = j.value("max_crop_len", c.max_crop_len);
    c.weight_dangling = j.value("weight_dangling", c.weight_dangling);
    c.weight_normal = j.value("weight_normal", c.weight_normal);
    c.damping = j.value("damping", c.damping);
    c.topk = j.value("topk", c.topk);
    c.seed = j.value("seed", c.seed);
    c.use_pretrain = j.value("use_pretrain", c.use_pretrain);
    c.normalize_input = j.value("normalize_input", c.normalize_input);
    c.include_trigger = j.value("include_trigger", c.include_trigger);
    c.trigger_normal_fraction = j.value("trigger_normal_fraction", c.trigger_normal_fraction);
    return c;
  }
};

enum class Stage { kInput, kPretrain, kDiscovery, kDiagnosis, kOutput };

/// Stage-tagged failure so the CLI can map each stage to its exit code.
struct StageError : std::runtime_error {
  Stage stage;
  StageError(Stage s, const std::string& what) : std::runtime_error(what), stage(s) {}
};

struct PipelineResult {
  std::string trigger;
  std::optional<PretrainModel> pretrained;
  PretrainTrace pretrain_trace;
  CausalAttentionMatrix attention;
  CausalGraph raw_graph;
  CausalGraph dag;
  RootCauseRanking ranking;
};

namespace detail {

template <typename Fn>
auto stage(Stage s, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(s, e.what());
  }
}

}  // namespace detail

/// Executes pretrain (unless disabled), discovery, and diagnosis, resolving
/// the trigger by name or by detection over the leading normal fraction.
inline PipelineResult run_pipeline(const SeriesMatrix& input,
                                   const std::optional<std::string>& trigger,
                                   const PipelineConfig& cfg) {
  cfg.validate();
  if (input.n() < 2) throw StageError(Stage::kInput, "need at least 2 series");
  if (input.t() < 2 * cfg.window) {
    throw StageError(Stage::kInput, "need T >= 2*window (T=" + std::to_string(input.t()) +
                                        ", window=" + std::to_string(cfg.window) + ")");
  }

  PipelineResult result;

  const SeriesMatrix m = detail::stage(Stage::kInput, [&] {
    if (!cfg.normalize_input) return input;
    return normalize(input, IndexRange{1, input.t()}).first;
  });

  result.trigger = detail::stage(Stage::kInput, [&] {
    if (trigger) {
      m.index_of(*trigger);  // validates
      return *trigger;
    }
    const auto normal_last = static_cast<std::size_t>(
        std::llround(cfg.trigger_normal_fraction * static_cast<double>(m.t())));
    return detect_trigger(m, IndexRange{1, std::max<std::size_t>(normal_last, 2)});
  });

  if (cfg.use_pretrain && cfg.epochs_pretrain > 0) {
    detail::stage(Stage::kPretrain, [&] {
      PretrainConfig pc;
      pc.epochs = cfg.epochs_pretrain;
      pc.batch = cfg.batch;
      pc.lr = cfg.lr;
      pc.crops_per_series = cfg.crops_per_series;
      pc.dim = cfg.dim;
      pc.kernel = cfg.kernel;
      pc.max_crop_len = cfg.max_crop_len;
      result.pretrained = pretrain_model(m, pc, derive_seed(cfg.seed, "stage-pretrain"),
                                         &result.pretrain_trace);
      return 0;
    });
  }

  detail::stage(Stage::kDiscovery, [&] {
    DiscoveryConfig dc;
    dc.window = cfg.window;
    dc.epochs = cfg.epochs_discovery;
    dc.lr = cfg.lr;
    dc.batch = cfg.batch;
    dc.dim = cfg.dim;
    dc.kernel = cfg.kernel;
    dc.seed = derive_seed(cfg.seed, "stage-discovery");
    dc.threads = cfg.threads;
    const BackboneEncoder* enc =
        result.pretrained ? &result.pretrained->encoder : nullptr;
    auto [bank, attn] = train_discovery(m, enc, dc);
    result.attention = std::move(attn);
    result.raw_graph = threshold_graph(result.attention, cfg.threshold);
    annotate_similarity(result.raw_graph, m);
    result.dag = prune_to_dag(result.raw_graph, m);
    return 0;
  });

  detail::stage(Stage::kDiagnosis, [&] {
    DiagnosisConfig dg;
    dg.damping = cfg.damping;
    dg.weight_dangling = cfg.weight_dangling;
    dg.weight_normal = cfg.weight_normal;
    dg.include_trigger = cfg.include_trigger;
    result.ranking = rank_root_causes(result.dag, result.trigger, cfg.topk, dg);
    return 0;
  });

  return result;
}

namespace detail {

inline nlohmann::json with_provenance(nlohmann::json j, const PipelineConfig& cfg) {
  j["config"] = cfg.to_json();
  j["seed"] = cfg.seed;
  j["tool_version"] = kVersion;
  return j;
}

}  // namespace detail

inline std::string ranking_json_string(const PipelineResult& r, const PipelineConfig& cfg) {
  return detail::with_provenance(r.ranking.to_json(), cfg).dump(2) + "\n";
}

/// Writes every artifact of a pipeline run into dir: checkpoint, attention
/// matrix, raw and pruned graphs (JSON + DOT), and the ranking. The DOT file
/// colors the trigger and the top candidate.
inline void write_artifacts(const std::string& dir, const PipelineResult& r,
                            const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };

  if (r.pretrained) {
    nlohmann::json ck = encoder_checkpoint_json(*r.pretrained);
    ck = detail::with_provenance(std::move(ck), cfg);
    write_text_file(path("encoder.ckpt.json"), ck.dump(2) + "\n");
  }
  write_text_file(path("alpha.json"),
                  detail::with_provenance(r.attention.to_json(), cfg).dump(2) + "\n");
  write_text_file(path("graph_raw.json"),
                  detail::with_provenance(graph_to_json(r.raw_graph), cfg).dump(2) + "\n");
  write_text_file(path("graph.json"),
                  detail::with_provenance(graph_to_json(r.dag), cfg).dump(2) + "\n");
  write_text_file(path("graph_raw.dot"), graph_to_dot(r.raw_graph));

  std::map<std::string, std::string> colors;
  colors[r.trigger] = "style=filled, fillcolor=yellow";
  if (!r.ranking.items.empty()) {
    colors[r.ranking.items.front().node] = "style=filled, fillcolor=red";
  }
  write_text_file(path("graph.dot"), graph_to_dot(r.dag, colors));
  write_text_file(path("ranking.json"), ranking_json_string(r, cfg));
}

}  // namespace rca

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gazeprobe/align.hpp"
#include "gazeprobe/gaze.hpp"
#include "gazeprobe/gpt2.hpp"
#include "gazeprobe/stats.hpp"
#include "gazeprobe/word_model.hpp"

namespace gazeprobe::probe {

enum class TaskFilter { NR, TSR, Both };
// Pooled: one correlation over all words of a scope. PerSentence: mean of
// per-sentence coefficients.
enum class Pooling { Pooled, PerSentence };
enum class ProbTransform { LogP, P };

std::string_view task_filter_name(TaskFilter t);
std::optional<TaskFilter> parse_task_filter(std::string_view s);
std::string_view pooling_name(Pooling p);
std::optional<Pooling> parse_pooling(std::string_view s);
std::string_view prob_transform_name(ProbTransform t);
std::optional<ProbTransform> parse_prob_transform(std::string_view s);
// defined | zerofill
std::string_view agg_name(gaze::AggregationPolicy a);
std::optional<gaze::AggregationPolicy> parse_agg(std::string_view s);

struct ProbeConfig {
  std::filesystem::path weights;
  std::filesystem::path vocab;
  std::filesystem::path merges;
  std::filesystem::path gaze;
  TaskFilter task = TaskFilter::Both;
  std::vector<gaze::Measure> measures{gaze::kAllMeasures.begin(), gaze::kAllMeasures.end()};
  stats::Metric metric = stats::Metric::Spearman;
  bool cross_check = false;  // also compute the other two metrics
  gaze::AggregationPolicy agg = gaze::AggregationPolicy::DefinedOnlyMean;
  int min_participants = 1;
  align::FfnReduction ffn_reduce = align::FfnReduction::L2Mean;
  align::AttnMode attn_mode = align::AttnMode::ReceivedMass;
  Pooling pooling = Pooling::Pooled;
  ProbTransform prob_transform = ProbTransform::LogP;
  std::vector<std::filesystem::path> slm_models;
  std::filesystem::path out_dir = "probe-out";
  std::uint64_t seed = 0;
  bool dump_pairs = false;
  int threads = 0;  // 0 = hardware concurrency
  // Processes sentences in a seeded random order; results must not change.
  std::optional<std::uint64_t> shuffle_order;
};

// Named layer range, 1-based inclusive; may be empty (first > last).
struct LayerGroup {
  std::string name;
  int first = 1;
  int last = 0;
};

// bottom / middle / upper thirds; for 12 layers 1-4, 5-8, 9-12.
std::vector<LayerGroup> layer_groups(int n_layer);

struct Cell {
  stats::CorrelationResult result;
  std::vector<stats::CorrelationResult> cross;  // other metrics when cross_check is on
};

struct CorrelationTable {
  std::string scope;    // NR, TSR or both
  std::string measure;  // empty when columns are measures
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<Cell>> cells;  // [row][col]
};

struct GroupSummary {
  std::string scope;
  std::string measure;
  LayerGroup group;
  double mean_coefficient = 0.0;  // NaN when every layer in the group is degenerate or the group is empty
};

struct Rejection {
  std::string task;
  int sentence_id = 0;
  std::string reason;
};

struct PairRecord {
  std::string scope;
  std::string signal;
  std::string measure;
  gaze::WordKey key;
  double model_value = 0.0;
  double gaze_value = 0.0;
};

struct ModelInfo {
  int n_layer = 0;
  int n_head = 0;
  int d_model = 0;
  int vocab_size = 0;
};

struct ProbeReport {
  std::string probe;  // ffn, attn or prob
  ProbeConfig config;
  std::optional<ModelInfo> model;
  std::vector<CorrelationTable> tables;
  std::vector<GroupSummary> groups;
  std::map<std::string, std::size_t> sentences_processed;  // per task
  std::map<std::string, std::size_t> eligible_words;       // per task, prediction-eligible
  std::vector<Rejection> rejected;
  std::map<std::string, std::string> skipped_models;       // model id -> diagnostic
  std::vector<PairRecord> pairs;                           // filled when dump_pairs
};

struct NamedWordModel {
  std::string id;
  std::shared_ptr<const slm::WordModel> model;
};

ProbeReport run_ffn_probe(const ProbeConfig& config, const gpt2::Model& model, const gaze::GazeCorpus& corpus);
ProbeReport run_attention_probe(const ProbeConfig& config, const gpt2::Model& model,
                                const gaze::GazeCorpus& corpus);
// `transformer` may be null to run shallow models only.
ProbeReport run_prob_probe(const ProbeConfig& config, const gpt2::Model* transformer,
                           const std::vector<NamedWordModel>& shallow, const gaze::GazeCorpus& corpus);

// Variants that load everything named in the config. Unloadable shallow
// models are recorded in skipped_models.
ProbeReport run_ffn_probe(const ProbeConfig& config);
ProbeReport run_attention_probe(const ProbeConfig& config);
ProbeReport run_prob_probe(const ProbeConfig& config);

}  // namespace gazeprobe::probe

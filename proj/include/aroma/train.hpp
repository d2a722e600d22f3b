#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aroma/carve.hpp"
#include "aroma/dataset.hpp"
#include "aroma/eval.hpp"
#include "aroma/gnn.hpp"

#include "json.hpp"

namespace aroma {

class TrainError : public Error {
 public:
  using Error::Error;
};

class Divergence : public TrainError {
 public:
  using TrainError::TrainError;
};

struct PairSample {
  uint32_t a = 0;  // meta-graph node ids
  uint32_t b = 0;
  std::vector<double> targets;  // dense, over Task::label_ids order
};

// Featurized molecule per meta-graph node, built once and shared.
struct MolGraphCache {
  std::vector<MolGraph> graphs;
  static MolGraphCache build(const MetaGraph& mg);
};

// Supervised view of one carving: usable edges become samples; the label
// space is the carving's covered label set.
struct Task {
  std::vector<uint32_t> label_ids;  // vocab ids, ascending
  std::vector<std::string> label_names;
  std::vector<PairSample> train, valid, test;
};

// valid_holdout > 0 moves that fraction of train samples (seeded shuffle)
// into the validation split when the carving itself has no third component.
Task make_task(const MetaGraph& mg, const Carving& carving,
               double valid_holdout = 0.0, uint64_t holdout_seed = 0);

struct TrainConfig {
  int epochs = 250;
  int batch_size = 64;
  ScheduleConfig schedule;
  double weight_decay = 0.0;
  std::optional<int> patience;  // empty disables early stopping
  uint64_t seed = 0;

  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct RunHistory {
  std::vector<double> train_loss, valid_loss, valid_auroc, lr;
  int stopping_epoch = 0;  // epochs actually run
  double wall_seconds = 0.0;
};

struct TrainResult {
  NamedTensors best_params;
  RunHistory history;
  double best_valid_loss = 0.0;
  int best_epoch = 0;  // 1-based
};

// Mini-batch Adam with seeded shuffling. Early stopping watches validation
// loss; patience = 0 stops at the first epoch that fails to improve and the
// best epoch's snapshot is returned either way. Throws Divergence on NaN.
TrainResult train_model(BlendModel& model, const TrainConfig& cfg,
                        const Task& task, const MolGraphCache& cache);

std::vector<std::vector<double>> predict_scores(
    BlendModel& model, const std::vector<PairSample>& samples,
    const MolGraphCache& cache);

// Uniform random search over an enumerated space.
struct SearchSpace {
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> dims;
};

SearchSpace default_search_space(const std::string& arch);

struct TrialResult {
  nlohmann::json config;
  std::vector<double> fold_scores;
  double mean_score = 0.0;
};

struct SearchResult {
  nlohmann::json best_config;
  size_t best_trial = 0;
  std::vector<TrialResult> trials;
};

// evaluate(config, fold) must return the fold's validation score (higher is
// better). Trial t samples with an RNG stream derived from (seed, t), so
// the trial sequence is reproducible. Ties resolve to the earlier trial.
SearchResult random_search(
    const SearchSpace& space, int trials, size_t n_folds, uint64_t seed,
    const std::function<double(const nlohmann::json&, size_t)>& evaluate);

struct EnsembleResult {
  std::vector<double> per_model_macro;
  double mean_score = 0.0;
  double ci95_halfwidth = 0.0;  // Student-t over the replicas
  double ensemble_score = 0.0;  // macro AUROC of averaged probabilities
};

// Trains n replicas with model/train seeds offset by 0..n-1 and scores
// them (and their probability average) on task.test.
EnsembleResult seed_ensemble(const GnnConfig& model_cfg,
                             const TrainConfig& train_cfg, int n,
                             const Task& task, const MolGraphCache& cache);

void write_history_csv(const std::string& path, const RunHistory& history);

}  // namespace aroma

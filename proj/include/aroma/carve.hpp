#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aroma/dataset.hpp"
#include "aroma/error.hpp"
#include "aroma/rng.hpp"

#include "json.hpp"

namespace aroma {

class CarveError : public Error {
 public:
  using Error::Error;
};

// Raised when no sampled partition covers the required labels. Carries the
// per-label deficit of the closest attempt.
class NoCoverageFound : public CarveError {
 public:
  struct Deficit {
    uint32_t label;
    std::array<uint32_t, 3> counts;  // usable edges per component
  };
  NoCoverageFound(std::string what, std::vector<Deficit> deficits)
      : CarveError(std::move(what)), deficits_(std::move(deficits)) {}
  const std::vector<Deficit>& deficits() const { return deficits_; }

 private:
  std::vector<Deficit> deficits_;
};

// Component ids: 0 = train, 1 = test, 2 = valid (3-way carvings only).
struct Carving {
  int components = 2;
  std::vector<int8_t> assignment;                    // node -> component
  std::array<std::vector<uint32_t>, 3> usable_edges; // edge ids per component
  std::vector<uint32_t> discarded;                   // boundary edge ids
  std::vector<std::array<uint32_t, 3>> coverage;     // per label, per component
  uint64_t seed = 0;
  uint64_t iterations_used = 0;

  size_t usable_total() const {
    return usable_edges[0].size() + usable_edges[1].size() +
           usable_edges[2].size();
  }
  // Labels with at least one usable edge in every component.
  LabelSet covered_labels() const;
};

struct CarveConfig {
  double train_fraction = 0.5;
  uint64_t max_iterations = 1;
  uint64_t seed = 0;
  enum class Objective { UsableEdges, KlScore } objective = Objective::UsableEdges;
  std::optional<LabelSet> required_labels;
  double kl_epsilon = 1e-9;
  int threads = 1;
};

// Classifies edges and computes coverage for a fixed assignment.
Carving carving_from_assignment(const MetaGraph& mg,
                                std::vector<int8_t> assignment,
                                int components = 2);

// Independent per-node coin flips: train with probability `fraction`.
Carving random_partition(const MetaGraph& mg, double fraction, Rng& rng);

// 3-way per-node draw with the given (train, test, valid) probabilities.
Carving random_partition3(const MetaGraph& mg,
                          const std::array<double, 3>& ratios, Rng& rng);

// Every required label needs at least one usable edge in each component.
bool coverage_ok(const Carving& c, const LabelSet& required);

uint64_t edge_boundary_degree(const Carving& c);

// KL(p || q) with additive smoothing applied to both sides before
// normalization. Throws CarveError on length mismatch.
double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double epsilon);

// Carving score used by Objective::KlScore: KL(train || all) +
// KL(test || all) over usable-edge label distributions.
double carving_kl_score(const MetaGraph& mg, const Carving& c, double epsilon);

// Runs max_iterations random partitions (each iteration draws its own RNG
// stream from the seed, so results are independent of the thread count) and
// returns the best coverage-passing carving by the configured objective.
// Ties break toward the lower iteration index. iterations_used records the
// iteration that produced the winner.
Carving carve_search(const MetaGraph& mg, const CarveConfig& cfg);

struct CarvableReport {
  LabelSet best_run;        // covered set of the single best run
  LabelSet union_observed;  // union of per-run covered sets
  std::vector<size_t> per_run_counts;
};

// Runs `attempts` independent searches that maximize (covered labels,
// usable edges) and reports what proved coverable.
CarvableReport carvable_labels(const MetaGraph& mg, const CarveConfig& cfg,
                               int attempts);

// k independent 3-way carvings, fold i seeded with seed + i. Each fold
// maximizes (covered labels, then usable edges) over its iterations and is
// returned with coverage over its own coverable set. Molecules may recur
// across folds; separation holds within each fold.
std::vector<Carving> kfold_carvings(const MetaGraph& mg, int k,
                                    const std::array<double, 3>& ratios,
                                    const CarveConfig& cfg);

nlohmann::json carving_to_json(const MetaGraph& mg, const Carving& c,
                               const CarveConfig& cfg);
Carving carving_from_json(const MetaGraph& mg, const nlohmann::json& j);

}  // namespace aroma

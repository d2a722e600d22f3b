#include "aroma/carve.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace aroma {

LabelSet Carving::covered_labels() const {
  LabelSet out;
  for (uint32_t label = 0; label < coverage.size(); ++label) {
    bool ok = true;
    for (int c = 0; c < components; ++c)
      if (coverage[label][c] == 0) ok = false;
    if (ok) out.add(label);
  }
  return out;
}

Carving carving_from_assignment(const MetaGraph& mg,
                                std::vector<int8_t> assignment,
                                int components) {
  if (assignment.size() != mg.n_nodes())
    throw CarveError("assignment size does not match node count");
  Carving c;
  c.components = components;
  c.assignment = std::move(assignment);
  c.coverage.assign(mg.vocab.size(), {0, 0, 0});
  for (uint32_t eid = 0; eid < mg.edges.size(); ++eid) {
    const PairEdge& e = mg.edges[eid];
    const int8_t cu = c.assignment[e.u];
    const int8_t cv = c.assignment[e.v];
    if (cu != cv) {
      c.discarded.push_back(eid);
      continue;
    }
    c.usable_edges[cu].push_back(eid);
    for (uint32_t label : e.labels) ++c.coverage[label][cu];
  }
  return c;
}

Carving random_partition(const MetaGraph& mg, double fraction, Rng& rng) {
  if (mg.n_nodes() == 0) throw CarveError("empty meta-graph");
  std::vector<int8_t> assignment(mg.n_nodes());
  for (size_t i = 0; i < assignment.size(); ++i)
    assignment[i] = rng.uniform01() < fraction ? 0 : 1;
  return carving_from_assignment(mg, std::move(assignment), 2);
}

Carving random_partition3(const MetaGraph& mg,
                          const std::array<double, 3>& ratios, Rng& rng) {
  if (mg.n_nodes() == 0) throw CarveError("empty meta-graph");
  std::vector<int8_t> assignment(mg.n_nodes());
  for (size_t i = 0; i < assignment.size(); ++i) {
    const double u = rng.uniform01();
    assignment[i] = u < ratios[0] ? 0 : (u < ratios[0] + ratios[1] ? 1 : 2);
  }
  return carving_from_assignment(mg, std::move(assignment), 3);
}

bool coverage_ok(const Carving& c, const LabelSet& required) {
  for (uint32_t label : required) {
    if (label >= c.coverage.size()) return false;
    for (int comp = 0; comp < c.components; ++comp)
      if (c.coverage[label][comp] == 0) return false;
  }
  return true;
}

uint64_t edge_boundary_degree(const Carving& c) { return c.discarded.size(); }

double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double epsilon) {
  if (p.size() != q.size())
    throw CarveError("kl_divergence: dimension mismatch (" +
                     std::to_string(p.size()) + " vs " +
                     std::to_string(q.size()) + ")");
  if (!(epsilon > 0.0)) throw CarveError("kl_divergence: epsilon must be > 0");
  double ps = 0.0, qs = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    ps += p[i] + epsilon;
    qs += q[i] + epsilon;
  }
  double kl = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double pi = (p[i] + epsilon) / ps;
    const double qi = (q[i] + epsilon) / qs;
    kl += pi * std::log(pi / qi);
  }
  return kl < 0.0 ? 0.0 : kl;  // guards the p == q roundoff case
}

double carving_kl_score(const MetaGraph& mg, const Carving& c, double epsilon) {
  const size_t L = mg.vocab.size();
  std::vector<double> all(L, 0.0);
  for (const PairEdge& e : mg.edges)
    for (uint32_t label : e.labels) all[label] += 1.0;
  double score = 0.0;
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> dist(L, 0.0);
    for (uint32_t label = 0; label < L; ++label)
      dist[label] = c.coverage[label][comp];
    score += kl_divergence(dist, all, epsilon);
  }
  return score;
}

namespace {

struct Candidate {
  bool valid = false;
  double key = 0.0;  // larger is better
  uint64_t iter = 0;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.valid != b.valid) return a.valid;
  if (!a.valid) return false;
  if (a.key != b.key) return a.key > b.key;
  return a.iter < b.iter;
}

// Deterministic parallel search scaffold: evaluate() maps an iteration's
// carving to a ranking key; iterations draw independent RNG streams.
template <class MakeCarving, class Evaluate>
Candidate search_best(uint64_t max_iterations, int threads,
                      MakeCarving make_carving, Evaluate evaluate) {
  const int n_threads =
      std::max(1, std::min<int>(threads, static_cast<int>(
                                             std::thread::hardware_concurrency()
                                                 ? std::thread::hardware_concurrency()
                                                 : 1)));
  std::vector<Candidate> best_per_thread(n_threads);
  auto worker = [&](int t) {
    Candidate local;
    for (uint64_t iter = t; iter < max_iterations; iter += n_threads) {
      Carving c = make_carving(iter);
      Candidate cand = evaluate(c, iter);
      if (better(cand, local)) local = cand;
    }
    best_per_thread[t] = local;
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  Candidate best;
  for (const Candidate& c : best_per_thread)
    if (better(c, best)) best = c;
  return best;
}

std::vector<NoCoverageFound::Deficit> deficits_of(const Carving& c,
                                                  const LabelSet& required) {
  std::vector<NoCoverageFound::Deficit> out;
  for (uint32_t label : required) {
    bool short_somewhere = false;
    std::array<uint32_t, 3> counts = {0, 0, 0};
    for (int comp = 0; comp < c.components; ++comp) {
      counts[comp] = label < c.coverage.size() ? c.coverage[label][comp] : 0;
      if (counts[comp] == 0) short_somewhere = true;
    }
    if (short_somewhere) out.push_back({label, counts});
  }
  return out;
}

}  // namespace

Carving carve_search(const MetaGraph& mg, const CarveConfig& cfg) {
  if (mg.n_nodes() == 0) throw CarveError("empty meta-graph");
  if (cfg.max_iterations < 1) throw CarveError("max_iterations must be >= 1");
  const LabelSet required =
      cfg.required_labels ? *cfg.required_labels : mg.edge_label_set();

  auto make_carving = [&](uint64_t iter) {
    Rng rng(hash_combine(cfg.seed, iter));
    return random_partition(mg, cfg.train_fraction, rng);
  };

  auto evaluate = [&](const Carving& c, uint64_t iter) {
    Candidate cand;
    cand.iter = iter;
    if (!coverage_ok(c, required)) return cand;
    cand.valid = true;
    cand.key = cfg.objective == CarveConfig::Objective::UsableEdges
                   ? static_cast<double>(c.usable_total())
                   : -carving_kl_score(mg, c, cfg.kl_epsilon);
    return cand;
  };

  const Candidate best =
      search_best(cfg.max_iterations, cfg.threads, make_carving, evaluate);

  if (!best.valid) {
    // Replay the closest attempt (fewest uncovered labels) for diagnostics.
    auto closeness = [&](const Carving& c, uint64_t iter) {
      Candidate cand;
      cand.valid = true;
      cand.iter = iter;
      cand.key = static_cast<double>(required.size() -
                                     deficits_of(c, required).size());
      return cand;
    };
    const Candidate closest =
        search_best(cfg.max_iterations, cfg.threads, make_carving, closeness);
    Carving c = make_carving(closest.iter);
    auto deficits = deficits_of(c, required);
    std::string msg = "no coverage-passing carving in " +
                      std::to_string(cfg.max_iterations) + " iterations; " +
                      std::to_string(deficits.size()) +
                      " label(s) uncovered in the best attempt";
    throw NoCoverageFound(std::move(msg), std::move(deficits));
  }

  Carving winner = make_carving(best.iter);
  winner.seed = cfg.seed;
  winner.iterations_used = best.iter + 1;
  return winner;
}

namespace {

// Best-effort variant: maximize (covered label count, usable edges).
Candidate coverage_maximizing_search(const MetaGraph& mg, uint64_t seed,
                                     uint64_t max_iterations, int threads,
                                     const std::array<double, 3>& ratios,
                                     int components) {
  auto make_carving = [&](uint64_t iter) {
    Rng rng(hash_combine(seed, iter));
    return components == 2 ? random_partition(mg, ratios[0], rng)
                           : random_partition3(mg, ratios, rng);
  };
  auto evaluate = [&](const Carving& c, uint64_t iter) {
    Candidate cand;
    cand.valid = true;
    cand.iter = iter;
    const double covered = static_cast<double>(c.covered_labels().size());
    const double usable = static_cast<double>(c.usable_total());
    // Lexicographic (covered, usable); usable is bounded by edge count.
    cand.key = covered * (static_cast<double>(mg.n_edges()) + 1.0) + usable;
    return cand;
  };
  return search_best(max_iterations, threads, make_carving, evaluate);
}

}  // namespace

CarvableReport carvable_labels(const MetaGraph& mg, const CarveConfig& cfg,
                               int attempts) {
  if (attempts < 1) throw CarveError("attempts must be >= 1");
  CarvableReport report;
  size_t best_count = 0;
  for (int run = 0; run < attempts; ++run) {
    const uint64_t run_seed = cfg.seed + static_cast<uint64_t>(run);
    const Candidate best = coverage_maximizing_search(
        mg, run_seed, cfg.max_iterations, cfg.threads,
        {cfg.train_fraction, 1.0 - cfg.train_fraction, 0.0}, 2);
    Rng rng(hash_combine(run_seed, best.iter));
    const Carving c = random_partition(mg, cfg.train_fraction, rng);
    const LabelSet covered = c.covered_labels();
    report.per_run_counts.push_back(covered.size());
    report.union_observed = set_union(report.union_observed, covered);
    if (run == 0 || covered.size() > best_count) {
      best_count = covered.size();
      report.best_run = covered;
    }
  }
  return report;
}

std::vector<Carving> kfold_carvings(const MetaGraph& mg, int k,
                                    const std::array<double, 3>& ratios,
                                    const CarveConfig& cfg) {
  if (k < 2) throw CarveError("k must be >= 2");
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(sum - 1.0) > 1e-9)
    throw CarveError("ratios must sum to 1");
  for (double r : ratios)
    if (!(r > 0.0)) throw CarveError("each ratio must be positive");

  std::vector<Carving> folds;
  folds.reserve(k);
  for (int fold = 0; fold < k; ++fold) {
    const uint64_t fold_seed = cfg.seed + static_cast<uint64_t>(fold);
    const Candidate best = coverage_maximizing_search(
        mg, fold_seed, cfg.max_iterations, cfg.threads, ratios, 3);
    Rng rng(hash_combine(fold_seed, best.iter));
    Carving c = random_partition3(mg, ratios, rng);
    c.seed = fold_seed;
    c.iterations_used = best.iter + 1;
    if (c.covered_labels().empty()) {
      throw NoCoverageFound(
          "fold " + std::to_string(fold) + ": no label coverable in " +
              std::to_string(cfg.max_iterations) + " iterations",
          deficits_of(c, mg.edge_label_set()));
    }
    folds.push_back(std::move(c));
  }
  return folds;
}

nlohmann::json carving_to_json(const MetaGraph& mg, const Carving& c,
                               const CarveConfig& cfg) {
  nlohmann::json assignment = nlohmann::json::object();
  for (size_t i = 0; i < mg.n_nodes(); ++i)
    assignment[mg.smiles[i]] = c.assignment[i];

  nlohmann::json coverage = nlohmann::json::object();
  for (uint32_t label = 0; label < c.coverage.size(); ++label) {
    uint32_t total = 0;
    for (int comp = 0; comp < c.components; ++comp)
      total += c.coverage[label][comp];
    if (total == 0 && !mg.edge_label_set().contains(label)) continue;
    nlohmann::json counts = nlohmann::json::array();
    for (int comp = 0; comp < c.components; ++comp)
      counts.push_back(c.coverage[label][comp]);
    coverage[mg.vocab.name(label)] = counts;
  }

  return nlohmann::json{
      {"seed", c.seed},
      {"config",
       {{"train_fraction", cfg.train_fraction},
        {"max_iterations", cfg.max_iterations},
        {"objective", cfg.objective == CarveConfig::Objective::UsableEdges
                          ? "usable_edges"
                          : "kl_score"},
        {"kl_epsilon", cfg.kl_epsilon}}},
      {"components", c.components},
      {"iterations_used", c.iterations_used},
      {"assignment", assignment},
      {"discarded_count", c.discarded.size()},
      {"coverage", coverage}};
}

Carving carving_from_json(const MetaGraph& mg, const nlohmann::json& j) {
  const auto& assignment = j.at("assignment");
  std::vector<int8_t> assign(mg.n_nodes(), 0);
  for (size_t i = 0; i < mg.n_nodes(); ++i) {
    auto it = assignment.find(mg.smiles[i]);
    if (it == assignment.end())
      throw CarveError("carving JSON is missing molecule: " + mg.smiles[i]);
    assign[i] = static_cast<int8_t>(it->get<int>());
  }
  Carving c = carving_from_assignment(mg, std::move(assign),
                                      j.value("components", 2));
  c.seed = j.value("seed", 0ULL);
  c.iterations_used = j.value("iterations_used", 0ULL);
  return c;
}

}  // namespace aroma

#include "aroma/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "aroma/stats.hpp"

namespace aroma {

MolGraphCache MolGraphCache::build(const MetaGraph& mg) {
  MolGraphCache cache;
  cache.graphs.reserve(mg.molecules.size());
  for (const Molecule& mol : mg.molecules) cache.graphs.push_back(featurize(mol));
  return cache;
}

Task make_task(const MetaGraph& mg, const Carving& carving,
               double valid_holdout, uint64_t holdout_seed) {
  Task task;
  const LabelSet covered = carving.covered_labels();
  task.label_ids.assign(covered.begin(), covered.end());
  for (uint32_t id : task.label_ids) task.label_names.push_back(mg.vocab.name(id));

  auto to_sample = [&](uint32_t eid) {
    const PairEdge& e = mg.edges[eid];
    PairSample s;
    s.a = e.u;
    s.b = e.v;
    s.targets.assign(task.label_ids.size(), 0.0);
    for (size_t l = 0; l < task.label_ids.size(); ++l)
      if (e.labels.contains(task.label_ids[l])) s.targets[l] = 1.0;
    return s;
  };

  for (uint32_t eid : carving.usable_edges[0]) task.train.push_back(to_sample(eid));
  for (uint32_t eid : carving.usable_edges[1]) task.test.push_back(to_sample(eid));
  for (uint32_t eid : carving.usable_edges[2]) task.valid.push_back(to_sample(eid));

  if (task.valid.empty() && valid_holdout > 0.0 && task.train.size() > 1) {
    Rng rng(mix64(holdout_seed ^ 0x686F6C64ULL));
    std::vector<size_t> order(task.train.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const size_t n_valid = std::max<size_t>(
        1, static_cast<size_t>(std::floor(valid_holdout *
                                          static_cast<double>(order.size()))));
    std::vector<bool> is_valid(task.train.size(), false);
    for (size_t i = 0; i < n_valid; ++i) is_valid[order[i]] = true;
    std::vector<PairSample> train_keep;
    for (size_t i = 0; i < task.train.size(); ++i)
      (is_valid[i] ? task.valid : train_keep).push_back(std::move(task.train[i]));
    task.train = std::move(train_keep);
  }
  return task;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  if (j.contains("patience") && !j["patience"].is_null())
    cfg.patience = j["patience"].get<int>();
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    const std::string kind = s.value("kind", "constant");
    if (kind == "constant") {
      cfg.schedule.kind = ScheduleConfig::Kind::Constant;
    } else if (kind == "exponential_steps") {
      cfg.schedule.kind = ScheduleConfig::Kind::ExponentialSteps;
      cfg.schedule.rate = s.value("rate", cfg.schedule.rate);
      cfg.schedule.decay_steps = s.value("decay_steps", cfg.schedule.decay_steps);
    } else if (kind == "fractional_span") {
      cfg.schedule.kind = ScheduleConfig::Kind::FractionalSpan;
      cfg.schedule.decay = s.value("decay", cfg.schedule.decay);
    } else {
      throw TrainError("unknown schedule kind: " + kind);
    }
    cfg.schedule.lr0 = s.value("lr0", cfg.schedule.lr0);
  }
  cfg.schedule.total_epochs = cfg.epochs;
  return cfg;
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json s{{"lr0", schedule.lr0}};
  switch (schedule.kind) {
    case ScheduleConfig::Kind::Constant:
      s["kind"] = "constant";
      break;
    case ScheduleConfig::Kind::ExponentialSteps:
      s["kind"] = "exponential_steps";
      s["rate"] = schedule.rate;
      s["decay_steps"] = schedule.decay_steps;
      break;
    case ScheduleConfig::Kind::FractionalSpan:
      s["kind"] = "fractional_span";
      s["decay"] = schedule.decay;
      break;
  }
  nlohmann::json j{{"epochs", epochs},
                   {"batch_size", batch_size},
                   {"weight_decay", weight_decay},
                   {"seed", seed},
                   {"schedule", s}};
  if (patience) {
    j["patience"] = *patience;
  } else {
    j["patience"] = nullptr;
  }
  return j;
}

namespace {

NamedTensors snapshot_params(BlendModel& model) {
  NamedTensors out;
  for (auto& [name, t] : model.named_params())
    out.emplace_back(name, Tensor::from(t.data(), t.rows(), t.cols()));
  return out;
}

// Mean per-sample loss without dropout; used for validation.
double dataset_loss(BlendModel& model, const std::vector<PairSample>& samples,
                    const MolGraphCache& cache,
                    const std::vector<double>& weights) {
  double total = 0.0;
  for (const PairSample& s : samples) {
    Tape tape;
    Tensor logits =
        model.pair_logits(tape, cache.graphs[s.a], cache.graphs[s.b], nullptr);
    Tensor target =
        Tensor::from(s.targets, 1, static_cast<int64_t>(s.targets.size()));
    total += weighted_bce(tape, logits, target, weights).item();
  }
  return total / static_cast<double>(samples.size());
}

double macro_auroc(BlendModel& model, const std::vector<PairSample>& samples,
                   const MolGraphCache& cache,
                   const std::vector<std::string>& names) {
  std::vector<std::vector<double>> scores, targets;
  scores.reserve(samples.size());
  for (const PairSample& s : samples) {
    scores.push_back(model.predict_pair(cache.graphs[s.a], cache.graphs[s.b]));
    targets.push_back(s.targets);
  }
  return score_report(scores, targets, names).macro;
}

}  // namespace

TrainResult train_model(BlendModel& model, const TrainConfig& cfg,
                        const Task& task, const MolGraphCache& cache) {
  if (task.train.empty()) throw TrainError("empty training set");
  const bool early_stopping = cfg.patience.has_value();
  if (early_stopping && task.valid.empty())
    throw TrainError("early stopping needs a validation set");

  std::vector<double> loss_weights;
  if (model.config().weighted_loss) {
    std::vector<std::vector<double>> rows;
    rows.reserve(task.train.size());
    for (const PairSample& s : task.train) rows.push_back(s.targets);
    loss_weights = compute_label_stats(rows).weights;
  }

  std::vector<Tensor> params = model.trainable_params();
  AdamState adam;
  AdamConfig adam_cfg;
  adam_cfg.weight_decay = cfg.weight_decay;

  Rng shuffle_rng(mix64(cfg.seed ^ 0x73687566ULL));
  Rng dropout_rng(mix64(cfg.seed ^ 0x64726F70ULL));

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int64_t global_step = 0;

  std::vector<size_t> order(task.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    const double epoch_lr =
        cfg.schedule.kind == ScheduleConfig::Kind::ExponentialSteps
            ? lr_at(cfg.schedule, static_cast<double>(global_step))
            : lr_at(cfg.schedule, static_cast<double>(epoch - 1));

    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Tape tape;
      Tensor batch_loss;
      bool first = true;
      for (size_t k = start; k < end; ++k) {
        const PairSample& s = task.train[order[k]];
        Tensor logits = model.pair_logits(tape, cache.graphs[s.a],
                                          cache.graphs[s.b], &dropout_rng);
        Tensor target =
            Tensor::from(s.targets, 1, static_cast<int64_t>(s.targets.size()));
        Tensor loss = weighted_bce(tape, logits, target, loss_weights);
        batch_loss = first ? loss : tape.add(batch_loss, loss);
        first = false;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      Tensor mean_loss = tape.mul(batch_loss, Tensor::scalar(inv));
      const double loss_value = mean_loss.item();
      if (std::isnan(loss_value))
        throw Divergence("training loss is NaN at epoch " +
                         std::to_string(epoch));
      epoch_loss += loss_value * static_cast<double>(end - start);

      for (Tensor& p : params) p.zero_grad();
      tape.backward(mean_loss);
      adam_cfg.lr = cfg.schedule.kind == ScheduleConfig::Kind::ExponentialSteps
                        ? lr_at(cfg.schedule, static_cast<double>(global_step))
                        : epoch_lr;
      adam_step(params, adam, adam_cfg);
      ++global_step;
    }
    epoch_loss /= static_cast<double>(task.train.size());

    double valid_loss = std::numeric_limits<double>::quiet_NaN();
    double valid_score = std::numeric_limits<double>::quiet_NaN();
    if (!task.valid.empty()) {
      valid_loss = dataset_loss(model, task.valid, cache, loss_weights);
      valid_score = macro_auroc(model, task.valid, cache, task.label_names);
      if (std::isnan(valid_loss))
        throw Divergence("validation loss is NaN at epoch " +
                         std::to_string(epoch));
    }

    result.history.train_loss.push_back(epoch_loss);
    result.history.valid_loss.push_back(valid_loss);
    result.history.valid_auroc.push_back(valid_score);
    result.history.lr.push_back(epoch_lr);
    result.history.stopping_epoch = epoch;

    const double watch = task.valid.empty() ? epoch_loss : valid_loss;
    if (watch < result.best_valid_loss) {
      result.best_valid_loss = watch;
      result.best_epoch = epoch;
      result.best_params = snapshot_params(model);
      since_best = 0;
    } else if (early_stopping) {
      ++since_best;
      if (since_best > *cfg.patience) break;
    }
  }

  result.history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

std::vector<std::vector<double>> predict_scores(
    BlendModel& model, const std::vector<PairSample>& samples,
    const MolGraphCache& cache) {
  std::vector<std::vector<double>> scores;
  scores.reserve(samples.size());
  for (const PairSample& s : samples)
    scores.push_back(model.predict_pair(cache.graphs[s.a], cache.graphs[s.b]));
  return scores;
}

SearchSpace default_search_space(const std::string& arch) {
  SearchSpace space;
  if (arch == "mpnn") {
    space.dims = {
        {"dropout", {0.12, 0.25, 0.5}},
        {"weight_decay", {1e-3, 1e-4, 1e-5}},
        {"lr0", {0.001, 0.0001, 0.005, 0.0005}},
        {"decay_rate", {0.25, 0.5, 0.75}},
        {"decay_steps", {42 * 5, 42 * 10, 42 * 15, 42 * 20}},
        {"set2set_steps", {2, 3, 4}},
        {"set2set_layers", {2, 3, 4}},
        {"ffn_hidden",
         {nlohmann::json::array({200}), nlohmann::json::array({60, 60}),
          nlohmann::json::array({300}), nlohmann::json::array({500, 500}),
          nlohmann::json::array({300, 300})}},
    };
  } else if (arch == "gin") {
    space.dims = {
        {"lr0", {1e-4, 1e-3, 1e-2, 1e-1}},
        {"lr_decay", {1e-5, 1e-4, 1e-3, 1e-2, 1e-1}},
        {"hidden_dim", {32, 64, 128, 256, 512, 832, 1024}},
        {"mp_steps", {1, 3, 5, 8, 13}},
    };
  } else {
    throw TrainError("unknown arch for search space: " + arch);
  }
  return space;
}

SearchResult random_search(
    const SearchSpace& space, int trials, size_t n_folds, uint64_t seed,
    const std::function<double(const nlohmann::json&, size_t)>& evaluate) {
  if (trials < 1) throw TrainError("trials must be >= 1");
  SearchResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(hash_combine(seed, static_cast<uint64_t>(trial)));
    nlohmann::json config = nlohmann::json::object();
    for (const auto& [name, values] : space.dims)
      config[name] = values[rng.below(values.size())];
    TrialResult tr;
    tr.config = config;
    double sum = 0.0;
    for (size_t fold = 0; fold < n_folds; ++fold) {
      const double score = evaluate(config, fold);
      tr.fold_scores.push_back(score);
      sum += score;
    }
    tr.mean_score = sum / static_cast<double>(n_folds);
    if (tr.mean_score > best) {
      best = tr.mean_score;
      result.best_config = config;
      result.best_trial = static_cast<size_t>(trial);
    }
    result.trials.push_back(std::move(tr));
  }
  return result;
}

EnsembleResult seed_ensemble(const GnnConfig& model_cfg,
                             const TrainConfig& train_cfg, int n,
                             const Task& task, const MolGraphCache& cache) {
  if (n < 2) throw TrainError("ensemble needs n >= 2");
  if (task.test.empty()) throw TrainError("ensemble needs a test set");

  EnsembleResult result;
  std::vector<std::vector<double>> prob_sum(
      task.test.size(), std::vector<double>(task.label_ids.size(), 0.0));
  std::vector<std::vector<double>> targets;
  targets.reserve(task.test.size());
  for (const PairSample& s : task.test) targets.push_back(s.targets);

  for (int i = 0; i < n; ++i) {
    GnnConfig mc = model_cfg;
    mc.seed = model_cfg.seed + static_cast<uint64_t>(i);
    TrainConfig tc = train_cfg;
    tc.seed = train_cfg.seed + static_cast<uint64_t>(i);
    auto model = make_model(mc);
    TrainResult run = train_model(*model, tc, task, cache);
    model->load_params(run.best_params);

    const auto scores = predict_scores(*model, task.test, cache);
    result.per_model_macro.push_back(
        score_report(scores, targets, task.label_names).macro);
    for (size_t s = 0; s < scores.size(); ++s)
      for (size_t l = 0; l < scores[s].size(); ++l)
        prob_sum[s][l] += scores[s][l];
  }

  double mean = 0.0;
  for (double v : result.per_model_macro) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : result.per_model_macro) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  result.mean_score = mean;
  const double t_crit = student_t_quantile(0.975, static_cast<double>(n - 1));
  result.ci95_halfwidth = t_crit * std::sqrt(var / static_cast<double>(n));

  for (auto& row : prob_sum)
    for (double& v : row) v /= static_cast<double>(n);
  result.ensemble_score =
      score_report(prob_sum, targets, task.label_names).macro;
  return result;
}

void write_history_csv(const std::string& path, const RunHistory& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,valid_loss,valid_auroc,lr\n";
  char buf[256];
  for (size_t i = 0; i < history.train_loss.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g\n", i + 1,
                  history.train_loss[i], history.valid_loss[i],
                  history.valid_auroc[i], history.lr[i]);
    out << buf;
  }
}

}  // namespace aroma

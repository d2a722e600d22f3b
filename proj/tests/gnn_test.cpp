#include "aroma/gnn.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aroma/featurize.hpp"
#include "testutil.hpp"

namespace aroma {
namespace {

GnnConfig small_config(const std::string& arch, int64_t labels = 3,
                       uint64_t seed = 7) {
  GnnConfig cfg;
  cfg.arch = arch;
  cfg.hidden_dim = 8;
  cfg.mp_steps = 2;
  cfg.set2set_steps = 2;
  cfg.set2set_layers = 1;
  cfg.ffn_hidden = {16};
  cfg.label_count = labels;
  cfg.edge_hidden = 4;
  cfg.seed = seed;
  return cfg;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

TEST(GinStep, IsolatedNodeUsesOnlyOwnState) {
  GnnConfig cfg = small_config("gin");
  cfg.hidden_dim = 4;
  GinModel model(cfg);
  const MolGraph methane = featurize(parse_smiles("C"));
  Tape tape;
  Tensor h = Tensor::from({0.5, -1.0, 2.0, 0.25}, 1, 4);
  Tensor out = model.step(tape, h, methane);
  EXPECT_EQ(out.rows(), 1);
  EXPECT_EQ(out.cols(), 4);
  // No neighbors: identical state must give identical output on a second
  // isolated node regardless of graph structure around it.
  Tensor out2 = model.step(tape, h, methane);
  EXPECT_EQ(out.data(), out2.data());
}

TEST(GinStep, HandComputedThreeNodePath) {
  GnnConfig cfg = small_config("gin");
  cfg.hidden_dim = 2;
  GinModel model(cfg);
  auto params = model.named_params();
  auto set = [&](const std::string& name, std::vector<double> v) {
    for (auto& [n, t] : params)
      if (n == name) std::copy(v.begin(), v.end(), t.data().begin());
  };
  set("update_mlp.w1", {1.0, 0.5, -0.25, 2.0});
  set("update_mlp.b1", {0.1, -0.2});
  set("update_mlp.w2", {0.5, -1.0, 1.5, 0.75});
  set("update_mlp.b2", {0.0, 0.3});
  set("epsilon", {0.25});

  const MolGraph path = featurize(parse_smiles("CCC"));
  const std::vector<std::vector<double>> h = {{1.0, 2.0}, {-0.5, 0.5}, {0.25, -1.0}};
  Tape tape;
  Tensor states = Tensor::from({1.0, 2.0, -0.5, 0.5, 0.25, -1.0}, 3, 2);
  Tensor out = model.step(tape, states, path);

  const std::vector<std::vector<double>> neighbor_sum = {
      h[1], {h[0][0] + h[2][0], h[0][1] + h[2][1]}, h[1]};
  const double w1[2][2] = {{1.0, 0.5}, {-0.25, 2.0}};
  const double b1[2] = {0.1, -0.2};
  const double w2[2][2] = {{0.5, -1.0}, {1.5, 0.75}};
  const double b2[2] = {0.0, 0.3};
  for (int v = 0; v < 3; ++v) {
    double pre[2], act[2], expect[2];
    for (int j = 0; j < 2; ++j) pre[j] = 1.25 * h[v][j] + neighbor_sum[v][j];
    for (int j = 0; j < 2; ++j) {
      const double z = pre[0] * w1[0][j] + pre[1] * w1[1][j] + b1[j];
      act[j] = z > 0.0 ? z : 0.0;
    }
    for (int j = 0; j < 2; ++j)
      expect[j] = act[0] * w2[0][j] + act[1] * w2[1][j] + b2[j];
    EXPECT_NEAR(out.at(v, 0), expect[0], 1e-12) << "node " << v;
    EXPECT_NEAR(out.at(v, 1), expect[1], 1e-12) << "node " << v;
  }
}

TEST(GinStep, IsomorphicGraphsGiveEqualStateMultisets) {
  GnnConfig cfg = small_config("gin");
  GinModel model(cfg);
  Rng rng(5);
  const Molecule mol = parse_smiles("CC(O)c1ccccc1");
  const auto perm = test::random_permutation(mol.atoms.size(), rng);
  const Molecule permuted = test::permute_molecule(mol, perm);

  Tape tape;
  Tensor h1 = model.node_states(tape, featurize(mol));
  Tensor h2 = model.node_states(tape, featurize(permuted));
  for (size_t i = 0; i < mol.atoms.size(); ++i)
    for (int64_t c = 0; c < h1.cols(); ++c)
      EXPECT_NEAR(h1.at(i, c), h2.at(perm[i], c), 1e-9);
}

TEST(Readout, MeanAddCases) {
  Tape tape;
  // Single node: concat(h, h).
  Tensor single = Tensor::from({1.0, -2.0}, 1, 2);
  const auto r1 = readout_mean_add(tape, single, {0});
  EXPECT_EQ(r1[0].data(), (std::vector<double>{1.0, -2.0, 1.0, -2.0}));

  // Duplicating all nodes keeps the mean, doubles the sum.
  Tensor base = Tensor::from({1.0, 2.0, 3.0, 4.0}, 2, 2);
  Tensor doubled =
      Tensor::from({1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0}, 4, 2);
  const auto rb = readout_mean_add(tape, base, {0, 0});
  const auto rd = readout_mean_add(tape, doubled, {0, 0, 0, 0});
  EXPECT_NEAR(rb[0].at(0, 0), rd[0].at(0, 0), 1e-12);  // mean unchanged
  EXPECT_NEAR(2.0 * rb[0].at(0, 2), rd[0].at(0, 2), 1e-12);  // sum doubles

  // Loop oracle on a random 5-node graph.
  Rng rng(9);
  std::vector<double> values(5 * 3);
  for (double& v : values) v = rng.uniform(-1, 1);
  Tensor states = Tensor::from(values, 5, 3);
  const std::vector<int8_t> comps = {0, 1, 0, 1, 0};
  const auto r = readout_mean_add(tape, states, comps);
  for (int comp = 0; comp < 2; ++comp) {
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      int count = 0;
      for (int ni = 0; ni < 5; ++ni)
        if (comps[ni] == comp) {
          sum += states.at(ni, c);
          ++count;
        }
      EXPECT_NEAR(r[comp].at(0, c), sum / count, 1e-12);
      EXPECT_NEAR(r[comp].at(0, 3 + c), sum, 1e-12);
    }
  }

  EXPECT_THROW(readout_mean_add(tape, base, {1, 1}), GnnError);
}

TEST(GinPair, OrderSensitivityAndDeterminism) {
  GnnConfig cfg = small_config("gin");
  GinModel model(cfg);
  const MolGraph a = featurize(parse_smiles("CCO"));
  const MolGraph b = featurize(parse_smiles("c1ccccc1"));
  const auto ab = model.predict_pair(a, b);
  const auto ba = model.predict_pair(b, a);
  EXPECT_GT(max_abs_diff(ab, ba), 1e-6);  // concatenation is ordered

  GinModel twin(cfg);  // same seed -> same init
  EXPECT_EQ(model.predict_pair(a, b), twin.predict_pair(a, b));
  EXPECT_EQ(model.predict_pair(a, a).size(), 3u);
}

TEST(GinPair, LogitsWidthMatchesCarvedVocab) {
  GnnConfig cfg = small_config("gin", /*labels=*/74);
  GinModel model(cfg);
  const MolGraph a = featurize(parse_smiles("CCO"));
  Tape tape;
  EXPECT_EQ(model.pair_logits(tape, a, a).cols(), 74);
}

TEST(GinModel, WeightTyingSingleUpdateMlp) {
  GnnConfig cfg = small_config("gin");
  GinModel model(cfg);
  int update_tensors = 0;
  for (const auto& [name, t] : model.named_params())
    update_tensors += name.rfind("update_mlp.", 0) == 0;
  EXPECT_EQ(update_tensors, 4);  // one w1/b1/w2/b2 set, reused each step
  EXPECT_EQ(model.named_params().size(), 13u);
}

TEST(Set2Set, PermutationInvariance) {
  Rng rng(31);
  Set2Set s2s = Set2Set::init(3, 3, 2, rng);
  std::vector<double> values(6 * 3);
  for (double& v : values) v = rng.uniform(-1, 1);
  Tensor states = Tensor::from(values, 6, 3);

  Tape tape;
  const auto base = s2s.run(tape, states).data();
  for (int trial = 0; trial < 4; ++trial) {
    const auto perm = test::random_permutation(6, rng);
    std::vector<double> shuffled(values.size());
    for (size_t i = 0; i < 6; ++i)
      for (size_t c = 0; c < 3; ++c)
        shuffled[perm[i] * 3 + c] = values[i * 3 + c];
    Tensor permuted = Tensor::from(shuffled, 6, 3);
    EXPECT_LT(max_abs_diff(s2s.run(tape, permuted).data(), base), 1e-12);
  }
}

TEST(Set2Set, SingleNodeReadEqualsThatNode) {
  Rng rng(17);
  Set2Set s2s = Set2Set::init(4, 3, 2, rng);
  Tensor state = Tensor::from({0.3, -0.7, 1.1, 0.0}, 1, 4);
  Tape tape;
  const Tensor out = s2s.run(tape, state);
  ASSERT_EQ(out.cols(), 8);
  for (int c = 0; c < 4; ++c)
    EXPECT_NEAR(out.at(0, 4 + c), state.at(0, c), 1e-12);
}

TEST(Set2Set, HandComputedSingleStep) {
  Rng rng(1);
  Set2Set s2s = Set2Set::init(2, 1, 1, rng);
  // Fixed LSTM parameters: zero input/recurrent weights, chosen biases.
  std::fill(s2s.w[0].data().begin(), s2s.w[0].data().end(), 0.0);
  std::fill(s2s.u[0].data().begin(), s2s.u[0].data().end(), 0.0);
  const std::vector<double> bias = {0.2, -0.3, 0.5, 0.1,
                                    0.4, -0.6, -0.2, 0.7};
  std::copy(bias.begin(), bias.end(), s2s.b[0].data().begin());

  const std::vector<std::vector<double>> h = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  Tensor states = Tensor::from({1.0, 0.0, 0.0, 1.0, 1.0, 1.0}, 3, 2);
  Tape tape;
  const Tensor out = s2s.run(tape, states);

  auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  double q[2], c[2];
  for (int j = 0; j < 2; ++j) {
    const double gi = sigmoid(bias[j]);
    const double gg = std::tanh(bias[4 + j]);
    const double go = sigmoid(bias[6 + j]);
    c[j] = gi * gg;
    q[j] = go * std::tanh(c[j]);
  }
  double scores[3], att[3], norm = 0.0;
  for (int i = 0; i < 3; ++i) {
    scores[i] = q[0] * h[i][0] + q[1] * h[i][1];
  }
  const double mx = *std::max_element(scores, scores + 3);
  for (int i = 0; i < 3; ++i) {
    att[i] = std::exp(scores[i] - mx);
    norm += att[i];
  }
  double read[2] = {0.0, 0.0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) read[j] += att[i] / norm * h[i][j];

  EXPECT_NEAR(out.at(0, 0), q[0], 1e-12);
  EXPECT_NEAR(out.at(0, 1), q[1], 1e-12);
  EXPECT_NEAR(out.at(0, 2), read[0], 1e-12);
  EXPECT_NEAR(out.at(0, 3), read[1], 1e-12);
}

TEST(Mpnn, PairOrderInvariance) {
  GnnConfig cfg = small_config("mpnn");
  MpnnModel model(cfg);
  const MolGraph a = featurize(parse_smiles("CCO"));
  const MolGraph b = featurize(parse_smiles("CSC"));
  EXPECT_LT(max_abs_diff(model.predict_pair(a, b), model.predict_pair(b, a)),
            1e-9);
}

TEST(Mpnn, AtomPermutationInvariance) {
  GnnConfig cfg = small_config("mpnn");
  MpnnModel model(cfg);
  Rng rng(23);
  const Molecule mol = parse_smiles("CC(=O)Oc1ccccc1");
  const auto base = model.predict_single(featurize(mol));
  const auto perm = test::random_permutation(mol.atoms.size(), rng);
  const auto permuted =
      model.predict_single(featurize(test::permute_molecule(mol, perm)));
  EXPECT_LT(max_abs_diff(base, permuted), 1e-9);
}

TEST(Mpnn, SingleMoleculeReusesPairPath) {
  GnnConfig cfg = small_config("mpnn");
  MpnnModel model(cfg);
  const MolGraph g = featurize(parse_smiles("CCO"));
  const auto probs = model.predict_single(g);
  ASSERT_EQ(probs.size(), 3u);
  for (double p : probs) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  Tape tape;
  EXPECT_EQ(model.single_embedding(tape, g).cols(), 2 * cfg.hidden_dim);
}

TEST(Mpnn, JointReadoutCouplesComponents) {
  GnnConfig cfg = small_config("mpnn");
  MpnnModel model(cfg);
  const MolGraph a = featurize(parse_smiles("CCO"));
  const MolGraph b = featurize(parse_smiles("CCCC"));
  Tape tape;
  const auto joint = model.pair_embedding(tape, a, b).data();
  const auto ea = model.single_embedding(tape, a).data();
  const auto eb = model.single_embedding(tape, b).data();
  std::vector<double> mean(ea.size());
  for (size_t i = 0; i < ea.size(); ++i) mean[i] = 0.5 * (ea[i] + eb[i]);
  EXPECT_GT(max_abs_diff(joint, mean), 1e-6);
}

TEST(Irlbl, RatiosAndWeights) {
  std::vector<std::vector<double>> targets;
  for (int i = 0; i < 100; ++i) targets.push_back({1, 0, 0});
  for (int i = 0; i < 50; ++i) targets.push_back({0, 1, 0});
  for (int i = 0; i < 25; ++i) targets.push_back({0, 0, 1});
  const LabelStats stats = compute_label_stats(targets);
  EXPECT_DOUBLE_EQ(stats.irlbl[0], 1.0);
  EXPECT_DOUBLE_EQ(stats.irlbl[1], 2.0);
  EXPECT_DOUBLE_EQ(stats.irlbl[2], 4.0);
  EXPECT_DOUBLE_EQ(stats.weights[0], std::log(2.0));
  EXPECT_DOUBLE_EQ(stats.weights[1], std::log(3.0));
  EXPECT_DOUBLE_EQ(stats.weights[2], std::log(5.0));
  EXPECT_TRUE(stats.zero_count_labels.empty());
}

TEST(Irlbl, UniformCountsAndZeroCountFallback) {
  std::vector<std::vector<double>> uniform = {{1, 0}, {0, 1}};
  const LabelStats u = compute_label_stats(uniform);
  EXPECT_DOUBLE_EQ(u.weights[0], std::log(2.0));
  EXPECT_DOUBLE_EQ(u.weights[1], std::log(2.0));

  std::vector<std::vector<double>> degenerate = {{1, 0, 0}, {1, 0, 1}};
  const LabelStats d = compute_label_stats(degenerate);
  EXPECT_EQ(d.zero_count_labels, std::vector<uint32_t>{1});
  EXPECT_DOUBLE_EQ(d.irlbl[1], 2.0);  // borrows the rarest observed count

  EXPECT_THROW(compute_label_stats({}), GnnError);
  std::vector<std::vector<double>> all_zero = {{0, 0}};
  EXPECT_THROW(compute_label_stats(all_zero), GnnError);
}

TEST(WeightedBce, ClosedFormsAndLoopOracle) {
  Tape tape;
  // Perfect predictions: probabilities pinned near the targets.
  Tensor good_logits = Tensor::from({40.0, -40.0}, 1, 2);
  Tensor good_targets = Tensor::from({1.0, 0.0}, 1, 2);
  EXPECT_NEAR(weighted_bce(tape, good_logits, good_targets).item(), 0.0, 1e-12);

  // p = 0.5 everywhere, unit weights: n * L * ln 2.
  Tensor half = Tensor::zeros(4, 5);
  EXPECT_NEAR(weighted_bce(tape, half, Tensor::zeros(4, 5)).item(),
              20.0 * std::log(2.0), 1e-12);

  // Random fixture against a naive double loop.
  Rng rng(77);
  const int n = 6, L = 4;
  std::vector<double> logits(n * L), targets(n * L);
  std::vector<double> weights(L);
  for (double& v : logits) v = rng.uniform(-4, 4);
  for (double& v : targets) v = static_cast<double>(rng.below(2));
  for (double& w : weights) w = 0.25 + rng.uniform01();

  double naive = 0.0;
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < L; ++l) {
      const double z = logits[i * L + l];
      const double y = targets[i * L + l];
      const double p = 1.0 / (1.0 + std::exp(-z));
      naive += weights[l] * (-(y * std::log(p) + (1.0 - y) * std::log(1.0 - p)));
    }
  const double fast =
      weighted_bce(tape, Tensor::from(logits, n, L),
                   Tensor::from(targets, n, L), weights)
          .item();
  EXPECT_NEAR(fast, naive, 1e-10);
}

TEST(Checkpoints, GinRoundTripKeepsSingleMlpCopy) {
  GnnConfig cfg = small_config("gin");
  GinModel model(cfg);
  const std::string path =
      (std::filesystem::temp_directory_path() / "aroma_gin.bin").string();
  save_checkpoint(path, model.named_params());
  const NamedTensors loaded = load_checkpoint(path);
  int update_tensors = 0;
  for (const auto& [name, t] : loaded)
    update_tensors += name.rfind("update_mlp.", 0) == 0;
  EXPECT_EQ(update_tensors, 4);

  GinModel reloaded(cfg);
  reloaded.load_params(loaded);
  const MolGraph a = featurize(parse_smiles("CCO"));
  const MolGraph b = featurize(parse_smiles("CSC"));
  EXPECT_EQ(reloaded.predict_pair(a, b), model.predict_pair(a, b));
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}

TEST(GradientFlow, EveryParameterLearnsOnARandomBatch) {
  for (const std::string arch : {"gin", "mpnn"}) {
    GnnConfig cfg = small_config(arch);
    auto model = make_model(cfg);
    const MolGraph g1 = featurize(parse_smiles("CCO"));
    const MolGraph g2 = featurize(parse_smiles("CSC"));
    const MolGraph g3 = featurize(parse_smiles("c1ccccc1"));

    for (Tensor& p : model->trainable_params()) p.zero_grad();
    Tape tape;
    Tensor total;
    bool first = true;
    const std::vector<std::pair<const MolGraph*, const MolGraph*>> batch = {
        {&g1, &g2}, {&g2, &g3}, {&g1, &g3}};
    std::vector<double> targets = {1.0, 0.0, 1.0};
    for (size_t i = 0; i < batch.size(); ++i) {
      Tensor logits =
          model->pair_logits(tape, *batch[i].first, *batch[i].second);
      Tensor y = Tensor::from(
          {targets[i], 1.0 - targets[i], targets[(i + 1) % 3]}, 1, 3);
      Tensor loss = weighted_bce(tape, logits, y);
      total = first ? loss : tape.add(total, loss);
      first = false;
    }
    tape.backward(total);

    for (auto& [name, t] : model->named_params()) {
      double max_grad = 0.0;
      for (double g : t.grad()) max_grad = std::max(max_grad, std::fabs(g));
      EXPECT_GT(max_grad, 0.0) << arch << " parameter " << name << " is dead";
    }
  }
}

TEST(Smoke, LossDecreasesOverTwoHundredSteps) {
  for (const std::string arch : {"gin", "mpnn"}) {
    GnnConfig cfg = small_config(arch, 2, /*seed=*/3);
    auto model = make_model(cfg);

    // 20-sample synthetic set: label 0 = contains sulfur, label 1 = noise.
    std::vector<std::pair<MolGraph, MolGraph>> graphs;
    std::vector<std::vector<double>> targets;
    Rng rng(15);
    const char* with_s[] = {"CS", "CCS", "CSC", "CCSS", "SCC"};
    const char* без_s[] = {"CC", "CCO", "CCC", "CO", "CCCO"};
    for (int i = 0; i < 20; ++i) {
      const bool sulfur = i % 2 == 0;
      const char* sa = sulfur ? with_s[i % 5] : без_s[i % 5];
      const char* sb = без_s[(i + 2) % 5];
      graphs.push_back({featurize(parse_smiles(sa)), featurize(parse_smiles(sb))});
      targets.push_back({sulfur ? 1.0 : 0.0, static_cast<double>(rng.below(2))});
    }

    std::vector<Tensor> params = model->trainable_params();
    AdamState state;
    AdamConfig adam;
    adam.lr = 5e-3;
    std::vector<double> losses;
    for (int step = 0; step < 200; ++step) {
      for (Tensor& p : params) p.zero_grad();
      Tape tape;
      Tensor total;
      for (size_t i = 0; i < graphs.size(); ++i) {
        Tensor logits =
            model->pair_logits(tape, graphs[i].first, graphs[i].second);
        Tensor y = Tensor::from(targets[i], 1, 2);
        Tensor loss = weighted_bce(tape, logits, y);
        total = i == 0 ? loss : tape.add(total, loss);
      }
      Tensor mean = tape.mul(total, Tensor::scalar(1.0 / graphs.size()));
      losses.push_back(mean.item());
      tape.backward(mean);
      adam_step(params, state, adam);
    }
    auto window_mean = [&](size_t from, size_t len) {
      return std::accumulate(losses.begin() + from, losses.begin() + from + len,
                             0.0) /
             len;
    };
    const double early = window_mean(0, 20);
    const double mid = window_mean(90, 20);
    const double late = window_mean(180, 20);
    EXPECT_LT(mid, early) << arch;
    EXPECT_LT(late, mid) << arch;
    EXPECT_LT(late, 0.5 * early) << arch;
  }
}

TEST(GnnConfigJson, RoundTripAndDefaults) {
  GnnConfig cfg = small_config("mpnn", 5);
  cfg.weighted_loss = false;
  const nlohmann::json j = gnn_config_to_json(cfg);
  const GnnConfig back = gnn_config_from_json(j);
  EXPECT_EQ(back.arch, cfg.arch);
  EXPECT_EQ(back.hidden_dim, cfg.hidden_dim);
  EXPECT_EQ(back.ffn_hidden, cfg.ffn_hidden);
  EXPECT_EQ(back.weighted_loss, false);
  EXPECT_EQ(back.label_count, 5);

  // Loss weighting defaults per architecture.
  EXPECT_TRUE(gnn_config_from_json({{"arch", "mpnn"}, {"label_count", 2}})
                  .weighted_loss);
  EXPECT_FALSE(gnn_config_from_json({{"arch", "gin"}, {"label_count", 2}})
                   .weighted_loss);
  EXPECT_THROW(gnn_config_from_json({{"arch", "transformer"}}), GnnError);
}

}  // namespace
}  // namespace aroma

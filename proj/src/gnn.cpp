#include "aroma/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace aroma {

namespace {

// Uniform Glorot: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_matrix(int64_t in, int64_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> values(in * out);
  for (double& v : values) v = rng.uniform(-limit, limit);
  return Tensor::param(std::move(values), in, out);
}

std::vector<int32_t> edge_sources(const MolGraph& g) {
  std::vector<int32_t> src(g.edge_index.size());
  for (size_t i = 0; i < g.edge_index.size(); ++i) src[i] = g.edge_index[i][0];
  return src;
}

std::vector<int32_t> edge_targets(const MolGraph& g) {
  std::vector<int32_t> dst(g.edge_index.size());
  for (size_t i = 0; i < g.edge_index.size(); ++i) dst[i] = g.edge_index[i][1];
  return dst;
}

Tensor node_feature_tensor(const MolGraph& g) {
  return Tensor::from(g.node_features, g.n_nodes, kAtomFeatureWidth);
}

Tensor edge_feature_tensor(const MolGraph& g) {
  return Tensor::from(g.edge_features, g.n_edges(), kBondFeatureWidth);
}

// Inverted dropout mask as a constant tensor.
Tensor dropout_mask(int64_t rows, int64_t cols, double p, Rng& rng) {
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.uniform01() < p ? 0.0 : scale;
  return Tensor::from(std::move(values), rows, cols);
}

void check_config(const GnnConfig& cfg) {
  if (cfg.label_count < 1) throw GnnError("label_count must be >= 1");
  if (cfg.hidden_dim < 1) throw GnnError("hidden_dim must be >= 1");
}

void load_named(const NamedTensors& saved, NamedTensors live) {
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, t] : saved) by_name.emplace(name, t);
  for (auto& [name, t] : live) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw GnnError("checkpoint missing tensor " + name);
    const Tensor& src = it->second;
    if (src.rows() != t.rows() || src.cols() != t.cols())
      throw GnnError("checkpoint shape mismatch for " + name);
    std::copy(src.data().begin(), src.data().end(), t.data().begin());
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw GnnError("checkpoint holds unknown tensor " + by_name.begin()->first);
}

}  // namespace

Linear Linear::glorot(int64_t in, int64_t out, Rng& rng) {
  Linear l;
  l.w = glorot_matrix(in, out, rng);
  l.b = Tensor::param(std::vector<double>(out, 0.0), 1, out);
  return l;
}

Tensor Linear::apply(Tape& tape, const Tensor& x) const {
  return tape.add(tape.matmul(x, w), b);
}

std::vector<Tensor> readout_mean_add(Tape& tape, const Tensor& states,
                                     const std::vector<int8_t>& component_ids) {
  if (static_cast<int64_t>(component_ids.size()) != states.rows())
    throw GnnError("readout: component id count does not match node count");
  int8_t max_id = 0;
  for (int8_t id : component_ids) max_id = std::max(max_id, id);
  std::vector<Tensor> out;
  for (int8_t comp = 0; comp <= max_id; ++comp) {
    std::vector<int32_t> rows;
    for (size_t i = 0; i < component_ids.size(); ++i)
      if (component_ids[i] == comp) rows.push_back(static_cast<int32_t>(i));
    if (rows.empty())
      throw GnnError("readout: component " + std::to_string(comp) +
                     " has no nodes");
    Tensor sub = tape.gather_rows(states, rows);
    out.push_back(tape.concat(tape.mean_rows(sub), tape.sum_rows(sub), 1));
  }
  return out;
}

Set2Set Set2Set::init(int64_t dim, int steps, int layers, Rng& rng) {
  if (steps < 1 || layers < 1) throw GnnError("set2set: steps, layers >= 1");
  Set2Set s;
  s.dim = dim;
  s.steps = steps;
  s.layers = layers;
  for (int l = 0; l < layers; ++l) {
    const int64_t in = l == 0 ? 2 * dim : dim;
    s.w.push_back(glorot_matrix(in, 4 * dim, rng));
    s.u.push_back(glorot_matrix(dim, 4 * dim, rng));
    s.b.push_back(Tensor::param(std::vector<double>(4 * dim, 0.0), 1, 4 * dim));
  }
  return s;
}

Tensor Set2Set::run(Tape& tape, const Tensor& states) const {
  const int64_t n = states.rows();
  if (n < 1) throw GnnError("set2set: empty graph");
  if (states.cols() != dim)
    throw GnnError("set2set: state width " + std::to_string(states.cols()) +
                   " != " + std::to_string(dim));

  Tensor q_star = Tensor::zeros(1, 2 * dim);
  std::vector<Tensor> h(layers), c(layers);
  for (int l = 0; l < layers; ++l) {
    h[l] = Tensor::zeros(1, dim);
    c[l] = Tensor::zeros(1, dim);
  }

  for (int step = 0; step < steps; ++step) {
    Tensor x = q_star;
    for (int l = 0; l < layers; ++l) {
      Tensor gates = tape.add(
          tape.add(tape.matmul(x, w[l]), tape.matmul(h[l], u[l])), b[l]);
      Tensor gi = tape.sigmoid(tape.slice(gates, 1, 0, dim));
      Tensor gf = tape.sigmoid(tape.slice(gates, 1, dim, dim));
      Tensor gg = tape.tanh_(tape.slice(gates, 1, 2 * dim, dim));
      Tensor go = tape.sigmoid(tape.slice(gates, 1, 3 * dim, dim));
      c[l] = tape.add(tape.mul(gf, c[l]), tape.mul(gi, gg));
      h[l] = tape.mul(go, tape.tanh_(c[l]));
      x = h[l];
    }
    const Tensor& q = x;                                   // [1 x D]
    Tensor scores = tape.matmul(states, q, false, true);   // [n x 1]
    Tensor att_row = tape.softmax_rows(tape.reshape(scores, 1, n));
    Tensor att = tape.reshape(att_row, n, 1);
    Tensor read = tape.matmul(att, states, true, false);   // [1 x D]
    q_star = tape.concat(q, read, 1);
  }
  return q_star;
}

void Set2Set::collect(const std::string& prefix, NamedTensors& out) const {
  for (int l = 0; l < layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    out.emplace_back(base + ".w", w[l]);
    out.emplace_back(base + ".u", u[l]);
    out.emplace_back(base + ".b", b[l]);
  }
}

LabelStats compute_label_stats(
    const std::vector<std::vector<double>>& targets) {
  if (targets.empty()) throw GnnError("label stats: empty dataset");
  const size_t L = targets.front().size();
  LabelStats stats;
  stats.counts.assign(L, 0);
  for (const auto& row : targets) {
    if (row.size() != L) throw GnnError("label stats: ragged targets");
    for (size_t l = 0; l < L; ++l)
      if (row[l] > 0.5) ++stats.counts[l];
  }
  size_t max_count = 0, min_observed = SIZE_MAX;
  for (size_t c : stats.counts) {
    max_count = std::max(max_count, c);
    if (c > 0) min_observed = std::min(min_observed, c);
  }
  if (max_count == 0) throw GnnError("label stats: no labels observed");
  stats.irlbl.resize(L);
  stats.weights.resize(L);
  for (size_t l = 0; l < L; ++l) {
    if (stats.counts[l] == 0) {
      stats.irlbl[l] =
          static_cast<double>(max_count) / static_cast<double>(min_observed);
      stats.zero_count_labels.push_back(static_cast<uint32_t>(l));
    } else {
      stats.irlbl[l] =
          static_cast<double>(max_count) / static_cast<double>(stats.counts[l]);
    }
    stats.weights[l] = std::log1p(stats.irlbl[l]);
  }
  return stats;
}

Tensor weighted_bce(Tape& tape, const Tensor& logits, const Tensor& targets,
                    const std::vector<double>& label_weights) {
  return tape.bce_with_logits(logits, targets, label_weights);
}

GnnConfig gnn_config_from_json(const nlohmann::json& j) {
  GnnConfig cfg;
  cfg.arch = j.value("arch", cfg.arch);
  if (cfg.arch != "gin" && cfg.arch != "mpnn")
    throw GnnError("unknown arch: " + cfg.arch);
  cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
  cfg.mp_steps = j.value("mp_steps", cfg.mp_steps);
  cfg.set2set_steps = j.value("set2set_steps", cfg.set2set_steps);
  cfg.set2set_layers = j.value("set2set_layers", cfg.set2set_layers);
  if (j.contains("ffn_hidden"))
    cfg.ffn_hidden = j["ffn_hidden"].get<std::vector<int64_t>>();
  cfg.label_count = j.value("label_count", cfg.label_count);
  cfg.weighted_loss = cfg.arch == "mpnn";
  if (j.contains("loss") && j["loss"].contains("weighted"))
    cfg.weighted_loss = j["loss"]["weighted"].get<bool>();
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.edge_hidden = j.value("edge_hidden", cfg.edge_hidden);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

nlohmann::json gnn_config_to_json(const GnnConfig& cfg) {
  return nlohmann::json{{"arch", cfg.arch},
                        {"hidden_dim", cfg.hidden_dim},
                        {"mp_steps", cfg.mp_steps},
                        {"set2set_steps", cfg.set2set_steps},
                        {"set2set_layers", cfg.set2set_layers},
                        {"ffn_hidden", cfg.ffn_hidden},
                        {"label_count", cfg.label_count},
                        {"loss", {{"weighted", cfg.weighted_loss}}},
                        {"dropout", cfg.dropout},
                        {"edge_hidden", cfg.edge_hidden},
                        {"seed", cfg.seed}};
}

std::vector<double> BlendModel::predict_pair(const MolGraph& a,
                                             const MolGraph& b) {
  Tape tape;
  Tensor probs = tape.sigmoid(pair_logits(tape, a, b, nullptr));
  return probs.data();
}

std::vector<double> BlendModel::predict_single(const MolGraph& g) {
  Tape tape;
  Tensor probs = tape.sigmoid(single_logits(tape, g, nullptr));
  return probs.data();
}

// ---------------------------------------------------------------------------
// GIN

GinModel::GinModel(const GnnConfig& cfg) : cfg_(cfg) {
  check_config(cfg_);
  const int64_t d = cfg_.hidden_dim;
  Rng rng(mix64(cfg_.seed ^ 0x67696E00ULL));
  pad_ = Linear::glorot(kAtomFeatureWidth, d, rng);
  mlp1_ = Linear::glorot(d, d, rng);
  mlp2_ = Linear::glorot(d, d, rng);
  epsilon_ = Tensor::param({0.0}, 1, 1);
  pair1_ = Linear::glorot(4 * d, d, rng);
  pair2_ = Linear::glorot(d, d, rng);
  head_ = Linear::glorot(d, cfg_.label_count, rng);
}

NamedTensors GinModel::named_params() {
  NamedTensors out;
  out.emplace_back("pad.w", pad_.w);
  out.emplace_back("pad.b", pad_.b);
  out.emplace_back("update_mlp.w1", mlp1_.w);
  out.emplace_back("update_mlp.b1", mlp1_.b);
  out.emplace_back("update_mlp.w2", mlp2_.w);
  out.emplace_back("update_mlp.b2", mlp2_.b);
  out.emplace_back("epsilon", epsilon_);
  out.emplace_back("pair_head.w1", pair1_.w);
  out.emplace_back("pair_head.b1", pair1_.b);
  out.emplace_back("pair_head.w2", pair2_.w);
  out.emplace_back("pair_head.b2", pair2_.b);
  out.emplace_back("label_head.w", head_.w);
  out.emplace_back("label_head.b", head_.b);
  return out;
}

std::vector<Tensor> GinModel::trainable_params() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

void GinModel::load_params(const NamedTensors& tensors) {
  load_named(tensors, named_params());
}

Tensor GinModel::step(Tape& tape, const Tensor& states,
                      const MolGraph& g) const {
  Tensor neighbor_sum;
  if (g.n_edges() > 0) {
    neighbor_sum = tape.scatter_add_rows(
        tape.gather_rows(states, edge_sources(g)), edge_targets(g), g.n_nodes);
  } else {
    neighbor_sum = Tensor::zeros(g.n_nodes, states.cols());
  }
  Tensor one_plus_eps = tape.add(epsilon_, Tensor::scalar(1.0));
  Tensor combined = tape.add(tape.mul(states, one_plus_eps), neighbor_sum);
  return mlp2_.apply(tape, tape.relu(mlp1_.apply(tape, combined)));
}

Tensor GinModel::node_states(Tape& tape, const MolGraph& g) const {
  Tensor h = pad_.apply(tape, node_feature_tensor(g));
  for (int t = 0; t < cfg_.mp_steps; ++t) h = step(tape, h, g);
  return h;
}

Tensor GinModel::graph_embedding(Tape& tape, const MolGraph& g) {
  std::vector<int8_t> single(g.n_nodes, 0);
  return readout_mean_add(tape, node_states(tape, g), single)[0];
}

Tensor GinModel::single_embedding(Tape& tape, const MolGraph& g) {
  return graph_embedding(tape, g);
}

Tensor GinModel::pair_embedding(Tape& tape, const MolGraph& a,
                                const MolGraph& b) {
  Tensor ga = graph_embedding(tape, a);
  Tensor gb = graph_embedding(tape, b);
  Tensor both = tape.concat(ga, gb, 1);  // [1 x 4D]
  return pair2_.apply(tape, tape.relu(pair1_.apply(tape, both)));
}

Tensor GinModel::pair_logits(Tape& tape, const MolGraph& a, const MolGraph& b,
                             Rng*) {
  return head_.apply(tape, pair_embedding(tape, a, b));
}

// ---------------------------------------------------------------------------
// MPNN

MpnnModel::MpnnModel(const GnnConfig& cfg) : cfg_(cfg) {
  check_config(cfg_);
  const int64_t d = cfg_.hidden_dim;
  Rng rng(mix64(cfg_.seed ^ 0x6D706E6EULL));
  embed_ = Linear::glorot(kAtomFeatureWidth, d, rng);
  edge1_ = Linear::glorot(kBondFeatureWidth, cfg_.edge_hidden, rng);
  edge2_ = Linear::glorot(cfg_.edge_hidden, d * d, rng);
  gru_wz_ = glorot_matrix(d, d, rng);
  gru_uz_ = glorot_matrix(d, d, rng);
  gru_bz_ = Tensor::param(std::vector<double>(d, 0.0), 1, d);
  gru_wr_ = glorot_matrix(d, d, rng);
  gru_ur_ = glorot_matrix(d, d, rng);
  gru_br_ = Tensor::param(std::vector<double>(d, 0.0), 1, d);
  gru_wh_ = glorot_matrix(d, d, rng);
  gru_uh_ = glorot_matrix(d, d, rng);
  gru_bh_ = Tensor::param(std::vector<double>(d, 0.0), 1, d);
  bond_embed_ = Linear::glorot(kBondFeatureWidth, d, rng);
  fold_ = Linear::glorot(2 * d, d, rng);
  set2set_ = Set2Set::init(d, cfg_.set2set_steps, cfg_.set2set_layers, rng);
  int64_t in = 2 * d;
  for (int64_t width : cfg_.ffn_hidden) {
    head_.push_back(Linear::glorot(in, width, rng));
    in = width;
  }
  head_out_ = Linear::glorot(in, cfg_.label_count, rng);
}

NamedTensors MpnnModel::named_params() {
  NamedTensors out;
  out.emplace_back("embed.w", embed_.w);
  out.emplace_back("embed.b", embed_.b);
  out.emplace_back("edge_net.w1", edge1_.w);
  out.emplace_back("edge_net.b1", edge1_.b);
  out.emplace_back("edge_net.w2", edge2_.w);
  out.emplace_back("edge_net.b2", edge2_.b);
  out.emplace_back("gru.wz", gru_wz_);
  out.emplace_back("gru.uz", gru_uz_);
  out.emplace_back("gru.bz", gru_bz_);
  out.emplace_back("gru.wr", gru_wr_);
  out.emplace_back("gru.ur", gru_ur_);
  out.emplace_back("gru.br", gru_br_);
  out.emplace_back("gru.wh", gru_wh_);
  out.emplace_back("gru.uh", gru_uh_);
  out.emplace_back("gru.bh", gru_bh_);
  out.emplace_back("bond_embed.w", bond_embed_.w);
  out.emplace_back("bond_embed.b", bond_embed_.b);
  out.emplace_back("fold.w", fold_.w);
  out.emplace_back("fold.b", fold_.b);
  set2set_.collect("set2set", out);
  for (size_t i = 0; i < head_.size(); ++i) {
    out.emplace_back("head.l" + std::to_string(i) + ".w", head_[i].w);
    out.emplace_back("head.l" + std::to_string(i) + ".b", head_[i].b);
  }
  out.emplace_back("head.out.w", head_out_.w);
  out.emplace_back("head.out.b", head_out_.b);
  return out;
}

std::vector<Tensor> MpnnModel::trainable_params() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

void MpnnModel::load_params(const NamedTensors& tensors) {
  load_named(tensors, named_params());
}

Tensor MpnnModel::message_passed_states(Tape& tape, const MolGraph& g) const {
  const int64_t d = cfg_.hidden_dim;
  const int64_t n = g.n_nodes;
  Tensor h = embed_.apply(tape, node_feature_tensor(g));

  Tensor edge_mats;
  std::vector<int32_t> src, dst;
  const bool has_edges = g.n_edges() > 0;
  if (has_edges) {
    src = edge_sources(g);
    dst = edge_targets(g);
    // Bond feature rows repeat heavily; run the edge network once per
    // distinct row and gather per edge.
    std::map<std::vector<double>, int32_t> unique_of;
    std::vector<double> unique_rows;
    std::vector<int32_t> edge_to_unique(g.n_edges());
    for (int64_t e = 0; e < g.n_edges(); ++e) {
      std::vector<double> row(
          g.edge_features.begin() + e * kBondFeatureWidth,
          g.edge_features.begin() + (e + 1) * kBondFeatureWidth);
      auto [it, inserted] =
          unique_of.try_emplace(row, static_cast<int32_t>(unique_of.size()));
      if (inserted)
        unique_rows.insert(unique_rows.end(), row.begin(), row.end());
      edge_to_unique[e] = it->second;
    }
    Tensor unique_feats =
        Tensor::from(std::move(unique_rows),
                     static_cast<int64_t>(unique_of.size()), kBondFeatureWidth);
    Tensor unique_mats =
        edge2_.apply(tape, tape.relu(edge1_.apply(tape, unique_feats)));
    edge_mats = tape.gather_rows(unique_mats, edge_to_unique);
  }

  const Tensor minus_one = Tensor::scalar(-1.0);
  const Tensor one = Tensor::scalar(1.0);
  for (int t = 0; t < cfg_.mp_steps; ++t) {
    Tensor m;
    if (has_edges) {
      Tensor messages = tape.edge_matvec(edge_mats, tape.gather_rows(h, src));
      m = tape.scatter_add_rows(messages, dst, n);
    } else {
      m = Tensor::zeros(n, d);
    }
    Tensor z = tape.sigmoid(tape.add(
        tape.add(tape.matmul(m, gru_wz_), tape.matmul(h, gru_uz_)), gru_bz_));
    Tensor r = tape.sigmoid(tape.add(
        tape.add(tape.matmul(m, gru_wr_), tape.matmul(h, gru_ur_)), gru_br_));
    Tensor h_tilde = tape.tanh_(tape.add(
        tape.add(tape.matmul(m, gru_wh_), tape.matmul(tape.mul(r, h), gru_uh_)),
        gru_bh_));
    Tensor keep = tape.add(tape.mul(z, minus_one), one);  // 1 - z
    h = tape.add(tape.mul(keep, h), tape.mul(z, h_tilde));
  }
  return h;
}

Tensor MpnnModel::embed_graph(Tape& tape, const MolGraph& g) {
  const int64_t n = g.n_nodes;
  Tensor h = message_passed_states(tape, g);
  // Radius-0 fold: each node's state joined with the summed embeddings of
  // its incident bonds, projected back to D.
  Tensor bond_sum;
  if (g.n_edges() > 0) {
    Tensor be = bond_embed_.apply(tape, edge_feature_tensor(g));
    bond_sum = tape.scatter_add_rows(be, edge_targets(g), n);
  } else {
    bond_sum = Tensor::zeros(n, cfg_.hidden_dim);
  }
  Tensor folded = fold_.apply(tape, tape.concat(h, bond_sum, 1));
  return set2set_.run(tape, folded);
}

Tensor MpnnModel::logits_for_graph(Tape& tape, const MolGraph& g,
                                   Rng* dropout_rng) {
  Tensor x = embed_graph(tape, g);
  for (const Linear& layer : head_) {
    x = tape.relu(layer.apply(tape, x));
    if (dropout_rng && cfg_.dropout > 0.0)
      x = tape.mul(x,
                   dropout_mask(x.rows(), x.cols(), cfg_.dropout, *dropout_rng));
  }
  return head_out_.apply(tape, x);
}

Tensor MpnnModel::pair_logits(Tape& tape, const MolGraph& a, const MolGraph& b,
                              Rng* dropout_rng) {
  return logits_for_graph(tape, pair_graph(a, b), dropout_rng);
}

Tensor MpnnModel::single_logits(Tape& tape, const MolGraph& g,
                                Rng* dropout_rng) {
  return logits_for_graph(tape, g, dropout_rng);
}

Tensor MpnnModel::pair_embedding(Tape& tape, const MolGraph& a,
                                 const MolGraph& b) {
  return embed_graph(tape, pair_graph(a, b));
}

Tensor MpnnModel::single_embedding(Tape& tape, const MolGraph& g) {
  return embed_graph(tape, g);
}

std::unique_ptr<BlendModel> make_model(const GnnConfig& cfg) {
  if (cfg.arch == "gin") return std::make_unique<GinModel>(cfg);
  if (cfg.arch == "mpnn") return std::make_unique<MpnnModel>(cfg);
  throw GnnError("unknown arch: " + cfg.arch);
}

}  // namespace aroma

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aroma/error.hpp"
#include "aroma/featurize.hpp"
#include "aroma/rng.hpp"
#include "aroma/tensor.hpp"

#include "json.hpp"

namespace aroma {

class GnnError : public Error {
 public:
  using Error::Error;
};

// Fully-connected layer, Glorot-uniform initialized.
struct Linear {
  Tensor w;  // [in x out]
  Tensor b;  // [1 x out]
  static Linear glorot(int64_t in, int64_t out, Rng& rng);
  Tensor apply(Tape& tape, const Tensor& x) const;
};

// concat(mean, sum) over the node rows of each component; returns one
// [1 x 2D] embedding per component id. Throws on an empty component.
std::vector<Tensor> readout_mean_add(Tape& tape, const Tensor& states,
                                     const std::vector<int8_t>& component_ids);

// Order-invariant recurrent-attention readout; output width is twice the
// input width. The recurrent cell is a stacked LSTM.
struct Set2Set {
  int64_t dim = 0;
  int steps = 3;
  int layers = 3;
  std::vector<Tensor> w;  // per layer [in x 4D]
  std::vector<Tensor> u;  // per layer [D x 4D]
  std::vector<Tensor> b;  // per layer [1 x 4D]

  static Set2Set init(int64_t dim, int steps, int layers, Rng& rng);
  Tensor run(Tape& tape, const Tensor& states) const;  // [n x D] -> [1 x 2D]
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// Per-label imbalance statistics. irlbl(l) = max_count / count(l), 1 for
// the most frequent label; loss weight is ln(1 + irlbl). Labels that never
// occur borrow the weight of the rarest observed label and are reported.
struct LabelStats {
  std::vector<size_t> counts;
  std::vector<double> irlbl;
  std::vector<double> weights;
  std::vector<uint32_t> zero_count_labels;
};

LabelStats compute_label_stats(const std::vector<std::vector<double>>& targets);

// Sum over labels of weight(l) * sum over items of BCE, in log-space form.
// Pass an empty weight vector for the unweighted variant.
Tensor weighted_bce(Tape& tape, const Tensor& logits, const Tensor& targets,
                    const std::vector<double>& label_weights = {});

struct GnnConfig {
  std::string arch = "mpnn";  // "gin" | "mpnn"
  int64_t hidden_dim = 832;
  int mp_steps = 3;
  int set2set_steps = 3;
  int set2set_layers = 3;
  std::vector<int64_t> ffn_hidden = {300};
  int64_t label_count = 0;
  bool weighted_loss = true;
  double dropout = 0.0;
  int64_t edge_hidden = 32;
  uint64_t seed = 0;
};

GnnConfig gnn_config_from_json(const nlohmann::json& j);
nlohmann::json gnn_config_to_json(const GnnConfig& cfg);

// Common surface for training, evaluation and embedding analysis.
// Forward passes are single-threaded per instance.
class BlendModel {
 public:
  virtual ~BlendModel() = default;
  virtual const GnnConfig& config() const = 0;
  virtual NamedTensors named_params() = 0;
  virtual std::vector<Tensor> trainable_params() = 0;
  virtual void load_params(const NamedTensors& tensors) = 0;

  // [1 x L] logits; dropout_rng non-null enables training-mode dropout.
  virtual Tensor pair_logits(Tape& tape, const MolGraph& a, const MolGraph& b,
                             Rng* dropout_rng = nullptr) = 0;
  virtual bool supports_single() const = 0;
  virtual Tensor single_logits(Tape& tape, const MolGraph& g,
                               Rng* dropout_rng = nullptr) = 0;

  virtual Tensor pair_embedding(Tape& tape, const MolGraph& a,
                                const MolGraph& b) = 0;
  virtual Tensor single_embedding(Tape& tape, const MolGraph& g) = 0;

  std::vector<double> predict_pair(const MolGraph& a, const MolGraph& b);
  std::vector<double> predict_single(const MolGraph& g);
};

// Graph isomorphism network with a tied two-layer update MLP, learnable
// epsilon, mean+add readout per molecule, a two-layer pair head and a
// linear label head. Embeddings: single = [1 x 2D], pair = [1 x D].
class GinModel : public BlendModel {
 public:
  explicit GinModel(const GnnConfig& cfg);

  const GnnConfig& config() const override { return cfg_; }
  NamedTensors named_params() override;
  std::vector<Tensor> trainable_params() override;
  void load_params(const NamedTensors& tensors) override;

  Tensor pair_logits(Tape& tape, const MolGraph& a, const MolGraph& b,
                     Rng* dropout_rng = nullptr) override;
  bool supports_single() const override { return false; }
  Tensor single_logits(Tape&, const MolGraph&, Rng*) override {
    throw GnnError("gin has no single-molecule head; fit a classifier on "
                   "single_embedding outputs instead");
  }
  Tensor pair_embedding(Tape& tape, const MolGraph& a,
                        const MolGraph& b) override;
  Tensor single_embedding(Tape& tape, const MolGraph& g) override;

  // One message-passing step: MLP((1 + eps) h + sum of neighbor states).
  Tensor step(Tape& tape, const Tensor& states, const MolGraph& g) const;
  // Node states after mp_steps applications of the tied step.
  Tensor node_states(Tape& tape, const MolGraph& g) const;

 private:
  Tensor graph_embedding(Tape& tape, const MolGraph& g);

  GnnConfig cfg_;
  Linear pad_;
  Linear mlp1_, mlp2_;
  Tensor epsilon_;
  Linear pair1_, pair2_;
  Linear head_;
};

// Edge-conditioned message passing with a GRU update, a radius-0 fold of
// bond embeddings into atoms, Set2Set readout over the whole (possibly
// two-component) graph and a feed-forward sigmoid head. The same forward
// path serves single molecules and disjoint-union pairs; embeddings are
// the [1 x 2D] Set2Set outputs.
class MpnnModel : public BlendModel {
 public:
  explicit MpnnModel(const GnnConfig& cfg);

  const GnnConfig& config() const override { return cfg_; }
  NamedTensors named_params() override;
  std::vector<Tensor> trainable_params() override;
  void load_params(const NamedTensors& tensors) override;

  Tensor pair_logits(Tape& tape, const MolGraph& a, const MolGraph& b,
                     Rng* dropout_rng = nullptr) override;
  bool supports_single() const override { return true; }
  Tensor single_logits(Tape& tape, const MolGraph& g,
                       Rng* dropout_rng = nullptr) override;
  Tensor pair_embedding(Tape& tape, const MolGraph& a,
                        const MolGraph& b) override;
  Tensor single_embedding(Tape& tape, const MolGraph& g) override;

  // Set2Set output for any featurized graph.
  Tensor embed_graph(Tape& tape, const MolGraph& g);
  Tensor logits_for_graph(Tape& tape, const MolGraph& g, Rng* dropout_rng);

 private:
  Tensor message_passed_states(Tape& tape, const MolGraph& g) const;

  GnnConfig cfg_;
  Linear embed_;
  Linear edge1_, edge2_;  // edge network: bond features -> D*D matrix
  Tensor gru_wz_, gru_uz_, gru_bz_;
  Tensor gru_wr_, gru_ur_, gru_br_;
  Tensor gru_wh_, gru_uh_, gru_bh_;
  Linear bond_embed_;  // bond features -> D, for the radius-0 fold
  Linear fold_;        // [h | bond sum] -> D
  Set2Set set2set_;
  std::vector<Linear> head_;
  Linear head_out_;
};

std::unique_ptr<BlendModel> make_model(const GnnConfig& cfg);

}  // namespace aroma

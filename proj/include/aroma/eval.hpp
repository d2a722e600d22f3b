#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aroma/error.hpp"
#include "aroma/fingerprint.hpp"

#include "json.hpp"

namespace aroma {

class EvalError : public Error {
 public:
  using Error::Error;
};

class DegenerateLabels : public EvalError {
 public:
  using EvalError::EvalError;
};

// Rank-based (Mann-Whitney) AUROC with average ranks for ties: the
// probability a random positive outranks a random negative, ties counting
// one half. Throws DegenerateLabels when one class is missing.
double auroc(std::span<const double> scores, std::span<const uint8_t> labels);

struct LabelScore {
  std::string name;
  size_t support_pos = 0;
  size_t support_neg = 0;
  std::optional<double> auroc;  // empty for degenerate labels
};

struct ScoreReport {
  std::vector<LabelScore> labels;
  double macro = 0.0;                // mean over defined per-label AUROCs
  std::optional<double> micro;       // pooled over all (item, label) pairs
  size_t n_items = 0;
  size_t n_labels_defined = 0;

  nlohmann::json summary_json() const;
  std::string report_csv() const;
};

// scores/targets are item-major matrices [n_items x n_labels] flattened.
ScoreReport score_report(const std::vector<std::vector<double>>& scores,
                         const std::vector<std::vector<double>>& targets,
                         const std::vector<std::string>& label_names);

// Constant predictor: each label scored with its training frequency.
struct ZeroR {
  std::vector<double> frequencies;
  std::vector<double> predict() const { return frequencies; }
};

ZeroR zero_r(const std::vector<std::vector<double>>& train_targets);

// One-vs-rest logistic regression trained by full-batch gradient descent
// on L2-regularized BCE (the bias is not regularized). Inputs are either
// sparse bit-index lists (fingerprints) or dense rows (embeddings).
class LogReg {
 public:
  struct FitConfig {
    double l2 = 1e-4;
    int steps = 500;
    double lr = 0.5;
  };

  static LogReg fit_sparse(const std::vector<std::vector<uint32_t>>& bits,
                           size_t width,
                           const std::vector<std::vector<double>>& targets,
                           const FitConfig& cfg);
  static LogReg fit_dense(const std::vector<std::vector<double>>& rows,
                          const std::vector<std::vector<double>>& targets,
                          const FitConfig& cfg);

  std::vector<double> predict_sparse(const std::vector<uint32_t>& bits) const;
  std::vector<double> predict_dense(const std::vector<double>& row) const;

  size_t width() const { return width_; }
  size_t label_count() const { return bias_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  double final_grad_norm() const { return final_grad_norm_; }

  static std::vector<uint32_t> bits_of(const BitFingerprint& fp);

 private:
  size_t width_ = 0;
  std::vector<double> weights_;  // [width x L] row-major
  std::vector<double> bias_;     // [L]
  double final_grad_norm_ = 0.0;
};

// Scores every item with `predict` and assembles the report.
ScoreReport evaluate(
    const std::function<std::vector<double>(size_t)>& predict,
    const std::vector<std::vector<double>>& targets,
    const std::vector<std::string>& label_names);

void write_report_csv(const std::string& path, const ScoreReport& report);
void write_summary_json(const std::string& path, const ScoreReport& report);

}  // namespace aroma

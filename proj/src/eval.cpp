#include "aroma/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace aroma {

double auroc(std::span<const double> scores, std::span<const uint8_t> labels) {
  if (scores.size() != labels.size())
    throw EvalError("auroc: size mismatch");
  size_t n_pos = 0;
  for (uint8_t y : labels) n_pos += y ? 1 : 0;
  const size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DegenerateLabels("auroc: need at least one positive and one negative");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie runs; ranks are 1-based.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k)
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ScoreReport score_report(const std::vector<std::vector<double>>& scores,
                         const std::vector<std::vector<double>>& targets,
                         const std::vector<std::string>& label_names) {
  if (scores.size() != targets.size())
    throw EvalError("score_report: item count mismatch");
  const size_t L = label_names.size();
  ScoreReport report;
  report.n_items = scores.size();

  std::vector<double> pooled_scores;
  std::vector<uint8_t> pooled_labels;
  double macro_sum = 0.0;

  for (size_t l = 0; l < L; ++l) {
    std::vector<double> s;
    std::vector<uint8_t> y;
    s.reserve(scores.size());
    y.reserve(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].size() != L || targets[i].size() != L)
        throw EvalError("score_report: row width mismatch");
      s.push_back(scores[i][l]);
      y.push_back(targets[i][l] > 0.5 ? 1 : 0);
    }
    LabelScore entry;
    entry.name = label_names[l];
    for (uint8_t v : y) (v ? entry.support_pos : entry.support_neg) += 1;
    try {
      entry.auroc = auroc(s, y);
      macro_sum += *entry.auroc;
      ++report.n_labels_defined;
    } catch (const DegenerateLabels&) {
      entry.auroc = std::nullopt;
    }
    pooled_scores.insert(pooled_scores.end(), s.begin(), s.end());
    pooled_labels.insert(pooled_labels.end(), y.begin(), y.end());
    report.labels.push_back(std::move(entry));
  }

  report.macro = report.n_labels_defined > 0
                     ? macro_sum / static_cast<double>(report.n_labels_defined)
                     : 0.0;
  try {
    report.micro = auroc(pooled_scores, pooled_labels);
  } catch (const DegenerateLabels&) {
    report.micro = std::nullopt;
  }
  return report;
}

ZeroR zero_r(const std::vector<std::vector<double>>& train_targets) {
  if (train_targets.empty()) throw EvalError("zero_r: empty train set");
  const size_t L = train_targets.front().size();
  ZeroR z;
  z.frequencies.assign(L, 0.0);
  for (const auto& row : train_targets)
    for (size_t l = 0; l < L; ++l)
      if (row[l] > 0.5) z.frequencies[l] += 1.0;
  for (double& f : z.frequencies) f /= static_cast<double>(train_targets.size());
  return z;
}

namespace {

double stable_sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                  : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

std::vector<uint32_t> LogReg::bits_of(const BitFingerprint& fp) {
  std::vector<uint32_t> out;
  for (uint32_t bit = 0; bit < fp.nbits; ++bit)
    if (fp.test(bit)) out.push_back(bit);
  return out;
}

LogReg LogReg::fit_sparse(const std::vector<std::vector<uint32_t>>& bits,
                          size_t width,
                          const std::vector<std::vector<double>>& targets,
                          const FitConfig& cfg) {
  if (bits.size() != targets.size() || bits.empty())
    throw EvalError("logreg: empty or mismatched training data");
  const size_t n = bits.size();
  const size_t L = targets.front().size();
  LogReg model;
  model.width_ = width;
  model.weights_.assign(width * L, 0.0);
  model.bias_.assign(L, 0.0);

  std::vector<double> probs(L), gw(width * L), gb(L);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int step = 0; step < cfg.steps; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      for (size_t l = 0; l < L; ++l) {
        double z = model.bias_[l];
        for (uint32_t bit : bits[i]) z += model.weights_[bit * L + l];
        probs[l] = stable_sigmoid(z) - targets[i][l];
      }
      for (uint32_t bit : bits[i])
        for (size_t l = 0; l < L; ++l) gw[bit * L + l] += probs[l];
      for (size_t l = 0; l < L; ++l) gb[l] += probs[l];
    }
    double norm2 = 0.0;
    for (size_t k = 0; k < gw.size(); ++k) {
      const double g = gw[k] * inv_n + cfg.l2 * model.weights_[k];
      model.weights_[k] -= cfg.lr * g;
      norm2 += g * g;
    }
    for (size_t l = 0; l < L; ++l) {
      const double g = gb[l] * inv_n;
      model.bias_[l] -= cfg.lr * g;
      norm2 += g * g;
    }
    model.final_grad_norm_ = std::sqrt(norm2);
    if (model.final_grad_norm_ < 1e-6) break;
  }
  return model;
}

LogReg LogReg::fit_dense(const std::vector<std::vector<double>>& rows,
                         const std::vector<std::vector<double>>& targets,
                         const FitConfig& cfg) {
  if (rows.size() != targets.size() || rows.empty())
    throw EvalError("logreg: empty or mismatched training data");
  const size_t n = rows.size();
  const size_t width = rows.front().size();
  const size_t L = targets.front().size();
  LogReg model;
  model.width_ = width;
  model.weights_.assign(width * L, 0.0);
  model.bias_.assign(L, 0.0);

  std::vector<double> residual(L), gw(width * L), gb(L);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int step = 0; step < cfg.steps; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      if (rows[i].size() != width) throw EvalError("logreg: ragged features");
      for (size_t l = 0; l < L; ++l) {
        double z = model.bias_[l];
        for (size_t f = 0; f < width; ++f)
          z += rows[i][f] * model.weights_[f * L + l];
        residual[l] = stable_sigmoid(z) - targets[i][l];
      }
      for (size_t f = 0; f < width; ++f) {
        const double x = rows[i][f];
        if (x == 0.0) continue;
        for (size_t l = 0; l < L; ++l) gw[f * L + l] += x * residual[l];
      }
      for (size_t l = 0; l < L; ++l) gb[l] += residual[l];
    }
    double norm2 = 0.0;
    for (size_t k = 0; k < gw.size(); ++k) {
      const double g = gw[k] * inv_n + cfg.l2 * model.weights_[k];
      model.weights_[k] -= cfg.lr * g;
      norm2 += g * g;
    }
    for (size_t l = 0; l < L; ++l) {
      const double g = gb[l] * inv_n;
      model.bias_[l] -= cfg.lr * g;
      norm2 += g * g;
    }
    model.final_grad_norm_ = std::sqrt(norm2);
    if (model.final_grad_norm_ < 1e-6) break;
  }
  return model;
}

std::vector<double> LogReg::predict_sparse(
    const std::vector<uint32_t>& bits) const {
  const size_t L = bias_.size();
  std::vector<double> out(L);
  for (size_t l = 0; l < L; ++l) {
    double z = bias_[l];
    for (uint32_t bit : bits) z += weights_[bit * L + l];
    out[l] = stable_sigmoid(z);
  }
  return out;
}

std::vector<double> LogReg::predict_dense(const std::vector<double>& row) const {
  if (row.size() != width_) throw EvalError("logreg: feature width mismatch");
  const size_t L = bias_.size();
  std::vector<double> out(L);
  for (size_t l = 0; l < L; ++l) {
    double z = bias_[l];
    for (size_t f = 0; f < width_; ++f) z += row[f] * weights_[f * L + l];
    out[l] = stable_sigmoid(z);
  }
  return out;
}

ScoreReport evaluate(
    const std::function<std::vector<double>(size_t)>& predict,
    const std::vector<std::vector<double>>& targets,
    const std::vector<std::string>& label_names) {
  std::vector<std::vector<double>> scores;
  scores.reserve(targets.size());
  for (size_t i = 0; i < targets.size(); ++i) scores.push_back(predict(i));
  return score_report(scores, targets, label_names);
}

nlohmann::json ScoreReport::summary_json() const {
  nlohmann::json j{{"macro", macro},
                   {"n_items", n_items},
                   {"n_labels_defined", n_labels_defined}};
  if (micro) {
    j["micro"] = *micro;
  } else {
    j["micro"] = nullptr;
  }
  return j;
}

std::string ScoreReport::report_csv() const {
  std::string out = "label,support_pos,support_neg,auroc\n";
  char buf[64];
  for (const LabelScore& l : labels) {
    out += l.name + "," + std::to_string(l.support_pos) + "," +
           std::to_string(l.support_neg) + ",";
    if (l.auroc) {
      std::snprintf(buf, sizeof(buf), "%.10g", *l.auroc);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

void write_report_csv(const std::string& path, const ScoreReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << report.report_csv();
}

void write_summary_json(const std::string& path, const ScoreReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << report.summary_json().dump(2) << "\n";
}

}  // namespace aroma

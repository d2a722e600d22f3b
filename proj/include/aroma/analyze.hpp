#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aroma/error.hpp"

#include "json.hpp"

namespace aroma {

class AnalyzeError : public Error {
 public:
  using Error::Error;
};

struct RegressionFit {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double r2 = 0.0;  // unclamped; negative values are reported as computed
  double f_stat = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // collinear design, solved via pseudo-inverse
};

// Intercept-free least squares of a1*e1 + a2*e2 = ep over the component
// axis. r2 uses SS_tot about the mean of ep's entries; the F statistic is
// ((SS_tot - SS_res)/2) / (SS_res/(D-2)) with an upper-tail p from F(2, D-2).
RegressionFit pair_regression(std::span<const double> e1,
                              std::span<const double> e2,
                              std::span<const double> ep);

// Upper-tail probability of the F distribution via the regularized
// incomplete beta function.
double f_pvalue(double f_stat, double d1, double d2);

struct PairFitSummary {
  std::vector<RegressionFit> fits;
  double mean_r2 = 0.0;
  double mean_p = 0.0;
  double corr_alpha = 0.0;  // Pearson correlation of (alpha1, alpha2)

  std::string scatter_csv() const;
  nlohmann::json summary_json() const;
};

// Embedding access for one model; index identifies the pair.
struct EmbeddingProvider {
  std::function<std::vector<double>(size_t)> first;   // e1 per pair
  std::function<std::vector<double>(size_t)> second;  // e2 per pair
  std::function<std::vector<double>(size_t)> pair;    // ep per pair
  size_t count = 0;
};

// One regression per pair. When component embeddings are wider than the
// pair embedding they are PCA-reduced (fit jointly on all component
// embeddings) to the pair width first.
PairFitSummary fit_all_pairs(const EmbeddingProvider& provider);

struct Pca {
  std::vector<double> mean;        // [D]
  std::vector<double> components;  // [k x D] row-major, orthonormal
  std::vector<double> explained;   // variance fraction per component
  bool rank_deficient = false;

  std::vector<double> project(std::span<const double> x) const;
};

// Top-k principal components by iterated power method with deflation
// (tolerance 1e-9). Directions short of rank are zero-padded and flagged.
Pca fit_pca(const std::vector<std::vector<double>>& rows, size_t target_dim);

struct KdeCurve {
  std::vector<double> x;
  std::vector<double> density;
  double bandwidth = 0.0;

  std::string csv() const;
};

// Gaussian kernel density on an even grid spanning [min-3h, max+3h].
// Default bandwidth is Silverman's rule, 0.9 min(sd, IQR/1.34) n^(-1/5);
// if the samples are all identical the bandwidth falls back to 1.
KdeCurve kde(std::span<const double> samples,
             std::optional<double> bandwidth = std::nullopt, int grid = 256);

}  // namespace aroma

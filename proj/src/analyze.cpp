#include "aroma/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "aroma/stats.hpp"

namespace aroma {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double f_pvalue(double f_stat, double d1, double d2) {
  if (d1 < 1.0 || d2 < 1.0) throw AnalyzeError("f_pvalue: dof must be >= 1");
  return f_upper_tail(f_stat, d1, d2);
}

RegressionFit pair_regression(std::span<const double> e1,
                              std::span<const double> e2,
                              std::span<const double> ep) {
  const size_t d = ep.size();
  if (e1.size() != d || e2.size() != d)
    throw AnalyzeError("pair_regression: width mismatch");
  if (d < 3) throw AnalyzeError("pair_regression: need width >= 3");

  // Normal equations of the 2-column design [e1 e2].
  const double a11 = dot(e1, e1);
  const double a12 = dot(e1, e2);
  const double a22 = dot(e2, e2);
  const double b1 = dot(e1, ep);
  const double b2 = dot(e2, ep);

  RegressionFit fit;
  const double det = a11 * a22 - a12 * a12;
  const double scale = std::max(a11, a22);
  if (std::fabs(det) > 1e-12 * std::max(scale * scale, 1e-300)) {
    fit.alpha1 = (a22 * b1 - a12 * b2) / det;
    fit.alpha2 = (a11 * b2 - a12 * b1) / det;
  } else {
    // Collinear design: minimum-norm solution via the pseudo-inverse of
    // the rank-1 Gram matrix.
    fit.degenerate = true;
    const double trace = a11 + a22;
    if (trace <= 0.0) {
      fit.alpha1 = fit.alpha2 = 0.0;
    } else {
      // A = v v^T with v = (sqrt(a11), sign(a12) sqrt(a22)) direction.
      // pinv(A) b = (v.b / |v|^4) v in the e-coefficient space.
      fit.alpha1 = (a11 * b1 + a12 * b2) / (trace * trace);
      fit.alpha2 = (a12 * b1 + a22 * b2) / (trace * trace);
    }
  }

  double mean_ep = 0.0;
  for (double v : ep) mean_ep += v;
  mean_ep /= static_cast<double>(d);
  double ss_tot = 0.0, ss_res = 0.0;
  for (size_t i = 0; i < d; ++i) {
    const double resid = ep[i] - (fit.alpha1 * e1[i] + fit.alpha2 * e2[i]);
    ss_res += resid * resid;
    const double centered = ep[i] - mean_ep;
    ss_tot += centered * centered;
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot
                        : (ss_res == 0.0 ? 1.0 : 0.0);
  const double dof2 = static_cast<double>(d) - 2.0;
  if (ss_res <= 0.0) {
    fit.f_stat = std::numeric_limits<double>::infinity();
    fit.p_value = 0.0;
  } else {
    fit.f_stat = ((ss_tot - ss_res) / 2.0) / (ss_res / dof2);
    if (fit.f_stat < 0.0) fit.f_stat = 0.0;  // r2 < 0 cases
    fit.p_value = f_pvalue(fit.f_stat, 2.0, dof2);
  }
  return fit;
}

PairFitSummary fit_all_pairs(const EmbeddingProvider& provider) {
  if (provider.count == 0) throw AnalyzeError("fit_all_pairs: no pairs");

  // Probe widths; PCA-reduce component embeddings when they are wider
  // than the pair embedding.
  const size_t comp_dim = provider.first(0).size();
  const size_t pair_dim = provider.pair(0).size();
  Pca pca;
  const bool reduce = comp_dim > pair_dim;
  if (comp_dim < pair_dim)
    throw AnalyzeError("fit_all_pairs: component embeddings narrower than "
                       "pair embeddings");
  if (reduce) {
    std::vector<std::vector<double>> all;
    all.reserve(2 * provider.count);
    for (size_t i = 0; i < provider.count; ++i) {
      all.push_back(provider.first(i));
      all.push_back(provider.second(i));
    }
    pca = fit_pca(all, pair_dim);
  }

  PairFitSummary summary;
  double sum_r2 = 0.0, sum_p = 0.0;
  for (size_t i = 0; i < provider.count; ++i) {
    std::vector<double> e1 = provider.first(i);
    std::vector<double> e2 = provider.second(i);
    const std::vector<double> ep = provider.pair(i);
    if (reduce) {
      e1 = pca.project(e1);
      e2 = pca.project(e2);
    }
    RegressionFit fit = pair_regression(e1, e2, ep);
    sum_r2 += fit.r2;
    sum_p += fit.p_value;
    summary.fits.push_back(fit);
  }
  const double n = static_cast<double>(summary.fits.size());
  summary.mean_r2 = sum_r2 / n;
  summary.mean_p = sum_p / n;

  double m1 = 0.0, m2 = 0.0;
  for (const RegressionFit& f : summary.fits) {
    m1 += f.alpha1;
    m2 += f.alpha2;
  }
  m1 /= n;
  m2 /= n;
  double cov = 0.0, v1 = 0.0, v2 = 0.0;
  for (const RegressionFit& f : summary.fits) {
    cov += (f.alpha1 - m1) * (f.alpha2 - m2);
    v1 += (f.alpha1 - m1) * (f.alpha1 - m1);
    v2 += (f.alpha2 - m2) * (f.alpha2 - m2);
  }
  summary.corr_alpha = v1 > 0.0 && v2 > 0.0 ? cov / std::sqrt(v1 * v2) : 0.0;
  return summary;
}

std::string PairFitSummary::scatter_csv() const {
  std::string out = "pair_id,alpha1,alpha2,r2,p\n";
  char buf[192];
  for (size_t i = 0; i < fits.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g\n", i,
                  fits[i].alpha1, fits[i].alpha2, fits[i].r2, fits[i].p_value);
    out += buf;
  }
  return out;
}

nlohmann::json PairFitSummary::summary_json() const {
  return nlohmann::json{{"mean_r2", mean_r2},
                        {"mean_p", mean_p},
                        {"corr_alpha", corr_alpha},
                        {"n_pairs", fits.size()}};
}

std::vector<double> Pca::project(std::span<const double> x) const {
  const size_t d = mean.size();
  if (x.size() != d) throw AnalyzeError("pca: width mismatch");
  const size_t k = components.size() / d;
  std::vector<double> out(k, 0.0);
  for (size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (size_t i = 0; i < d; ++i)
      s += components[c * d + i] * (x[i] - mean[i]);
    out[c] = s;
  }
  return out;
}

Pca fit_pca(const std::vector<std::vector<double>>& rows, size_t target_dim) {
  if (rows.empty()) throw AnalyzeError("pca: no rows");
  const size_t d = rows.front().size();
  if (target_dim > d) throw AnalyzeError("pca: target_dim exceeds width");
  const size_t n = rows.size();

  Pca pca;
  pca.mean.assign(d, 0.0);
  for (const auto& row : rows) {
    if (row.size() != d) throw AnalyzeError("pca: ragged rows");
    for (size_t i = 0; i < d; ++i) pca.mean[i] += row[i];
  }
  for (double& m : pca.mean) m /= static_cast<double>(n);

  // Covariance (biased by 1/n; only ratios matter here).
  std::vector<double> cov(d * d, 0.0);
  std::vector<double> centered(d);
  for (const auto& row : rows) {
    for (size_t i = 0; i < d; ++i) centered[i] = row[i] - pca.mean[i];
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j < d; ++j) cov[i * d + j] += centered[i] * centered[j];
  }
  for (double& c : cov) c /= static_cast<double>(n);
  double total_var = 0.0;
  for (size_t i = 0; i < d; ++i) total_var += cov[i * d + i];

  constexpr double kTol = 1e-9;
  constexpr int kMaxIter = 10000;
  std::vector<double> work(cov);
  pca.components.assign(target_dim * d, 0.0);
  pca.explained.assign(target_dim, 0.0);

  for (size_t c = 0; c < target_dim; ++c) {
    // Deterministic start; re-seeded along another axis if the first is
    // orthogonal to the dominant eigenvector.
    std::vector<double> v(d, 0.0), next(d);
    v[c % d] = 1.0;
    double eigen = 0.0;
    for (int axis_try = 0; axis_try <= static_cast<int>(d); ++axis_try) {
      bool converged = false;
      for (int iter = 0; iter < kMaxIter; ++iter) {
        for (size_t i = 0; i < d; ++i) {
          double s = 0.0;
          for (size_t j = 0; j < d; ++j) s += work[i * d + j] * v[j];
          next[i] = s;
        }
        double norm = std::sqrt(dot(next, next));
        if (norm <= total_var * 1e-15 + 1e-300) break;  // in the null space
        for (size_t i = 0; i < d; ++i) next[i] /= norm;
        double delta = 0.0;
        for (size_t i = 0; i < d; ++i)
          delta = std::max(delta, std::fabs(std::fabs(next[i]) - std::fabs(v[i])));
        v = next;
        eigen = norm;
        if (delta < kTol) {
          converged = true;
          break;
        }
      }
      if (converged && eigen > 0.0) break;
      // restart from another axis
      std::fill(v.begin(), v.end(), 0.0);
      v[(c + axis_try + 1) % d] = 1.0;
      eigen = 0.0;
    }
    if (eigen <= kTol * std::max(total_var, 1e-300)) {
      pca.rank_deficient = true;  // zero-padded direction
      continue;
    }
    for (size_t i = 0; i < d; ++i) pca.components[c * d + i] = v[i];
    pca.explained[c] = total_var > 0.0 ? eigen / total_var : 0.0;
    // Deflate: work -= eigen * v v^T
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j < d; ++j) work[i * d + j] -= eigen * v[i] * v[j];
  }
  return pca;
}

KdeCurve kde(std::span<const double> samples, std::optional<double> bandwidth,
             int grid) {
  if (samples.empty()) throw AnalyzeError("kde: no samples");
  if (grid < 2) throw AnalyzeError("kde: grid must be >= 2");
  const size_t n = samples.size();

  double h;
  if (bandwidth) {
    h = *bandwidth;
    if (!(h > 0.0)) throw AnalyzeError("kde: bandwidth must be > 0");
  } else {
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double q1 = sorted[static_cast<size_t>(0.25 * (n - 1))];
    const double q3 = sorted[static_cast<size_t>(0.75 * (n - 1))];
    const double iqr = q3 - q1;
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    h = spread > 0.0
            ? 0.9 * spread * std::pow(static_cast<double>(n), -0.2)
            : 1.0;
  }

  const auto [mn_it, mx_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn_it - 3.0 * h;
  const double hi = *mx_it + 3.0 * h;
  KdeCurve curve;
  curve.bandwidth = h;
  curve.x.resize(grid);
  curve.density.resize(grid);
  const double step = (hi - lo) / static_cast<double>(grid - 1);
  const double norm = 1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < grid; ++g) {
    const double x = lo + step * g;
    double sum = 0.0;
    for (double s : samples) {
      const double u = (x - s) / h;
      sum += std::exp(-0.5 * u * u);
    }
    curve.x[g] = x;
    curve.density[g] = norm * sum;
  }
  return curve;
}

std::string KdeCurve::csv() const {
  std::string out = "x,density\n";
  char buf[96];
  for (size_t i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g\n", x[i], density[i]);
    out += buf;
  }
  return out;
}

}  // namespace aroma

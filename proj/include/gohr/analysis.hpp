#pragma once

// Rank statistics and embedding for comparing rule difficulty across runs:
// Spearman, exact Mann-Whitney, Kruskal-Wallis, 1 - p dissimilarities and
// classical (Torgerson) MDS, plus CSV output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "gohr/errors.hpp"

namespace gohr {

struct SampleSet {
  std::string label;
  std::vector<double> values;
};

/// Average ranks (1-based), ties sharing the mean of their positions.
inline std::vector<double> mid_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw DomainError("correlation undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("spearman needs two equal series of length >= 2");
  return pearson(mid_ranks(x), mid_ranks(y));
}

struct MannWhitneyResult {
  double u = 0;  // U of the first sample
  double p = 1;  // two-sided: min(1, 2 * smaller one-sided tail)
};

/// Exact null distribution of U over all C(n, |a|) label assignments of the
/// pooled mid-ranks, counted by dynamic programming over doubled rank sums.
inline MannWhitneyResult mann_whitney_exact(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw DomainError("Mann-Whitney needs two nonempty samples");
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto r = mid_ranks(pooled);
  const std::size_t na = a.size(), n = pooled.size();

  std::vector<int> r2(n);  // doubled ranks are integers
  for (std::size_t i = 0; i < n; ++i) r2[i] = static_cast<int>(std::lround(2 * r[i]));
  const int total = std::accumulate(r2.begin(), r2.end(), 0);
  int observed = 0;
  for (std::size_t i = 0; i < na; ++i) observed += r2[i];

  // ways[k][s]: subsets of size k with doubled-rank sum s
  std::vector<std::vector<double>> ways(na + 1, std::vector<double>(total + 1, 0.0));
  ways[0][0] = 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = std::min(na, i + 1); k >= 1; --k)
      for (int s = total; s >= r2[i]; --s) ways[k][s] += ways[k - 1][s - r2[i]];

  double all = 0, lower = 0, upper = 0;
  for (int s = 0; s <= total; ++s) {
    const double w = ways[na][s];
    all += w;
    if (s <= observed) lower += w;
    if (s >= observed) upper += w;
  }
  MannWhitneyResult out;
  out.u = observed / 2.0 - static_cast<double>(na * (na + 1)) / 2.0;
  out.p = std::min(1.0, 2.0 * std::min(lower, upper) / all);
  return out;
}

struct KruskalWallisResult {
  double h = 0;
  double p = 1;
  int df = 0;
};

inline double chi_square_upper(double x, int df) {
  if (x <= 0) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

inline KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw DomainError("Kruskal-Wallis needs at least two groups");
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.empty()) throw DomainError("Kruskal-Wallis group is empty");
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  const auto r = mid_ranks(pooled);
  const double n = static_cast<double>(pooled.size());

  double sum = 0;
  std::size_t at = 0;
  for (const auto& g : groups) {
    double rs = 0;
    for (std::size_t i = 0; i < g.size(); ++i) rs += r[at + i];
    at += g.size();
    sum += rs * rs / static_cast<double>(g.size());
  }
  double ties = 0;
  auto sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  KruskalWallisResult out;
  out.df = static_cast<int>(groups.size()) - 1;
  const double correction = 1.0 - ties / (n * n * n - n);
  if (correction <= 0) return out;  // every value tied
  out.h = std::max(0.0, (12.0 / (n * (n + 1)) * sum - 3 * (n + 1)) / correction);
  out.p = chi_square_upper(out.h, out.df);
  return out;
}

/// Symmetric matrix of pairwise two-sided exact Mann-Whitney p-values, diagonal 1.
inline Eigen::MatrixXd pairwise_p_values(const std::vector<SampleSet>& sets) {
  const auto k = static_cast<Eigen::Index>(sets.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j)
      p(i, j) = p(j, i) = mann_whitney_exact(sets[i].values, sets[j].values).p;
  return p;
}

inline Eigen::MatrixXd dissimilarity(const Eigen::MatrixXd& p) {
  if (p.rows() != p.cols()) throw DomainError("p-value matrix must be square");
  Eigen::MatrixXd d = (1.0 - p.array()).matrix();
  d.diagonal().setZero();
  return d;
}

struct Embedding {
  Eigen::MatrixXd coords;                // n x k
  Eigen::VectorXd eigenvalues;           // all n, descending
  std::vector<double> negative;          // eigenvalues < 0 that were dropped
};

inline Embedding classical_mds(const Eigen::MatrixXd& d, int k = 3) {
  const auto n = d.rows();
  if (n != d.cols()) throw DomainError("distance matrix must be square");
  if (n > 0 && (d - d.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw DomainError("distance matrix must be symmetric");
  const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  const Eigen::MatrixXd b = -0.5 * j * d.array().square().matrix() * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  const Eigen::VectorXd vals = es.eigenvalues().reverse();
  const Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();

  Embedding e;
  e.eigenvalues = vals;
  // Round-off below this is treated as zero rather than as a negative eigenvalue.
  const double tol = 1e-10 * std::max(1.0, vals.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i)
    if (vals(i) < -tol) e.negative.push_back(vals(i));
  e.coords = Eigen::MatrixXd::Zero(n, k);
  for (int c = 0; c < k && c < n; ++c)
    if (vals(c) > tol) e.coords.col(c) = vecs.col(c) * std::sqrt(vals(c));
  return e;
}

struct EvalEpisode {
  bool test_mode = false;
  int errors = 0;
};

/// Share of errors made in test-mode episodes; absent when no errors occurred.
inline std::optional<double> test_error_ratio(const std::vector<EvalEpisode>& episodes) {
  double test = 0, total = 0;
  for (const auto& e : episodes) {
    total += e.errors;
    if (e.test_mode) test += e.errors;
  }
  if (total == 0) return std::nullopt;
  return test / total;
}

// ---- CSV -------------------------------------------------------------------

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline void write_matrix_csv(std::ostream& os, const std::vector<std::string>& labels, const Eigen::MatrixXd& m) {
  os << "label";
  for (const auto& l : labels) os << ',' << csv_field(l);
  os << '\n';
  os.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << csv_field(labels[i]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << m(i, j);
    os << '\n';
  }
}

inline void write_coords_csv(std::ostream& os, const std::vector<std::string>& labels, const Eigen::MatrixXd& x) {
  os << "label";
  for (Eigen::Index c = 0; c < x.cols(); ++c) os << ",dim" << (c + 1);
  os << '\n';
  os.precision(17);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    os << csv_field(labels[i]);
    for (Eigen::Index c = 0; c < x.cols(); ++c) os << ',' << x(i, c);
    os << '\n';
  }
}

}  // namespace gohr

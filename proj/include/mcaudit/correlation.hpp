#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcaudit/matrix.hpp"
#include "mcaudit/random.hpp"
#include "mcaudit/statistics.hpp"

namespace mcaudit {

/// Target Spearman coefficients between assumptions; k x k, unit diagonal.
class CorrelationSpec {
 public:
  CorrelationSpec() = default;
  explicit CorrelationSpec(std::size_t k) : k_(k), rho_(k * k, 0.0) {
    for (std::size_t i = 0; i < k; ++i) rho_[i * k + i] = 1.0;
  }
  CorrelationSpec(std::size_t k, std::vector<double> entries) : k_(k), rho_(std::move(entries)) {
    if (rho_.size() != k * k) throw std::invalid_argument("correlation matrix must be square");
  }

  std::size_t size() const { return k_; }
  double operator()(std::size_t i, std::size_t j) const { return rho_[i * k_ + j]; }

  /// Sets both (i,j) and (j,i).
  void set(std::size_t i, std::size_t j, double rho) {
    rho_[i * k_ + j] = rho;
    rho_[j * k_ + i] = rho;
  }

  bool is_identity() const {
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = 0; j < k_; ++j)
        if ((*this)(i, j) != (i == j ? 1.0 : 0.0)) return false;
    return true;
  }

  /// True if assumption i has any non-zero off-diagonal target.
  bool is_correlated(std::size_t i) const {
    for (std::size_t j = 0; j < k_; ++j)
      if (j != i && (*this)(i, j) != 0.0) return true;
    return false;
  }

  Eigen::MatrixXd to_eigen() const {
    Eigen::MatrixXd m(k_, k_);
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = 0; j < k_; ++j) m(i, j) = (*this)(i, j);
    return m;
  }

 private:
  std::size_t k_ = 0;
  std::vector<double> rho_;
};

struct CorrelationIssue {
  enum class Kind { Asymmetric, OutOfRange, Diagonal, NotPsd };
  Kind kind;
  std::string message;
  double min_eigenvalue = 0.0;
};

inline constexpr double kPsdTolerance = -1e-10;

/// Returns nullopt if the matrix is an admissible rank-correlation target.
inline std::optional<CorrelationIssue> validate_correlation(const CorrelationSpec& spec) {
  const std::size_t k = spec.size();
  for (std::size_t i = 0; i < k; ++i) {
    if (spec(i, i) != 1.0) return CorrelationIssue{CorrelationIssue::Kind::Diagonal, "diagonal entries must be 1"};
    for (std::size_t j = 0; j < k; ++j) {
      const double v = spec(i, j);
      if (!(v >= -1.0 && v <= 1.0))
        return CorrelationIssue{CorrelationIssue::Kind::OutOfRange, "entry (" + std::to_string(i) + "," +
                                                                       std::to_string(j) + ") outside [-1,1]"};
      if (v != spec(j, i))
        return CorrelationIssue{CorrelationIssue::Kind::Asymmetric, "matrix is not symmetric at (" +
                                                                        std::to_string(i) + "," + std::to_string(j) + ")"};
    }
  }
  if (k == 0) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(spec.to_eigen(), Eigen::EigenvaluesOnly);
  const double lowest = solver.eigenvalues().minCoeff();
  if (lowest < kPsdTolerance) {
    return CorrelationIssue{CorrelationIssue::Kind::NotPsd,
                            "matrix is not positive semi-definite (smallest eigenvalue " + std::to_string(lowest) + ")",
                            lowest};
  }
  return std::nullopt;
}

namespace detail {

/// B with B * B^T == m, via the eigen-decomposition with tiny eigenvalues clamped.
inline Eigen::MatrixXd symmetric_factor(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  Eigen::VectorXd roots = solver.eigenvalues().unaryExpr([](double v) { return v > 1e-12 ? std::sqrt(v) : 0.0; });
  return solver.eigenvectors() * roots.asDiagonal();
}

}  // namespace detail

/// Reorders each column so the pairwise rank correlations approach the targets
/// (Iman-Conover). Each output column is a permutation of the input column.
/// Throws std::invalid_argument on an invalid spec or fewer than 10 rows per column.
inline Matrix induce_rank_correlation(const Matrix& columns, const CorrelationSpec& spec, const RandomSource& src) {
  const std::size_t n = columns.rows();
  const std::size_t k = columns.cols();
  if (spec.size() != k) throw std::invalid_argument("correlation spec size does not match column count");
  if (auto issue = validate_correlation(spec)) throw std::invalid_argument(issue->message);
  if (n < 10 * k) throw std::invalid_argument("rank correlation needs at least 10 rows per column");
  if (k < 2) return columns;

  // Gaussian-score Pearson targets that map onto the requested Spearman values.
  Eigen::MatrixXd target = spec.to_eigen();
  Eigen::MatrixXd adjusted = target;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j) adjusted(i, j) = 2.0 * std::sin(M_PI * target(i, j) / 6.0);
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check(adjusted, Eigen::EigenvaluesOnly);
    if (check.eigenvalues().minCoeff() < kPsdTolerance) adjusted = target;
  }

  // Van der Waerden scores, independently shuffled per column.
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = normal_quantile(static_cast<double>(i + 1) / static_cast<double>(n + 1));
  const RandomSource shuffle = src.derive(0x1C0);
  Eigen::MatrixXd s(n, k);
  std::vector<std::size_t> perm(n);
  std::vector<double> keys(n);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < n; ++i) keys[i] = shuffle.uniform(i, j);
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](auto a, auto b) { return keys[a] < keys[b]; });
    for (std::size_t i = 0; i < n; ++i) s(perm[i], j) = scores[i];
  }

  // Remove the sample correlation the shuffle left behind, then impose the target.
  Eigen::MatrixXd centered = s.rowwise() - s.colwise().mean();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd sample_corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(sample_corr);
  Eigen::MatrixXd t;
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd f_inv_t = llt.matrixL().solve(Eigen::MatrixXd::Identity(k, k)).transpose();
    t = s * f_inv_t * detail::symmetric_factor(adjusted).transpose();
  } else {
    t = s * detail::symmetric_factor(adjusted).transpose();
  }

  Matrix out(n, k);
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < k; ++j) {
    auto sorted = columns.column(j);
    std::sort(sorted.begin(), sorted.end());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return t(a, j) < t(b, j); });
    for (std::size_t r = 0; r < n; ++r) out(order[r], j) = sorted[r];
  }
  return out;
}

}  // namespace mcaudit

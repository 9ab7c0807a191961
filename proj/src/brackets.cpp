#include "varlab/brackets.hpp"

#include <Eigen/Eigenvalues>

#include <limits>

#include "varlab/rng.hpp"

namespace varlab {

Eigen::VectorXd bracket(const VectorFieldSystem& sys, int i, int j,
                        const Eigen::VectorXd& x) {
  return sys.dderiv(j, x, sys.field(i, x)) - sys.dderiv(i, x, sys.field(j, x));
}

BracketTable::BracketTable(std::shared_ptr<const VectorFieldSystem> sys,
                           int level)
    : sys_(std::move(sys)), level_(level) {
  if (level_ < 1) throw std::domain_error("BracketTable: level must be >= 1");
  if (level_ > kMaxDualDepth)
    throw std::domain_error("BracketTable: level above the dual-depth cap");
  words_ = enumerate_words(sys_->driver_dim(), level_);
  for (int k = 0; k < static_cast<int>(words_.size()); ++k)
    index_[words_[static_cast<std::size_t>(k)].letters] = k;
}

int BracketTable::index_of(const Word& w) const {
  auto it = index_.find(w.letters);
  if (it == index_.end())
    throw std::invalid_argument("BracketTable: word " + w.str() +
                                " is not in the table");
  return it->second;
}

Eigen::VectorXd BracketTable::bracket_value(const Word& word,
                                            const Eigen::VectorXd& x) const {
  const int n = sys_->state_dim();
  Eigen::VectorXd out(n);
  eval_bracket(word,
               std::span<const double>(x.data(), static_cast<std::size_t>(n)),
               std::span<double>(out.data(), static_cast<std::size_t>(n)));
  return out;
}

Eigen::VectorXd BracketTable::bracket_dderiv(const Word& word,
                                             const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& u) const {
  const auto n = static_cast<std::size_t>(sys_->state_dim());
  std::vector<DualD1> xl(n), tmp(n);
  for (std::size_t k = 0; k < n; ++k) xl[k] = {x(static_cast<int>(k)), u(static_cast<int>(k))};
  eval_bracket(word, std::span<const DualD1>(xl), std::span<DualD1>(tmp));
  Eigen::VectorXd out(sys_->state_dim());
  for (std::size_t k = 0; k < n; ++k) out(static_cast<int>(k)) = tmp[k].d;
  return out;
}

Eigen::MatrixXd BracketTable::basis_matrix(const Eigen::VectorXd& x) const {
  const int n = sys_->state_dim();
  Eigen::MatrixXd basis(n, n_words());
  for (int k = 0; k < n_words(); ++k)
    basis.col(k) = bracket_value(words_[static_cast<std::size_t>(k)], x);
  return basis;
}

double BracketTable::span_eigenvalue(const Eigen::VectorXd& x) const {
  const Eigen::MatrixXd basis = basis_matrix(x);
  const Eigen::MatrixXd gram = basis * basis.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram,
                                                     Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

HypoCheckResult hypo_check(const BracketTable& table,
                           std::span<const Eigen::VectorXd> points) {
  HypoCheckResult res;
  res.lambda_hat = std::numeric_limits<double>::infinity();
  for (const auto& x : points) {
    const double lambda = table.span_eigenvalue(x);
    if (lambda < res.lambda_hat) {
      res.lambda_hat = lambda;
      res.argmin = x;
    }
  }
  if (points.empty()) {
    res.lambda_hat = 0.0;
    res.argmin = Eigen::VectorXd::Zero(table.system().state_dim());
  }
  return res;
}

HypoCheckResult hypo_check_polished(const BracketTable& table,
                                    std::span<const Eigen::VectorXd> points,
                                    double box_lo, double box_hi) {
  HypoCheckResult res = hypo_check(table, points);
  if (points.empty()) return res;

  const int n = table.system().state_dim();
  Eigen::VectorXd x = res.argmin;
  double best = res.lambda_hat;
  double step = 0.25 * (box_hi - box_lo);
  while (step > 1e-10 * std::max(1.0, box_hi - box_lo)) {
    bool improved = false;
    for (int c = 0; c < n; ++c) {
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd trial = x;
        trial(c) = std::clamp(trial(c) + sign * step, box_lo, box_hi);
        const double lambda = table.span_eigenvalue(trial);
        if (lambda < best) {
          best = lambda;
          x = trial;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  res.lambda_hat = best;
  res.argmin = x;
  return res;
}

std::vector<Eigen::VectorXd> sample_box(int n, double lo, double hi,
                                        int trials, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(static_cast<std::size_t>(trials));
  for (int i = 0; i < trials; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i), 0x626f78ULL);
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) x(k) = lo + (hi - lo) * rng.next_uniform();
    pts.push_back(std::move(x));
  }
  return pts;
}

OmegaWorkspace::OmegaWorkspace(const BracketTable& table,
                               const Eigen::VectorXd& x)
    : table_(&table), x_(x), basis_(table.basis_matrix(x)) {
  const int level = table.level();
  columns_by_len_.resize(static_cast<std::size_t>(level) + 1);
  cod_by_len_.resize(static_cast<std::size_t>(level) + 1);
  for (int k = 0; k < table.n_words(); ++k) {
    const int len = table.words()[static_cast<std::size_t>(k)].length();
    for (int l = len; l <= level; ++l)
      columns_by_len_[static_cast<std::size_t>(l)].push_back(k);
  }
}

const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>&
OmegaWorkspace::cod_for(int max_len) const {
  auto& slot = cod_by_len_[static_cast<std::size_t>(max_len)];
  if (!slot) {
    const auto& cols = columns_by_len_[static_cast<std::size_t>(max_len)];
    Eigen::MatrixXd sub(basis_.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      sub.col(static_cast<Eigen::Index>(c)) = basis_.col(cols[c]);
    slot = std::make_unique<
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>>(sub);
  }
  return *slot;
}

Eigen::VectorXd OmegaWorkspace::solve(const Word& word, double tol,
                                      double* residual) const {
  return solve_restricted(word, table_->level(), tol, residual);
}

Eigen::VectorXd OmegaWorkspace::solve_restricted(const Word& word, int max_len,
                                                 double tol,
                                                 double* residual) const {
  if (max_len < 1 || max_len > table_->level())
    throw std::invalid_argument("solve_restricted: bad length cap");
  const Eigen::VectorXd target = table_->bracket_value(word, x_);
  const auto& cols = columns_by_len_[static_cast<std::size_t>(max_len)];
  const Eigen::VectorXd sub_omega = cod_for(max_len).solve(target);

  Eigen::VectorXd omega = Eigen::VectorXd::Zero(table_->n_words());
  for (std::size_t c = 0; c < cols.size(); ++c)
    omega(cols[c]) = sub_omega(static_cast<Eigen::Index>(c));
  const double res = (basis_ * omega - target).norm();
  if (residual) {
    *residual = res;
  } else if (res > tol) {
    throw NumericalError("omega_solve: residual " + std::to_string(res) +
                         " above tolerance for word " + word.str());
  }
  return omega;
}

Eigen::VectorXd omega_solve(const BracketTable& table, const Word& word,
                            const Eigen::VectorXd& x, double tol) {
  return OmegaWorkspace(table, x).solve(word, tol);
}

}  // namespace varlab

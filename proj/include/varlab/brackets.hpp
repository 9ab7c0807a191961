#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "varlab/common.hpp"
#include "varlab/fields.hpp"
#include "varlab/words.hpp"

namespace varlab {

/// Lie bracket [U, W](x) = DW(x) U(x) - DU(x) W(x) for two fields of one
/// system, with jets of order >= 1 available through the dual overloads.
Eigen::VectorXd bracket(const VectorFieldSystem& sys, int i, int j,
                        const Eigen::VectorXd& x);

/// Iterated brackets V_[I] indexed by words: V_[(j)] = V_j and
/// V_[I*j] = [V_[I], V_j]. Entries are not materialized; evaluation
/// differentiates the recursion with nested duals, which also yields the
/// jets of every entry (order |I| - 1 + k must stay within the dual-depth
/// cap, so the table enforces level <= 4).
class BracketTable {
 public:
  BracketTable(std::shared_ptr<const VectorFieldSystem> sys, int level);

  const VectorFieldSystem& system() const { return *sys_; }
  std::shared_ptr<const VectorFieldSystem> system_ptr() const { return sys_; }
  int level() const { return level_; }
  const std::vector<Word>& words() const { return words_; }
  int n_words() const { return static_cast<int>(words_.size()); }
  int index_of(const Word& w) const;

  /// V_[I](x). Words up to length level+1 are allowed (the extended words
  /// feed the coefficient expansions of the transport system).
  template <class S>
  void eval_bracket(const Word& word, std::span<const S> x,
                    std::span<S> out) const;

  Eigen::VectorXd bracket_value(const Word& word,
                                const Eigen::VectorXd& x) const;
  /// Directional derivative D V_[I](x) u.
  Eigen::VectorXd bracket_dderiv(const Word& word, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& u) const;

  /// n x n_words matrix with columns V_[J](x), J in enumeration order.
  Eigen::MatrixXd basis_matrix(const Eigen::VectorXd& x) const;

  /// Smallest eigenvalue of sum_I V_[I](x) V_[I](x)^T.
  double span_eigenvalue(const Eigen::VectorXd& x) const;

 private:
  std::shared_ptr<const VectorFieldSystem> sys_;
  int level_;
  std::vector<Word> words_;
  std::map<std::vector<int>, int> index_;
};

struct HypoCheckResult {
  double lambda_hat = 0.0;
  Eigen::VectorXd argmin;
  /// True when lambda_hat was only certified on a sampled point set.
  bool sampled_only = true;
};

/// Minimum over the sample points of the smallest eigenvalue of the
/// bracket span form. lambda_hat <= 0 is a valid finding (the uniform
/// condition fails on the sample).
HypoCheckResult hypo_check(const BracketTable& table,
                           std::span<const Eigen::VectorXd> points);

/// hypo_check followed by a box-constrained pattern search from the
/// sampled argmin; the polish points count as additional samples, so
/// near-degenerate spots between grid samples are still found.
HypoCheckResult hypo_check_polished(const BracketTable& table,
                                    std::span<const Eigen::VectorXd> points,
                                    double box_lo, double box_hi);

/// Uniform points in the box [lo, hi]^n, counter-seeded.
std::vector<Eigen::VectorXd> sample_box(int n, double lo, double hi,
                                        int trials, std::uint64_t seed);

/// Expands targets V_[I](x) in the bracket basis at one point, reusing
/// orthogonal decompositions across solves.
class OmegaWorkspace {
 public:
  OmegaWorkspace(const BracketTable& table, const Eigen::VectorXd& x);

  /// Minimum-norm least-squares coefficients over A_1(l) for V_[I](x).
  /// If `residual` is null, a residual above tol throws NumericalError.
  Eigen::VectorXd solve(const Word& word, double tol,
                        double* residual = nullptr) const;

  /// Same solve restricted to basis words of length <= max_len; entries
  /// for longer words are zero. Any table word expands exactly within its
  /// own length class.
  Eigen::VectorXd solve_restricted(const Word& word, int max_len, double tol,
                                   double* residual = nullptr) const;

  const Eigen::MatrixXd& basis() const { return basis_; }

 private:
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>& cod_for(
      int max_len) const;

  const BracketTable* table_;
  Eigen::VectorXd x_;
  Eigen::MatrixXd basis_;
  mutable std::vector<std::vector<int>> columns_by_len_;  // [max_len]
  mutable std::vector<
      std::unique_ptr<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>>>
      cod_by_len_;
};

/// One-shot convenience wrapper around OmegaWorkspace.
Eigen::VectorXd omega_solve(const BracketTable& table, const Word& word,
                            const Eigen::VectorXd& x, double tol);

// --- implementation -------------------------------------------------------

namespace detail {

template <class S>
void eval_bracket_rec(const VectorFieldSystem& sys,
                      std::span<const int> letters, std::span<const S> x,
                      std::span<S> out) {
  const std::size_t n = x.size();
  if (letters.size() == 1) {
    sys.eval(letters[0], x, out);
    return;
  }
  if constexpr (dual_depth_v<S> + 1 > kMaxDualDepth) {
    throw NumericalError("bracket evaluation exceeds the dual-depth cap");
  } else {
    const auto prefix = letters.first(letters.size() - 1);
    const int last = letters.back();

    std::vector<S> u(n), w(n);
    eval_bracket_rec(sys, prefix, x, std::span<S>(u));
    sys.eval(last, x, std::span<S>(w));

    using D = Dual<S>;
    std::vector<D> xl(n), tmp(n);
    // DV_last(x) u
    for (std::size_t k = 0; k < n; ++k) xl[k] = D(x[k], u[k]);
    sys.eval(last, std::span<const D>(xl), std::span<D>(tmp));
    for (std::size_t k = 0; k < n; ++k) out[k] = tmp[k].d;
    // - DV_[prefix](x) w
    for (std::size_t k = 0; k < n; ++k) xl[k] = D(x[k], w[k]);
    eval_bracket_rec(sys, prefix, std::span<const D>(xl), std::span<D>(tmp));
    for (std::size_t k = 0; k < n; ++k) out[k] = out[k] - tmp[k].d;
  }
}

}  // namespace detail

template <class S>
void BracketTable::eval_bracket(const Word& word, std::span<const S> x,
                                std::span<S> out) const {
  if (word.length() < 1)
    throw std::invalid_argument("eval_bracket: empty word");
  if (word.length() > level_ + 1)
    throw std::invalid_argument("eval_bracket: word longer than level+1");
  if (word.length() - 1 + dual_depth_v<S> > kMaxDualDepth)
    throw NumericalError("eval_bracket: dual depth exhausted");
  detail::eval_bracket_rec(*sys_, std::span<const int>(word.letters), x, out);
}

}  // namespace varlab

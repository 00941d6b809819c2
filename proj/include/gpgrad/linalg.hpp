#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/SparseCholesky>

#include "gpgrad/errors.hpp"
#include "gpgrad/types.hpp"

namespace gpgrad {

/// Weighted sum of sparse symmetric matrices, applied matrix-free.
/// Referenced matrices must outlive the operator unless ownership is handed
/// over through add_owned.
class LinearOperator {
 public:
  LinearOperator() = default;

  LinearOperator& add_term(double weight, const SpMat& m) {
    terms_.emplace_back(weight, &m);
    return *this;
  }
  LinearOperator& add_owned(double weight, SpMat m) {
    owned_.push_back(std::make_shared<SpMat>(std::move(m)));
    terms_.emplace_back(weight, owned_.back().get());
    return *this;
  }

  Index rows() const { return terms_.empty() ? 0 : terms_.front().second->rows(); }

  Vec apply(const Vec& x) const {
    Vec y = Vec::Zero(x.size());
    for (const auto& [w, m] : terms_) y.noalias() += w * (*m * x);
    return y;
  }
  Vec operator*(const Vec& x) const { return apply(x); }

  Vec diagonal() const {
    Vec d = Vec::Zero(rows());
    for (const auto& [w, m] : terms_) d += w * m->diagonal();
    return d;
  }

  /// Explicit weighted sum, for factorization-based preconditioners.
  SpMat materialize() const;

 private:
  std::vector<std::pair<double, const SpMat*>> terms_;
  std::vector<std::shared_ptr<SpMat>> owned_;
};

using Preconditioner = std::function<Vec(const Vec&)>;
using Projector = std::function<void(Vec&)>;

Preconditioner identity_preconditioner();
Preconditioner jacobi_preconditioner(const LinearOperator& A);
Preconditioner ic0_preconditioner(const SpMat& A);

/// Sparse LDL^T factorization (exact solve); also usable as preconditioner.
class DirectFactor {
 public:
  explicit DirectFactor(const SpMat& A);
  Vec solve(const Vec& b) const;
  Preconditioner as_preconditioner() const;

 private:
  std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
};

struct SolveOptions {
  double tol = 1e-12;  // relative residual
  int max_iters = 25000;
};

struct SolveStats {
  int iterations = 0;
  double relres = 0.0;
};

/// Preconditioned conjugate gradients for SPD operators. When a projector is
/// given, the iteration is confined to its range (the operator only needs to
/// be SPD there). Throws SolveError with the achieved residual when the
/// iteration cap is reached.
Vec solve_spd(const LinearOperator& A, const Vec& b, const SolveOptions& opts,
              const Preconditioner& precond, SolveStats* stats = nullptr,
              const Projector& project = nullptr);

/// Loose inner solve wrapped as a preconditioner (never throws).
Preconditioner inexact_solve_preconditioner(const LinearOperator& A, double tol, int max_iters,
                                            const Preconditioner& inner,
                                            const Projector& project = nullptr);

/// Vectors y_j together with the metric B define the admissible subspace
/// { x : x' B y_j = 0 }. project() removes the y-components in the B-metric.
class ConstraintSet {
 public:
  ConstraintSet() = default;
  ConstraintSet(std::vector<Vec> vectors, const SpMat& metric);

  bool empty() const { return vectors_.empty(); }
  int count() const { return static_cast<int>(vectors_.size()); }
  void project(Vec& x) const;
  void project(Mat& X) const;
  /// Transposed projector: removes the span of the constraint functionals
  /// B y_j from a residual, leaving the part that acts on the admissible
  /// subspace (the raw residual of a constrained eigenpair carries a
  /// Lagrange-multiplier component that must not count towards convergence).
  void project_dual(Vec& r) const;
  Projector projector() const;
  double defect(const Vec& x) const;  // max_j |x' B y_j|

 private:
  std::vector<Vec> vectors_;
  Mat Y_;               // columns y_j
  Mat metric_vectors_;  // columns B y_j
  Eigen::LDLT<Mat> gram_;
};

struct EigOptions {
  double tol = 1e-9;      // residual ||A x - theta B x|| <= tol ||B x||
  int max_iters = 400;
  int block_extra = -1;   // auto
  std::uint64_t seed = 0x9e3779b97f4a7c15ull;
  Preconditioner precond;  // approximate A^-1; Jacobi when unset
};

struct EigResult {
  std::vector<double> values;
  Mat vectors;  // B-orthonormal columns
  std::vector<double> residuals;
  int iterations = 0;
  int converged = 0;
};

/// k smallest eigenpairs of A x = theta B x restricted to the B-orthogonal
/// complement of the constraint vectors. A must be symmetric (and positive on
/// the admissible subspace is not required), B symmetric positive definite.
/// Locally optimal block preconditioned CG with hard constraint deflation.
EigResult smallest_eigenpairs(const LinearOperator& A, const LinearOperator& B, int k,
                              const ConstraintSet& constraints, const EigOptions& opts = {});

}  // namespace gpgrad

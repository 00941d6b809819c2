#include "gpgrad/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <Eigen/IterativeLinearSolvers>

namespace gpgrad {

namespace {

// Deterministic, platform-independent pseudo-random stream.
struct SplitMix64 {
  std::uint64_t s;
  explicit SplitMix64(std::uint64_t seed) : s(seed) {}
  double symmetric_unit() {
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return 2.0 * ((z >> 11) * 0x1.0p-53) - 1.0;
  }
};

Mat apply_block(const LinearOperator& op, const Mat& X) {
  Mat Y(X.rows(), X.cols());
  for (Index j = 0; j < X.cols(); ++j) Y.col(j) = op.apply(X.col(j));
  return Y;
}

// B-orthonormalizes X in place, dropping near-dependent columns. BX is kept
// consistent through the same linear transform. A Cholesky transform is
// preferred: it is close to the identity for an already-orthonormal block and
// therefore does not remix degenerate Ritz directions. The SVQB-style
// eigen transform only serves as rank-revealing fallback.
void b_orthonormalize(Mat& X, Mat& BX, double droptol = 1e-13) {
  if (X.cols() == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    Mat G = X.transpose() * BX;
    G = 0.5 * (G + G.transpose()).eval();
    const Eigen::LLT<Mat> llt(G);
    if (llt.info() == Eigen::Success) {
      const Mat L = llt.matrixL();
      bool healthy = true;
      const double dmax = L.diagonal().maxCoeff();
      for (Index i = 0; i < L.rows(); ++i)
        healthy = healthy && L(i, i) > 1e-7 * dmax;
      if (healthy) {
        const Mat Tinv =
            L.transpose().triangularView<Eigen::Upper>().solve(Mat::Identity(G.rows(), G.rows()));
        X = (X * Tinv).eval();
        BX = (BX * Tinv).eval();
        if (pass == 0 && (G - Mat::Identity(G.rows(), G.rows())).cwiseAbs().maxCoeff() > 1e-8)
          continue;  // one more pass tightens the orthogonality
        return;
      }
    }
    // Rank-deficient block: rebuild from the Gram eigendecomposition.
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    const Vec& ev = es.eigenvalues();
    const double cutoff = std::max(ev.cwiseAbs().maxCoeff(), 1e-300) * droptol;
    int keep = 0;
    for (Index i = 0; i < ev.size(); ++i)
      if (ev[i] > cutoff) ++keep;
    Mat T(ev.size(), keep);
    int c = 0;
    for (Index i = 0; i < ev.size(); ++i) {
      if (ev[i] > cutoff) T.col(c++) = es.eigenvectors().col(i) / std::sqrt(ev[i]);
    }
    X = (X * T).eval();
    BX = (BX * T).eval();
  }
}

// Removes the B-orthogonal projection of W onto the B-orthonormal block X.
void b_orthogonalize_against(Mat& W, Mat& BW, const Mat& X, const Mat& BX) {
  if (X.cols() == 0 || W.cols() == 0) return;
  const Mat C = BX.transpose() * W;
  W.noalias() -= X * C;
  BW.noalias() -= BX * C;
}

}  // namespace

SpMat LinearOperator::materialize() const {
  if (terms_.empty()) return SpMat();
  SpMat out = terms_.front().first * (*terms_.front().second);
  for (size_t i = 1; i < terms_.size(); ++i) out += terms_[i].first * (*terms_[i].second);
  return out;
}

Preconditioner identity_preconditioner() {
  return [](const Vec& r) { return r; };
}

Preconditioner jacobi_preconditioner(const LinearOperator& A) {
  Vec d = A.diagonal();
  for (Index i = 0; i < d.size(); ++i) d[i] = (std::abs(d[i]) > 1e-300) ? 1.0 / d[i] : 1.0;
  return [d](const Vec& r) { return (d.array() * r.array()).matrix().eval(); };
}

Preconditioner ic0_preconditioner(const SpMat& A) {
  using IC = Eigen::IncompleteCholesky<double, Eigen::Lower, Eigen::AMDOrdering<int>>;
  auto ic = std::make_shared<IC>();
  Eigen::SparseMatrix<double> Ac = A;
  ic->compute(Ac);
  if (ic->info() != Eigen::Success)
    throw Error("ic0_preconditioner: incomplete factorization failed");
  return [ic](const Vec& r) { return ic->solve(r).eval(); };
}

DirectFactor::DirectFactor(const SpMat& A)
    : ldlt_(std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>()) {
  Eigen::SparseMatrix<double> Ac = A;  // column-major copy
  ldlt_->compute(Ac);
  if (ldlt_->info() != Eigen::Success)
    throw Error("DirectFactor: sparse LDL^T factorization failed");
}

Vec DirectFactor::solve(const Vec& b) const { return ldlt_->solve(b); }

Preconditioner DirectFactor::as_preconditioner() const {
  auto f = ldlt_;
  return [f](const Vec& r) { return f->solve(r).eval(); };
}

namespace {

struct PcgOutcome {
  Vec x;
  double relres = 0.0;
  int iterations = 0;
  bool converged = false;
};

PcgOutcome pcg(const LinearOperator& A, const Vec& b, double tol, int max_iters,
               const Preconditioner& precond, const Projector& project) {
  PcgOutcome out;
  Vec r = b;
  if (project) project(r);
  const double bnorm = r.norm();
  out.x = Vec::Zero(b.size());
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }

  auto apply_projected = [&](const Vec& v) {
    Vec y = A.apply(v);
    if (project) project(y);
    return y;
  };
  auto precondition = [&](const Vec& v) {
    Vec z = precond ? precond(v) : v;
    if (project) project(z);
    return z;
  };

  int restarts = 0;
  Vec z = precondition(r);
  Vec p = z;
  double rz = r.dot(z);
  double best_res = r.norm();
  Vec best_x = out.x;

  for (int it = 0; it < max_iters; ++it) {
    const Vec q = apply_projected(p);
    const double pq = p.dot(q);
    if (!(pq > 0.0)) break;  // lost positive definiteness (roundoff); keep best
    const double alpha = rz / pq;
    out.x += alpha * p;
    r -= alpha * q;
    out.iterations = it + 1;
    const double rn = r.norm();
    if (rn < best_res) {
      best_res = rn;
      best_x = out.x;
    }
    if (rn <= tol * bnorm) {
      // Recurrence says converged; confirm against the true residual.
      Vec rt = b - A.apply(out.x);
      if (project) project(rt);
      const double rtn = rt.norm();
      if (rtn <= tol * bnorm * 1.25 || restarts >= 3) {
        out.relres = rtn / bnorm;
        out.converged = true;
        return out;
      }
      ++restarts;
      r = rt;
      z = precondition(r);
      p = z;
      rz = r.dot(z);
      continue;
    }
    const Vec znew = precondition(r);
    const double rznew = r.dot(znew);
    p = znew + (rznew / rz) * p;
    z = znew;
    rz = rznew;
  }
  out.x = best_x;
  out.relres = best_res / bnorm;
  out.converged = out.relres <= tol;
  return out;
}

}  // namespace

Vec solve_spd(const LinearOperator& A, const Vec& b, const SolveOptions& opts,
              const Preconditioner& precond, SolveStats* stats, const Projector& project) {
  PcgOutcome out = pcg(A, b, opts.tol, opts.max_iters, precond, project);
  if (stats) {
    stats->iterations = out.iterations;
    stats->relres = out.relres;
  }
  if (!out.converged)
    throw SolveError("solve_spd: cg stalled at relative residual " + std::to_string(out.relres),
                     std::move(out.x), out.relres, out.iterations);
  return std::move(out.x);
}

Preconditioner inexact_solve_preconditioner(const LinearOperator& A, double tol, int max_iters,
                                            const Preconditioner& inner, const Projector& project) {
  return [A, tol, max_iters, inner, project](const Vec& r) {
    return pcg(A, r, tol, max_iters, inner, project).x;
  };
}

ConstraintSet::ConstraintSet(std::vector<Vec> vectors, const SpMat& metric) {
  if (vectors.empty()) return;
  const Index n = vectors.front().size();
  Mat Y(n, static_cast<Index>(vectors.size()));
  metric_vectors_.resize(n, Y.cols());
  for (Index j = 0; j < Y.cols(); ++j) {
    Y.col(j) = vectors[static_cast<size_t>(j)];
    metric_vectors_.col(j) = metric * Y.col(j);
  }
  Mat G = Y.transpose() * metric_vectors_;
  G = 0.5 * (G + G.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (!(emin > 0.0) || emax / emin >= 1e12)
    throw ConstraintError("ConstraintSet: constraint vectors are (nearly) dependent");
  gram_.compute(G);
  Y_ = Y;
  vectors_.resize(static_cast<size_t>(Y.cols()));
  for (Index j = 0; j < Y.cols(); ++j) vectors_[static_cast<size_t>(j)] = Y.col(j);
}

void ConstraintSet::project(Vec& x) const {
  if (vectors_.empty()) return;
  Vec beta = gram_.solve(metric_vectors_.transpose() * x);
  for (size_t j = 0; j < vectors_.size(); ++j) x -= beta[static_cast<Index>(j)] * vectors_[j];
}

void ConstraintSet::project(Mat& X) const {
  if (vectors_.empty()) return;
  for (Index j = 0; j < X.cols(); ++j) {
    Vec col = X.col(j);
    project(col);
    X.col(j) = col;
  }
}

void ConstraintSet::project_dual(Vec& r) const {
  if (vectors_.empty()) return;
  r.noalias() -= metric_vectors_ * gram_.solve(Y_.transpose() * r);
}

Projector ConstraintSet::projector() const {
  if (vectors_.empty()) return nullptr;
  return [this](Vec& x) { project(x); };
}

double ConstraintSet::defect(const Vec& x) const {
  if (vectors_.empty()) return 0.0;
  return (metric_vectors_.transpose() * x).cwiseAbs().maxCoeff();
}

EigResult smallest_eigenpairs(const LinearOperator& A, const LinearOperator& B, int k,
                              const ConstraintSet& constraints, const EigOptions& opts) {
  const Index n = B.rows();
  if (k < 1) throw Error("smallest_eigenpairs: k must be >= 1");
  const int nc = constraints.count();
  if (static_cast<Index>(k) + nc > n)
    throw ConstraintError("smallest_eigenpairs: k plus constraint count exceeds dimension");

  const int extra = opts.block_extra >= 0 ? opts.block_extra : std::min(k, 8) + 2;
  const Index m = std::min<Index>(k + extra, n - nc);

  const Preconditioner precond = opts.precond ? opts.precond : jacobi_preconditioner(A);

  // Deterministic start block.
  SplitMix64 rng(opts.seed);
  Mat X(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) X(i, j) = rng.symmetric_unit();
  constraints.project(X);
  Mat BX = apply_block(B, X);
  b_orthonormalize(X, BX);

  Mat P(n, 0), BP(n, 0), AP(n, 0);
  Vec theta;
  EigResult result;

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    result.iterations = iter;
    Mat AX = apply_block(A, X);
    Mat G = X.transpose() * AX;
    G = 0.5 * (G + G.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> rr(G);
    // Rotate X into Ritz vectors so residuals refer to eigenpair estimates.
    X = (X * rr.eigenvectors()).eval();
    AX = (AX * rr.eigenvectors()).eval();
    BX = (BX * rr.eigenvectors()).eval();
    theta = rr.eigenvalues();

    Mat R = AX - BX * theta.asDiagonal();
    if (!constraints.empty()) {
      // Drop the Lagrange-multiplier part; only the admissible component of
      // the residual is meaningful for a constrained pencil.
      for (Index j = 0; j < R.cols(); ++j) {
        Vec col = R.col(j);
        constraints.project_dual(col);
        R.col(j) = col;
      }
    }
    int converged = 0;
    result.residuals.assign(static_cast<size_t>(std::min<Index>(k, X.cols())), 0.0);
    for (Index j = 0; j < std::min<Index>(k, X.cols()); ++j) {
      const double res = R.col(j).norm() / std::max(BX.col(j).norm(), 1e-300);
      result.residuals[static_cast<size_t>(j)] = res;
      if (res <= opts.tol) ++converged;
    }
    result.converged = converged;
#ifdef GPGRAD_EIG_DEBUG
    std::printf("[eig] it %d conv %d\n  theta:", iter, converged);
    for (Index j = 0; j < theta.size(); ++j) std::printf(" %.9g", theta[j]);
    std::printf("\n  res:");
    for (double r : result.residuals) std::printf(" %.2e", r);
    std::printf("\n  |Bx|:");
    for (Index j = 0; j < std::min<Index>(k, X.cols()); ++j)
      std::printf(" %.2e", BX.col(j).norm());
    std::printf("\n");
#endif
    if (converged >= std::min<Index>(k, X.cols()) || iter == opts.max_iters) break;

    Mat W(n, X.cols());
    for (Index j = 0; j < X.cols(); ++j) {
      Vec w = precond(R.col(j));
      W.col(j) = w;
    }
    constraints.project(W);
    Mat BW = apply_block(B, W);
    b_orthogonalize_against(W, BW, X, BX);
    if (P.cols() > 0) b_orthogonalize_against(W, BW, P, BP);
    b_orthonormalize(W, BW);

    // Assemble the trial basis [X W P]; blocks are mutually B-orthonormal.
    const Index mw = W.cols();
    const Index mp = P.cols();
    Mat S(n, X.cols() + mw + mp), AS(n, X.cols() + mw + mp), BS(n, X.cols() + mw + mp);
    S << X, W, P;
    Mat AW = apply_block(A, W);
    AS.leftCols(X.cols()) = AX;
    AS.middleCols(X.cols(), mw) = AW;
    if (mp > 0) AS.rightCols(mp) = AP;
    BS.leftCols(X.cols()) = BX;
    BS.middleCols(X.cols(), mw) = BW;
    if (mp > 0) BS.rightCols(mp) = BP;

    Mat GA = S.transpose() * AS;
    GA = 0.5 * (GA + GA.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(GA);
    const Index mnew = std::min<Index>(m, S.cols());
    const Mat C = es.eigenvectors().leftCols(mnew);

    Mat Cwp = C;
    Cwp.topRows(X.cols()).setZero();

    X = (S * C).eval();
    BX = (BS * C).eval();
    P = (S * Cwp).eval();
    BP = (BS * Cwp).eval();
    // Keep the blocks mutually B-orthonormal; the Rayleigh-Ritz step above
    // assumes an orthonormal trial basis.
    b_orthonormalize(X, BX);
    b_orthogonalize_against(P, BP, X, BX);
    b_orthonormalize(P, BP);
    AP = apply_block(A, P);
  }

  const Index kept = std::min<Index>(k, X.cols());
  result.values.assign(theta.data(), theta.data() + kept);
  result.vectors = X.leftCols(kept);
  if (result.converged < kept)
    throw EigenError("smallest_eigenpairs: only " + std::to_string(result.converged) + " of " +
                         std::to_string(k) + " pairs converged",
                     result.converged);
  return result;
}

}  // namespace gpgrad

#pragma once

// Method of Moving Asymptotes (Svanberg 1987) for box-bounded problems with
// a small number of inequality constraints.
//
// Each step builds the separable convex approximation
//
//   min  sum_j [ p0_j/(U_j - x_j) + q0_j/(x_j - L_j) ]
//   s.t. sum_j [ P_ij/(U_j - x_j) + Q_ij/(x_j - L_j) ] <= b_i,
//        alpha <= x <= beta,
//
// and solves its dual exactly: x(lambda) is available in closed form per
// variable, and the concave dual is maximized over lambda >= 0 by a damped
// Newton method with a logarithmic barrier driven to 1e-12.  Constraint
// slack carries a linear penalty (constraint_penalty) so the subproblem is
// always feasible.  Everything is deterministic double arithmetic.

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace topomulti {

struct MmaOptions {
  double asyinit = 0.5;   // initial asymptote offset, in units of the box span
  double asyincr = 1.2;   // expansion factor when iterates keep direction
  double asydecr = 0.7;   // contraction factor when iterates oscillate
  double albefa = 0.1;    // keeps x away from the asymptotes
  double move = 0.5;      // move limit, in units of the box span
  double raa0 = 1e-5;     // baseline curvature of the approximations
  double constraint_penalty = 1000.0;  // linear cost on constraint slack
  double epsimin = 1e-12;              // final dual barrier parameter

  bool operator==(const MmaOptions&) const = default;
};

class MmaSolver {
 public:
  // Keeps asymptotes strictly off the iterate without pinning the
  // oscillation damping: a large floor would freeze the zigzag amplitude on
  // problems whose optimum is interior (vanishing gradient).
  static constexpr double kMinAsymptoteOffset = 1e-12;


  MmaSolver(const Eigen::VectorXd& x0, Eigen::VectorXd lower, Eigen::VectorXd upper,
            int num_constraints, MmaOptions opts = {})
      : opts_(opts),
        n_(static_cast<int>(x0.size())),
        m_(num_constraints),
        lb_(std::move(lower)),
        ub_(std::move(upper)) {
    if (lb_.size() != n_ || ub_.size() != n_)
      throw std::invalid_argument("MmaSolver: bound sizes do not match x0");
    if (m_ < 0) throw std::invalid_argument("MmaSolver: negative constraint count");
    for (int j = 0; j < n_; ++j) {
      if (!(lb_[j] <= ub_[j])) throw std::invalid_argument("MmaSolver: lower bound exceeds upper bound");
      if (x0[j] < lb_[j] || x0[j] > ub_[j])
        throw std::invalid_argument("MmaSolver: x0 outside bounds");
    }
    span_ = (ub_ - lb_).array().max(1e-5).matrix();
    xold1_ = x0;
    xold2_ = x0;
    low_ = x0 - opts_.asyinit * span_;
    upp_ = x0 + opts_.asyinit * span_;
  }

  int num_variables() const { return n_; }
  int num_constraints() const { return m_; }
  int iteration() const { return iter_; }
  const Eigen::VectorXd& lower_asymptote() const { return low_; }
  const Eigen::VectorXd& upper_asymptote() const { return upp_; }
  double last_kkt_residual() const { return kkt_residual_; }

  /// One outer iteration.  g holds the constraint values (feasible when
  /// g_i <= 0), dg their gradients as an m x n matrix.  f0 is accepted for
  /// interface symmetry; the approximation only needs its gradient.
  Eigen::VectorXd step(const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& df0,
                       const Eigen::VectorXd& g, const Eigen::MatrixXd& dg) {
    (void)f0;
    if (x.size() != n_ || df0.size() != n_)
      throw std::invalid_argument("MmaSolver::step: size mismatch in x or df0");
    if (g.size() != m_ || dg.rows() != m_ || (m_ > 0 && dg.cols() != n_))
      throw std::invalid_argument("MmaSolver::step: size mismatch in constraints");
    if (!df0.allFinite() || !g.allFinite() || !dg.allFinite())
      throw std::invalid_argument("MmaSolver::step: non-finite input");
    ++iter_;

    update_asymptotes(x);

    const Eigen::ArrayXd xa = x.array();
    const Eigen::ArrayXd spa = span_.array();
    Eigen::ArrayXd alpha = lb_.array().max(low_.array() + opts_.albefa * (xa - low_.array()))
                               .max(xa - opts_.move * spa);
    Eigen::ArrayXd beta = ub_.array().min(upp_.array() - opts_.albefa * (upp_.array() - xa))
                              .min(xa + opts_.move * spa);
    alpha = alpha.min(beta);  // degenerate boxes collapse to a point

    const Eigen::ArrayXd ux = upp_.array() - xa;
    const Eigen::ArrayXd xl = xa - low_.array();
    const Eigen::ArrayXd ux2 = ux * ux;
    const Eigen::ArrayXd xl2 = xl * xl;

    const Eigen::ArrayXd df = df0.array();
    const Eigen::ArrayXd base = opts_.raa0 / spa;

    // Secant estimate of the objective's diagonal curvature.  Folding it into
    // the approximation keeps the subproblem at least as curved as the
    // objective near interior optima, where the gradient-proportional terms
    // alone vanish and would let the iterates overshoot.
    Eigen::ArrayXd extra = Eigen::ArrayXd::Zero(n_);
    if (iter_ >= 2) {
      for (int j = 0; j < n_; ++j) {
        const double dx = x[j] - xold1_[j];
        if (std::abs(dx) > 1e-13 * span_[j]) {
          const double h = (df0[j] - grad_prev_[j]) / dx;
          if (h > 0.0) extra[j] = std::min(h, 1e12) * ux[j] * xl[j] / (2.0 * (ux[j] + xl[j]));
        }
      }
    }
    grad_prev_ = df0;

    Eigen::ArrayXd p0 = (df.max(0.0) + 0.001 * df.abs() + base + extra) * ux2;
    Eigen::ArrayXd q0 = ((-df).max(0.0) + 0.001 * df.abs() + base + extra) * xl2;

    // P, Q stored n x m so per-constraint columns are contiguous.
    Eigen::MatrixXd P(n_, m_), Q(n_, m_);
    Eigen::VectorXd b(m_);
    for (int i = 0; i < m_; ++i) {
      const Eigen::ArrayXd dgi = dg.row(i).transpose().array();
      P.col(i) = ((dgi.max(0.0) + 0.001 * dgi.abs() + base) * ux2).matrix();
      Q.col(i) = (((-dgi).max(0.0) + 0.001 * dgi.abs() + base) * xl2).matrix();
      b[i] = (P.col(i).array() / ux + Q.col(i).array() / xl).sum() - g[i];
    }

    Eigen::VectorXd xnew = solve_dual(p0, q0, P, Q, b, alpha, beta);

    xold2_ = xold1_;
    xold1_ = x;
    return xnew;
  }

 private:
  void update_asymptotes(const Eigen::VectorXd& x) {
    if (iter_ <= 2) {
      low_ = x - opts_.asyinit * span_;
      upp_ = x + opts_.asyinit * span_;
      return;
    }
    for (int j = 0; j < n_; ++j) {
      const double zz = (x[j] - xold1_[j]) * (xold1_[j] - xold2_[j]);
      const double fac = zz > 0.0 ? opts_.asyincr : (zz < 0.0 ? opts_.asydecr : 1.0);
      double lo = x[j] - fac * (xold1_[j] - low_[j]);
      double up = x[j] + fac * (upp_[j] - xold1_[j]);
      lo = std::max(lo, x[j] - 10.0 * span_[j]);
      lo = std::min(lo, x[j] - kMinAsymptoteOffset * span_[j]);
      up = std::min(up, x[j] + 10.0 * span_[j]);
      up = std::max(up, x[j] + kMinAsymptoteOffset * span_[j]);
      low_[j] = lo;
      upp_[j] = up;
    }
  }

  // Per-variable minimizer of (pt/(U-x) + qt/(x-L)) clamped to [alpha, beta].
  static void primal_from_dual(const Eigen::ArrayXd& pt, const Eigen::ArrayXd& qt,
                               const Eigen::ArrayXd& low, const Eigen::ArrayXd& upp,
                               const Eigen::ArrayXd& alpha, const Eigen::ArrayXd& beta,
                               Eigen::ArrayXd& x) {
    const Eigen::ArrayXd sp = pt.sqrt();
    const Eigen::ArrayXd sq = qt.sqrt();
    x = ((sp * low + sq * upp) / (sp + sq)).max(alpha).min(beta);
  }

  Eigen::VectorXd solve_dual(const Eigen::ArrayXd& p0, const Eigen::ArrayXd& q0,
                             const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q,
                             const Eigen::VectorXd& b, const Eigen::ArrayXd& alpha,
                             const Eigen::ArrayXd& beta) {
    Eigen::ArrayXd x(n_), ux(n_), xl(n_);
    if (m_ == 0) {
      primal_from_dual(p0, q0, low_.array(), upp_.array(), alpha, beta, x);
      kkt_residual_ = 0.0;
      return x.matrix();
    }

    Eigen::VectorXd lam = Eigen::VectorXd::Ones(m_);
    Eigen::ArrayXd pt(n_), qt(n_);
    Eigen::VectorXd w(m_), r(m_);

    auto eval_dual_gradient = [&](const Eigen::VectorXd& l, Eigen::VectorXd& grad) {
      pt = p0 + (P * l).array();
      qt = q0 + (Q * l).array();
      primal_from_dual(pt, qt, low_.array(), upp_.array(), alpha, beta, x);
      ux = upp_.array() - x;
      xl = x - low_.array();
      for (int i = 0; i < m_; ++i) {
        const double y = std::max(0.0, l[i] - opts_.constraint_penalty);
        grad[i] = (P.col(i).array() / ux + Q.col(i).array() / xl).sum() - b[i] - y;
      }
    };

    for (double eps = 1.0; eps >= opts_.epsimin; eps *= 0.1) {
      for (int inner = 0; inner < 200; ++inner) {
        eval_dual_gradient(lam, w);
        for (int i = 0; i < m_; ++i) r[i] = w[i] + eps / lam[i];
        if (r.lpNorm<Eigen::Infinity>() < 0.9 * eps) break;

        // Newton direction on the barrier-augmented dual.
        Eigen::MatrixXd G(n_, m_);
        for (int i = 0; i < m_; ++i)
          G.col(i) = (P.col(i).array() / (ux * ux) - Q.col(i).array() / (xl * xl)).matrix();
        const Eigen::ArrayXd interior =
            ((x > alpha) && (x < beta)).cast<double>();
        const Eigen::ArrayXd denom = 2.0 * pt / (ux * ux * ux) + 2.0 * qt / (xl * xl * xl);
        const Eigen::ArrayXd scale = interior / denom;
        Eigen::MatrixXd H = G.transpose() * scale.matrix().asDiagonal() * G;
        for (int i = 0; i < m_; ++i) {
          H(i, i) += eps / (lam[i] * lam[i]);
          if (lam[i] > opts_.constraint_penalty) H(i, i) += 1.0;
          H(i, i) += 1e-12;
        }
        Eigen::VectorXd dlam = H.ldlt().solve(r);

        double t = 1.0;
        for (int i = 0; i < m_; ++i)
          if (dlam[i] < 0.0) t = std::min(t, -0.99 * lam[i] / dlam[i]);
        const double r0 = r.lpNorm<Eigen::Infinity>();
        Eigen::VectorXd trial(m_), wt(m_);
        for (int back = 0; back < 40; ++back) {
          trial = lam + t * dlam;
          eval_dual_gradient(trial, wt);
          double rt = 0.0;
          for (int i = 0; i < m_; ++i) rt = std::max(rt, std::abs(wt[i] + eps / trial[i]));
          if (rt < r0 || t < 1e-12) break;
          t *= 0.5;
        }
        lam = lam + t * dlam;
      }
    }

    eval_dual_gradient(lam, w);
    double kkt = 0.0;
    for (int i = 0; i < m_; ++i) {
      kkt = std::max(kkt, std::max(w[i], 0.0));       // subproblem feasibility
      kkt = std::max(kkt, std::abs(lam[i] * w[i]));   // complementarity
    }
    kkt_residual_ = kkt;
    return x.matrix();
  }

  MmaOptions opts_;
  int n_ = 0, m_ = 0;
  int iter_ = 0;
  Eigen::VectorXd lb_, ub_, span_;
  Eigen::VectorXd xold1_, xold2_;
  Eigen::VectorXd grad_prev_;
  Eigen::VectorXd low_, upp_;
  double kkt_residual_ = 0.0;
};

}  // namespace topomulti

#pragma once

// Regularization chain: neighborhood sensitivity averaging, a Helmholtz-type
// density filter on the element grid, and the tanh projection with its
// doubling continuation schedule.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cassert>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "topomulti/fem.hpp"

namespace topomulti {

enum class FilterKind { sensitivity, pde };

/// Unweighted mean over the elements whose center distance is at most R.
/// Neighborhoods are clipped at the domain boundary, so constants pass
/// through unchanged and each row of the operator sums to one.
class SensitivityFilter {
 public:
  SensitivityFilter(const StructuredGrid& grid, double radius)
      : nelx_(grid.nelx), nely_(grid.nely) {
    if (!(radius > 0.0)) throw std::invalid_argument("SensitivityFilter: radius must be positive");
    const double r = radius / grid.elem_size;  // in element widths
    const int reach = static_cast<int>(std::floor(r));
    for (int dx = -reach; dx <= reach; ++dx)
      for (int dy = -reach; dy <= reach; ++dy)
        if (static_cast<double>(dx) * dx + static_cast<double>(dy) * dy <= r * r)
          offsets_.emplace_back(dx, dy);
  }

  void apply(std::span<const double> in, std::span<double> out) const {
    assert(static_cast<int>(in.size()) == nelx_ * nely_ && in.size() == out.size());
    for (int ex = 0; ex < nelx_; ++ex)
      for (int ey = 0; ey < nely_; ++ey) {
        double sum = 0.0;
        int count = 0;
        for (auto [dx, dy] : offsets_) {
          const int jx = ex + dx, jy = ey + dy;
          if (jx < 0 || jx >= nelx_ || jy < 0 || jy >= nely_) continue;
          sum += in[jx * nely_ + jy];
          ++count;
        }
        out[ex * nely_ + ey] = sum / count;
      }
  }

  int neighborhood_size() const { return static_cast<int>(offsets_.size()); }

 private:
  int nelx_, nely_;
  std::vector<std::pair<int, int>> offsets_;
};

/// Classic density-weighted conic filter (experimental comparison variant):
/// out_e = sum_j w_ej g_j s_j / (max(g_e, 1e-3) sum_j w_ej), w = max(0, R - d).
class WeightedSensitivityFilter {
 public:
  WeightedSensitivityFilter(const StructuredGrid& grid, double radius)
      : nelx_(grid.nelx), nely_(grid.nely) {
    const double r = radius / grid.elem_size;
    const int reach = static_cast<int>(std::floor(r));
    for (int dx = -reach; dx <= reach; ++dx)
      for (int dy = -reach; dy <= reach; ++dy) {
        const double w = r - std::sqrt(double(dx) * dx + double(dy) * dy);
        if (w > 0.0) offsets_.push_back({dx, dy, w});
      }
  }
  void apply(std::span<const double> gamma, std::span<const double> in,
             std::span<double> out) const {
    for (int ex = 0; ex < nelx_; ++ex)
      for (int ey = 0; ey < nely_; ++ey) {
        double sum = 0.0, wsum = 0.0;
        for (const auto& o : offsets_) {
          const int jx = ex + o.dx, jy = ey + o.dy;
          if (jx < 0 || jx >= nelx_ || jy < 0 || jy >= nely_) continue;
          const int j = jx * nely_ + jy;
          sum += o.w * gamma[j] * in[j];
          wsum += o.w;
        }
        const int e = ex * nely_ + ey;
        out[e] = sum / (std::max(gamma[e], 1e-3) * wsum);
      }
  }
 private:
  struct Offset { int dx, dy; double w; };
  int nelx_, nely_;
  std::vector<Offset> offsets_;
};

inline std::vector<double> sensitivity_filter(const StructuredGrid& grid, double radius,
                                              std::span<const double> field) {
  std::vector<double> out(field.size());
  SensitivityFilter(grid, radius).apply(field, out);
  return out;
}

/// Density filter -R_min^2 lap(x) + x = g with homogeneous Neumann boundary,
/// discretized by finite volumes on the element-center grid:
///   A = R_min^2 K_L + M,  A x = M g,
/// with K_L the five-point Neumann Laplacian (unit edge conductance on a
/// square grid) and M the lumped cell mass r_e^2 I.  K_L annihilates
/// constants, so the M-weighted mean of the field is preserved exactly.
/// One factorization is reused for every apply/chain call; since M is a
/// scalar matrix here the forward map and its transpose coincide.
class HelmholtzFilter {
 public:
  HelmholtzFilter(const StructuredGrid& grid, double rmin)
      : nelx_(grid.nelx), nely_(grid.nely), mass_(grid.elem_size * grid.elem_size) {
    if (!(rmin > 0.0)) throw std::invalid_argument("HelmholtzFilter: rmin must be positive");
    const int ne = grid.num_elements();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(ne) * 5);
    const double r2 = rmin * rmin;
    auto id = [this](int ex, int ey) { return ex * nely_ + ey; };
    for (int ex = 0; ex < nelx_; ++ex)
      for (int ey = 0; ey < nely_; ++ey) {
        const int e = id(ex, ey);
        double diag = mass_;
        if (ex > 0) { trip.emplace_back(e, id(ex - 1, ey), -r2); diag += r2; }
        if (ex + 1 < nelx_) { trip.emplace_back(e, id(ex + 1, ey), -r2); diag += r2; }
        if (ey > 0) { trip.emplace_back(e, id(ex, ey - 1), -r2); diag += r2; }
        if (ey + 1 < nely_) { trip.emplace_back(e, id(ex, ey + 1), -r2); diag += r2; }
        trip.emplace_back(e, e, diag);
      }
    a_.resize(ne, ne);
    a_.setFromTriplets(trip.begin(), trip.end());
    llt_.compute(a_);
    if (llt_.info() != Eigen::Success)
      throw std::runtime_error("HelmholtzFilter: factorization failed");
  }

  /// Solves A x = M g.
  void apply(std::span<const double> field, std::span<double> out) const {
    solve_scaled(field, out);
  }

  /// Pulls a downstream sensitivity back through the filter: out = M A^-1 s.
  void chain(std::span<const double> sens, std::span<double> out) const {
    solve_scaled(sens, out);
  }

  const Eigen::SparseMatrix<double>& system_matrix() const { return a_; }
  double cell_mass() const { return mass_; }

 private:
  void solve_scaled(std::span<const double> in, std::span<double> out) const {
    if (static_cast<int>(in.size()) != a_.rows() || in.size() != out.size())
      throw std::invalid_argument("HelmholtzFilter: field size does not match grid");
    Eigen::Map<const Eigen::VectorXd> rhs(in.data(), in.size());
    Eigen::VectorXd x = llt_.solve(mass_ * rhs);
    Eigen::Map<Eigen::VectorXd>(out.data(), out.size()) = x;
  }

  int nelx_, nely_;
  double mass_;
  Eigen::SparseMatrix<double> a_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
};

/// Smoothed Heaviside pushing filtered densities toward 0/1; fixed points at
/// 0, 1/2 and 1 for every sharpness beta.
inline double projection(double v, double beta) {
  const double t = std::tanh(0.5 * beta);
  return (t + std::tanh(beta * (v - 0.5))) / (2.0 * t);
}

inline double projection_derivative(double v, double beta) {
  const double t = std::tanh(0.5 * beta);
  const double th = std::tanh(beta * (v - 0.5));
  return beta * (1.0 - th * th) / (2.0 * t);
}

inline void projection(std::span<const double> in, double beta, std::span<double> out) {
  assert(in.size() == out.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = projection(in[i], beta);
}

inline void projection_derivative(std::span<const double> in, double beta, std::span<double> out) {
  assert(in.size() == out.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = projection_derivative(in[i], beta);
}

/// Continuation schedule: beta starts at beta_initial and doubles every
/// doubling_period iterations, capped at beta_max.
struct ProjectionConfig {
  double beta_initial = 2.0;
  int doubling_period = 50;
  double beta_max = 64.0;

  bool operator==(const ProjectionConfig&) const = default;

  void validate() const {
    if (!(beta_initial > 0.0)) throw std::invalid_argument("ProjectionConfig: beta_initial must be positive");
    if (doubling_period < 1) throw std::invalid_argument("ProjectionConfig: doubling_period must be >= 1");
    if (!(beta_max >= beta_initial)) throw std::invalid_argument("ProjectionConfig: beta_max must be >= beta_initial");
  }

  double beta_at(int iteration) const {
    assert(iteration >= 1);
    const int doublings = std::min((iteration - 1) / doubling_period, 1000);
    return std::min(std::ldexp(beta_initial, doublings), beta_max);
  }
};

inline double continuation_step(const ProjectionConfig& config, int iteration) {
  return config.beta_at(iteration);
}

}  // namespace topomulti

#pragma once

// Finite-difference verification of every analytic derivative path on small
// meshes: interpolation gradients, the projection derivative, and the full
// design -> filter -> projection -> stiffness -> compliance/volume chain.

#include <random>
#include <string>
#include <vector>

#include "topomulti/problem.hpp"

namespace topomulti {

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
  };
  std::vector<Entry> entries;

  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
};

namespace detail {

inline double rel_err(double analytic, double fd, double scale) {
  return std::abs(analytic - fd) / std::max({std::abs(fd), std::abs(analytic), scale});
}

}  // namespace detail

/// Interpolation dE/dgamma against central differences at random interior
/// points (all entries in [0.05, 0.95]).
inline GradCheckReport::Entry check_interpolation_gradient(Scheme scheme, int nm, unsigned seed,
                                                           int points = 100, double tol = 1e-5) {
  MaterialSet mat;
  for (int i = 0; i < nm; ++i) mat.moduli.push_back(1.0 + i * (nm > 1 ? 4.0 / (nm - 1) : 0.0));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(0.05, 0.95);
  const double h = 1e-6;
  double worst = 0.0;
  std::vector<double> g(nm), grad(nm);
  for (int s = 0; s < points; ++s) {
    for (int i = 0; i < nm; ++i) g[i] = dist(rng);
    modulus_gradient(scheme, g, mat, grad);
    double scale = 0.0;
    for (int i = 0; i < nm; ++i) scale = std::max(scale, std::abs(grad[i]));
    scale = std::max(scale * 1e-6, 1e-12);
    for (int j = 0; j < nm; ++j) {
      const double keep = g[j];
      g[j] = keep + h;
      const double ep = modulus(scheme, g, mat);
      g[j] = keep - h;
      const double em = modulus(scheme, g, mat);
      g[j] = keep;
      worst = std::max(worst, detail::rel_err(grad[j], (ep - em) / (2.0 * h), scale));
    }
  }
  return {std::string("interpolation/") + scheme_name(scheme) + "/nm" + std::to_string(nm),
          worst, tol, worst < tol};
}

inline GradCheckReport::Entry check_projection_derivative(unsigned seed, int points = 50,
                                                          double tol = 1e-6) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  const double h = 1e-7;
  double worst = 0.0;
  for (double beta : {2.0, 8.0}) {
    for (int s = 0; s < points; ++s) {
      const double v = dist(rng);
      const double analytic = projection_derivative(v, beta);
      const double fd = (projection(v + h, beta) - projection(v - h, beta)) / (2.0 * h);
      worst = std::max(worst, detail::rel_err(analytic, fd, 1e-9));
    }
  }
  return {"projection/derivative", worst, tol, worst < tol};
}

/// Full-chain gradients on a 6x3 cantilever with two materials.  In
/// sensitivity mode the radius is kept below the element size so the
/// neighborhood averaging is the identity and the chain stays exactly
/// differentiable.
inline GradCheckReport::Entry check_full_chain(Scheme scheme, FilterKind filter, unsigned seed,
                                               double tol = 1e-4) {
  ProblemSpec spec;
  spec.geometry = Geometry::cantilever;
  spec.nelx = 6;
  spec.nely = 3;
  spec.width = 2.0;
  spec.height = 1.0;
  spec.load = 0.1;

  OptimizationSettings settings;
  settings.scheme = scheme;
  settings.materials.moduli = {1.0, 5.0};
  settings.volume_fractions = {0.25, 0.25};
  settings.filter_kind = filter;
  settings.filter_radius = filter == FilterKind::sensitivity ? 0.5 : 2.0;

  Evaluator eval(build_problem(spec), settings);
  const int ne = eval.num_elements(), nm = eval.num_materials();
  const double beta = 4.0;

  DesignField design = DesignField::uniform(ne, nm, 0.5);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(0.2, 0.8);
  for (int e = 0; e < ne; ++e)
    for (int i = 0; i < nm; ++i) design.raw(e, i) = dist(rng);

  Eigen::MatrixXd dc, dvol, dc_fd(ne, nm);
  std::vector<Eigen::MatrixXd> dvol_fd(nm, Eigen::MatrixXd(ne, nm));
  eval.evaluate(design, beta, dc, dvol);
  const Eigen::MatrixXd dc0 = dc;
  const Eigen::MatrixXd dvol0 = dvol;

  const double h = 1e-6;
  Eigen::MatrixXd scratch_dc, scratch_dvol;
  for (int e = 0; e < ne; ++e)
    for (int i = 0; i < nm; ++i) {
      const double keep = design.raw(e, i);
      design.raw(e, i) = keep + h;
      const auto up = eval.evaluate(design, beta, scratch_dc, scratch_dvol);
      design.raw(e, i) = keep - h;
      const auto dn = eval.evaluate(design, beta, scratch_dc, scratch_dvol);
      design.raw(e, i) = keep;
      dc_fd(e, i) = (up.compliance - dn.compliance) / (2.0 * h);
      for (int v = 0; v < nm; ++v)
        dvol_fd[v](e, i) = (up.volumes[v] - dn.volumes[v]) / (2.0 * h);
    }

  const double cscale = std::max(dc0.cwiseAbs().maxCoeff() * 1e-6, 1e-12);
  double worst = 0.0;
  for (int e = 0; e < ne; ++e)
    for (int i = 0; i < nm; ++i)
      worst = std::max(worst, detail::rel_err(dc0(e, i), dc_fd(e, i), cscale));
  // volume gradients: analytic column v applies to material v's block only
  for (int v = 0; v < nm; ++v) {
    const double vscale = std::max(dvol0.col(v).cwiseAbs().maxCoeff() * 1e-6, 1e-12);
    for (int e = 0; e < ne; ++e)
      for (int i = 0; i < nm; ++i) {
        const double analytic = (i == v) ? dvol0(e, v) : 0.0;
        worst = std::max(worst, detail::rel_err(analytic, dvol_fd[v](e, i), vscale));
      }
  }
  return {std::string("chain/") + scheme_name(scheme) + "/" +
              (filter == FilterKind::sensitivity ? "sensitivity" : "pde"),
          worst, tol, worst < tol};
}

inline GradCheckReport run_gradient_checks(unsigned seed = 1234) {
  GradCheckReport report;
  for (Scheme s : {Scheme::pnorm_mapping, Scheme::extended_simp, Scheme::dmo})
    for (int nm : {2, 3, 5})
      report.entries.push_back(check_interpolation_gradient(s, nm, seed + nm));
  report.entries.push_back(check_projection_derivative(seed + 7));
  for (Scheme s : {Scheme::pnorm_mapping, Scheme::extended_simp, Scheme::dmo})
    for (FilterKind f : {FilterKind::sensitivity, FilterKind::pde})
      report.entries.push_back(check_full_chain(s, f, seed + 11));
  return report;
}

}  // namespace topomulti

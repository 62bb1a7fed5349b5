#pragma once

// Benchmark problems and the optimization loop: design -> filter ->
// projection -> interpolation -> FE solve -> compliance/volumes, with exact
// reverse-mode sensitivities pulled back to the raw design variables.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "topomulti/fem.hpp"
#include "topomulti/filtering.hpp"
#include "topomulti/interpolation.hpp"
#include "topomulti/mma.hpp"

namespace topomulti {

enum class Geometry { cantilever, mbb_half };

inline const char* geometry_name(Geometry g) {
  return g == Geometry::cantilever ? "cantilever" : "mbb_half";
}

inline Geometry geometry_from_name(std::string_view name) {
  if (name == "cantilever") return Geometry::cantilever;
  if (name == "mbb_half") return Geometry::mbb_half;
  throw std::invalid_argument("unknown problem '" + std::string(name) +
                              "' (expected cantilever or mbb_half)");
}

struct ProblemSpec {
  Geometry geometry = Geometry::cantilever;
  double width = 2.0;
  double height = 1.0;
  int nelx = 200;
  int nely = 100;
  double load = 0.1;
  double poisson = 0.3;

  double elem_size() const { return width / nelx; }

  bool operator==(const ProblemSpec&) const = default;

  void validate() const {
    if (nelx < 1 || nely < 1) throw std::invalid_argument("ProblemSpec: nelx, nely must be >= 1");
    if (!(width > 0.0 && height > 0.0)) throw std::invalid_argument("ProblemSpec: domain must have positive size");
    const double rx = width / nelx, ry = height / nely;
    if (std::abs(rx - ry) > 1e-9 * rx)
      throw std::invalid_argument("ProblemSpec: elements must be square (width/nelx == height/nely)");
    if (load == 0.0) throw std::invalid_argument("ProblemSpec: load must be nonzero");
    if (!(poisson > -1.0 && poisson < 0.5)) throw std::invalid_argument("ProblemSpec: poisson must lie in (-1, 0.5)");
  }
};

struct BuiltProblem {
  StructuredGrid grid;
  BoundaryConditions bc;
  double poisson = 0.3;
};

/// cantilever: left edge clamped, downward load at the bottom-right corner.
/// mbb_half:   left edge is the symmetry plane (x fixed), bottom-right corner
///             simply supported in y, downward load at the top-left corner.
inline BuiltProblem build_problem(const ProblemSpec& spec) {
  spec.validate();
  BuiltProblem built;
  built.grid = {spec.nelx, spec.nely, spec.elem_size()};
  built.poisson = spec.poisson;
  const StructuredGrid& g = built.grid;
  switch (spec.geometry) {
    case Geometry::cantilever:
      for (int iy = 0; iy <= g.nely; ++iy) {
        built.bc.fixed_dofs.push_back(2 * g.node_id(0, iy));
        built.bc.fixed_dofs.push_back(2 * g.node_id(0, iy) + 1);
      }
      built.bc.point_loads.emplace_back(2 * g.node_id(g.nelx, 0) + 1, -spec.load);
      break;
    case Geometry::mbb_half:
      for (int iy = 0; iy <= g.nely; ++iy)
        built.bc.fixed_dofs.push_back(2 * g.node_id(0, iy));
      built.bc.fixed_dofs.push_back(2 * g.node_id(g.nelx, 0) + 1);
      built.bc.point_loads.emplace_back(2 * g.node_id(0, g.nely) + 1, -spec.load);
      break;
  }
  return built;
}

/// Raw, filtered and physical design variables, one column per material.
/// With the sensitivity filter the three coincide; with the PDE filter the
/// physical field is the projected filtered field.
struct DesignField {
  Eigen::MatrixXd raw, filtered, physical;

  static DesignField uniform(int ne, int nm, double value) {
    DesignField d;
    d.raw = Eigen::MatrixXd::Constant(ne, nm, value);
    d.filtered = d.raw;
    d.physical = d.raw;
    return d;
  }
};

/// M_i = mean of 4 g (1 - g) over the physical field: 0 for a crisp design,
/// 1 when everything sits at one half.
inline std::vector<double> grayness(const DesignField& design) {
  const int nm = static_cast<int>(design.physical.cols());
  std::vector<double> m(nm);
  for (int i = 0; i < nm; ++i) {
    const auto col = design.physical.col(i).array();
    m[i] = (4.0 * col * (1.0 - col)).mean();
  }
  return m;
}

struct IterationRecord {
  int iteration = 0;
  double compliance = 0.0;
  std::vector<double> volumes;
  std::vector<double> grayness;
  double change = 0.0;
  double beta = 0.0;  // 0 when no projection is active
};

struct OptimizationHistory {
  std::vector<IterationRecord> records;
};

struct OptimizationSettings {
  Scheme scheme = Scheme::pnorm_mapping;
  MaterialSet materials;
  std::vector<double> volume_fractions;  // allowed fraction per material
  FilterKind filter_kind = FilterKind::sensitivity;
  // Radius in element widths.  Sensitivity mode: R = filter_radius * r_e.
  // PDE mode: R_min = filter_radius * r_e / (2 sqrt 3), which makes the value
  // comparable to an equivalent neighborhood radius.
  double filter_radius = 1.5;
  ProjectionConfig projection;
  int max_iterations = 200;
  double change_tol = 0.01;
  double constraint_tol = 1e-4;
  MmaOptions mma;
  bool classic_sens_filter = false;  // experimental: top88-style weighted filter
  bool scale_constraints_by_budget = true;  // g = V/V0 - 1 when true, V - V0 otherwise

  void validate() const {
    materials.validate();
    if (static_cast<int>(volume_fractions.size()) != materials.count())
      throw std::invalid_argument("OptimizationSettings: one volume fraction per material required");
    for (double v : volume_fractions)
      if (!(v > 0.0 && v <= 1.0))
        throw std::invalid_argument("OptimizationSettings: volume fractions must lie in (0, 1]");
    if (!(filter_radius > 0.0)) throw std::invalid_argument("OptimizationSettings: filter_radius must be positive");
    projection.validate();
    if (max_iterations < 1) throw std::invalid_argument("OptimizationSettings: max_iterations must be >= 1");
    if (!(change_tol >= 0.0)) throw std::invalid_argument("OptimizationSettings: change_tol must be >= 0");
  }

  double sensitivity_radius(double elem_size) const { return filter_radius * elem_size; }
  double pde_length_scale(double elem_size) const {
    return filter_radius * elem_size / (2.0 * std::sqrt(3.0));
  }

  bool operator==(const OptimizationSettings&) const = default;
};

/// One evaluation chain instance: owns the FE model, the active filter and
/// the per-iteration scratch.  Not shareable across threads; distinct
/// instances are independent.
class Evaluator {
 public:
  Evaluator(const BuiltProblem& problem, const OptimizationSettings& settings)
      : settings_(settings), model_(problem.grid, problem.bc, problem.poisson) {
    settings_.validate();
    const double re = problem.grid.elem_size;
    if (settings_.filter_kind == FilterKind::sensitivity) {
      sens_filter_.emplace(problem.grid, settings_.sensitivity_radius(re));
      if (settings_.classic_sens_filter)
        weighted_filter_.emplace(problem.grid, settings_.sensitivity_radius(re));
    } else
      pde_filter_.emplace(problem.grid, settings_.pde_length_scale(re));
    const int ne = problem.grid.num_elements();
    const int nm = settings_.materials.count();
    energies_.resize(ne);
    moduli_.resize(ne);
    gamma_.resize(nm);
    dgamma_.resize(nm);
  }

  int num_elements() const { return model_.grid().num_elements(); }
  int num_materials() const { return settings_.materials.count(); }
  FeModel& model() { return model_; }
  const FeModel& model() const { return model_; }
  const OptimizationSettings& settings() const { return settings_; }

  /// Forward chain only: fills design.filtered and design.physical.
  void forward(DesignField& design, double beta) const {
    const int ne = num_elements(), nm = num_materials();
    if (design.raw.rows() != ne || design.raw.cols() != nm)
      throw std::invalid_argument("Evaluator: design shape does not match problem");
    if (settings_.filter_kind == FilterKind::sensitivity) {
      design.filtered = design.raw;
      design.physical = design.raw;
      return;
    }
    design.filtered.resize(ne, nm);
    design.physical.resize(ne, nm);
    const auto sz = static_cast<std::size_t>(ne);
    for (int i = 0; i < nm; ++i) {
      pde_filter_->apply({design.raw.col(i).data(), sz}, {design.filtered.col(i).data(), sz});
      // clip solver roundoff so the projection sees [0, 1]
      design.filtered.col(i) = design.filtered.col(i).cwiseMax(0.0).cwiseMin(1.0);
      projection({design.filtered.col(i).data(), sz}, beta, {design.physical.col(i).data(), sz});
    }
  }

  struct Output {
    double compliance = 0.0;
    std::vector<double> volumes;
  };

  /// Full evaluation: compliance, volume fractions, and gradients with
  /// respect to the raw variables.  dc and dvol are NE x NM; dvol column i
  /// holds dV_i / d raw_i (cross-material blocks vanish).  In sensitivity
  /// mode the compliance gradient is returned neighborhood-averaged per
  /// material; the chain is exactly differentiable whenever the radius is
  /// below the element size.
  Output evaluate(DesignField& design, double beta, Eigen::MatrixXd& dc, Eigen::MatrixXd& dvol) {
    const int ne = num_elements(), nm = num_materials();
    forward(design, beta);
    dc.resize(ne, nm);
    dvol.resize(ne, nm);

    for (int e = 0; e < ne; ++e) {
      for (int i = 0; i < nm; ++i) gamma_[i] = design.physical(e, i);
      moduli_[e] = modulus_and_gradient(settings_.scheme, gamma_, settings_.materials, dgamma_);
      for (int i = 0; i < nm; ++i) dc(e, i) = dgamma_[i];
    }

    model_.solve(moduli_);
    Output out;
    out.compliance = model_.compliance();
    model_.element_energies(energies_);

    // dc/dphysical_(e,i) = -dE_(e,i) * q_e
    for (int i = 0; i < nm; ++i)
      dc.col(i) = -dc.col(i).cwiseProduct(
          Eigen::Map<const Eigen::VectorXd>(energies_.data(), ne));

    out.volumes.resize(nm);
    for (int i = 0; i < nm; ++i) out.volumes[i] = design.physical.col(i).mean();

    const auto sz = static_cast<std::size_t>(ne);
    if (settings_.filter_kind == FilterKind::sensitivity) {
      for (int i = 0; i < nm; ++i) {
        scratch_col_ = dc.col(i);
        if (settings_.classic_sens_filter)
          weighted_filter_->apply({design.physical.col(i).data(), sz},
                                  {scratch_col_.data(), sz}, {dc.col(i).data(), sz});
        else
          sens_filter_->apply({scratch_col_.data(), sz}, {dc.col(i).data(), sz});
      }
      dvol.setConstant(1.0 / ne);
    } else {
      Eigen::VectorXd projd(ne), tmp(ne);
      for (int i = 0; i < nm; ++i) {
        projection_derivative({design.filtered.col(i).data(), sz}, beta, {projd.data(), sz});
        tmp = dc.col(i).cwiseProduct(projd);
        pde_filter_->chain({tmp.data(), sz}, {dc.col(i).data(), sz});
        tmp = projd / static_cast<double>(ne);
        pde_filter_->chain({tmp.data(), sz}, {dvol.col(i).data(), sz});
      }
    }
    return out;
  }

 private:
  OptimizationSettings settings_;
  FeModel model_;
  std::optional<SensitivityFilter> sens_filter_;
  std::optional<WeightedSensitivityFilter> weighted_filter_;
  std::optional<HelmholtzFilter> pde_filter_;
  std::vector<double> energies_;
  std::vector<double> moduli_;
  std::vector<double> gamma_, dgamma_;
  Eigen::VectorXd scratch_col_;
};

struct RunResult {
  DesignField design;
  OptimizationHistory history;
};

/// Runs the full loop from the uniform 0.5 start until max_iterations or
/// until the design change drops below change_tol with all volume
/// constraints met.  The record for iteration k describes the design
/// entering step k; the returned design is the final iterate with its
/// filtered/physical fields refreshed.
using IterationCallback = std::function<void(const IterationRecord&)>;

inline RunResult run_optimization(const BuiltProblem& problem, const OptimizationSettings& settings,
                                  const IterationCallback& on_iteration = {}) {
  Evaluator eval(problem, settings);
  const int ne = eval.num_elements(), nm = eval.num_materials();
  const int n = ne * nm;

  RunResult result;
  result.design = DesignField::uniform(ne, nm, 0.5);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(result.design.raw.data(), n);
  MmaSolver mma(x, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n), nm, settings.mma);

  Eigen::MatrixXd dc, dvol;
  Eigen::VectorXd g(nm);
  Eigen::MatrixXd dg = Eigen::MatrixXd::Zero(nm, n);
  double beta = 0.0;

  for (int it = 1; it <= settings.max_iterations; ++it) {
    beta = settings.filter_kind == FilterKind::pde ? settings.projection.beta_at(it) : 0.0;
    const Evaluator::Output out = eval.evaluate(result.design, beta, dc, dvol);

    for (int i = 0; i < nm; ++i) {
      const double scale = settings.scale_constraints_by_budget ? settings.volume_fractions[i] : 1.0;
      g[i] = (out.volumes[i] - settings.volume_fractions[i]) / scale;
      dg.block(i, i * ne, 1, ne) = dvol.col(i).transpose() / scale;
    }

    const Eigen::VectorXd xnew =
        mma.step(x, out.compliance, Eigen::Map<const Eigen::VectorXd>(dc.data(), n), g, dg);
    const double change = (xnew - x).lpNorm<Eigen::Infinity>();
    x = xnew;
    result.design.raw = Eigen::Map<const Eigen::MatrixXd>(x.data(), ne, nm);

    IterationRecord rec;
    rec.iteration = it;
    rec.compliance = out.compliance;
    rec.volumes = out.volumes;
    rec.grayness = grayness(result.design);
    rec.change = change;
    rec.beta = beta;
    if (on_iteration) on_iteration(rec);
    result.history.records.push_back(std::move(rec));

    bool feasible = true;
    for (int i = 0; i < nm; ++i)
      feasible = feasible && out.volumes[i] <= settings.volume_fractions[i] + settings.constraint_tol;
    if (change < settings.change_tol && feasible) break;
  }

  eval.forward(result.design, beta);
  return result;
}

inline RunResult run_optimization(const ProblemSpec& spec, const OptimizationSettings& settings,
                                  const IterationCallback& on_iteration = {}) {
  return run_optimization(build_problem(spec), settings, on_iteration);
}

}  // namespace topomulti

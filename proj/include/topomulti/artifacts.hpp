#pragma once

// Run artifacts: per-material grayscale PGMs (one pixel per element, row 0 at
// the top of the domain), a combined indexed color map, the iteration history
// CSV, and an optional legacy-ASCII VTK structured-points file.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "topomulti/problem.hpp"

namespace topomulti {

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

inline unsigned char to_byte(double v) {
  const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<unsigned char>(std::lround(255.0 * c));
}

}  // namespace detail

/// Binary PGM (P5), value = round(255 * field), image row 0 = top of domain.
inline void write_pgm(const std::string& path, const StructuredGrid& grid,
                      std::span<const double> field) {
  if (static_cast<int>(field.size()) != grid.num_elements())
    throw std::invalid_argument("write_pgm: field size does not match grid");
  auto out = detail::open_out(path);
  out << "P5\n" << grid.nelx << " " << grid.nely << "\n255\n";
  std::vector<unsigned char> row(grid.nelx);
  for (int r = 0; r < grid.nely; ++r) {
    const int ey = grid.nely - 1 - r;
    for (int ex = 0; ex < grid.nelx; ++ex)
      row[ex] = detail::to_byte(field[grid.element_id(ex, ey)]);
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

/// Binary PPM (P6): each element takes the color of its argmax material when
/// that density exceeds one half, white background otherwise.
inline void write_combined_ppm(const std::string& path, const StructuredGrid& grid,
                               const Eigen::MatrixXd& physical) {
  if (physical.rows() != grid.num_elements())
    throw std::invalid_argument("write_combined_ppm: field size does not match grid");
  static constexpr std::array<std::array<unsigned char, 3>, 8> palette = {{
      {230, 200, 40},   // yellow
      {60, 200, 210},   // cyan
      {210, 50, 40},    // red
      {50, 90, 200},    // blue
      {60, 170, 70},    // green
      {170, 60, 180},   // magenta
      {240, 130, 30},   // orange
      {100, 100, 100},  // gray
  }};
  auto out = detail::open_out(path);
  out << "P6\n" << grid.nelx << " " << grid.nely << "\n255\n";
  const int nm = static_cast<int>(physical.cols());
  std::vector<unsigned char> row(static_cast<std::size_t>(grid.nelx) * 3);
  for (int r = 0; r < grid.nely; ++r) {
    const int ey = grid.nely - 1 - r;
    for (int ex = 0; ex < grid.nelx; ++ex) {
      const int e = grid.element_id(ex, ey);
      int best = 0;
      for (int i = 1; i < nm; ++i)
        if (physical(e, i) > physical(e, best)) best = i;
      unsigned char* px = &row[static_cast<std::size_t>(ex) * 3];
      if (physical(e, best) > 0.5) {
        const auto& c = palette[best % palette.size()];
        px[0] = c[0]; px[1] = c[1]; px[2] = c[2];
      } else {
        px[0] = px[1] = px[2] = 255;
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline void write_history_csv(const std::string& path, const OptimizationHistory& history, int nm) {
  auto out = detail::open_out(path);
  out << "iter,compliance";
  for (int i = 1; i <= nm; ++i) out << ",V_" << i;
  for (int i = 1; i <= nm; ++i) out << ",grayness_" << i;
  out << ",change,beta\n";
  char buf[32];
  auto num = [&](double d) {
    std::snprintf(buf, sizeof buf, "%.10g", d);
    out << ',' << buf;
  };
  for (const auto& rec : history.records) {
    out << rec.iteration;
    num(rec.compliance);
    for (int i = 0; i < nm; ++i) num(rec.volumes[i]);
    for (int i = 0; i < nm; ++i) num(rec.grayness[i]);
    num(rec.change);
    num(rec.beta);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

/// Legacy ASCII VTK STRUCTURED_POINTS with one cell scalar field per material.
inline void write_vtk(const std::string& path, const StructuredGrid& grid,
                      const Eigen::MatrixXd& physical) {
  if (physical.rows() != grid.num_elements())
    throw std::invalid_argument("write_vtk: field size does not match grid");
  auto out = detail::open_out(path);
  out << "# vtk DataFile Version 3.0\n"
      << "material densities\n"
      << "ASCII\n"
      << "DATASET STRUCTURED_POINTS\n"
      << "DIMENSIONS " << grid.nelx + 1 << " " << grid.nely + 1 << " 1\n"
      << "ORIGIN 0 0 0\n"
      << "SPACING " << grid.elem_size << " " << grid.elem_size << " " << grid.elem_size << "\n"
      << "CELL_DATA " << grid.num_elements() << "\n";
  char buf[32];
  for (int i = 0; i < physical.cols(); ++i) {
    out << "SCALARS material_" << i + 1 << " double 1\n"
        << "LOOKUP_TABLE default\n";
    for (int ey = 0; ey < grid.nely; ++ey) {
      for (int ex = 0; ex < grid.nelx; ++ex) {
        std::snprintf(buf, sizeof buf, "%.10g", physical(grid.element_id(ex, ey), i));
        out << buf << (ex + 1 < grid.nelx ? ' ' : '\n');
      }
    }
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

struct EmittedArtifacts {
  std::vector<std::string> files;
};

inline EmittedArtifacts emit_artifacts(const OptimizationHistory& history,
                                       const DesignField& design, const StructuredGrid& grid,
                                       const std::string& outdir, bool with_vtk = false) {
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + outdir + "'");
  EmittedArtifacts result;
  const int nm = static_cast<int>(design.physical.cols());
  const auto ne = static_cast<std::size_t>(grid.num_elements());
  for (int i = 0; i < nm; ++i) {
    const std::string path = outdir + "/material_" + std::to_string(i + 1) + ".pgm";
    write_pgm(path, grid, {design.physical.col(i).data(), ne});
    result.files.push_back(path);
  }
  const std::string combined = outdir + "/combined.ppm";
  write_combined_ppm(combined, grid, design.physical);
  result.files.push_back(combined);
  const std::string csv = outdir + "/history.csv";
  write_history_csv(csv, history, nm);
  result.files.push_back(csv);
  if (with_vtk) {
    const std::string vtk = outdir + "/design.vtk";
    write_vtk(vtk, grid, design.physical);
    result.files.push_back(vtk);
  }
  return result;
}

}  // namespace topomulti

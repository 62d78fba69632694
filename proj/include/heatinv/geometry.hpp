#pragma once

// Parametric solid bodies on a fixed rectangular footprint and their
// structured hexahedral meshes.
//
// Grid convention (shared by every module): row-major with x fastest, i.e. the
// value at column i (x) and row j (y) lives at index j * width + i.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "heatinv/binary_io.hpp"
#include "heatinv/common.hpp"

namespace heatinv {

inline constexpr double kMinHeight = 1e-6;

// Top-surface heights over the footprint, one per node column.
struct HeightField {
  int nx = 0;
  int ny = 0;
  double base = 0;  // nominal thickness the field was built from
  double length_x = kFootprint;
  double length_y = kFootprint;
  std::vector<double> values;  // (nx + 1) * (ny + 1), row-major

  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * (nx + 1) + i]; }
  double& at(int i, int j) { return values[static_cast<std::size_t>(j) * (nx + 1) + i]; }

  double min() const { return *std::min_element(values.begin(), values.end()); }
  double max() const { return *std::max_element(values.begin(), values.end()); }

  static HeightField flat(int nx, int ny, double height) {
    HeightField h;
    h.nx = nx;
    h.ny = ny;
    h.base = height;
    h.values.assign(static_cast<std::size_t>(nx + 1) * (ny + 1), height);
    return h;
  }
};

inline void validate(const HeightField& h) {
  if (h.nx < 1 || h.ny < 1) throw DimensionError("height field needs nx, ny >= 1");
  if (h.values.size() != static_cast<std::size_t>(h.nx + 1) * (h.ny + 1))
    throw DimensionError("height field has " + std::to_string(h.values.size()) + " values, expected (nx+1)*(ny+1) = " +
                         std::to_string((h.nx + 1) * (h.ny + 1)));
  for (double v : h.values)
    if (!(v > kMinHeight)) throw DimensionError("height field contains a non-positive height");
}

// Bilinear interpolation of the node heights; coordinates are clamped to the
// footprint.
inline double sample_height(const HeightField& h, double x, double y) {
  const double fx = std::clamp(x / h.length_x, 0.0, 1.0) * h.nx;
  const double fy = std::clamp(y / h.length_y, 0.0, 1.0) * h.ny;
  const int i = std::min(static_cast<int>(fx), h.nx - 1);
  const int j = std::min(static_cast<int>(fy), h.ny - 1);
  const double u = fx - i, v = fy - j;
  return (1 - u) * (1 - v) * h.at(i, j) + u * (1 - v) * h.at(i + 1, j) + (1 - u) * v * h.at(i, j + 1) +
         u * v * h.at(i + 1, j + 1);
}

// Centers of the grid x grid footprint cells on which flux values live.
inline std::vector<std::array<double, 2>> flux_cell_centers(int grid, double length_x = kFootprint,
                                                            double length_y = kFootprint) {
  std::vector<std::array<double, 2>> c;
  c.reserve(static_cast<std::size_t>(grid) * grid);
  for (int b = 0; b < grid; ++b)
    for (int a = 0; a < grid; ++a) c.push_back({(a + 0.5) * length_x / grid, (b + 0.5) * length_y / grid});
  return c;
}

// Heights at the flux cell centers.
inline std::vector<double> height_map_at_cells(const HeightField& h, int grid) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(grid) * grid);
  for (auto [x, y] : flux_cell_centers(grid, h.length_x, h.length_y)) out.push_back(sample_height(h, x, y));
  return out;
}

// Inverse direction: node-column heights from a cell-centered grid x grid map,
// by bilinear interpolation between cell centers with clamping at the border.
// Every output lies within the map's range; constant maps stay exact.
inline HeightField height_field_from_cells(std::span<const double> map, int grid, int nx, int ny, double base) {
  if (map.size() != static_cast<std::size_t>(grid) * grid) throw DimensionError("height map size != grid*grid");
  HeightField h;
  h.nx = nx;
  h.ny = ny;
  h.base = base;
  h.values.resize(static_cast<std::size_t>(nx + 1) * (ny + 1));
  auto cell = [&](int a, int b) { return map[static_cast<std::size_t>(b) * grid + a]; };
  for (int j = 0; j <= ny; ++j) {
    const double fy = std::clamp(static_cast<double>(j) / ny * grid - 0.5, 0.0, grid - 1.0);
    const int b = std::min(static_cast<int>(fy), grid - 2 < 0 ? 0 : grid - 2);
    const double v = grid > 1 ? fy - b : 0.0;
    for (int i = 0; i <= nx; ++i) {
      const double fx = std::clamp(static_cast<double>(i) / nx * grid - 0.5, 0.0, grid - 1.0);
      const int a = std::min(static_cast<int>(fx), grid - 2 < 0 ? 0 : grid - 2);
      const double u = grid > 1 ? fx - a : 0.0;
      const int a1 = std::min(a + 1, grid - 1), b1 = std::min(b + 1, grid - 1);
      h.at(i, j) = std::lerp(std::lerp(cell(a, b), cell(a1, b), u), std::lerp(cell(a, b1), cell(a1, b1), u), v);
    }
  }
  return h;
}

inline io::json to_json(const HeightField& h) {
  io::json rows = io::json::array();
  for (int j = 0; j <= h.ny; ++j) {
    io::json row = io::json::array();
    for (int i = 0; i <= h.nx; ++i) row.push_back(h.at(i, j));
    rows.push_back(std::move(row));
  }
  return {{"nx", h.nx}, {"ny", h.ny}, {"base", h.base}, {"heights", std::move(rows)}};
}

inline HeightField height_field_from_json(const io::json& j) {
  HeightField h;
  try {
    h.nx = j.at("nx").get<int>();
    h.ny = j.at("ny").get<int>();
    h.base = j.value("base", 0.0);
    const auto& rows = j.at("heights");
    if (static_cast<int>(rows.size()) != h.ny + 1) throw DimensionError("heights must have ny+1 rows");
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != h.nx + 1) throw DimensionError("each heights row must have nx+1 entries");
      for (const auto& v : row) h.values.push_back(v.get<double>());
    }
  } catch (const io::json::exception& e) {
    throw ConfigError(std::string("height field JSON: ") + e.what());
  }
  validate(h);
  return h;
}

inline HeightField load_height_field(const std::filesystem::path& path) {
  return height_field_from_json(io::read_json_file(path));
}

enum class Surface : std::uint8_t { S1 = 1, S2 = 2, S3 = 3 };

inline const char* to_string(Surface s) {
  switch (s) {
    case Surface::S1: return "S1";
    case Surface::S2: return "S2";
    case Surface::S3: return "S3";
  }
  return "?";
}

// Boundary quadrilateral. Nodes are ordered counter-clockwise seen from
// outside, so d/ds x d/dt of the bilinear face map points outward when the
// corners sit at (s,t) = (-1,-1), (1,-1), (1,1), (-1,1).
struct BoundaryFace {
  std::array<int, 4> nodes{};
  int element = -1;
  Surface tag = Surface::S3;
  int col_i = -1;  // footprint column for S1 / S2 faces
  int col_j = -1;
};

// Local hexahedron corner coordinates (xi, eta, zeta).
inline constexpr std::array<std::array<int, 3>, 8> kHexCorners = {{
    {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
    {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1},
}};

struct Mesh {
  int nx = 0, ny = 0, nz = 0;
  double length_x = kFootprint, length_y = kFootprint;
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 8>> elements;
  // S1 faces first (row-major by column), then S2 (row-major), then S3.
  std::vector<BoundaryFace> faces;

  int node(int i, int j, int k) const { return (k * (ny + 1) + j) * (nx + 1) + i; }
  int element(int i, int j, int k) const { return (k * ny + j) * nx + i; }
  int node_count() const { return static_cast<int>(nodes.size()); }
  int element_count() const { return static_cast<int>(elements.size()); }
  int s1_face(int i, int j) const { return j * nx + i; }
  int s2_face(int i, int j) const { return nx * ny + j * nx + i; }

  int face_count(Surface s) const {
    return static_cast<int>(std::count_if(faces.begin(), faces.end(), [s](const BoundaryFace& f) { return f.tag == s; }));
  }

  std::array<Vec3, 8> element_nodes(int e) const {
    std::array<Vec3, 8> out;
    for (int a = 0; a < 8; ++a) out[a] = nodes[elements[e][a]];
    return out;
  }
};

// Jacobian determinant of the trilinear map at local point (xi, eta, zeta).
inline double hex_jacobian_det(std::span<const Vec3, 8> x, double xi, double eta, double zeta) {
  Vec3 dxi, deta, dzeta;
  for (int a = 0; a < 8; ++a) {
    const double sa = kHexCorners[a][0], ta = kHexCorners[a][1], ua = kHexCorners[a][2];
    dxi = dxi + (0.125 * sa * (1 + ta * eta) * (1 + ua * zeta)) * x[a];
    deta = deta + (0.125 * ta * (1 + sa * xi) * (1 + ua * zeta)) * x[a];
    dzeta = dzeta + (0.125 * ua * (1 + sa * xi) * (1 + ta * eta)) * x[a];
  }
  return dot(dxi, cross(deta, dzeta));
}

// Structured mesh: node columns graded linearly from z = 0 to the local height.
inline Mesh build_mesh(const HeightField& height, int nx, int ny, int nz) {
  if (nx < 1 || ny < 1 || nz < 1) throw DimensionError("build_mesh: nx, ny, nz must be >= 1");
  if (height.nx != nx || height.ny != ny)
    throw DimensionError("build_mesh: height field is " + std::to_string(height.nx + 1) + "x" +
                         std::to_string(height.ny + 1) + ", expected " + std::to_string(nx + 1) + "x" +
                         std::to_string(ny + 1));
  validate(height);

  Mesh m;
  m.nx = nx;
  m.ny = ny;
  m.nz = nz;
  m.length_x = height.length_x;
  m.length_y = height.length_y;
  m.nodes.resize(static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1));
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        m.nodes[m.node(i, j, k)] = {i * m.length_x / nx, j * m.length_y / ny,
                                    height.at(i, j) * static_cast<double>(k) / nz};

  m.elements.resize(static_cast<std::size_t>(nx) * ny * nz);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        m.elements[m.element(i, j, k)] = {m.node(i, j, k),         m.node(i + 1, j, k),
                                          m.node(i + 1, j + 1, k), m.node(i, j + 1, k),
                                          m.node(i, j, k + 1),     m.node(i + 1, j, k + 1),
                                          m.node(i + 1, j + 1, k + 1), m.node(i, j + 1, k + 1)};

  for (int e = 0; e < m.element_count(); ++e) {
    const auto x = m.element_nodes(e);
    for (const auto& c : kHexCorners)
      if (!(hex_jacobian_det(x, c[0], c[1], c[2]) > 0))
        throw DimensionError("build_mesh: inverted or degenerate element " + std::to_string(e));
  }

  auto hex_face = [&](int e, std::array<int, 4> local, Surface tag, int ci, int cj) {
    BoundaryFace f;
    for (int a = 0; a < 4; ++a) f.nodes[a] = m.elements[e][local[a]];
    f.element = e;
    f.tag = tag;
    f.col_i = ci;
    f.col_j = cj;
    m.faces.push_back(f);
  };
  m.faces.reserve(2 * static_cast<std::size_t>(nx * ny + nx * nz + ny * nz));
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) hex_face(m.element(i, j, nz - 1), {4, 5, 6, 7}, Surface::S1, i, j);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) hex_face(m.element(i, j, 0), {0, 3, 2, 1}, Surface::S2, i, j);
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      hex_face(m.element(0, j, k), {0, 4, 7, 3}, Surface::S3, -1, -1);
      hex_face(m.element(nx - 1, j, k), {1, 2, 6, 5}, Surface::S3, -1, -1);
    }
    for (int i = 0; i < nx; ++i) {
      hex_face(m.element(i, 0, k), {0, 1, 5, 4}, Surface::S3, -1, -1);
      hex_face(m.element(i, ny - 1, k), {3, 7, 6, 2}, Surface::S3, -1, -1);
    }
  }
  return m;
}

inline Mesh build_mesh(const HeightField& height, int nz) { return build_mesh(height, height.nx, height.ny, nz); }

// Sensor sites: a uniform grid x grid subsample of the S2 node lattice.
struct SensorLayout {
  int grid = kDefaultGrid;
  int stride = 1;
  std::vector<int> nodes;  // row-major
};

inline SensorLayout sensor_layout(const Mesh& mesh, int grid = kDefaultGrid) {
  const int px = mesh.nx + 1, py = mesh.ny + 1;
  if (px % grid != 0 || py % grid != 0 || px / grid != py / grid)
    throw ConfigError("sensor_layout: S2 node grid " + std::to_string(px) + "x" + std::to_string(py) +
                      " has no uniform " + std::to_string(grid) + "x" + std::to_string(grid) + " subsample");
  SensorLayout s;
  s.grid = grid;
  s.stride = px / grid;
  s.nodes.reserve(static_cast<std::size_t>(grid) * grid);
  for (int b = 0; b < grid; ++b)
    for (int a = 0; a < grid; ++a) s.nodes.push_back(mesh.node(a * s.stride, b * s.stride, 0));
  return s;
}

// Points on S1 where predicted flux values are reported.
struct FluxLayout {
  int grid = kDefaultGrid;
  int stride = 1;
  std::vector<int> faces;  // indices into Mesh::faces, row-major
  std::vector<Vec3> centers;
};

inline FluxLayout flux_layout(const Mesh& mesh, int grid = kDefaultGrid) {
  if (mesh.nx % grid != 0 || mesh.ny % grid != 0 || mesh.nx / grid != mesh.ny / grid)
    throw ConfigError("flux_layout: S1 face grid " + std::to_string(mesh.nx) + "x" + std::to_string(mesh.ny) +
                      " has no uniform " + std::to_string(grid) + "x" + std::to_string(grid) + " subsample");
  FluxLayout f;
  f.grid = grid;
  f.stride = mesh.nx / grid;
  for (int b = 0; b < grid; ++b)
    for (int a = 0; a < grid; ++a) {
      const int face = mesh.s1_face(a * f.stride, b * f.stride);
      Vec3 c;
      for (int n : mesh.faces[face].nodes) c = c + 0.25 * mesh.nodes[n];
      f.faces.push_back(face);
      f.centers.push_back(c);
    }
  return f;
}

}  // namespace heatinv

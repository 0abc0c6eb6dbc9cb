#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sdrom/common.hpp"

namespace sdrom {

using Vec2 = Eigen::Vector2d;

// Boundary edge (a -> b) oriented as it appears in its owning triangle,
// so the domain lies to the left and the outward normal is (dy, -dx)/len.
struct BoundaryEdge {
  int a = 0;
  int b = 0;
  int tag = 0;
};

struct TriMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::string> tag_names;
  std::vector<BoundaryEdge> boundary;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }

  int tag_id(const std::string& name) const {
    for (std::size_t i = 0; i < tag_names.size(); ++i)
      if (tag_names[i] == name) return static_cast<int>(i);
    return -1;
  }

  int add_tag(const std::string& name) {
    int id = tag_id(name);
    if (id >= 0) return id;
    tag_names.push_back(name);
    return static_cast<int>(tag_names.size()) - 1;
  }

  double triangle_area(int t) const {
    const Vec2& p0 = vertices[triangles[t][0]];
    const Vec2& p1 = vertices[triangles[t][1]];
    const Vec2& p2 = vertices[triangles[t][2]];
    return 0.5 * ((p1.x() - p0.x()) * (p2.y() - p0.y()) -
                  (p2.x() - p0.x()) * (p1.y() - p0.y()));
  }

  double total_area() const {
    double a = 0.0;
    for (int t = 0; t < n_triangles(); ++t) a += triangle_area(t);
    return a;
  }

  // Shoelace sum over the oriented boundary; equals the triangle-area sum
  // exactly when the triangles tile the polygonal domain without overlap.
  double boundary_loop_area() const {
    double a = 0.0;
    for (const auto& e : boundary) {
      const Vec2& p = vertices[e.a];
      const Vec2& q = vertices[e.b];
      a += 0.5 * (p.x() * q.y() - q.x() * p.y());
    }
    return a;
  }

  // Mesh size used against the interface-width rule h <= delta/2: the
  // largest inscribed-circle diameter over all triangles.
  double resolution_h() const {
    double h = 0.0;
    for (int t = 0; t < n_triangles(); ++t) {
      const Vec2& p0 = vertices[triangles[t][0]];
      const Vec2& p1 = vertices[triangles[t][1]];
      const Vec2& p2 = vertices[triangles[t][2]];
      const double a = (p1 - p2).norm();
      const double b = (p2 - p0).norm();
      const double c = (p0 - p1).norm();
      const double s = 0.5 * (a + b + c);
      if (s > 0.0) h = std::max(h, 2.0 * triangle_area(t) / s);
    }
    return h;
  }

  Vec2 edge_outward_normal(const BoundaryEdge& e) const {
    Vec2 d = vertices[e.b] - vertices[e.a];
    const double len = d.norm();
    return Vec2(d.y() / len, -d.x() / len);
  }

  void validate() const {
    const int nv = n_vertices();
    if (nv < 3) throw FormatError("mesh has fewer than 3 vertices");
    for (const auto& p : vertices)
      if (!std::isfinite(p.x()) || !std::isfinite(p.y()))
        throw FormatError("mesh vertex coordinate is not finite");
    std::set<std::pair<double, double>> seen;
    for (const auto& p : vertices)
      if (!seen.insert({p.x(), p.y()}).second)
        throw FormatError("mesh has duplicate vertices");
    std::map<std::pair<int, int>, int> directed;
    for (int t = 0; t < n_triangles(); ++t) {
      for (int k = 0; k < 3; ++k) {
        const int a = triangles[t][k];
        const int b = triangles[t][(k + 1) % 3];
        if (a < 0 || a >= nv || b < 0 || b >= nv)
          throw FormatError("triangle vertex index out of range");
        ++directed[{a, b}];
      }
      if (triangle_area(t) <= 0.0)
        throw FormatError("triangle is not counterclockwise");
    }
    for (const auto& [edge, count] : directed) {
      if (count > 1) throw FormatError("duplicate directed edge");
      // Interior edges appear once per orientation; boundary edges once.
    }
    for (const auto& e : boundary) {
      if (e.a < 0 || e.a >= nv || e.b < 0 || e.b >= nv)
        throw FormatError("boundary edge index out of range");
      if (e.tag < 0 || e.tag >= static_cast<int>(tag_names.size()))
        throw FormatError("boundary edge tag out of range");
      auto it = directed.find({e.a, e.b});
      if (it == directed.end())
        throw FormatError("boundary edge is not an oriented triangle edge");
      if (directed.count({e.b, e.a}))
        throw FormatError("boundary edge belongs to two triangles");
    }
    // Every triangle edge without a mate must be listed in the boundary.
    std::set<std::pair<int, int>> listed;
    for (const auto& e : boundary) listed.insert({e.a, e.b});
    for (const auto& [edge, count] : directed) {
      if (!directed.count({edge.second, edge.first}) && !listed.count(edge))
        throw FormatError("unlisted boundary edge");
    }
  }

  std::uint64_t content_hash() const;
};

namespace detail {
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline std::string serialize_trimesh(const TriMesh& mesh) {
  std::ostringstream out;
  out << "TRIMESH v1\n";
  out << mesh.n_vertices() << "\n";
  for (const auto& p : mesh.vertices)
    out << detail::format_double(p.x()) << " " << detail::format_double(p.y())
        << "\n";
  out << mesh.n_triangles() << "\n";
  for (const auto& t : mesh.triangles)
    out << t[0] << " " << t[1] << " " << t[2] << "\n";
  for (const auto& e : mesh.boundary)
    out << mesh.tag_names[e.tag] << " " << e.a << " " << e.b << "\n";
  return out.str();
}

inline std::uint64_t TriMesh::content_hash() const {
  return fnv1a64(serialize_trimesh(*this));
}

inline void write_trimesh(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open mesh file for writing: " + path);
  out << serialize_trimesh(mesh);
}

inline TriMesh parse_trimesh(std::istream& in);

inline TriMesh parse_trimesh(const std::string& text) {
  std::istringstream in(text);
  return parse_trimesh(in);
}

inline TriMesh parse_trimesh(std::istream& in) {
  std::string header;
  std::getline(in, header);
  if (header != "TRIMESH v1")
    throw FormatError("bad mesh header, expected 'TRIMESH v1'");
  TriMesh mesh;
  int nv = 0;
  if (!(in >> nv) || nv < 0) throw FormatError("bad vertex count");
  mesh.vertices.resize(nv);
  for (int i = 0; i < nv; ++i)
    if (!(in >> mesh.vertices[i].x() >> mesh.vertices[i].y()))
      throw FormatError("truncated vertex section");
  int nt = 0;
  if (!(in >> nt) || nt < 0) throw FormatError("bad triangle count");
  mesh.triangles.resize(nt);
  for (int i = 0; i < nt; ++i)
    if (!(in >> mesh.triangles[i][0] >> mesh.triangles[i][1] >>
          mesh.triangles[i][2]))
      throw FormatError("truncated triangle section");
  std::string tag;
  int a = 0, b = 0;
  while (in >> tag >> a >> b)
    mesh.boundary.push_back({a, b, mesh.add_tag(tag)});
  mesh.validate();
  return mesh;
}

inline TriMesh read_trimesh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open mesh file: " + path);
  return parse_trimesh(in);
}

}  // namespace sdrom

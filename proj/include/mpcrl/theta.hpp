#pragma once

#include <vector>

#include "mpcrl/membership.hpp"
#include "mpcrl/types.hpp"

namespace mpcrl {

/// Disturbance polytope given by its vertices W^1..W^{N_M}; the vertices
/// outer-approximate the one-step dispersion of the state around the
/// nominal model.
struct PolytopeW {
  std::vector<Vec> vertices;

  int count() const { return static_cast<int>(vertices.size()); }

  /// Checks that the vertex set spans the full state dimension (at least
  /// n_s + 1 affinely independent vertices).
  bool full_dimensional() const {
    if (vertices.empty()) return false;
    const int n_s = static_cast<int>(vertices[0].size());
    if (count() < n_s + 1) return false;
    Mat diff(n_s, count() - 1);
    for (int i = 1; i < count(); ++i)
      diff.col(i - 1) = vertices[i] - vertices[0];
    return Eigen::FullPivLU<Mat>(diff).rank() == n_s;
  }

  /// True when the origin lies strictly inside the polytope.
  bool contains_origin_strictly(double margin = 1e-9) const {
    const int n_s = static_cast<int>(vertices[0].size());
    for (int c = 0; c < n_s; ++c) {
      for (double sign : {-1.0, 1.0}) {
        Vec probe = Vec::Zero(n_s);
        probe[c] = sign * margin;
        if (!convex_membership(vertices, probe, 1e-12).feasible) return false;
      }
    }
    return true;
  }

  Vec centroid() const {
    Vec c = Vec::Zero(vertices[0].size());
    for (const Vec& v : vertices) c += v;
    return c / static_cast<double>(count());
  }
};

struct MpcDims {
  int horizon = 10;        ///< N
  int scenario_count = 4;  ///< N_M (disturbed models; the nominal is extra)
  int n_s = 2;
  int n_a = 2;

  void validate() const {
    require(horizon >= 1, "horizon must be >= 1");
    require(scenario_count >= 1, "scenario_count must be >= 1");
    require(n_s >= 1 && n_a >= 1, "state/input dimensions must be >= 1");
  }
};

/// Learnable MPC parameters: state/input references, nominal model
/// (A0, B0, b0), ancillary feedback K and the disturbance polytope W.
///
/// Flat-vector ordering (fixed, also used by the CSV traces and the
/// parameter update): x_bar (n_s), u_bar (n_a), A0 row-major (n_s*n_s),
/// B0 row-major (n_s*n_a), b0 (n_s), K row-major (n_a*n_s), W vertices in
/// order (N_M * n_s).
struct ThetaParams {
  Vec x_bar;
  Vec u_bar;
  Mat a0;
  Mat b0_mat;
  Vec b0;
  Mat feedback_k;
  PolytopeW w;

  int n_s() const { return static_cast<int>(x_bar.size()); }
  int n_a() const { return static_cast<int>(u_bar.size()); }

  void validate() const {
    const int ns = n_s();
    const int na = n_a();
    require_dims(a0.rows() == ns && a0.cols() == ns, "A0 dimension mismatch");
    require_dims(b0_mat.rows() == ns && b0_mat.cols() == na,
                 "B0 dimension mismatch");
    require_dims(b0.size() == ns, "b0 dimension mismatch");
    require_dims(feedback_k.rows() == na && feedback_k.cols() == ns,
                 "K dimension mismatch");
    require(w.count() >= 1, "W needs at least one vertex");
    for (const Vec& v : w.vertices)
      require_dims(v.size() == ns, "W vertex dimension mismatch");
  }

  /// Nominal one-step model F0(s, a) = A0 s + B0 a + b0.
  Vec nominal_step(const Vec& s, const Vec& a) const {
    return a0 * s + b0_mat * a + b0;
  }

  static int flat_size(int ns, int na, int n_vertices) {
    return ns + na + ns * ns + ns * na + ns + na * ns + n_vertices * ns;
  }

  Vec flatten() const {
    validate();
    const int ns = n_s();
    const int na = n_a();
    Vec out(flat_size(ns, na, w.count()));
    int at = 0;
    out.segment(at, ns) = x_bar;
    at += ns;
    out.segment(at, na) = u_bar;
    at += na;
    for (int r = 0; r < ns; ++r)
      for (int c = 0; c < ns; ++c) out[at++] = a0(r, c);
    for (int r = 0; r < ns; ++r)
      for (int c = 0; c < na; ++c) out[at++] = b0_mat(r, c);
    out.segment(at, ns) = b0;
    at += ns;
    for (int r = 0; r < na; ++r)
      for (int c = 0; c < ns; ++c) out[at++] = feedback_k(r, c);
    for (const Vec& v : w.vertices) {
      out.segment(at, ns) = v;
      at += ns;
    }
    return out;
  }

  static ThetaParams unflatten(const Vec& flat, int ns, int na,
                               int n_vertices) {
    require_dims(flat.size() == flat_size(ns, na, n_vertices),
                 "flat theta vector has the wrong length");
    ThetaParams t;
    int at = 0;
    t.x_bar = flat.segment(at, ns);
    at += ns;
    t.u_bar = flat.segment(at, na);
    at += na;
    t.a0 = Mat(ns, ns);
    for (int r = 0; r < ns; ++r)
      for (int c = 0; c < ns; ++c) t.a0(r, c) = flat[at++];
    t.b0_mat = Mat(ns, na);
    for (int r = 0; r < ns; ++r)
      for (int c = 0; c < na; ++c) t.b0_mat(r, c) = flat[at++];
    t.b0 = flat.segment(at, ns);
    at += ns;
    t.feedback_k = Mat(na, ns);
    for (int r = 0; r < na; ++r)
      for (int c = 0; c < ns; ++c) t.feedback_k(r, c) = flat[at++];
    t.w.vertices.resize(n_vertices);
    for (int i = 0; i < n_vertices; ++i) {
      t.w.vertices[i] = flat.segment(at, ns);
      at += ns;
    }
    return t;
  }
};

/// Offsets of the parameter blocks inside the flat theta vector.
struct ThetaLayout {
  int ns, na, n_vertices;
  int x_bar_off, u_bar_off, a0_off, b0_mat_off, b0_off, k_off, w_off, size;

  ThetaLayout(int ns_, int na_, int n_vertices_)
      : ns(ns_), na(na_), n_vertices(n_vertices_) {
    x_bar_off = 0;
    u_bar_off = x_bar_off + ns;
    a0_off = u_bar_off + na;
    b0_mat_off = a0_off + ns * ns;
    b0_off = b0_mat_off + ns * na;
    k_off = b0_off + ns;
    w_off = k_off + na * ns;
    size = w_off + n_vertices * ns;
  }

  int a0_entry(int r, int c) const { return a0_off + r * ns + c; }
  int b0_mat_entry(int r, int c) const { return b0_mat_off + r * na + c; }
  int k_entry(int r, int c) const { return k_off + r * ns + c; }
  int w_entry(int vertex, int c) const { return w_off + vertex * ns + c; }
};

}  // namespace mpcrl

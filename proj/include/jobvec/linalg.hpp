#pragma once

#include <cstddef>
#include <vector>

#include "jobvec/common.hpp"

namespace jobvec {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. All model tensors are small at desk
/// scale, so plain loops are used throughout.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

  Vec row_vec(int r) const {
    const double* p = row(r);
    return Vec(p, p + cols);
  }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) throw Error("dot: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double dot(const double* x, const Vec& y) {
  double s = 0.0;
  for (size_t i = 0; i < y.size(); ++i) s += x[i] * y[i];
  return s;
}

/// y = M x  (M.rows result)
inline Vec matvec(const Mat& m, const Vec& x) {
  if (static_cast<size_t>(m.cols) != x.size()) throw Error("matvec: shape mismatch");
  Vec y(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double* p = m.row(r);
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) s += p[c] * x[c];
    y[r] = s;
  }
  return y;
}

/// y = M^T x  (M.cols result)
inline Vec matvec_t(const Mat& m, const Vec& x) {
  if (static_cast<size_t>(m.rows) != x.size()) throw Error("matvec_t: shape mismatch");
  Vec y(m.cols, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double* p = m.row(r);
    for (int c = 0; c < m.cols; ++c) y[c] += p[c] * x[r];
  }
  return y;
}

/// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw Error("axpy: length mismatch");
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// A += alpha * u v^T
inline void add_outer(Mat& a, double alpha, const Vec& u, const Vec& v) {
  if (static_cast<size_t>(a.rows) != u.size() || static_cast<size_t>(a.cols) != v.size())
    throw Error("add_outer: shape mismatch");
  for (int r = 0; r < a.rows; ++r) {
    double* p = a.row(r);
    const double au = alpha * u[r];
    for (int c = 0; c < a.cols; ++c) p[c] += au * v[c];
  }
}

inline double norm2(const Vec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

}  // namespace jobvec

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace crdp {

// Dense row-major matrix sized for the small covariance blocks this project
// works with (n <= 16). Not a general linear-algebra library.
class Mat {
public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  bool square() const { return rows_ == cols_; }

  double max_abs_diff(const Mat& other) const {
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i)
      m = std::max(m, std::abs(data_[i] - other.data_[i]));
    return m;
  }

  double max_asymmetry() const {
    double m = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = i + 1; j < cols_; ++j)
        m = std::max(m, std::abs((*this)(i, j) - (*this)(j, i)));
    return m;
  }

  void symmetrize() {
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = i + 1; j < cols_; ++j) {
        double v = 0.5 * ((*this)(i, j) + (*this)(j, i));
        (*this)(i, j) = v;
        (*this)(j, i) = v;
      }
  }

  Mat transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Mat submatrix(const std::vector<std::size_t>& idx) const {
    Mat s(idx.size(), idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) s(i, j) = (*this)(idx[i], idx[j]);
    return s;
  }

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

inline Mat mat_mul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("mat_mul: shape mismatch");
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline double mat_trace(const Mat& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix.  Rotations are
// applied until the off-diagonal Frobenius norm drops below `off_tol`.
inline void jacobi_eigen(const Mat& a_in, std::vector<double>& eigvals, Mat& eigvecs,
                         double off_tol = 1e-13) {
  if (!a_in.square()) throw std::invalid_argument("jacobi_eigen: not square");
  const std::size_t n = a_in.rows();
  Mat a = a_in;
  a.symmetrize();
  eigvecs = Mat::identity(n);

  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
  if (scale == 0.0) scale = 1.0;

  for (int sweep = 0; sweep < 128; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    if (std::sqrt(off) <= off_tol * scale) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        double app = a(p, p), aqq = a(q, q);
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double vkp = eigvecs(k, p), vkq = eigvecs(k, q);
          eigvecs(k, p) = c * vkp - s * vkq;
          eigvecs(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  eigvals.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eigvals[i] = a(i, i);
}

inline double mat_min_eigenvalue(const Mat& a) {
  std::vector<double> vals;
  Mat vecs;
  jacobi_eigen(a, vals, vecs);
  double m = vals.empty() ? 0.0 : vals[0];
  for (double v : vals) m = std::min(m, v);
  return m;
}

// Symmetric PSD square root.  2x2 uses the closed form
// sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A)); larger sizes go
// through the Jacobi eigendecomposition with eigenvalues clamped at zero.
inline Mat spd_sqrt(const Mat& a, double neg_tol = 1e-9) {
  if (!a.square()) throw std::invalid_argument("spd_sqrt: not square");
  const std::size_t n = a.rows();
  if (a.max_asymmetry() > 1e-9) throw std::invalid_argument("spd_sqrt: asymmetric input");

  if (n == 1) {
    double v = a(0, 0);
    if (v < -neg_tol) throw std::invalid_argument("spd_sqrt: negative 1x1 entry");
    Mat r(1, 1);
    r(0, 0) = std::sqrt(std::max(0.0, v));
    return r;
  }
  if (n == 2) {
    double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    double tr = a(0, 0) + a(1, 1);
    if (det < 0.0 && det > -neg_tol * std::max(1.0, tr * tr)) det = 0.0;
    if (det < 0.0 || tr < -neg_tol)
      throw std::invalid_argument("spd_sqrt: 2x2 input not PSD");
    double s = std::sqrt(std::max(0.0, det));
    double denom = std::sqrt(std::max(0.0, tr + 2.0 * s));
    Mat r(2, 2);
    if (denom == 0.0) return r;
    r(0, 0) = (a(0, 0) + s) / denom;
    r(1, 1) = (a(1, 1) + s) / denom;
    r(0, 1) = a(0, 1) / denom;
    r(1, 0) = a(1, 0) / denom;
    return r;
  }

  std::vector<double> vals;
  Mat vecs;
  jacobi_eigen(a, vals, vecs);
  double scale = 1.0;
  for (double v : vals) scale = std::max(scale, std::abs(v));
  for (double& v : vals) {
    if (v < -neg_tol * scale) throw std::invalid_argument("spd_sqrt: negative eigenvalue");
    v = std::sqrt(std::max(0.0, v));
  }
  Mat r(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) sum += vecs(i, k) * vals[k] * vecs(j, k);
      r(i, j) = sum;
    }
  r.symmetrize();
  return r;
}

// Gaussian elimination with partial pivoting; returns x with A x = b.
// `singular` (when non-null) is set instead of throwing.
inline std::vector<double> solve_linear(Mat a, std::vector<double> b, bool* singular = nullptr) {
  const std::size_t n = a.rows();
  if (!a.square() || b.size() != n) throw std::invalid_argument("solve_linear: shape mismatch");
  if (singular) *singular = false;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
  if (scale == 0.0) scale = 1.0;

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (std::abs(a(piv, col)) < 1e-12 * scale) {
      if (singular) {
        *singular = true;
        return std::vector<double>(n, 0.0);
      }
      throw std::runtime_error("solve_linear: singular system");
    }
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

inline double mat_det(Mat a) {
  const std::size_t n = a.rows();
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (a(piv, col) == 0.0) return 0.0;
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
      det = -det;
    }
    det *= a(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      double f = a(r, col) / a(col, col);
      for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
    }
  }
  return det;
}

}  // namespace crdp

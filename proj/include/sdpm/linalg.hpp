#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "sdpm/error.hpp"

namespace sdpm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IndexList = std::vector<int>;

// Lower Cholesky factor with the jitter policy: 1e-10 * mean diagonal, x10 up to 1e-4.
inline Mat cholesky_lower(const Mat& a, double* jitter_used = nullptr) {
  const Eigen::Index d = a.rows();
  if (d != a.cols()) throw InvalidArgument("cholesky: matrix not square");
  if (d == 0) {
    if (jitter_used) *jitter_used = 0.0;
    return Mat(0, 0);
  }
  if (!a.allFinite()) throw NumericError("cholesky: non-finite entries");
  Eigen::LLT<Mat> llt(a);
  auto ok = [&](const Eigen::LLT<Mat>& f) {
    if (f.info() != Eigen::Success) return false;
    const Mat& l = f.matrixLLT();
    for (Eigen::Index i = 0; i < d; ++i)
      if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) return false;
    return true;
  };
  if (ok(llt)) {
    if (jitter_used) *jitter_used = 0.0;
    return llt.matrixL();
  }
  const double base = a.diagonal().mean();
  if (!(base > 0.0))
    throw NumericError("matrix not positive definite (dim " + std::to_string(d) + ")");
  for (double rel = 1e-10; rel <= 1e-4 * 1.0000001; rel *= 10.0) {
    Mat b = a;
    b.diagonal().array() += rel * base;
    llt.compute(b);
    if (ok(llt)) {
      if (jitter_used) *jitter_used = rel * base;
      return llt.matrixL();
    }
  }
  throw NumericError("matrix not positive definite after jitter escalation (dim " +
                     std::to_string(d) + ")");
}

// Dense symmetric positive-definite matrix with its Cholesky factor.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(const Mat& m) {
    if (m.rows() != m.cols()) throw InvalidArgument("SymMatrix: not square");
    const double scale = m.size() ? std::max(1.0, m.cwiseAbs().maxCoeff()) : 1.0;
    if (m.size() && (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
      throw InvalidArgument("SymMatrix: not symmetric");
    m_ = 0.5 * (m + m.transpose());
    l_ = cholesky_lower(m_, &jitter_);
    log_det_ = 2.0 * l_.diagonal().array().log().sum();
  }

  static SymMatrix identity(int d) { return SymMatrix(Mat::Identity(d, d)); }
  static SymMatrix scalar(double v) { return SymMatrix(Mat::Constant(1, 1, v)); }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Mat& matrix() const { return m_; }
  const Mat& chol() const { return l_; }
  double log_det() const { return log_det_; }
  double jitter() const { return jitter_; }
  double operator()(int i, int j) const { return m_(i, j); }

  Vec solve(const Vec& b) const {
    Vec t = l_.triangularView<Eigen::Lower>().solve(b);
    return l_.transpose().triangularView<Eigen::Upper>().solve(t);
  }
  Mat solve(const Mat& b) const {
    Mat t = l_.triangularView<Eigen::Lower>().solve(b);
    return l_.transpose().triangularView<Eigen::Upper>().solve(t);
  }
  Mat inverse() const {
    Mat inv = solve(Mat(Mat::Identity(dim(), dim())));
    return 0.5 * (inv + inv.transpose());
  }

 private:
  Mat m_;
  Mat l_;
  double log_det_ = 0.0;
  double jitter_ = 0.0;
};

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline Mat submatrix(const Mat& m, const IndexList& rows, const IndexList& cols) {
  Mat out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

inline Vec subvector(const Vec& v, const IndexList& idx) {
  Vec out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

}  // namespace sdpm

// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used by the unit tests and the
// acceptance runner. Nothing here calls into the code under test except for
// data containers.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cednn/model.hpp"
#include "cednn/train.hpp"

namespace cednn::oracle {

/// Row-major dense matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
  double& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out(i, j) += s * b(k, j);
    }
  }
  return out;
}

inline Matrix operator+(Matrix a, const Matrix& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  }
  return t;
}

/// Rows stacked: [top; bottom].
inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows + bottom.rows, top.cols);
  std::copy(top.v.begin(), top.v.end(), out.v.begin());
  std::copy(bottom.v.begin(), bottom.v.end(), out.v.begin() + top.v.size());
  return out;
}

inline std::vector<double> apply(const Matrix& m, const std::vector<double>& x) {
  std::vector<double> y(m.rows, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) y[i] += m(i, j) * x[j];
  }
  return y;
}

/// Linear operator of a stride-1 grouped convolution on (C, S, S) vectors
/// indexed (c * S + y) * S + x.
inline Matrix conv_matrix(const ConvParams<double>& p, int c_in, int size) {
  const int c_out = p.weight.n();
  const int cig = c_in / p.groups;
  const int cog = c_out / p.groups;
  const int k = p.weight.h();
  const int hw = size * size;
  Matrix m(c_out * hw, c_in * hw);
  for (int oc = 0; oc < c_out; ++oc) {
    for (int ic = 0; ic < c_in; ++ic) {
      if (ic / cig != oc / cog) continue;
      for (int oy = 0; oy < size; ++oy) {
        for (int ox = 0; ox < size; ++ox) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy + ky - p.padding, ix = ox + kx - p.padding;
              if (iy < 0 || iy >= size || ix < 0 || ix >= size) continue;
              m(oc * hw + oy * size + ox, ic * hw + iy * size + ix) +=
                  p.weight.at(oc, ic % cig, ky, kx);
            }
          }
        }
      }
    }
  }
  return m;
}

/// Channel permutation gathering one channel from each of the L first-stage
/// groups into every second-stage group: input channel l*M + m lands at
/// output channel m*L + l.
inline Matrix shuffle_matrix(int L, int M, int size) {
  const int hw = size * size, c = L * M;
  Matrix p(c * hw, c * hw);
  for (int l = 0; l < L; ++l) {
    for (int m = 0; m < M; ++m) {
      for (int i = 0; i < hw; ++i) p((m * L + l) * hw + i, (l * M + m) * hw + i) = 1.0;
    }
  }
  return p;
}

/// Assembled linear block: W3 (U W2 S W1 + I) for res, W3 [U W2 S W1; I] for
/// dense, where S is the shuffle and U = S^T its inverse.
inline Matrix block_matrix(const BlockParams<double>& block, int size) {
  const int c = block.spec.in_channels();
  const Matrix w1 = conv_matrix(block.group1.params, c, size);
  const Matrix w2 = conv_matrix(block.group2.params, c, size);
  const Matrix s = shuffle_matrix(block.spec.L, block.spec.M, size);
  const Matrix branch = transpose(s) * (w2 * (s * w1));
  const Matrix id = Matrix::identity(c * size * size);
  const Matrix merged = block.spec.connection == Connection::res ? branch + id
                                                                 : vstack(branch, id);
  const Matrix w3 = conv_matrix(block.fusion.params, block.spec.merged_channels(), size);
  return w3 * merged;
}

/// Direct grouped convolution with explicit bounds checks.
template <typename T>
BasicTensor<T> naive_conv(const BasicTensor<T>& in, const ConvParams<T>& p) {
  const int n = in.n(), c_in = in.c(), h = in.h(), w = in.w();
  const int c_out = p.weight.n(), kh = p.weight.h(), kw = p.weight.w();
  const int oh = (h + 2 * p.padding - kh) / p.stride + 1;
  const int ow = (w + 2 * p.padding - kw) / p.stride + 1;
  const int cig = c_in / p.groups, cog = c_out / p.groups;
  BasicTensor<T> out(Shape{n, c_out, oh, ow});
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < c_out; ++oc) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = p.bias.empty() ? 0.0 : p.bias[oc];
          for (int j = 0; j < cig; ++j) {
            const int ic = (oc / cog) * cig + j;
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * p.stride + ky - p.padding;
                const int ix = ox * p.stride + kx - p.padding;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += static_cast<double>(p.weight.at(oc, j, ky, kx)) * in.at(b, ic, iy, ix);
              }
            }
          }
          out.at(b, oc, oy, ox) = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

/// Confusion counts by walking every (frame, AU) pair.
struct Counts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline std::vector<Counts> recount(const std::vector<std::vector<double>>& prob,
                                   const std::vector<LabelVector>& labels,
                                   double threshold) {
  const std::size_t d = labels.empty() ? 0 : labels[0].size();
  std::vector<Counts> out(d);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const bool pred = !(prob[i][k] < threshold);
      const bool truth = labels[i][k] == 1;
      if (pred && truth) ++out[k].tp;
      if (pred && !truth) ++out[k].fp;
      if (!pred && truth) ++out[k].fn;
      if (!pred && !truth) ++out[k].tn;
    }
  }
  return out;
}

struct Prf {
  double p = 0.0, r = 0.0, f1 = 0.0;
};

/// F1 = 2pr / (p + r); each quantity is 0 when its denominator is.
inline Prf harmonic(const Counts& c) {
  Prf s;
  if (c.tp + c.fp != 0) s.p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn != 0) s.r = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (s.p + s.r != 0.0) s.f1 = 2.0 * s.p * s.r / (s.p + s.r);
  return s;
}

/// F1 as 2TP / (2TP + FP + FN), defined as 0 when nothing is positive.
/// Algebraically identical to the harmonic mean of precision and recall.
inline double f1_direct(const Counts& c) {
  const std::int64_t den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

}  // namespace cednn::oracle

#pragma once

// Batched LSTM layer: forward pass with cached activations and exact
// backpropagation through time. Samples are columns; one matrix per timestep.

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "sliceguard/common.hpp"

namespace sliceguard::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Gate rows are stacked [input; forget; candidate; output], each `hidden` tall.
template <class S>
struct LstmParams {
  Mat<S> W;  // 4H x input
  Mat<S> U;  // 4H x H
  Vec<S> b;  // 4H

  LstmParams() = default;
  LstmParams(Eigen::Index input, Eigen::Index hidden)
      : W(Mat<S>::Zero(4 * hidden, input)), U(Mat<S>::Zero(4 * hidden, hidden)), b(Vec<S>::Zero(4 * hidden)) {}

  Eigen::Index input() const { return W.cols(); }
  Eigen::Index hidden() const { return U.cols(); }

  void set_zero() {
    W.setZero();
    U.setZero();
    b.setZero();
  }

  template <class T>
  LstmParams<T> cast() const {
    LstmParams<T> p;
    p.W = W.template cast<T>();
    p.U = U.template cast<T>();
    p.b = b.template cast<T>();
    return p;
  }
};

template <class S>
struct LstmCache {
  std::vector<Mat<S>> x, i, f, g, o, c, tanh_c, h;
  Mat<S> rmask;  // recurrent dropout mask (H x B), empty when off
};

namespace detail {

template <class S>
inline void sigmoid_inplace(Eigen::Block<Mat<S>> m) {
  m = (S(1) + (-m.array()).exp()).inverse().matrix();
}

}  // namespace detail

// Runs the layer over `xs`, filling `cache`; returns a reference to the
// hidden-state sequence. Initial hidden and cell states are zero. A non-empty
// `rmask` scales h_{t-1} on its way into the gates, same mask every step.
template <class S>
const std::vector<Mat<S>>& lstm_forward(const LstmParams<S>& p, const std::vector<Mat<S>>& xs, LstmCache<S>& cache,
                                        const Mat<S>& rmask = Mat<S>()) {
  const Eigen::Index H = p.hidden();
  const std::size_t T = xs.size();
  if (T == 0) throw Error("lstm_forward: empty sequence");
  cache.x = xs;
  cache.rmask = rmask;
  for (auto* v : {&cache.i, &cache.f, &cache.g, &cache.o, &cache.c, &cache.tanh_c, &cache.h}) v->resize(T);
  Mat<S> z;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& x = xs[t];
    if (x.rows() != p.input()) throw Error("lstm_forward: input width mismatch");
    z.noalias() = p.W * x;
    if (t > 0) {
      if (rmask.size() != 0)
        z.noalias() += p.U * (cache.h[t - 1].array() * rmask.array()).matrix();
      else
        z.noalias() += p.U * cache.h[t - 1];
    }
    z.colwise() += p.b;
    detail::sigmoid_inplace<S>(z.topRows(2 * H));
    detail::sigmoid_inplace<S>(z.bottomRows(H));
    cache.i[t] = z.topRows(H);
    cache.f[t] = z.middleRows(H, H);
    cache.g[t] = z.middleRows(2 * H, H).array().tanh().matrix();
    cache.o[t] = z.bottomRows(H);
    if (t > 0)
      cache.c[t] = (cache.f[t].array() * cache.c[t - 1].array() + cache.i[t].array() * cache.g[t].array()).matrix();
    else
      cache.c[t] = (cache.i[t].array() * cache.g[t].array()).matrix();
    cache.tanh_c[t] = cache.c[t].array().tanh().matrix();
    cache.h[t] = (cache.o[t].array() * cache.tanh_c[t].array()).matrix();
  }
  return cache.h;
}

template <class S>
std::vector<Mat<S>> lstm_forward(const LstmParams<S>& p, const std::vector<Mat<S>>& xs) {
  LstmCache<S> cache;
  lstm_forward(p, xs, cache);
  return std::move(cache.h);
}

// Accumulates parameter gradients into `grad` given dL/dh_t for every step
// (an empty matrix means zero) and returns dL/dx_t.
template <class S>
std::vector<Mat<S>> lstm_backward(const LstmParams<S>& p, const LstmCache<S>& cache, const std::vector<Mat<S>>& dh_ext,
                                  LstmParams<S>& grad) {
  const Eigen::Index H = p.hidden();
  const std::size_t T = cache.h.size();
  if (dh_ext.size() != T) throw Error("lstm_backward: gradient sequence length mismatch");
  const Eigen::Index B = cache.h[0].cols();
  std::vector<Mat<S>> dx(T);
  Mat<S> dh_next = Mat<S>::Zero(H, B);
  Mat<S> dc_next = Mat<S>::Zero(H, B);
  Mat<S> dz(4 * H, B);
  for (std::size_t t = T; t-- > 0;) {
    Mat<S> dh = dh_next;
    if (dh_ext[t].size() != 0) {
      if (dh_ext[t].rows() != H || dh_ext[t].cols() != B) throw Error("lstm_backward: gradient shape mismatch");
      dh += dh_ext[t];
    }
    const auto& i = cache.i[t].array();
    const auto& f = cache.f[t].array();
    const auto& g = cache.g[t].array();
    const auto& o = cache.o[t].array();
    const auto& tc = cache.tanh_c[t].array();
    const Mat<S> dc = (dc_next.array() + dh.array() * o * (S(1) - tc.square())).matrix();
    dz.topRows(H) = (dc.array() * g * i * (S(1) - i)).matrix();
    if (t > 0)
      dz.middleRows(H, H) = (dc.array() * cache.c[t - 1].array() * f * (S(1) - f)).matrix();
    else
      dz.middleRows(H, H).setZero();
    dz.middleRows(2 * H, H) = (dc.array() * i * (S(1) - g.square())).matrix();
    dz.bottomRows(H) = (dh.array() * tc * o * (S(1) - o)).matrix();
    dc_next = (dc.array() * f).matrix();

    grad.W.noalias() += dz * cache.x[t].transpose();
    grad.b += dz.rowwise().sum();
    if (t > 0) {
      if (cache.rmask.size() != 0) {
        grad.U.noalias() += dz * (cache.h[t - 1].array() * cache.rmask.array()).matrix().transpose();
        dh_next = ((p.U.transpose() * dz).array() * cache.rmask.array()).matrix();
      } else {
        grad.U.noalias() += dz * cache.h[t - 1].transpose();
        dh_next.noalias() = p.U.transpose() * dz;
      }
    }
    dx[t].noalias() = p.W.transpose() * dz;
  }
  return dx;
}

}  // namespace sliceguard::nn

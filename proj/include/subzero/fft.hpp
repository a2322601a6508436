#pragma once

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "types.hpp"

namespace subzero {

namespace detail {

template <typename S>
struct Fftw;

template <>
struct Fftw<double>
{
  using plan = fftw_plan;
  using cx = fftw_complex;
  static plan make(int rank, int const *n, int howmany, cx *buf, int stride, int sign)
  {
    return fftw_plan_many_dft(
        rank, n, howmany, buf, nullptr, stride, 1, buf, nullptr, stride, 1, sign,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static void run(plan p, cx *data) { fftw_execute_dft(p, data, data); }
  static cx *alloc(std::size_t n) { return fftw_alloc_complex(n); }
  static void release(cx *p) { fftw_free(p); }
};

template <>
struct Fftw<float>
{
  using plan = fftwf_plan;
  using cx = fftwf_complex;
  static plan make(int rank, int const *n, int howmany, cx *buf, int stride, int sign)
  {
    return fftwf_plan_many_dft(
        rank, n, howmany, buf, nullptr, stride, 1, buf, nullptr, stride, 1, sign,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static void run(plan p, cx *data) { fftwf_execute_dft(p, data, data); }
  static cx *alloc(std::size_t n) { return fftwf_alloc_complex(n); }
  static void release(cx *p) { fftwf_free(p); }
};

// FFTW planning is not thread-safe, execution with the new-array interface
// is. Plans are created once per geometry under a lock and never destroyed.
// FFTW_ESTIMATE keeps the chosen algorithm, and hence the rounding, fixed
// from run to run.
template <typename S>
typename Fftw<S>::plan cached_plan(Index M, Index N, Index K, int sign)
{
  static std::mutex lock;
  static std::map<std::tuple<Index, Index, Index, int>, typename Fftw<S>::plan> plans;
  std::lock_guard<std::mutex> guard(lock);
  auto const key = std::make_tuple(M, N, K, sign);
  auto it = plans.find(key);
  if (it != plans.end()) {
    return it->second;
  }
  auto *buf = Fftw<S>::alloc(static_cast<std::size_t>(M * N * K));
  int const n[2] = {static_cast<int>(M), static_cast<int>(N)};
  auto p = Fftw<S>::make(2, n, static_cast<int>(K), buf, static_cast<int>(K), sign);
  Fftw<S>::release(buf);
  plans.emplace(key, p);
  return p;
}

// Circular shift of the two leading axes of an (M, N, K) row-major array by
// (sm, sn): out[(m + sm) % M, (n + sn) % N, :] = in[m, n, :].
template <typename S>
void roll2(Cx<S> *data, Index M, Index N, Index K, Index sm, Index sn)
{
  if (sm == 0 && sn == 0) {
    return;
  }
  std::vector<Cx<S>> tmp(data, data + M * N * K);
  for (Index m = 0; m < M; m++) {
    Index const mo = (m + sm) % M;
    for (Index n = 0; n < N; n++) {
      Index const no = (n + sn) % N;
      std::copy_n(&tmp[(m * N + n) * K], K, data + (mo * N + no) * K);
    }
  }
}

} // namespace detail

// Centered, orthonormal 2D DFT over the two leading axes of an (M, N, K)
// row-major buffer, batched over the trailing K. DC sits at (M/2, N/2).
template <typename S>
void fft2c_inplace(Cx<S> *data, Index M, Index N, Index K, bool inverse)
{
  using F = detail::Fftw<S>;
  // ifftshift: move the centre to index 0
  detail::roll2(data, M, N, K, M - M / 2, N - N / 2);
  auto plan = detail::cached_plan<S>(M, N, K, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
  F::run(plan, reinterpret_cast<typename F::cx *>(data));
  // fftshift
  detail::roll2(data, M, N, K, M / 2, N / 2);
  S const scale = S(1) / std::sqrt(static_cast<S>(M * N));
  for (Index i = 0; i < M * N * K; i++) {
    data[i] *= scale;
  }
}

template <typename S>
Tensor<Cx<S>, 2> fft2c(Tensor<Cx<S>, 2> const &img)
{
  Tensor<Cx<S>, 2> out = img;
  fft2c_inplace<S>(out.data(), out.dimension(0), out.dimension(1), 1, false);
  return out;
}

template <typename S>
Tensor<Cx<S>, 2> ifft2c(Tensor<Cx<S>, 2> const &ks)
{
  Tensor<Cx<S>, 2> out = ks;
  fft2c_inplace<S>(out.data(), out.dimension(0), out.dimension(1), 1, true);
  return out;
}

// Batched variants over every trailing index of a rank-R tensor (R >= 2).
template <typename S, int R>
void fft2c_batch(Tensor<Cx<S>, R> &t, bool inverse)
{
  static_assert(R >= 2);
  Index K = 1;
  for (int i = 2; i < R; i++) {
    K *= t.dimension(i);
  }
  fft2c_inplace<S>(t.data(), t.dimension(0), t.dimension(1), K, inverse);
}

} // namespace subzero

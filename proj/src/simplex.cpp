#include "pgds/simplex.hpp"

#include <algorithm>
#include <cmath>

#include "pgds/common.hpp"

namespace pgds {

namespace simplex_detail {

void softmax_raw(const double* logits, double* q, double* p, int d, double tau) {
  double mx = logits[0];
  for (int k = 1; k < d; ++k) mx = std::max(mx, logits[k]);
  double sum = 0.0;
  for (int k = 0; k < d; ++k) {
    q[k] = std::exp((logits[k] - mx) / tau);
    sum += q[k];
  }
  const double inv = 1.0 / sum;
  for (int k = 0; k < d; ++k) q[k] *= inv;

  double clamped_sum = 0.0;
  for (int k = 0; k < d; ++k) clamped_sum += std::max(q[k], kProbEpsilon);
  const double cinv = 1.0 / clamped_sum;
  for (int k = 0; k < d; ++k) p[k] = std::max(q[k], kProbEpsilon) * cinv;
}

void softmax_backward(const double* q, const double* dp, double* dlogits, int d, double tau) {
  double clamped_sum = 0.0;
  for (int k = 0; k < d; ++k) clamped_sum += std::max(q[k], kProbEpsilon);
  const double cinv = 1.0 / clamped_sum;

  // p = c / S with c = max(q, eps): dL/dc_k = (dp_k - sum_j dp_j p_j) / S,
  // and the clamp gate zeroes entries that sat at eps.
  double dot_dp_p = 0.0;
  for (int k = 0; k < d; ++k) dot_dp_p += dp[k] * (std::max(q[k], kProbEpsilon) * cinv);

  // dL/dq through the plain softmax: dz_k = q_k (dq_k - sum_j q_j dq_j) / tau.
  double dot_dq_q = 0.0;
  std::vector<double> dq(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) {
    const double dc = (dp[k] - dot_dp_p) * cinv;
    dq[k] = (q[k] > kProbEpsilon) ? dc : 0.0;
    dot_dq_q += dq[k] * q[k];
  }
  for (int k = 0; k < d; ++k) dlogits[k] += q[k] * (dq[k] - dot_dq_q) / tau;
}

double kl_raw(const double* p, const double* q, int d, bool* clamped) {
  double acc = 0.0;
  for (int k = 0; k < d; ++k) acc += p[k] * std::log(p[k] / q[k]);
  const bool clip = acc < 0.0;
  if (clamped) *clamped = clip;
  return clip ? 0.0 : acc;
}

void kl_backward(const double* p, const double* q, int d, bool clamped, double scale,
                 double* dp, double* dq) {
  if (clamped || scale == 0.0) return;
  for (int k = 0; k < d; ++k) {
    if (dp) dp[k] += scale * (std::log(p[k] / q[k]) + 1.0);
    if (dq) dq[k] += scale * (-p[k] / q[k]);
  }
}

}  // namespace simplex_detail

std::vector<double> softmax_with_temperature(std::span<const double> logits, double tau) {
  PGDS_CHECK_ARG(!logits.empty(), "softmax: empty logits");
  PGDS_CHECK_ARG(tau > 0.0 && std::isfinite(tau), "softmax: tau must be positive, got ", tau);
  for (double v : logits)
    PGDS_CHECK_ARG(std::isfinite(v), "softmax: non-finite logit ", v);

  const int d = static_cast<int>(logits.size());
  std::vector<double> q(logits.size()), p(logits.size());
  simplex_detail::softmax_raw(logits.data(), q.data(), p.data(), d, tau);
  return p;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  PGDS_CHECK_ARG(p.size() == q.size(), "kl_divergence: dimension mismatch ", p.size(), " vs ",
                 q.size());
  PGDS_CHECK_ARG(!p.empty(), "kl_divergence: empty input");
  return simplex_detail::kl_raw(p.data(), q.data(), static_cast<int>(p.size()), nullptr);
}

void softmax_rows(const Tensor& logits, double tau, Tensor& probs, Tensor& q_cache) {
  PGDS_CHECK_ARG(logits.rank() == 2, "softmax_rows: expected (N, D) logits");
  const int n = static_cast<int>(logits.dim(0));
  const int d = static_cast<int>(logits.dim(1));
  if (!probs.same_shape(logits)) probs = Tensor(logits.shape());
  if (!q_cache.same_shape(logits)) q_cache = Tensor(logits.shape());
  for (int i = 0; i < n; ++i)
    simplex_detail::softmax_raw(logits.data() + static_cast<std::size_t>(i) * d,
                                q_cache.data() + static_cast<std::size_t>(i) * d,
                                probs.data() + static_cast<std::size_t>(i) * d, d, tau);
}

void softmax_rows_backward(const Tensor& q_cache, const Tensor& dprobs, double tau,
                           Tensor& dlogits) {
  const int n = static_cast<int>(q_cache.dim(0));
  const int d = static_cast<int>(q_cache.dim(1));
  if (!dlogits.same_shape(q_cache)) {
    dlogits = Tensor(q_cache.shape());
  }
  for (int i = 0; i < n; ++i)
    simplex_detail::softmax_backward(q_cache.data() + static_cast<std::size_t>(i) * d,
                                     dprobs.data() + static_cast<std::size_t>(i) * d,
                                     dlogits.data() + static_cast<std::size_t>(i) * d, d, tau);
}

}  // namespace pgds

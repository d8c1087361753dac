#pragma once

#include <span>
#include <vector>

#include "pgds/tensor.hpp"

namespace pgds {

// Probability vectors live on the simplex after an epsilon clamp; the clamp
// keeps every log and ratio in the guide loss finite.
inline constexpr double kProbEpsilon = 1e-8;

// Numerically stable temperature softmax (max subtraction), followed by the
// epsilon clamp and renormalization. Rejects non-finite logits and tau <= 0.
std::vector<double> softmax_with_temperature(std::span<const double> logits, double tau);

// KL(p|q) = sum_k p_k ln(p_k / q_k) with natural log, clamped to 0 from below.
// Both inputs must be same-length clamped simplex vectors.
double kl_divergence(std::span<const double> p, std::span<const double> q);

namespace simplex_detail {

// Unchecked single-vector kernels used on the training path. `softmax_raw`
// writes the pre-clamp softmax into `q` and the clamped/renormalized result
// into `p` (the two may alias only if clamping is irrelevant to the caller).
void softmax_raw(const double* logits, double* q, double* p, int d, double tau);

// Exact adjoint of softmax_raw including the clamp/renormalize step.
// `q` is the cached pre-clamp softmax; adds the result into dlogits.
void softmax_backward(const double* q, const double* dp, double* dlogits, int d, double tau);

double kl_raw(const double* p, const double* q, int d, bool* clamped);

// d KL(p|q) accumulated into dp and dq with a chain-rule scale; no-op when the
// forward value was clamped to zero.
void kl_backward(const double* p, const double* q, int d, bool clamped, double scale,
                 double* dp, double* dq);

}  // namespace simplex_detail

// Batched convenience: logits (N, D) -> probs (N, D); q_cache receives the
// pre-clamp softmax rows needed by the backward pass.
void softmax_rows(const Tensor& logits, double tau, Tensor& probs, Tensor& q_cache);
void softmax_rows_backward(const Tensor& q_cache, const Tensor& dprobs, double tau,
                           Tensor& dlogits);

}  // namespace pgds

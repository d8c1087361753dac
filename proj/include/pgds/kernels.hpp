#pragma once

#include <cstddef>

namespace pgds::kernels {

// The OpenMP kernels parallelize only over independent output elements and
// keep the per-element accumulation order identical to the serial reference,
// so serial and parallel results are bitwise equal for any thread count.
// The serial variants stay as the reference the tests compare against.

bool parallel_enabled();
void set_parallel(bool enabled);

// Pins the kernel thread count; n == 1 disables parallel dispatch, n > 1
// re-enables it.
void set_thread_count(int n);
int thread_count();

struct Conv2dShape {
  int n;      // batch
  int in_h, in_w, in_c;
  int out_h, out_w, out_c;
  int kh, kw;
  int stride;
  int pad;
};

// Input (N, H, W, Cin); weights (Cout, KH, KW, Cin); bias (Cout); output (N, OH, OW, Cout).
void conv2d_forward_serial(const double* in, const double* w, const double* b,
                           double* out, const Conv2dShape& s);
void conv2d_forward_omp(const double* in, const double* w, const double* b,
                        double* out, const Conv2dShape& s);
void conv2d_forward(const double* in, const double* w, const double* b,
                    double* out, const Conv2dShape& s);

void conv2d_backward_input_serial(const double* dout, const double* w, double* din,
                                  const Conv2dShape& s);
void conv2d_backward_input_omp(const double* dout, const double* w, double* din,
                               const Conv2dShape& s);
void conv2d_backward_input(const double* dout, const double* w, double* din,
                           const Conv2dShape& s);

// Accumulates into dw/db (callers zero the gradients at step start).
void conv2d_backward_params_serial(const double* in, const double* dout,
                                   double* dw, double* db, const Conv2dShape& s);
void conv2d_backward_params_omp(const double* in, const double* dout,
                                double* dw, double* db, const Conv2dShape& s);
void conv2d_backward_params(const double* in, const double* dout,
                            double* dw, double* db, const Conv2dShape& s);

// Input (N, Cin); weights (Cout, Cin); bias (Cout); output (N, Cout).
void linear_forward_serial(const double* in, const double* w, const double* b,
                           double* out, int n, int in_c, int out_c);
void linear_forward_omp(const double* in, const double* w, const double* b,
                        double* out, int n, int in_c, int out_c);
void linear_forward(const double* in, const double* w, const double* b,
                    double* out, int n, int in_c, int out_c);

void linear_backward_input_serial(const double* dout, const double* w, double* din,
                                  int n, int in_c, int out_c);
void linear_backward_input_omp(const double* dout, const double* w, double* din,
                               int n, int in_c, int out_c);
void linear_backward_input(const double* dout, const double* w, double* din,
                           int n, int in_c, int out_c);

void linear_backward_params_serial(const double* in, const double* dout,
                                   double* dw, double* db, int n, int in_c, int out_c);
void linear_backward_params_omp(const double* in, const double* dout,
                                double* dw, double* db, int n, int in_c, int out_c);
void linear_backward_params(const double* in, const double* dout,
                            double* dw, double* db, int n, int in_c, int out_c);

// Per-channel mean/variance over `rows` channels-last rows (population variance).
void channel_stats_serial(const double* in, std::size_t rows, int channels,
                          double* mean, double* var);
void channel_stats_omp(const double* in, std::size_t rows, int channels,
                       double* mean, double* var);
void channel_stats(const double* in, std::size_t rows, int channels,
                   double* mean, double* var);

// (N, H, W, C) -> (N, C) spatial mean, and its adjoint.
void global_avg_pool_serial(const double* in, double* out, int n, int hw, int c);
void global_avg_pool_omp(const double* in, double* out, int n, int hw, int c);
void global_avg_pool(const double* in, double* out, int n, int hw, int c);

void global_avg_pool_backward_serial(const double* dout, double* din, int n, int hw, int c);
void global_avg_pool_backward_omp(const double* dout, double* din, int n, int hw, int c);
void global_avg_pool_backward(const double* dout, double* din, int n, int hw, int c);

// Squared Euclidean distances between rows of (N, D): output (N, N).
void pairwise_sqdist_serial(const double* emb, double* dist, int n, int d);
void pairwise_sqdist_omp(const double* emb, double* dist, int n, int d);
void pairwise_sqdist(const double* emb, double* dist, int n, int d);

}  // namespace pgds::kernels

#include "pgds/kernels.hpp"

#include <omp.h>

#include <atomic>

namespace pgds::kernels {

namespace {
std::atomic<bool> g_parallel{true};
std::atomic<int> g_threads{0};  // 0 = OpenMP default

inline int team_size() {
  const int t = g_threads.load(std::memory_order_relaxed);
  return t > 0 ? t : omp_get_max_threads();
}

// Shared per-output-element accumulators. Both the serial and the OpenMP
// variants call these, which keeps the floating-point evaluation order (and
// therefore the bits) identical between the two paths.

inline double conv_out_element(const double* in, const double* w, double bias,
                               const Conv2dShape& s, int n, int oy, int ox, int co) {
  const int in_row = s.in_w * s.in_c;
  const double* wc = w + static_cast<std::size_t>(co) * s.kh * s.kw * s.in_c;
  double acc = bias;
  for (int ky = 0; ky < s.kh; ++ky) {
    const int iy = oy * s.stride - s.pad + ky;
    if (iy < 0 || iy >= s.in_h) continue;
    for (int kx = 0; kx < s.kw; ++kx) {
      const int ix = ox * s.stride - s.pad + kx;
      if (ix < 0 || ix >= s.in_w) continue;
      const double* ip = in + (static_cast<std::size_t>(n) * s.in_h + iy) * in_row +
                         static_cast<std::size_t>(ix) * s.in_c;
      const double* wp = wc + (ky * s.kw + kx) * s.in_c;
      for (int ci = 0; ci < s.in_c; ++ci) acc += ip[ci] * wp[ci];
    }
  }
  return acc;
}

inline double conv_din_element(const double* dout, const double* w,
                               const Conv2dShape& s, int n, int iy, int ix, int ci) {
  const int out_row = s.out_w * s.out_c;
  double acc = 0.0;
  for (int ky = 0; ky < s.kh; ++ky) {
    const int oy_num = iy + s.pad - ky;
    if (oy_num < 0 || oy_num % s.stride != 0) continue;
    const int oy = oy_num / s.stride;
    if (oy >= s.out_h) continue;
    for (int kx = 0; kx < s.kw; ++kx) {
      const int ox_num = ix + s.pad - kx;
      if (ox_num < 0 || ox_num % s.stride != 0) continue;
      const int ox = ox_num / s.stride;
      if (ox >= s.out_w) continue;
      const double* dp = dout + (static_cast<std::size_t>(n) * s.out_h + oy) * out_row +
                         static_cast<std::size_t>(ox) * s.out_c;
      for (int co = 0; co < s.out_c; ++co) {
        const double wv = w[((static_cast<std::size_t>(co) * s.kh + ky) * s.kw + kx) * s.in_c + ci];
        acc += dp[co] * wv;
      }
    }
  }
  return acc;
}

// Accumulates the full gradient slice for one output channel; each co is owned
// by exactly one thread, so the reduction order per weight never changes.
inline void conv_param_slice(const double* in, const double* dout,
                             double* dw, double* db, const Conv2dShape& s, int co) {
  const int in_row = s.in_w * s.in_c;
  const int out_row = s.out_w * s.out_c;
  double* dwc = dw + static_cast<std::size_t>(co) * s.kh * s.kw * s.in_c;
  double bacc = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (int oy = 0; oy < s.out_h; ++oy) {
      for (int ox = 0; ox < s.out_w; ++ox) {
        const double g = dout[(static_cast<std::size_t>(n) * s.out_h + oy) * out_row +
                              static_cast<std::size_t>(ox) * s.out_c + co];
        if (g == 0.0) continue;
        bacc += g;
        for (int ky = 0; ky < s.kh; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_h) continue;
          for (int kx = 0; kx < s.kw; ++kx) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.in_w) continue;
            const double* ip = in + (static_cast<std::size_t>(n) * s.in_h + iy) * in_row +
                               static_cast<std::size_t>(ix) * s.in_c;
            double* wp = dwc + (ky * s.kw + kx) * s.in_c;
            for (int ci = 0; ci < s.in_c; ++ci) wp[ci] += g * ip[ci];
          }
        }
      }
    }
  }
  db[co] += bacc;
}

inline double linear_out_element(const double* in, const double* w, double bias,
                                 int in_c, int n, int co) {
  const double* ip = in + static_cast<std::size_t>(n) * in_c;
  const double* wp = w + static_cast<std::size_t>(co) * in_c;
  double acc = bias;
  for (int ci = 0; ci < in_c; ++ci) acc += ip[ci] * wp[ci];
  return acc;
}

inline double linear_din_element(const double* dout, const double* w,
                                 int in_c, int out_c, int n, int ci) {
  const double* dp = dout + static_cast<std::size_t>(n) * out_c;
  double acc = 0.0;
  for (int co = 0; co < out_c; ++co) acc += dp[co] * w[static_cast<std::size_t>(co) * in_c + ci];
  return acc;
}

inline void linear_param_slice(const double* in, const double* dout,
                               double* dw, double* db, int n_rows, int in_c, int out_c, int co) {
  double* wp = dw + static_cast<std::size_t>(co) * in_c;
  double bacc = 0.0;
  for (int n = 0; n < n_rows; ++n) {
    const double g = dout[static_cast<std::size_t>(n) * out_c + co];
    if (g == 0.0) continue;
    bacc += g;
    const double* ip = in + static_cast<std::size_t>(n) * in_c;
    for (int ci = 0; ci < in_c; ++ci) wp[ci] += g * ip[ci];
  }
  db[co] += bacc;
}

inline void channel_stat_one(const double* in, std::size_t rows, int channels,
                             double* mean, double* var, int c) {
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) acc += in[r * channels + c];
  const double m = acc / static_cast<double>(rows);
  double vacc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double d = in[r * channels + c] - m;
    vacc += d * d;
  }
  mean[c] = m;
  var[c] = vacc / static_cast<double>(rows);
}

inline double gap_element(const double* in, int hw, int c, int n, int ch) {
  const double* p = in + static_cast<std::size_t>(n) * hw * c + ch;
  double acc = 0.0;
  for (int i = 0; i < hw; ++i) acc += p[static_cast<std::size_t>(i) * c];
  return acc / static_cast<double>(hw);
}

inline double sqdist_element(const double* emb, int d, int i, int j) {
  const double* a = emb + static_cast<std::size_t>(i) * d;
  const double* b = emb + static_cast<std::size_t>(j) * d;
  double acc = 0.0;
  for (int k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

void set_thread_count(int n) {
  g_threads.store(n, std::memory_order_relaxed);
  set_parallel(n != 1);
}
int thread_count() { return team_size(); }

// ---- conv2d ----

void conv2d_forward_serial(const double* in, const double* w, const double* b,
                           double* out, const Conv2dShape& s) {
  for (int n = 0; n < s.n; ++n)
    for (int oy = 0; oy < s.out_h; ++oy)
      for (int ox = 0; ox < s.out_w; ++ox) {
        double* op = out + ((static_cast<std::size_t>(n) * s.out_h + oy) * s.out_w + ox) * s.out_c;
        for (int co = 0; co < s.out_c; ++co)
          op[co] = conv_out_element(in, w, b[co], s, n, oy, ox, co);
      }
}

void conv2d_forward_omp(const double* in, const double* w, const double* b,
                        double* out, const Conv2dShape& s) {
  const long total = static_cast<long>(s.n) * s.out_h * s.out_w;
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (long idx = 0; idx < total; ++idx) {
    const int n = static_cast<int>(idx / (s.out_h * s.out_w));
    const int rem = static_cast<int>(idx % (s.out_h * s.out_w));
    const int oy = rem / s.out_w;
    const int ox = rem % s.out_w;
    double* op = out + static_cast<std::size_t>(idx) * s.out_c;
    for (int co = 0; co < s.out_c; ++co)
      op[co] = conv_out_element(in, w, b[co], s, n, oy, ox, co);
  }
}

void conv2d_forward(const double* in, const double* w, const double* b,
                    double* out, const Conv2dShape& s) {
  if (parallel_enabled())
    conv2d_forward_omp(in, w, b, out, s);
  else
    conv2d_forward_serial(in, w, b, out, s);
}

void conv2d_backward_input_serial(const double* dout, const double* w, double* din,
                                  const Conv2dShape& s) {
  for (int n = 0; n < s.n; ++n)
    for (int iy = 0; iy < s.in_h; ++iy)
      for (int ix = 0; ix < s.in_w; ++ix) {
        double* dp = din + ((static_cast<std::size_t>(n) * s.in_h + iy) * s.in_w + ix) * s.in_c;
        for (int ci = 0; ci < s.in_c; ++ci)
          dp[ci] = conv_din_element(dout, w, s, n, iy, ix, ci);
      }
}

void conv2d_backward_input_omp(const double* dout, const double* w, double* din,
                               const Conv2dShape& s) {
  const long total = static_cast<long>(s.n) * s.in_h * s.in_w;
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (long idx = 0; idx < total; ++idx) {
    const int n = static_cast<int>(idx / (s.in_h * s.in_w));
    const int rem = static_cast<int>(idx % (s.in_h * s.in_w));
    const int iy = rem / s.in_w;
    const int ix = rem % s.in_w;
    double* dp = din + static_cast<std::size_t>(idx) * s.in_c;
    for (int ci = 0; ci < s.in_c; ++ci)
      dp[ci] = conv_din_element(dout, w, s, n, iy, ix, ci);
  }
}

void conv2d_backward_input(const double* dout, const double* w, double* din,
                           const Conv2dShape& s) {
  if (parallel_enabled())
    conv2d_backward_input_omp(dout, w, din, s);
  else
    conv2d_backward_input_serial(dout, w, din, s);
}

void conv2d_backward_params_serial(const double* in, const double* dout,
                                   double* dw, double* db, const Conv2dShape& s) {
  for (int co = 0; co < s.out_c; ++co) conv_param_slice(in, dout, dw, db, s, co);
}

void conv2d_backward_params_omp(const double* in, const double* dout,
                                double* dw, double* db, const Conv2dShape& s) {
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (int co = 0; co < s.out_c; ++co) conv_param_slice(in, dout, dw, db, s, co);
}

void conv2d_backward_params(const double* in, const double* dout,
                            double* dw, double* db, const Conv2dShape& s) {
  if (parallel_enabled())
    conv2d_backward_params_omp(in, dout, dw, db, s);
  else
    conv2d_backward_params_serial(in, dout, dw, db, s);
}

// ---- linear ----

void linear_forward_serial(const double* in, const double* w, const double* b,
                           double* out, int n, int in_c, int out_c) {
  for (int i = 0; i < n; ++i)
    for (int co = 0; co < out_c; ++co)
      out[static_cast<std::size_t>(i) * out_c + co] = linear_out_element(in, w, b[co], in_c, i, co);
}

void linear_forward_omp(const double* in, const double* w, const double* b,
                        double* out, int n, int in_c, int out_c) {
  const long total = static_cast<long>(n) * out_c;
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (long idx = 0; idx < total; ++idx) {
    const int i = static_cast<int>(idx / out_c);
    const int co = static_cast<int>(idx % out_c);
    out[idx] = linear_out_element(in, w, b[co], in_c, i, co);
  }
}

void linear_forward(const double* in, const double* w, const double* b,
                    double* out, int n, int in_c, int out_c) {
  if (parallel_enabled())
    linear_forward_omp(in, w, b, out, n, in_c, out_c);
  else
    linear_forward_serial(in, w, b, out, n, in_c, out_c);
}

void linear_backward_input_serial(const double* dout, const double* w, double* din,
                                  int n, int in_c, int out_c) {
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < in_c; ++ci)
      din[static_cast<std::size_t>(i) * in_c + ci] = linear_din_element(dout, w, in_c, out_c, i, ci);
}

void linear_backward_input_omp(const double* dout, const double* w, double* din,
                               int n, int in_c, int out_c) {
  const long total = static_cast<long>(n) * in_c;
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (long idx = 0; idx < total; ++idx) {
    const int i = static_cast<int>(idx / in_c);
    const int ci = static_cast<int>(idx % in_c);
    din[idx] = linear_din_element(dout, w, in_c, out_c, i, ci);
  }
}

void linear_backward_input(const double* dout, const double* w, double* din,
                           int n, int in_c, int out_c) {
  if (parallel_enabled())
    linear_backward_input_omp(dout, w, din, n, in_c, out_c);
  else
    linear_backward_input_serial(dout, w, din, n, in_c, out_c);
}

void linear_backward_params_serial(const double* in, const double* dout,
                                   double* dw, double* db, int n, int in_c, int out_c) {
  for (int co = 0; co < out_c; ++co) linear_param_slice(in, dout, dw, db, n, in_c, out_c, co);
}

void linear_backward_params_omp(const double* in, const double* dout,
                                double* dw, double* db, int n, int in_c, int out_c) {
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (int co = 0; co < out_c; ++co) linear_param_slice(in, dout, dw, db, n, in_c, out_c, co);
}

void linear_backward_params(const double* in, const double* dout,
                            double* dw, double* db, int n, int in_c, int out_c) {
  if (parallel_enabled())
    linear_backward_params_omp(in, dout, dw, db, n, in_c, out_c);
  else
    linear_backward_params_serial(in, dout, dw, db, n, in_c, out_c);
}

// ---- batchnorm statistics ----

void channel_stats_serial(const double* in, std::size_t rows, int channels,
                          double* mean, double* var) {
  for (int c = 0; c < channels; ++c) channel_stat_one(in, rows, channels, mean, var, c);
}

void channel_stats_omp(const double* in, std::size_t rows, int channels,
                       double* mean, double* var) {
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (int c = 0; c < channels; ++c) channel_stat_one(in, rows, channels, mean, var, c);
}

void channel_stats(const double* in, std::size_t rows, int channels,
                   double* mean, double* var) {
  if (parallel_enabled())
    channel_stats_omp(in, rows, channels, mean, var);
  else
    channel_stats_serial(in, rows, channels, mean, var);
}

// ---- global average pooling ----

void global_avg_pool_serial(const double* in, double* out, int n, int hw, int c) {
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      out[static_cast<std::size_t>(i) * c + ch] = gap_element(in, hw, c, i, ch);
}

void global_avg_pool_omp(const double* in, double* out, int n, int hw, int c) {
  const long total = static_cast<long>(n) * c;
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (long idx = 0; idx < total; ++idx)
    out[idx] = gap_element(in, hw, c, static_cast<int>(idx / c), static_cast<int>(idx % c));
}

void global_avg_pool(const double* in, double* out, int n, int hw, int c) {
  if (parallel_enabled())
    global_avg_pool_omp(in, out, n, hw, c);
  else
    global_avg_pool_serial(in, out, n, hw, c);
}

void global_avg_pool_backward_serial(const double* dout, double* din, int n, int hw, int c) {
  const double inv = 1.0 / static_cast<double>(hw);
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < hw; ++p)
      for (int ch = 0; ch < c; ++ch)
        din[(static_cast<std::size_t>(i) * hw + p) * c + ch] =
            dout[static_cast<std::size_t>(i) * c + ch] * inv;
}

void global_avg_pool_backward_omp(const double* dout, double* din, int n, int hw, int c) {
  const double inv = 1.0 / static_cast<double>(hw);
  const long total = static_cast<long>(n) * hw;
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (long idx = 0; idx < total; ++idx) {
    const int i = static_cast<int>(idx / hw);
    for (int ch = 0; ch < c; ++ch)
      din[static_cast<std::size_t>(idx) * c + ch] =
          dout[static_cast<std::size_t>(i) * c + ch] * inv;
  }
}

void global_avg_pool_backward(const double* dout, double* din, int n, int hw, int c) {
  if (parallel_enabled())
    global_avg_pool_backward_omp(dout, din, n, hw, c);
  else
    global_avg_pool_backward_serial(dout, din, n, hw, c);
}

// ---- pairwise squared distances ----

void pairwise_sqdist_serial(const double* emb, double* dist, int n, int d) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      dist[static_cast<std::size_t>(i) * n + j] = sqdist_element(emb, d, i, j);
}

void pairwise_sqdist_omp(const double* emb, double* dist, int n, int d) {
  const long total = static_cast<long>(n) * n;
#pragma omp parallel for schedule(static) num_threads(team_size())
  for (long idx = 0; idx < total; ++idx)
    dist[idx] = sqdist_element(emb, d, static_cast<int>(idx / n), static_cast<int>(idx % n));
}

void pairwise_sqdist(const double* emb, double* dist, int n, int d) {
  if (parallel_enabled())
    pairwise_sqdist_omp(emb, dist, n, d);
  else
    pairwise_sqdist_serial(emb, dist, n, d);
}

}  // namespace pgds::kernels

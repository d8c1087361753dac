#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "pgds/kernels.hpp"
#include "pgds/rng.hpp"

using namespace pgds;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm caches
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void fill(std::vector<double>& v, Rng& rng) {
  for (double& x : v) x = rng.normal();
}

}  // namespace

int main() {
  Rng rng(7);

  kernels::Conv2dShape s;
  s.n = 8;
  s.in_h = 48;
  s.in_w = 16;
  s.in_c = 16;
  s.kh = s.kw = 3;
  s.stride = 1;
  s.pad = 1;
  s.out_h = 48;
  s.out_w = 16;
  s.out_c = 32;

  std::vector<double> in(static_cast<std::size_t>(s.n) * s.in_h * s.in_w * s.in_c);
  std::vector<double> w(static_cast<std::size_t>(s.out_c) * s.kh * s.kw * s.in_c);
  std::vector<double> b(s.out_c);
  std::vector<double> out_a(static_cast<std::size_t>(s.n) * s.out_h * s.out_w * s.out_c);
  std::vector<double> out_b(out_a.size());
  fill(in, rng);
  fill(w, rng);
  fill(b, rng);

  std::printf("%-28s %10s %10s %8s %s\n", "kernel", "serial ms", "omp ms", "speedup",
              "bitwise");

  auto report = [&](const char* name, const std::function<void()>& serial,
                    const std::function<void()>& omp, const std::vector<double>& ra,
                    const std::vector<double>& rb) {
    const double ts = time_ms(serial, 5);
    const double tp = time_ms(omp, 5);
    std::printf("%-28s %10.3f %10.3f %8.2fx %s\n", name, ts, tp, ts / tp,
                bitwise_equal(ra, rb) ? "equal" : "DIFFER");
  };

  report(
      "conv2d_forward", [&] { kernels::conv2d_forward_serial(in.data(), w.data(), b.data(),
                                                             out_a.data(), s); },
      [&] { kernels::conv2d_forward_omp(in.data(), w.data(), b.data(), out_b.data(), s); },
      out_a, out_b);

  std::vector<double> dout(out_a.size());
  fill(dout, rng);
  std::vector<double> din_a(in.size()), din_b(in.size());
  report(
      "conv2d_backward_input",
      [&] { kernels::conv2d_backward_input_serial(dout.data(), w.data(), din_a.data(), s); },
      [&] { kernels::conv2d_backward_input_omp(dout.data(), w.data(), din_b.data(), s); },
      din_a, din_b);

  std::vector<double> dw_a(w.size()), db_a(b.size()), dw_b(w.size()), db_b(b.size());
  report(
      "conv2d_backward_params",
      [&] {
        std::fill(dw_a.begin(), dw_a.end(), 0.0);
        std::fill(db_a.begin(), db_a.end(), 0.0);
        kernels::conv2d_backward_params_serial(in.data(), dout.data(), dw_a.data(), db_a.data(),
                                               s);
      },
      [&] {
        std::fill(dw_b.begin(), dw_b.end(), 0.0);
        std::fill(db_b.begin(), db_b.end(), 0.0);
        kernels::conv2d_backward_params_omp(in.data(), dout.data(), dw_b.data(), db_b.data(), s);
      },
      dw_a, dw_b);

  const int ln = 256, lin = 512, lout = 256;
  std::vector<double> lx(static_cast<std::size_t>(ln) * lin), lw(static_cast<std::size_t>(lout) * lin),
      lb(lout);
  std::vector<double> ly_a(static_cast<std::size_t>(ln) * lout), ly_b(ly_a.size());
  fill(lx, rng);
  fill(lw, rng);
  fill(lb, rng);
  report(
      "linear_forward",
      [&] { kernels::linear_forward_serial(lx.data(), lw.data(), lb.data(), ly_a.data(), ln, lin,
                                           lout); },
      [&] { kernels::linear_forward_omp(lx.data(), lw.data(), lb.data(), ly_b.data(), ln, lin,
                                        lout); },
      ly_a, ly_b);

  const int pn = 512, pd = 128;
  std::vector<double> emb(static_cast<std::size_t>(pn) * pd);
  std::vector<double> dist_a(static_cast<std::size_t>(pn) * pn), dist_b(dist_a.size());
  fill(emb, rng);
  report(
      "pairwise_sqdist",
      [&] { kernels::pairwise_sqdist_serial(emb.data(), dist_a.data(), pn, pd); },
      [&] { kernels::pairwise_sqdist_omp(emb.data(), dist_b.data(), pn, pd); }, dist_a, dist_b);

  return 0;
}

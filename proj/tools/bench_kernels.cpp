// Times the serial reference kernels against the OpenMP ones on a mid-size
// workload and reports the largest element difference (expected: exactly 0).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "recal/kernels.hpp"
#include "recal/rng.hpp"

using recal::real;
using namespace recal::kernels;

namespace {

std::vector<real> random_vec(size_t n, recal::Rng& rng) {
  std::vector<real> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

real max_diff(const std::vector<real>& a, const std::vector<real>& b) {
  real worst = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

struct Row {
  const char* name;
  double serial_ms;
  double omp_ms;
  real diff;
};

}  // namespace

int main() {
  recal::Rng rng(7);

  ConvDims d;
  d.n = 2;
  d.cin = 32;
  d.hin = 64;
  d.win = 64;
  d.cout = 32;
  d.hout = 64;
  d.wout = 64;
  d.kh = 3;
  d.kw = 3;
  d.ph = 1;
  d.pw = 1;

  const size_t xs = static_cast<size_t>(d.n * d.cin * d.hin * d.win);
  const size_t ys = static_cast<size_t>(d.n * d.cout * d.hout * d.wout);
  const size_t ws = static_cast<size_t>(d.cout * d.cin * d.kh * d.kw);
  const auto x = random_vec(xs, rng);
  const auto w = random_vec(ws, rng);
  const auto b = random_vec(static_cast<size_t>(d.cout), rng);
  const auto dy = random_vec(ys, rng);

  std::vector<real> out_s(ys), out_p(ys);
  std::vector<real> dx_s(xs), dx_p(xs);
  std::vector<real> dw_s(ws), dw_p(ws), db_s(static_cast<size_t>(d.cout)),
      db_p(static_cast<size_t>(d.cout));
  std::vector<real> up_s(xs * 4), up_p(xs * 4);
  std::vector<real> pool_s(xs / 4), pool_p(xs / 4);
  std::vector<int32_t> am_s(xs / 4), am_p(xs / 4);

  const int reps = 5;
  std::vector<Row> rows;

  rows.push_back({"conv2d forward",
                  time_ms([&] { serial::conv2d_forward(d, x.data(), w.data(), b.data(),
                                                       out_s.data()); },
                          reps),
                  time_ms([&] { omp::conv2d_forward(d, x.data(), w.data(), b.data(),
                                                    out_p.data()); },
                          reps),
                  max_diff(out_s, out_p)});

  auto zero_run_s = [&] {
    std::fill(dx_s.begin(), dx_s.end(), real(0));
    serial::conv2d_backward_input(d, dy.data(), w.data(), dx_s.data());
  };
  auto zero_run_p = [&] {
    std::fill(dx_p.begin(), dx_p.end(), real(0));
    omp::conv2d_backward_input(d, dy.data(), w.data(), dx_p.data());
  };
  rows.push_back({"conv2d backward input", time_ms(zero_run_s, reps),
                  time_ms(zero_run_p, reps), max_diff(dx_s, dx_p)});

  auto wgrad_s = [&] {
    std::fill(dw_s.begin(), dw_s.end(), real(0));
    std::fill(db_s.begin(), db_s.end(), real(0));
    serial::conv2d_backward_weights(d, x.data(), dy.data(), dw_s.data(), db_s.data());
  };
  auto wgrad_p = [&] {
    std::fill(dw_p.begin(), dw_p.end(), real(0));
    std::fill(db_p.begin(), db_p.end(), real(0));
    omp::conv2d_backward_weights(d, x.data(), dy.data(), dw_p.data(), db_p.data());
  };
  rows.push_back({"conv2d backward weights", time_ms(wgrad_s, reps),
                  time_ms(wgrad_p, reps),
                  std::max(max_diff(dw_s, dw_p), max_diff(db_s, db_p))});

  ConvDims pd = d;
  pd.cout = pd.cin;
  pd.kh = pd.kw = 5;
  pd.ph = pd.pw = 2;
  rows.push_back(
      {"avg_pool 5x5",
       time_ms([&] { serial::avg_pool_forward(pd, x.data(), out_s.data()); }, reps),
       time_ms([&] { omp::avg_pool_forward(pd, x.data(), out_p.data()); }, reps),
       max_diff(out_s, out_p)});

  rows.push_back({"max_pool2",
                  time_ms([&] { serial::max_pool2_forward(d.n, d.cin, d.hin, d.win,
                                                          x.data(), pool_s.data(),
                                                          am_s.data()); },
                          reps),
                  time_ms([&] { omp::max_pool2_forward(d.n, d.cin, d.hin, d.win,
                                                       x.data(), pool_p.data(),
                                                       am_p.data()); },
                          reps),
                  max_diff(pool_s, pool_p)});

  rows.push_back({"bilinear 2x",
                  time_ms([&] { serial::bilinear2x_forward(d.n, d.cin, d.hin, d.win,
                                                           x.data(), up_s.data()); },
                          reps),
                  time_ms([&] { omp::bilinear2x_forward(d.n, d.cin, d.hin, d.win,
                                                        x.data(), up_p.data()); },
                          reps),
                  max_diff(up_s, up_p)});

  std::printf("openmp compiled: %s, max threads: %d\n",
              openmp_compiled() ? "yes" : "no", max_threads());
  std::printf("%-26s %12s %12s %10s %10s\n", "kernel", "serial ms", "openmp ms",
              "speedup", "max|diff|");
  bool all_equal = true;
  for (const auto& r : rows) {
    std::printf("%-26s %12.3f %12.3f %9.2fx %10.3g\n", r.name, r.serial_ms, r.omp_ms,
                r.serial_ms / r.omp_ms, static_cast<double>(r.diff));
    all_equal = all_equal && r.diff == 0;
  }
  if (!all_equal) {
    std::printf("FAIL: backends disagree\n");
    return 1;
  }
  std::printf("backends agree bit-for-bit\n");
  return 0;
}

#include "fpcov/fft.hpp"

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <unordered_map>

namespace fpcov {

namespace {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// FFTW's planner is not thread-safe; executing a plan on new arrays is.
// Plans are created once per size with FFTW_UNALIGNED so they can later be
// executed on ordinary heap buffers from any thread.
std::mutex g_planner_mutex;
std::unordered_map<std::size_t, PlanPair>& plan_cache() {
  static std::unordered_map<std::size_t, PlanPair> cache;
  return cache;
}

PlanPair get_plans(std::size_t n) {
  std::lock_guard<std::mutex> lock(g_planner_mutex);
  auto& cache = plan_cache();
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  std::vector<double> real(n, 0.0);
  std::vector<std::complex<double>> cplx(n / 2 + 1);
  PlanPair plans;
  plans.forward = fftw_plan_dft_r2c_1d(
      static_cast<int>(n), real.data(),
      reinterpret_cast<fftw_complex*>(cplx.data()),
      FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans.inverse = fftw_plan_dft_c2r_1d(
      static_cast<int>(n), reinterpret_cast<fftw_complex*>(cplx.data()),
      real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache.emplace(n, plans);
  return plans;
}

}  // namespace

std::size_t next_smooth_size(std::size_t n) {
  if (n <= 1) return 1;
  for (std::size_t c = n;; ++c) {
    std::size_t r = c;
    for (std::size_t p : {2u, 3u, 5u}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return c;
  }
}

std::vector<double> fft_convolve(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_n = a.size() + b.size() - 1;
  const std::size_t n = next_smooth_size(out_n);
  PlanPair plans = get_plans(n);

  std::vector<double> pa(n, 0.0), pb(n, 0.0);
  std::copy(a.begin(), a.end(), pa.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  std::vector<std::complex<double>> fa(n / 2 + 1), fb(n / 2 + 1);

  fftw_execute_dft_r2c(plans.forward, pa.data(),
                       reinterpret_cast<fftw_complex*>(fa.data()));
  fftw_execute_dft_r2c(plans.forward, pb.data(),
                       reinterpret_cast<fftw_complex*>(fb.data()));
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];

  std::vector<double> out_full(n, 0.0);
  fftw_execute_dft_c2r(plans.inverse,
                       reinterpret_cast<fftw_complex*>(fa.data()),
                       out_full.data());
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<double> out(out_n);
  for (std::size_t i = 0; i < out_n; ++i) out[i] = out_full[i] * scale;
  return out;
}

}  // namespace fpcov

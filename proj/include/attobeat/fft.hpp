#pragma once

// Complex FFTs through FFTW. Plans are made with FFTW_ESTIMATE | FFTW_UNALIGNED
// so the chosen codelets, and therefore the output bits, do not depend on
// buffer alignment or timing.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace attobeat {

using ComplexVector = std::vector<std::complex<double>>;

namespace detail {

// The FFTW planner is not reentrant; execution on distinct buffers is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};
using FftwPlan = std::unique_ptr<fftw_plan_s, FftwPlanDeleter>;

inline fftw_plan plan_for(std::size_t n, int sign) {
  thread_local std::map<std::pair<std::size_t, int>, FftwPlan> cache;
  auto& slot = cache[{n, sign}];
  if (!slot) {
    std::lock_guard lock(fftw_planner_mutex());
    ComplexVector in(n), out(n);
    slot.reset(fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(in.data()),
                                reinterpret_cast<fftw_complex*>(out.data()), sign, FFTW_ESTIMATE | FFTW_UNALIGNED));
  }
  return slot.get();
}

inline ComplexVector execute(const ComplexVector& in, int sign) {
  ComplexVector src(in), out(in.size());
  if (in.empty()) return out;
  fftw_execute_dft(plan_for(in.size(), sign), reinterpret_cast<fftw_complex*>(src.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

}  // namespace detail

inline ComplexVector fft_forward(const ComplexVector& in) { return detail::execute(in, FFTW_FORWARD); }

/// Inverse transform including the 1/N factor.
inline ComplexVector fft_inverse(const ComplexVector& in) {
  auto out = detail::execute(in, FFTW_BACKWARD);
  const double scale = out.empty() ? 1.0 : 1.0 / static_cast<double>(out.size());
  for (auto& z : out) z *= scale;
  return out;
}

/// Real input zero-padded to length n.
inline ComplexVector fft_real(const std::vector<double>& in, std::size_t n) {
  ComplexVector buf(n, {0.0, 0.0});
  for (std::size_t i = 0; i < in.size() && i < n; ++i) buf[i] = {in[i], 0.0};
  return fft_forward(buf);
}

}  // namespace attobeat

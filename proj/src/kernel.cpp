#include "ivdrf/kernel.hpp"

#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ivdrf/error.hpp"

namespace ivdrf {

double kernel_eval(KernelId kernel, double u) {
  const double au = std::abs(u);
  if (au > 1.0) return 0.0;
  switch (kernel) {
    case KernelId::epanechnikov: return 0.75 * (1.0 - u * u);
    case KernelId::triangular: return 1.0 - au;
    case KernelId::uniform: return 0.5;
  }
  return 0.0;
}

namespace {

template <class F>
double integrate_pm1(F f) {
  using boost::math::quadrature::gauss_kronrod;
  double err = 0.0;
  // Split at 0 so the triangular kink sits on a panel boundary.
  const double left = gauss_kronrod<double, 31>::integrate(f, -1.0, 0.0, 15, 1e-14, &err);
  const double right = gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, 15, 1e-14, &err);
  return left + right;
}

}  // namespace

double kernel_moment(KernelId kernel, int p) {
  return integrate_pm1([&](double s) { return kernel_eval(kernel, s) * std::pow(s, p); });
}

KernelConstants kernel_constants(KernelId kernel) {
  KernelConstants c;
  c.int_k2 = integrate_pm1([&](double s) {
    const double k = kernel_eval(kernel, s);
    return k * k;
  });
  c.int_ks2 = kernel_moment(kernel, 2);
  return c;
}

KernelId parse_kernel(std::string_view name) {
  if (name == "epanechnikov") return KernelId::epanechnikov;
  if (name == "triangular") return KernelId::triangular;
  if (name == "uniform") return KernelId::uniform;
  fail(ErrorKind::invalid_argument, "unknown kernel '" + std::string(name) + "'");
}

std::string_view to_string(KernelId kernel) {
  switch (kernel) {
    case KernelId::epanechnikov: return "epanechnikov";
    case KernelId::triangular: return "triangular";
    case KernelId::uniform: return "uniform";
  }
  return "unknown";
}

}  // namespace ivdrf

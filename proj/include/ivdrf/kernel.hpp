#pragma once

#include <string>
#include <string_view>

namespace ivdrf {

/// Second-order kernels supported on [-1, 1].
enum class KernelId { epanechnikov, triangular, uniform };

double kernel_eval(KernelId kernel, double u);

struct KernelConstants {
  double int_k2 = 0.0;   // integral of K(s)^2
  double int_ks2 = 0.0;  // integral of K(s) s^2
};

/// Computed by adaptive Gauss-Kronrod quadrature.
KernelConstants kernel_constants(KernelId kernel);

/// Integral of K(s) s^p over [-1, 1]; used by tests and by kernel_constants.
double kernel_moment(KernelId kernel, int p);

KernelId parse_kernel(std::string_view name);
std::string_view to_string(KernelId kernel);

}  // namespace ivdrf

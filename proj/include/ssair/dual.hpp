#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ssair {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double pow_int(double x, int64_t n) {
  double r = 1.0;
  for (int64_t i = 0; i < n; ++i) r *= x;
  return r;
}
inline double primal(double x) { return x; }

/// Forward-mode number with k tangent directions. The primal is computed with
/// exactly the same double operations as the plain kernels.
struct Dual {
  double v = 0.0;
  std::vector<double> d;

  Dual() = default;
  Dual(double value, std::vector<double> tangents) : v(value), d(std::move(tangents)) {}
  /// Constant with `k` zero tangents.
  static Dual constant(double value, size_t k) { return Dual(value, std::vector<double>(k, 0.0)); }
};

inline double primal(const Dual& x) { return x.v; }

namespace detail {
template <class F>
Dual dual_map(double v, const Dual& a, F&& f) {
  Dual r(v, std::vector<double>(a.d.size()));
  for (size_t i = 0; i < a.d.size(); ++i) r.d[i] = f(a.d[i]);
  return r;
}
template <class F>
Dual dual_zip(double v, const Dual& a, const Dual& b, F&& f) {
  const size_t k = a.d.size() > b.d.size() ? a.d.size() : b.d.size();
  Dual r(v, std::vector<double>(k));
  for (size_t i = 0; i < k; ++i)
    r.d[i] = f(i < a.d.size() ? a.d[i] : 0.0, i < b.d.size() ? b.d[i] : 0.0);
  return r;
}
}  // namespace detail

inline Dual operator+(const Dual& a, const Dual& b) {
  return detail::dual_zip(a.v + b.v, a, b, [](double x, double y) { return x + y; });
}
inline Dual operator-(const Dual& a, const Dual& b) {
  return detail::dual_zip(a.v - b.v, a, b, [](double x, double y) { return x - y; });
}
inline Dual operator*(const Dual& a, const Dual& b) {
  return detail::dual_zip(a.v * b.v, a, b,
                          [&](double x, double y) { return x * b.v + a.v * y; });
}
inline Dual operator/(const Dual& a, const Dual& b) {
  const double q = a.v / b.v;
  return detail::dual_zip(q, a, b, [&](double x, double y) { return (x - q * y) / b.v; });
}
inline Dual operator-(const Dual& a) {
  return detail::dual_map(-a.v, a, [](double x) { return -x; });
}
inline Dual exp(const Dual& a) {
  const double y = std::exp(a.v);
  return detail::dual_map(y, a, [&](double x) { return y * x; });
}
inline Dual log(const Dual& a) {
  return detail::dual_map(std::log(a.v), a, [&](double x) { return x / a.v; });
}
inline Dual tanh(const Dual& a) {
  const double y = std::tanh(a.v);
  return detail::dual_map(y, a, [&](double x) { return (1.0 - y * y) * x; });
}
inline Dual sigmoid(const Dual& a) {
  const double y = sigmoid(a.v);
  return detail::dual_map(y, a, [&](double x) { return y * (1.0 - y) * x; });
}
inline Dual relu(const Dual& a) {
  return detail::dual_map(relu(a.v), a, [&](double x) { return a.v > 0.0 ? x : 0.0; });
}
inline Dual pow_int(const Dual& a, int64_t n) {
  const double s = n == 0 ? 0.0 : static_cast<double>(n) * pow_int(a.v, n - 1);
  return detail::dual_map(pow_int(a.v, n), a, [&](double x) { return s * x; });
}

}  // namespace ssair

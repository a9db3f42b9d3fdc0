#pragma once

// Thin wrappers over Boost.Math quadrature that turn non-convergence into
// QuadratureError and give integrands exact distances to both endpoints.

#include <algorithm>
#include <array>
#include <limits>
#include <vector>
#include <cmath>
#include <string>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "fexpo/error.hpp"

namespace fexpo::quad {

// Integrand values closer than this to a singular endpoint are dropped; the
// neglected mass is far below any tolerance used here.
inline constexpr double kEndpointCutoff = 1e-280;

namespace detail {

struct Panel {
  double a;
  double b;
  double value;
  double error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

// Gauss-Kronrod 7/15 on one panel with the QUADPACK error estimate.
template <class F>
Panel gauss_kronrod_15(F& f, double a, double b) {
  static constexpr double xgk[8] = {
      0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
      0.207784955007898467600689403773245, 0.0};
  static constexpr double wgk[8] = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  static constexpr double wg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                   0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double fv1[7];
  double fv2[7];
  const double fc = f(centre);
  double kronrod = fc * wgk[7];
  double gauss = fc * wg[3];
  double abs_k = std::abs(kronrod);
  for (int j = 0; j < 7; ++j) {
    const double dx = half * xgk[j];
    fv1[j] = f(centre - dx);
    fv2[j] = f(centre + dx);
    const double pair = fv1[j] + fv2[j];
    kronrod += wgk[j] * pair;
    abs_k += wgk[j] * (std::abs(fv1[j]) + std::abs(fv2[j]));
    if (j % 2 == 1) gauss += wg[j / 2] * pair;
  }
  const double mean = 0.5 * kronrod;
  double asc = wgk[7] * std::abs(fc - mean);
  for (int j = 0; j < 7; ++j) asc += wgk[j] * (std::abs(fv1[j] - mean) + std::abs(fv2[j] - mean));
  asc *= std::abs(half);
  double error = std::abs((kronrod - gauss) * half);
  if (asc != 0.0 && error != 0.0) error = asc * std::min(1.0, std::pow(200.0 * error / asc, 1.5));
  const double resabs = abs_k * std::abs(half);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) error = std::max(50.0 * eps * resabs, error);
  return {a, b, kronrod * half, error};
}

}  // namespace detail

inline constexpr std::size_t kMaxPanels = 400;

// Globally adaptive Gauss-Kronrod 7/15 (bisect the panel with the largest
// error estimate) for integrands that are bounded on [a, b].
template <class F>
double adaptive(F&& f, double a, double b, double rel_tol, const char* what) {
  if (a == b) return 0.0;
  std::vector<detail::Panel> heap;
  heap.reserve(64);
  heap.push_back(detail::gauss_kronrod_15(f, a, b));
  double value = heap.front().value;
  double error = heap.front().error;
  while (error > rel_tol * std::abs(value) && heap.size() < kMaxPanels) {
    std::pop_heap(heap.begin(), heap.end());
    const detail::Panel worst = heap.back();
    heap.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;
    const detail::Panel left = detail::gauss_kronrod_15(f, worst.a, mid);
    const detail::Panel right = detail::gauss_kronrod_15(f, mid, worst.b);
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push_back(left);
    std::push_heap(heap.begin(), heap.end());
    heap.push_back(right);
    std::push_heap(heap.begin(), heap.end());
  }
  // Re-sum to shed the drift of the running totals.
  value = 0.0;
  error = 0.0;
  for (const auto& p : heap) {
    value += p.value;
    error += p.error;
  }
  if (!std::isfinite(value) || error > 10.0 * rel_tol * std::abs(value) + 1e-300) {
    throw QuadratureError(std::string(what) + ": adaptive quadrature did not converge (error " +
                          std::to_string(error) + ", value " + std::to_string(value) + ")");
  }
  return value;
}

// One engine per thread; the abscissa tables grow lazily on first use.
inline boost::math::quadrature::tanh_sinh<double>& tanh_sinh_engine() {
  thread_local boost::math::quadrature::tanh_sinh<double> engine(12);
  return engine;
}

// Double-exponential rule for integrands with algebraic singularities at one
// or both endpoints. f(x, gap_left, gap_right) receives x - a and b - x
// computed without cancellation near the endpoint being approached.
// Second engine for the inner integral of nested tanh-sinh quadratures; an
// engine must not be re-entered while it may still extend its tables.
inline boost::math::quadrature::tanh_sinh<double>& tanh_sinh_inner_engine() {
  thread_local boost::math::quadrature::tanh_sinh<double> engine(12);
  return engine;
}

template <class F>
double endpoint_singular_with(boost::math::quadrature::tanh_sinh<double>& engine, F&& f, double a, double b,
                              double rel_tol, const char* what) {
  if (!(b > a)) return 0.0;
  const double width = b - a;
  auto g = [&](double x, double xc) -> double {
    double left;
    double right;
    if (xc < 0) {
      left = -xc;
      right = width + xc;
    } else {
      right = xc;
      left = width - xc;
    }
    if (left < kEndpointCutoff || right < kEndpointCutoff) return 0.0;
    return f(x, left, right);
  };
  double error = 0.0;
  double l1 = 0.0;
  const double value = engine.integrate(g, a, b, rel_tol, &error, &l1);
  // The two-argument overload reports its error on the reference interval [-1, 1].
  error *= 0.5 * width;
  if (!std::isfinite(value) || error > 10.0 * rel_tol * l1 + 1e-300) {
    throw QuadratureError(std::string(what) + ": tanh-sinh quadrature did not converge (error " +
                          std::to_string(error) + ", |f| mass " + std::to_string(l1) + ")");
  }
  return value;
}

template <class F>
double endpoint_singular(F&& f, double a, double b, double rel_tol, const char* what) {
  return endpoint_singular_with(tanh_sinh_engine(), f, a, b, rel_tol, what);
}

// Fixed 10-point Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendre10 {
  std::array<double, 10> nodes{};
  std::array<double, 10> weights{};

  static const GaussLegendre10& get() {
    static const GaussLegendre10 rule = [] {
      GaussLegendre10 r;
      const auto& x = boost::math::quadrature::gauss<double, 10>::abscissa();
      const auto& w = boost::math::quadrature::gauss<double, 10>::weights();
      std::size_t k = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        r.nodes[k] = -x[i];
        r.weights[k++] = w[i];
        r.nodes[k] = x[i];
        r.weights[k++] = w[i];
      }
      return r;
    }();
    return rule;
  }
};

}  // namespace fexpo::quad

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fexpo/estimate.hpp"
#include "fexpo/kernel.hpp"
#include "fexpo/matrix.hpp"
#include "json.hpp"

namespace fexpo {

class EmpiricalCdf {
 public:
  // Throws std::invalid_argument for an empty sample, DomainError for NaN.
  explicit EmpiricalCdf(std::vector<double> sample);

  // (#values <= x) / n.
  double operator()(double x) const noexcept;
  std::size_t size() const noexcept { return sorted_.size(); }
  std::span<const double> values() const noexcept { return sorted_; }

 private:
  std::vector<double> sorted_;
};

struct KsResult {
  double statistic = 0.0;
  double radius = 0.0;
};

// sqrt(ln(2/alpha) (n1 + n2) / (2 n1 n2)).
double dkw_two_sample_radius(std::size_t n1, std::size_t n2, double alpha);

// Exact sup |ECDF1 - ECDF2| over the pooled breakpoints.
KsResult ks_two_sample(std::span<const double> s1, std::span<const double> s2, double alpha = 0.01);
KsResult ks_two_sample(const EmpiricalCdf& e1, const EmpiricalCdf& e2, double alpha = 0.01);

// Mean of (x_i - y_i)^2 over coupled pairs.
Estimate coupled_l2_distance(std::span<const double> f1, std::span<const double> f2);

// Derivative vectors of a batch of paths on one grid (rows = paths).
struct DerivativeBatch {
  TimeGrid grid;
  Matrix values;
};

// Per-path trapezoid of (DF1_r - DF2_r)^2 over r.
std::vector<double> derivative_gap_energies(const DerivativeBatch& d1, const DerivativeBatch& d2);
// Mean over paths of the above.
Estimate coupled_derivative_l2_distance(const DerivativeBatch& d1, const DerivativeBatch& d2);

// Bounded test function psi for the weak distance |E psi(X) - E psi(Y)|.
class TestFunction {
 public:
  TestFunction(std::string name, std::function<double(double)> f) : name_(std::move(name)), f_(std::move(f)) {}

  // "clip01": min(max(x - kappa, 0), 1); "cos"; "sigmoid": 1 / (1 + e^{-(x - kappa)}).
  static TestFunction from_id(std::string_view id, double kappa = 1.0);

  const std::string& name() const noexcept { return name_; }
  double operator()(double x) const { return f_(x); }

 private:
  std::string name_;
  std::function<double(double)> f_;
};

enum class Pairing { independent, coupled };

// |mean psi(s1) - mean psi(s2)|. Coupled samples use the paired standard error.
Estimate bounded_function_distance(std::span<const double> s1, std::span<const double> s2, const TestFunction& psi,
                                   Pairing pairing = Pairing::independent);

struct SlopeFit {
  double slope = 0.0;
  double std_error = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

// Least-squares slope of log(distance) against log(delta). Needs >= 3 pairs;
// nonpositive values raise DomainError.
SlopeFit loglog_slope(std::span<const double> deltas, std::span<const double> distances);

// Estimate below z_{1 - alpha/2} standard errors.
bool noise_dominated(const Estimate& e, double alpha);

struct DistanceReport {
  double H1 = 0.0;
  double H2 = 0.0;
  double ks_stat = 0.0;
  double ks_conf_radius = 0.0;
  Estimate l2_F;
  Estimate l2_DF;
  Estimate sup_l2_path;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
};

inline constexpr int kSchemaVersion = 1;

// Exactly the report fields plus schema_version; estimates are {estimate, stderr}.
nlohmann::json to_json(const DistanceReport& r);
DistanceReport distance_report_from_json(const nlohmann::json& j);

}  // namespace fexpo

#include "fexpo/stats.hpp"

#include <algorithm>
#include <cmath>

#include "fexpo/error.hpp"
#include "fexpo/functional.hpp"
#include "fexpo/rng.hpp"

namespace fexpo {
namespace {

void check_nonempty(std::span<const double> s, const char* what) {
  if (s.empty()) throw std::invalid_argument(std::string(what) + ": empty sample");
}

void check_same_length(std::size_t n1, std::size_t n2, const char* what) {
  if (n1 != n2)
    throw MismatchError(std::string(what) + ": sample sizes differ (" + std::to_string(n1) + " vs " +
                        std::to_string(n2) + ")");
}

nlohmann::json estimate_json(const Estimate& e) { return {{"estimate", e.value}, {"stderr", e.std_error}}; }

Estimate estimate_from_json(const nlohmann::json& j) {
  return {j.at("estimate").get<double>(), j.at("stderr").get<double>()};
}

}  // namespace

EmpiricalCdf::EmpiricalCdf(std::vector<double> sample) : sorted_(std::move(sample)) {
  if (sorted_.empty()) throw std::invalid_argument("EmpiricalCdf: empty sample");
  for (double v : sorted_)
    if (std::isnan(v)) throw DomainError("EmpiricalCdf: NaN in sample");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double x) const noexcept {
  const auto k = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
  return static_cast<double>(k) / static_cast<double>(sorted_.size());
}

double dkw_two_sample_radius(std::size_t n1, std::size_t n2, double alpha) {
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("dkw_two_sample_radius: empty sample");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  const double a = static_cast<double>(n1);
  const double b = static_cast<double>(n2);
  return std::sqrt(std::log(2.0 / alpha) * (a + b) / (2.0 * a * b));
}

KsResult ks_two_sample(const EmpiricalCdf& e1, const EmpiricalCdf& e2, double alpha) {
  const auto a = e1.values();
  const auto b = e2.values();
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  return {d, dkw_two_sample_radius(a.size(), b.size(), alpha)};
}

KsResult ks_two_sample(std::span<const double> s1, std::span<const double> s2, double alpha) {
  check_nonempty(s1, "ks_two_sample");
  check_nonempty(s2, "ks_two_sample");
  return ks_two_sample(EmpiricalCdf({s1.begin(), s1.end()}), EmpiricalCdf({s2.begin(), s2.end()}), alpha);
}

Estimate coupled_l2_distance(std::span<const double> f1, std::span<const double> f2) {
  check_same_length(f1.size(), f2.size(), "coupled_l2_distance");
  check_nonempty(f1, "coupled_l2_distance");
  RunningMoments m;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const double d = f1[i] - f2[i];
    m.add(d * d);
  }
  return m.estimate();
}

std::vector<double> derivative_gap_energies(const DerivativeBatch& d1, const DerivativeBatch& d2) {
  if (!(d1.grid == d2.grid)) throw MismatchError("derivative batches live on different grids");
  if (d1.values.cols() != d1.grid.size() || d2.values.cols() != d2.grid.size())
    throw MismatchError("derivative batch width does not match its grid");
  check_same_length(d1.values.rows(), d2.values.rows(), "coupled_derivative_l2_distance");
  const auto w = trapezoid_weights(d1.grid);
  std::vector<double> out(d1.values.rows());
  for (std::size_t p = 0; p < out.size(); ++p) {
    double acc = 0.0;
    for (std::size_t m = 0; m < w.size(); ++m) {
      const double d = d1.values(p, m) - d2.values(p, m);
      acc += w[m] * d * d;
    }
    out[p] = acc;
  }
  return out;
}

Estimate coupled_derivative_l2_distance(const DerivativeBatch& d1, const DerivativeBatch& d2) {
  RunningMoments m;
  for (double e : derivative_gap_energies(d1, d2)) m.add(e);
  if (m.count() == 0) throw std::invalid_argument("coupled_derivative_l2_distance: empty batch");
  return m.estimate();
}

TestFunction TestFunction::from_id(std::string_view id, double kappa) {
  if (id == "clip01")
    return {"clip01", [kappa](double x) { return std::min(std::max(x - kappa, 0.0), 1.0); }};
  if (id == "cos") return {"cos", [](double x) { return std::cos(x); }};
  if (id == "sigmoid") return {"sigmoid", [kappa](double x) { return 1.0 / (1.0 + std::exp(-(x - kappa))); }};
  throw std::invalid_argument("unknown test function '" + std::string(id) + "' (expected clip01, cos or sigmoid)");
}

Estimate bounded_function_distance(std::span<const double> s1, std::span<const double> s2, const TestFunction& psi,
                                   Pairing pairing) {
  check_nonempty(s1, "bounded_function_distance");
  check_nonempty(s2, "bounded_function_distance");
  if (pairing == Pairing::coupled) {
    check_same_length(s1.size(), s2.size(), "bounded_function_distance");
    RunningMoments m;
    for (std::size_t i = 0; i < s1.size(); ++i) m.add(psi(s1[i]) - psi(s2[i]));
    const Estimate e = m.estimate();
    return {std::abs(e.value), e.std_error};
  }
  RunningMoments m1;
  RunningMoments m2;
  for (double x : s1) m1.add(psi(x));
  for (double x : s2) m2.add(psi(x));
  const double se = std::sqrt(m1.variance() / static_cast<double>(m1.count()) +
                              m2.variance() / static_cast<double>(m2.count()));
  return {std::abs(m1.mean() - m2.mean()), se};
}

SlopeFit loglog_slope(std::span<const double> deltas, std::span<const double> distances) {
  check_same_length(deltas.size(), distances.size(), "loglog_slope");
  if (deltas.size() < 3) throw std::invalid_argument("loglog_slope needs at least 3 points");
  const std::size_t n = deltas.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(deltas[i] > 0.0) || !(distances[i] > 0.0))
      throw DomainError("loglog_slope: point " + std::to_string(i) + " is not positive");
    x[i] = std::log(deltas[i]);
    y[i] = std::log(distances[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("loglog_slope: all deltas are equal");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.points = n;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    rss += r * r;
  }
  fit.std_error = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  return fit;
}

bool noise_dominated(const Estimate& e, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  return e.value <= normal_quantile(1.0 - 0.5 * alpha) * e.std_error;
}

nlohmann::json to_json(const DistanceReport& r) {
  nlohmann::json j;
  j["H1"] = r.H1;
  j["H2"] = r.H2;
  j["ks_stat"] = r.ks_stat;
  j["ks_conf_radius"] = r.ks_conf_radius;
  j["l2_F"] = estimate_json(r.l2_F);
  j["l2_DF"] = estimate_json(r.l2_DF);
  j["sup_l2_path"] = estimate_json(r.sup_l2_path);
  j["n_paths"] = r.n_paths;
  j["seed"] = r.seed;
  j["schema_version"] = kSchemaVersion;
  return j;
}

DistanceReport distance_report_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != kSchemaVersion) throw FormatError("unsupported schema_version");
  DistanceReport r;
  r.H1 = j.at("H1").get<double>();
  r.H2 = j.at("H2").get<double>();
  r.ks_stat = j.at("ks_stat").get<double>();
  r.ks_conf_radius = j.at("ks_conf_radius").get<double>();
  r.l2_F = estimate_from_json(j.at("l2_F"));
  r.l2_DF = estimate_from_json(j.at("l2_DF"));
  r.sup_l2_path = estimate_from_json(j.at("sup_l2_path"));
  r.n_paths = j.at("n_paths").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

}  // namespace fexpo

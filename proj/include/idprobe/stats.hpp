#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "idprobe/error.hpp"
#include "idprobe/profile.hpp"
#include "idprobe/tensor_io.hpp"

namespace idprobe {

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr double eps = 1e-12;
  constexpr double tiny = 1e-300;
  constexpr int max_iter = 10000;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) return h;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw input_error("incomplete beta: shape parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw input_error("incomplete beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges quickly only below the mean; use the symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Student t CDF with `dof` degrees of freedom.
inline double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw input_error("student t: degrees of freedom must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

/// Two-sided p-value of a t statistic.
inline double student_t_two_sided_p(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

struct CorrelationResult {
  double r = 0.0;
  double t_stat = 0.0;  // +/-inf when |r| = 1
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Pearson correlation with the two-sided t-test for independence (n - 2 dof).
inline CorrelationResult pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw input_error("pearson: series differ in length (" + std::to_string(xs.size()) + " vs " +
                      std::to_string(ys.size()) + ")");
  const std::size_t n = xs.size();
  if (n < 3) throw input_error("pearson: need at least 3 pairs, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
      throw input_error("pearson: non-finite value at position " + std::to_string(i));

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0) throw input_error("pearson: first series has zero variance");
  if (syy == 0.0) throw input_error("pearson: second series has zero variance");

  CorrelationResult out;
  out.n = n;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(n - 2);
  if (std::fabs(out.r) == 1.0) {
    out.t_stat = std::copysign(std::numeric_limits<double>::infinity(), out.r);
    out.p_value = 0.0;
    return out;
  }
  out.t_stat = out.r * std::sqrt(dof / (1.0 - out.r * out.r));
  out.p_value = std::clamp(student_t_two_sided_p(out.t_stat, dof), 0.0, 1.0);
  return out;
}

inline nlohmann::ordered_json to_json(const CorrelationResult& c) {
  nlohmann::ordered_json j;
  j["r"] = c.r;
  // JSON has no infinity; perfect correlation reports a string sentinel.
  if (std::isinf(c.t_stat)) j["t"] = c.t_stat > 0 ? "+inf" : "-inf";
  else j["t"] = c.t_stat;
  j["p"] = c.p_value;
  j["n"] = c.n;
  return j;
}

// ---------------------------------------------------------------------------
// Sweep records

/// One training run reduced to named scalars for cross-run statistics.
struct RunRecord {
  std::string run_id;
  std::string regularizer_kind;
  std::map<std::string, double> fields;

  std::optional<double> field(const std::string& name) const {
    auto it = fields.find(name);
    if (it == fields.end()) return std::nullopt;
    return it->second;
  }
};

/// Joins manifest metadata with the profile measured at that snapshot.
inline RunRecord make_run_record(const RunManifest& run, const LayerProfile& profile) {
  RunRecord rec;
  rec.run_id = run.run_id;
  rec.regularizer_kind = std::string(to_string(run.metadata.regularizer_kind));
  rec.fields["step"] = static_cast<double>(run.step);
  rec.fields["regularizer_strength"] = run.metadata.regularizer_strength;
  rec.fields["train_accuracy"] = run.metadata.train_accuracy;
  rec.fields["val_accuracy"] = run.metadata.val_accuracy;
  rec.fields["data_fraction"] = run.metadata.data_fraction;
  rec.fields["llid"] = llid(profile);
  rec.fields["pid"] = pid(profile).value;
  rec.fields["pid_llid_ratio"] = pid_llid_ratio(profile);
  return rec;
}

enum class FieldTransform { none, log10 };

inline CorrelationResult sweep_correlations(std::span<const RunRecord> records, const std::string& x_field,
                                            const std::string& y_field,
                                            FieldTransform x_transform = FieldTransform::none) {
  if (records.size() < 3)
    throw input_error("sweep: need at least 3 runs, got " + std::to_string(records.size()));
  std::vector<double> xs, ys;
  xs.reserve(records.size());
  ys.reserve(records.size());
  for (const auto& rec : records) {
    const auto x = rec.field(x_field);
    if (!x) throw input_error("sweep: run '" + rec.run_id + "' has no field '" + x_field + "'");
    const auto y = rec.field(y_field);
    if (!y) throw input_error("sweep: run '" + rec.run_id + "' has no field '" + y_field + "'");
    double xv = *x;
    if (x_transform == FieldTransform::log10) {
      if (!(xv > 0.0))
        throw input_error("sweep: run '" + rec.run_id + "' has " + x_field + " = " + std::to_string(xv) +
                          ", log10 undefined");
      xv = std::log10(xv);
    }
    xs.push_back(xv);
    ys.push_back(*y);
  }
  return pearson(xs, ys);
}

}  // namespace idprobe

#pragma once

// Discount functions gamma_t, their normalizers Gamma_t = sum_{k>=t} gamma_k,
// effective horizons, and the checks / weight constructions built on them.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "grl/core.hpp"

namespace grl {

class DiscountSchedule {
 public:
  virtual ~DiscountSchedule() = default;

  virtual std::string name() const = 0;
  /// gamma_t, t >= 1.
  virtual double gamma(Time t) const = 0;
  /// Gamma_t = sum_{k >= t} gamma_k.
  virtual double normalizer(Time t) const = 0;
  /// Certified upper bound on sum_{k >= n} gamma_k.
  virtual double tail_bound(Time n) const = 0;

  virtual double log_gamma(Time t) const { return std::log(gamma(t)); }

  /// Gamma_{t+k} / Gamma_t. Overridden where the direct quotient underflows.
  virtual double tail_ratio(Time t, Time k) const {
    const double g = normalizer(t);
    return g > 0.0 ? normalizer(t + k) / g : 0.0;
  }

  /// gamma_t / Gamma_t, the weight of the immediate reward in a normalized value.
  virtual double immediate_weight(Time t) const {
    const double g = normalizer(t);
    return g > 0.0 ? gamma(t) / g : 0.0;
  }

  /// Gamma_{t+1} / Gamma_t, the weight of the continuation value.
  double continuation_weight(Time t) const { return tail_ratio(t, 1); }

  /// False once no discount mass remains (Gamma_t = 0).
  virtual bool has_mass(Time t) const { return normalizer(t) > 0.0; }
};

using DiscountPtr = std::shared_ptr<const DiscountSchedule>;

/// gamma_t = g^t.
class GeometricDiscount final : public DiscountSchedule {
 public:
  explicit GeometricDiscount(double g) : g_(g) {
    if (!(g > 0.0 && g < 1.0)) throw ValidationError("geometric discount needs 0 < gamma < 1");
  }

  double rate() const { return g_; }
  std::string name() const override { return "geometric{" + std::to_string(g_) + "}"; }
  double gamma(Time t) const override { return std::pow(g_, static_cast<double>(t)); }
  double log_gamma(Time t) const override { return static_cast<double>(t) * std::log(g_); }
  double normalizer(Time t) const override { return gamma(t) / (1.0 - g_); }
  double tail_bound(Time n) const override { return normalizer(n); }
  double tail_ratio(Time, Time k) const override { return std::pow(g_, static_cast<double>(k)); }
  double immediate_weight(Time) const override { return 1.0 - g_; }
  bool has_mass(Time) const override { return true; }

 private:
  double g_;
};

/// gamma_t = exp(-sqrt t) / sqrt t.
///
/// Gamma_t has no closed form. It is tabulated by backward summation in
/// power-of-two levels: Gamma_t always comes from the level of size
/// max(1024, 2^ceil(log2 t)), summed from a far point N whose certified tail
/// 2 exp(-sqrt(N-1)) is below 1e-14 Gamma_t. Values therefore depend on t
/// alone, never on the order in which callers asked for them.
class SqrtExpDiscount final : public DiscountSchedule {
 public:
  SqrtExpDiscount() : cache_(std::make_shared<Cache>()) {}

  std::string name() const override { return "sqrt_exp"; }

  double gamma(Time t) const override {
    const double r = std::sqrt(static_cast<double>(t));
    return std::exp(-r) / r;
  }
  double log_gamma(Time t) const override {
    const double r = std::sqrt(static_cast<double>(t));
    return -r - std::log(r);
  }
  /// sum_{k>=n} f(k) <= integral_{n-1}^inf f = 2 exp(-sqrt(n-1)) for decreasing f.
  double tail_bound(Time n) const override {
    if (n <= 1) return tail_bound(2) + gamma(1);
    return 2.0 * std::exp(-std::sqrt(static_cast<double>(n - 1)));
  }

  double normalizer(Time t) const override {
    if (t < 1) throw DomainError("discount time must be >= 1");
    Time size = 1024;
    while (size < t) size *= 2;
    std::lock_guard lock(cache_->mutex);
    auto it = cache_->levels.find(size);
    if (it == cache_->levels.end()) it = cache_->levels.emplace(size, tabulate(size)).first;
    return it->second[static_cast<std::size_t>(t)];
  }
  bool has_mass(Time) const override { return true; }

 private:
  struct Cache {
    std::mutex mutex;
    std::map<Time, std::vector<double>> levels;  // levels[n][t] = Gamma_t for t <= n, index 0 unused
  };

  std::vector<double> tabulate(Time size) const {
    const double root = std::sqrt(static_cast<double>(size)) + 36.0;
    const auto far = static_cast<Time>(std::ceil(root * root)) + 2;
    std::vector<double> table(static_cast<std::size_t>(far) + 1, 0.0);
    // Euler-Maclaurin estimate of the far tail; its error is negligible next to 1e-14 Gamma_size.
    const double rf = std::sqrt(static_cast<double>(far));
    table[static_cast<std::size_t>(far)] = 2.0 * std::exp(-rf) + 0.5 * gamma(far);
    for (Time k = far - 1; k >= 1; --k)
      table[static_cast<std::size_t>(k)] = gamma(k) + table[static_cast<std::size_t>(k + 1)];
    table.resize(static_cast<std::size_t>(size) + 1);
    return table;
  }

  std::shared_ptr<Cache> cache_;
};

/// Explicit finite list gamma_1..gamma_n, followed by an optional declared tail
/// mass spread geometrically (ratio 1/2) over t > n. With zero tail mass the
/// schedule has finite support.
class TableDiscount final : public DiscountSchedule {
 public:
  explicit TableDiscount(std::vector<double> values, double tail_mass = 0.0)
      : values_(std::move(values)), tail_(tail_mass) {
    if (values_.empty()) throw ValidationError("table discount needs at least one value");
    if (tail_ < 0.0) throw ValidationError("table discount tail mass must be >= 0");
    for (double v : values_)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("table discount values must be finite and >= 0");
    suffix_.assign(values_.size() + 2, 0.0);
    suffix_[values_.size() + 1] = tail_;
    for (std::size_t i = values_.size(); i >= 1; --i) suffix_[i] = values_[i - 1] + suffix_[i + 1];
  }

  /// gamma_t = 1 for t <= m and 0 afterwards: undiscounted reward sums over m steps.
  static std::shared_ptr<TableDiscount> finite_horizon(Time m) {
    if (m < 1) throw ValidationError("finite horizon must be >= 1");
    return std::make_shared<TableDiscount>(std::vector<double>(static_cast<std::size_t>(m), 1.0));
  }

  const std::vector<double>& values() const { return values_; }
  double tail_mass() const { return tail_; }
  std::string name() const override { return "table{" + std::to_string(values_.size()) + "}"; }

  double gamma(Time t) const override {
    const auto n = static_cast<Time>(values_.size());
    if (t <= n) return values_[static_cast<std::size_t>(t - 1)];
    return tail_ * std::ldexp(1.0, -static_cast<int>(std::min<Time>(t - n, 2000)));
  }
  double normalizer(Time t) const override {
    const auto n = static_cast<Time>(values_.size());
    if (t <= n + 1) return suffix_[static_cast<std::size_t>(std::max<Time>(t, 1))];
    return tail_ * std::ldexp(1.0, -static_cast<int>(std::min<Time>(t - n - 1, 2000)));
  }
  double tail_bound(Time n) const override { return normalizer(n); }

 private:
  std::vector<double> values_;
  double tail_;
  std::vector<double> suffix_;
};

inline DiscountPtr geometric(double g) { return std::make_shared<GeometricDiscount>(g); }
inline DiscountPtr sqrt_exp() { return std::make_shared<SqrtExpDiscount>(); }

// ---------------------------------------------------------------------------
// epsilon schedules

/// Monotone decreasing positive sequence eps_t -> 0.
class EpsilonSchedule {
 public:
  EpsilonSchedule() : EpsilonSchedule(standard()) {}
  EpsilonSchedule(std::string name, std::function<double(Time)> fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  /// eps_t = min(1/2, t^{-1/2}).
  static EpsilonSchedule standard() {
    return {"default", [](Time t) { return std::min(0.5, 1.0 / std::sqrt(static_cast<double>(t))); }};
  }
  /// Constant epsilon; does not tend to zero, for tests and fixed-horizon baselines.
  static EpsilonSchedule constant(double v) {
    if (!(v > 0.0)) throw ValidationError("epsilon must be positive");
    return {"constant{" + std::to_string(v) + "}", [v](Time) { return v; }};
  }
  /// eps_t = min(cap, scale * t^{-exponent}).
  static EpsilonSchedule power(double scale, double exponent, double cap = 0.5) {
    if (!(scale > 0.0 && exponent > 0.0 && cap > 0.0)) throw ValidationError("invalid power epsilon schedule");
    return {"power{" + std::to_string(scale) + "," + std::to_string(exponent) + "}",
            [=](Time t) { return std::min(cap, scale * std::pow(static_cast<double>(t), -exponent)); }};
  }

  double operator()(Time t) const { return fn_(t); }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::function<double(Time)> fn_;
};

// ---------------------------------------------------------------------------
// operations

/// H_t(eps) = min{ k : Gamma_{t+k} / Gamma_t <= eps }.
inline Time effective_horizon(const DiscountSchedule& d, Time t, double eps) {
  if (t < 1) throw ValidationError("effective horizon needs t >= 1");
  if (!(eps > 0.0)) throw ValidationError("effective horizon needs eps > 0");
  if (!d.has_mass(t)) throw DomainError("effective horizon undefined: Gamma_" + std::to_string(t) + " = 0");
  if (d.tail_ratio(t, 0) <= eps) return 0;
  Time lo = 0, hi = 1;  // ratio(lo) > eps
  while (d.tail_ratio(t, hi) > eps) {
    lo = hi;
    hi *= 2;
    if (hi > (Time{1} << 40)) throw DomainError("effective horizon does not exist below 2^40");
  }
  while (hi - lo > 1) {
    const Time mid = lo + (hi - lo) / 2;
    (d.tail_ratio(t, mid) <= eps ? hi : lo) = mid;
  }
  return hi;
}

struct AssumptionViolation {
  char item;  // 'a', 'b' or 'c'
  Time t;
  std::string detail;
};

struct AssumptionReport {
  std::vector<AssumptionViolation> violations;

  bool passed() const { return violations.empty(); }
  bool passed(char item) const {
    for (const auto& v : violations)
      if (v.item == item) return false;
    return true;
  }
  std::optional<Time> first_violation(char item) const {
    for (const auto& v : violations)
      if (v.item == item) return v.t;
    return std::nullopt;
  }
};

/// Finite-horizon falsification check of the regret discount assumption:
/// (a) gamma_t > 0, (b) gamma_t nonincreasing on 1..t_max, (c) H_t(eps)/t at
/// least halves from t to 4t on the doubling grid t = 2^j with
/// sqrt(t_max) <= t and 4t <= t_max. (c) cannot prove o(t); it can only refute it.
inline AssumptionReport check_discount_assumption(const DiscountSchedule& d, Time t_max, const std::vector<double>& eps_list) {
  if (t_max < 2) throw ValidationError("assumption check needs t_max >= 2");
  AssumptionReport report;
  double prev = std::numeric_limits<double>::infinity();
  for (Time t = 1; t <= t_max; ++t) {
    const double lg = d.log_gamma(t);
    if (!(lg > -std::numeric_limits<double>::infinity())) {
      report.violations.push_back({'a', t, "gamma_t = 0"});
    } else if (lg > prev) {
      report.violations.push_back({'b', t, "gamma_t increases"});
    }
    if (lg > -std::numeric_limits<double>::infinity()) prev = lg;
  }
  if (!report.passed('a')) return report;  // horizons are meaningless without positive mass

  const auto start = static_cast<Time>(std::ceil(std::sqrt(static_cast<double>(t_max))));
  for (double eps : eps_list) {
    for (Time t = 1; 4 * t <= t_max; t *= 2) {
      if (t < start) continue;
      const double now = static_cast<double>(effective_horizon(d, t, eps)) / static_cast<double>(t);
      const double later = static_cast<double>(effective_horizon(d, 4 * t, eps)) / static_cast<double>(4 * t);
      if (later > 0.5 * now)
        report.violations.push_back({'c', t, "H_t/t does not halve from t to 4t at eps=" + std::to_string(eps)});
    }
  }
  return report;
}

/// Weights b_{t0..m}: b_{t0} = Gamma_{t0}/gamma_{t0}, b_t = Gamma_t/gamma_t - Gamma_t/gamma_{t-1}.
inline std::vector<double> telescoping_weights(const DiscountSchedule& d, Time t0, Time m) {
  if (t0 < 1 || m < t0) throw ValidationError("telescoping weights need 1 <= t0 <= m");
  std::vector<double> b;
  b.reserve(static_cast<std::size_t>(m - t0 + 1));
  for (Time t = t0; t <= m; ++t) {
    const double g = d.gamma(t);
    if (g == 0.0) throw DomainError("telescoping weights: gamma_" + std::to_string(t) + " = 0");
    const double big = d.normalizer(t);
    b.push_back(t == t0 ? big / g : big / g - big / d.gamma(t - 1));
  }
  return b;
}

/// gamma_t H_t(eps) / Gamma_t; at least 1 - eps for monotone decreasing positive gamma.
inline double tail_ratio_bound(const DiscountSchedule& d, Time t, double eps) {
  return d.immediate_weight(t) * static_cast<double>(effective_horizon(d, t, eps));
}

}  // namespace grl

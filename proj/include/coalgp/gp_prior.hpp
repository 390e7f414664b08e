#pragma once

// Markov Gaussian process priors (Brownian motion with a free initial level, stationary
// Ornstein-Uhlenbeck).  Both have tridiagonal precision at sorted time points, so every
// density, quadratic form, conditional and joint draw here is O(number of points): a finite
// sample is a Gaussian Markov chain x_1 ~ N(0, v(t_1)/theta), x_{i+1} | x_i ~ N(a_i x_i, w_i/theta).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coalgp/error.hpp"
#include "coalgp/random.hpp"

namespace coalgp {

enum class Kernel_kind { brownian_motion, ornstein_uhlenbeck };

inline auto to_string(Kernel_kind kind) -> std::string {
  return kind == Kernel_kind::brownian_motion ? "bm" : "ou";
}

// One step of the chain at unit precision: x' = coef * x + N(0, variance).
struct Markov_step {
  double coef = 1.0;
  double variance = 0.0;
};

struct Gp_kernel {
  Kernel_kind kind = Kernel_kind::brownian_motion;
  double theta = 1.0;              // precision
  double initial_variance = 100.0;  // BM: variance of the free level at t = 0 is initial_variance / theta
  double rate = 1.0;               // OU mean-reversion rate; stationary variance 1 / theta

  static auto brownian(double theta, double initial_variance = 100.0) -> Gp_kernel {
    return Gp_kernel{Kernel_kind::brownian_motion, theta, initial_variance, 1.0};
  }
  static auto ornstein_uhlenbeck(double theta, double rate = 1.0) -> Gp_kernel {
    return Gp_kernel{Kernel_kind::ornstein_uhlenbeck, theta, 0.0, rate};
  }

  auto with_theta(double new_theta) const -> Gp_kernel {
    auto k = *this;
    k.theta = new_theta;
    return k;
  }

  void validate() const {
    if (!(theta > 0.0) || !std::isfinite(theta)) {
      throw std::domain_error{"GP precision theta must be positive and finite"};
    }
    if (kind == Kernel_kind::brownian_motion && !(initial_variance >= 0.0)) {
      throw std::domain_error{"BM initial-level variance must be non-negative"};
    }
    if (kind == Kernel_kind::ornstein_uhlenbeck && !(rate > 0.0)) {
      throw std::domain_error{"OU rate must be positive"};
    }
  }

  // Marginal variance at time t, at unit precision.
  auto marginal_variance(double t) const -> double {
    return kind == Kernel_kind::brownian_motion ? t + initial_variance : 1.0;
  }

  // Transition over a gap dt > 0, at unit precision.
  auto step(double dt) const -> Markov_step {
    if (kind == Kernel_kind::brownian_motion) {
      return {1.0, dt};
    }
    auto a = std::exp(-rate * dt);
    return {a, -std::expm1(-2.0 * rate * dt)};
  }

  // Covariance between f(s) and f(t) (dense oracle use only).
  auto covariance(double s, double t) const -> double {
    if (kind == Kernel_kind::brownian_motion) {
      return (std::min(s, t) + initial_variance) / theta;
    }
    return std::exp(-rate * std::abs(s - t)) / theta;
  }
};

// Symmetric tridiagonal matrix.
struct Tridiagonal {
  std::vector<double> diag;
  std::vector<double> off;  // off[i] = Q(i, i + 1)

  auto size() const -> std::size_t { return diag.size(); }
};

namespace detail {

inline void check_sorted(std::span<const double> times) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw std::domain_error{"GP time points must be strictly increasing (duplicate or unsorted time " +
                              std::to_string(times[i]) + ")"};
    }
  }
}

inline void check_positive_variance(double v) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Evaluation_error{"GP covariance is not positive definite at these time points"};
  }
}

}  // namespace detail

// Precision of f at `times`, including theta.
inline auto build_precision(std::span<const double> times, const Gp_kernel& kernel) -> Tridiagonal {
  kernel.validate();
  if (times.empty()) {
    throw std::domain_error{"build_precision: need at least one time point"};
  }
  detail::check_sorted(times);
  auto d = times.size();
  auto q = Tridiagonal{std::vector<double>(d, 0.0), std::vector<double>(d - 1, 0.0)};
  auto v0 = kernel.marginal_variance(times[0]);
  detail::check_positive_variance(v0);
  q.diag[0] = 1.0 / v0;
  for (std::size_t i = 0; i + 1 < d; ++i) {
    auto st = kernel.step(times[i + 1] - times[i]);
    detail::check_positive_variance(st.variance);
    q.diag[i] += st.coef * st.coef / st.variance;
    q.diag[i + 1] += 1.0 / st.variance;
    q.off[i] = -st.coef / st.variance;
  }
  for (auto& x : q.diag) {
    x *= kernel.theta;
  }
  for (auto& x : q.off) {
    x *= kernel.theta;
  }
  return q;
}

// f' Q(1) f, the theta-free quadratic form.
inline auto structure_quadratic_form(std::span<const double> times, std::span<const double> values,
                                     const Gp_kernel& kernel) -> double {
  if (times.empty()) {
    return 0.0;
  }
  auto v0 = kernel.marginal_variance(times[0]);
  auto sum = values[0] * values[0] / v0;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    auto st = kernel.step(times[i + 1] - times[i]);
    auto r = values[i + 1] - st.coef * values[i];
    sum += r * r / st.variance;
  }
  return sum;
}

// log det Q(1).
inline auto structure_log_det(std::span<const double> times, const Gp_kernel& kernel) -> double {
  if (times.empty()) {
    return 0.0;
  }
  auto v0 = kernel.marginal_variance(times[0]);
  detail::check_positive_variance(v0);
  auto sum = -std::log(v0);
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    auto st = kernel.step(times[i + 1] - times[i]);
    detail::check_positive_variance(st.variance);
    sum -= std::log(st.variance);
  }
  return sum;
}

// log N(values; 0, Q^{-1}) evaluated in O(d).
inline auto log_prior_density(std::span<const double> times, std::span<const double> values,
                              const Gp_kernel& kernel) -> double {
  kernel.validate();
  detail::check_sorted(times);
  auto d = static_cast<double>(times.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) + 0.5 * d * std::log(kernel.theta) +
         0.5 * structure_log_det(times, kernel) - 0.5 * kernel.theta * structure_quadratic_form(times, values, kernel);
}

// Joint prior draw at sorted times.
inline void sample_prior(std::span<const double> times, const Gp_kernel& kernel, Rng& rng, std::span<double> out) {
  if (times.empty()) {
    return;
  }
  auto scale = 1.0 / std::sqrt(kernel.theta);
  out[0] = std::sqrt(kernel.marginal_variance(times[0])) * scale * standard_normal(rng);
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    auto st = kernel.step(times[i + 1] - times[i]);
    out[i + 1] = st.coef * out[i] + std::sqrt(st.variance) * scale * standard_normal(rng);
  }
}

struct Gaussian {
  double mean = 0.0;
  double variance = 0.0;
};

struct Anchor {
  double time = 0.0;
  double value = 0.0;
};

// Law of f(t) given its nearest known neighbours (either may be absent).  Exact for Markov
// kernels: conditioning on all known points reduces to conditioning on the two neighbours.
inline auto conditional_law(double t, std::optional<Anchor> left, std::optional<Anchor> right,
                            const Gp_kernel& kernel) -> Gaussian {
  auto mean0 = 0.0;
  auto var0 = kernel.marginal_variance(t);
  if (left) {
    auto st = kernel.step(t - left->time);
    mean0 = st.coef * left->value;
    var0 = st.variance;
  }
  if (!right) {
    return {mean0, var0 / kernel.theta};
  }
  auto st = kernel.step(right->time - t);
  auto precision = 1.0 / var0 + st.coef * st.coef / st.variance;
  auto mean = (mean0 / var0 + st.coef * right->value / st.variance) / precision;
  return {mean, 1.0 / (precision * kernel.theta)};
}

enum class Point_kind : std::uint8_t { origin, coalescent, latent };

// GP values at the union of observed coalescent times and latent (thinned) points, kept in
// ascending time order.  `interval` is the index in the Interval_grid that contains the point
// (for the origin t_n = 0 it is -1).
class Latent_field {
 public:
  auto size() const -> std::size_t { return times_.size(); }
  auto empty() const -> bool { return times_.empty(); }

  auto times() const -> std::span<const double> { return times_; }
  auto values() const -> std::span<const double> { return values_; }
  auto values() -> std::span<double> { return values_; }
  auto kinds() const -> std::span<const Point_kind> { return kinds_; }
  auto intervals() const -> std::span<const int> { return intervals_; }

  auto time(std::size_t i) const -> double { return times_[i]; }
  auto value(std::size_t i) const -> double { return values_[i]; }
  auto kind(std::size_t i) const -> Point_kind { return kinds_[i]; }
  auto interval(std::size_t i) const -> int { return intervals_[i]; }

  auto num_latent() const -> std::size_t { return num_latent_; }

  // First index with time >= t.
  auto lower_bound(double t) const -> std::size_t {
    return static_cast<std::size_t>(std::ranges::lower_bound(times_, t) - times_.begin());
  }

  auto contains_time(double t) const -> bool {
    auto i = lower_bound(t);
    return i < size() && times_[i] == t;
  }

  auto insert(double t, double value, Point_kind kind, int interval) -> std::size_t {
    auto i = lower_bound(t);
    if (i < size() && times_[i] == t) {
      throw std::domain_error{"field already has a point at time " + std::to_string(t)};
    }
    auto off = static_cast<std::ptrdiff_t>(i);
    times_.insert(times_.begin() + off, t);
    values_.insert(values_.begin() + off, value);
    kinds_.insert(kinds_.begin() + off, kind);
    intervals_.insert(intervals_.begin() + off, interval);
    if (kind == Point_kind::latent) {
      ++num_latent_;
    }
    return i;
  }

  void clear() {
    times_.clear();
    values_.clear();
    kinds_.clear();
    intervals_.clear();
    num_latent_ = 0;
  }

  void reserve(std::size_t n) {
    times_.reserve(n);
    values_.reserve(n);
    kinds_.reserve(n);
    intervals_.reserve(n);
  }

  // Appends a point later than every existing one.
  void push_back(double t, double value, Point_kind kind, int interval) {
    if (!times_.empty() && !(t > times_.back())) {
      throw std::domain_error{"push_back: time must exceed the last field time"};
    }
    times_.push_back(t);
    values_.push_back(value);
    kinds_.push_back(kind);
    intervals_.push_back(interval);
    if (kind == Point_kind::latent) {
      ++num_latent_;
    }
  }

  void erase(std::size_t i) {
    if (kinds_[i] == Point_kind::latent) {
      --num_latent_;
    }
    auto off = static_cast<std::ptrdiff_t>(i);
    times_.erase(times_.begin() + off);
    values_.erase(values_.begin() + off);
    kinds_.erase(kinds_.begin() + off);
    intervals_.erase(intervals_.begin() + off);
  }

  // Moves point i to a new time (and value) inside the same sorted neighbourhood or elsewhere.
  auto relocate(std::size_t i, double t, double value, int interval) -> std::size_t {
    auto kind = kinds_[i];
    erase(i);
    return insert(t, value, kind, interval);
  }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  std::vector<Point_kind> kinds_;
  std::vector<int> intervals_;
  std::size_t num_latent_ = 0;
};

inline auto log_prior_density(const Latent_field& field, const Gp_kernel& kernel) -> double {
  return log_prior_density(field.times(), field.values(), kernel);
}

// Conditional law of f(t) given every field point except `skip` (pass size() to skip nothing).
inline auto conditional_law(const Latent_field& field, double t, const Gp_kernel& kernel, std::size_t skip)
    -> Gaussian {
  auto pos = field.lower_bound(t);
  auto left = std::optional<Anchor>{};
  auto right = std::optional<Anchor>{};
  auto l = pos;
  while (l > 0) {
    --l;
    if (l != skip) {
      left = Anchor{field.time(l), field.value(l)};
      break;
    }
  }
  for (auto r = pos; r < field.size(); ++r) {
    if (r != skip) {
      right = Anchor{field.time(r), field.value(r)};
      break;
    }
  }
  return conditional_law(t, left, right, kernel);
}

// Draw of f(t) given the field.  `t` must not coincide with a field time.
inline auto conditional_draw(const Latent_field& field, double t, const Gp_kernel& kernel, Rng& rng,
                             std::size_t skip) -> double {
  auto law = conditional_law(field, t, kernel, skip);
  return law.mean + std::sqrt(law.variance) * standard_normal(rng);
}

inline auto conditional_draw(const Latent_field& field, double t, const Gp_kernel& kernel, Rng& rng) -> double {
  if (field.contains_time(t)) {
    throw std::domain_error{"conditional_draw: new time coincides with a field time"};
  }
  return conditional_draw(field, t, kernel, rng, field.size());
}

// One joint draw of f on a strictly increasing grid given known values at sorted `times`.
// Grid points equal to a known time return the known value.  Points are drawn left to right,
// each conditioned on its left neighbour (known or just drawn) and the next known point.
inline auto predictive_draw(std::span<const double> times, std::span<const double> values,
                            std::span<const double> grid, const Gp_kernel& kernel, Rng& rng)
    -> std::vector<double> {
  detail::check_sorted(grid);
  auto out = std::vector<double>(grid.size());
  auto left = std::optional<Anchor>{};
  auto j = std::size_t{0};  // next known index with times[j] >= current grid point
  for (std::size_t g = 0; g < grid.size(); ++g) {
    auto t = grid[g];
    while (j < times.size() && times[j] < t) {
      if (!left || times[j] > left->time) {
        left = Anchor{times[j], values[j]};
      }
      ++j;
    }
    if (j < times.size() && times[j] == t) {
      out[g] = values[j];
      left = Anchor{t, values[j]};
      continue;
    }
    auto law = j < times.size() ? conditional_law(t, left, Anchor{times[j], values[j]}, kernel)
                                : conditional_law(t, left, std::nullopt, kernel);
    out[g] = law.mean + std::sqrt(law.variance) * standard_normal(rng);
    left = Anchor{t, out[g]};
  }
  return out;
}

inline auto predictive_grid_draw(const Latent_field& field, std::span<const double> grid, const Gp_kernel& kernel,
                                 Rng& rng) -> std::vector<double> {
  return predictive_draw(field.times(), field.values(), grid, kernel, rng);
}

}  // namespace coalgp

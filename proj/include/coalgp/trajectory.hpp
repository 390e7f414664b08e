#pragma once

// Deterministic effective population size trajectories N_e(t) and the bounds on 1/N_e(t)
// that drive thinning.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "coalgp/error.hpp"

namespace coalgp {

template <typename T>
concept Population_trajectory = requires(const T& traj, double t) {
  { traj.ne(t) } -> std::convertible_to<double>;
};

// Trajectories that know the closed form of the integral of 1/N_e over [a, b].
template <typename T>
concept Has_inverse_integral = Population_trajectory<T> && requires(const T& traj, double a, double b) {
  { traj.inverse_integral(a, b) } -> std::convertible_to<double>;
};

// Trajectories that know sup of 1/N_e over [a, b] (used for piecewise thinning bounds).
template <typename T>
concept Has_inverse_sup = Population_trajectory<T> && requires(const T& traj, double a, double b) {
  { traj.inverse_sup(a, b) } -> std::convertible_to<double>;
};

struct Constant_trajectory {
  double size = 1.0;

  auto ne(double) const -> double { return size; }
  auto inverse_integral(double a, double b) const -> double { return (b - a) / size; }
  auto inverse_sup(double, double) const -> double { return 1.0 / size; }
};

// N_e(t) = scale * exp(-rate * t): growth toward the present.
struct Exponential_growth {
  double scale = 25.0;
  double rate = 5.0;

  auto ne(double t) const -> double { return scale * std::exp(-rate * t); }
  auto inverse_integral(double a, double b) const -> double {
    if (rate == 0.0) {
      return (b - a) / scale;
    }
    // (e^{rb} - e^{ra}) / (scale * rate), written to avoid cancellation for short spans.
    return std::exp(rate * a) * std::expm1(rate * (b - a)) / (scale * rate);
  }
  auto inverse_sup(double a, double b) const -> double { return std::max(1.0 / ne(a), 1.0 / ne(b)); }
};

// N_e(t) = exp(growth * t) on [0, breakpoint], exp(-decline * t + (growth + decline) * breakpoint)
// afterwards: expansion (backward in time) followed by a crash.
struct Expansion_crash {
  double growth = 4.0;
  double decline = 2.0;
  double breakpoint = 0.5;

  auto ne(double t) const -> double {
    return t <= breakpoint ? std::exp(growth * t) : std::exp(-decline * t + (growth + decline) * breakpoint);
  }

  auto inverse_integral(double a, double b) const -> double {
    if (b <= a) {
      return 0.0;
    }
    auto sum = 0.0;
    if (a < breakpoint) {
      auto hi = std::min(b, breakpoint);
      // integral of e^{-growth t}
      sum += std::exp(-growth * a) * -std::expm1(-growth * (hi - a)) / growth;
    }
    if (b > breakpoint) {
      auto lo = std::max(a, breakpoint);
      auto shift = (growth + decline) * breakpoint;
      // integral of e^{decline t - shift}
      sum += std::exp(decline * lo - shift) * std::expm1(decline * (b - lo)) / decline;
    }
    return sum;
  }

  // 1/N_e decreases then increases, so the sup over an interval is at an endpoint.
  auto inverse_sup(double a, double b) const -> double { return std::max(1.0 / ne(a), 1.0 / ne(b)); }
};

// Integral of 1/N_e over [a, b] by adaptive Gauss-Kronrod (absolute tolerance 1e-10).
template <Population_trajectory Traj>
auto integrate_inverse_numeric(const Traj& traj, double a, double b) -> double {
  if (b <= a) {
    return 0.0;
  }
  auto error = 0.0;
  auto l1 = 0.0;
  auto value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double t) { return 1.0 / traj.ne(t); }, a, b, 25, 1e-12, &error, &l1);
  if (!std::isfinite(value) || error > std::max(1e-10, 1e-13 * l1)) {
    throw Evaluation_error{"quadrature of 1/N_e did not converge on [" + std::to_string(a) + ", " +
                           std::to_string(b) + "]"};
  }
  return value;
}

template <Population_trajectory Traj>
auto integrate_inverse(const Traj& traj, double a, double b) -> double {
  if constexpr (Has_inverse_integral<Traj>) {
    return traj.inverse_integral(a, b);
  } else {
    return integrate_inverse_numeric(traj, a, b);
  }
}

// Type-erased trajectory for run-time selection (CLI, user-supplied functions).  Missing
// closed forms fall back to quadrature; a missing sup means only constant bounds are usable.
class Any_trajectory {
 public:
  Any_trajectory() : Any_trajectory{Constant_trajectory{}} {}

  template <Population_trajectory Traj>
  Any_trajectory(Traj traj)  // NOLINT(google-explicit-constructor)
      : ne_{[traj](double t) { return traj.ne(t); }},
        integral_{[traj](double a, double b) { return integrate_inverse(traj, a, b); }} {
    if constexpr (Has_inverse_sup<Traj>) {
      sup_ = [traj](double a, double b) { return traj.inverse_sup(a, b); };
    }
  }

  auto ne(double t) const -> double { return ne_(t); }
  auto inverse_integral(double a, double b) const -> double { return integral_(a, b); }
  auto has_inverse_sup() const -> bool { return static_cast<bool>(sup_); }
  auto inverse_sup(double a, double b) const -> double {
    if (!sup_) {
      throw std::logic_error{"trajectory has no known supremum of 1/N_e"};
    }
    return sup_(a, b);
  }

 private:
  std::function<double(double)> ne_;
  std::function<double(double, double)> integral_;
  std::function<double(double, double)> sup_;
};

// Dominating rate per unit coalescent factor: either a constant lambda with 1/N_e <= lambda,
// or piecewise-constant local bounds on segments [j h, (j + 1) h), computed lazily.
class Thinning_bound {
 public:
  static auto constant(double lambda) -> Thinning_bound {
    if (!(lambda > 0.0)) {
      throw std::domain_error{"thinning bound lambda must be positive"};
    }
    auto b = Thinning_bound{};
    b.lambda_ = lambda;
    return b;
  }

  template <Has_inverse_sup Traj>
  static auto piecewise(const Traj& traj, double segment_width) -> Thinning_bound {
    return piecewise(std::function<double(double, double)>{[traj](double a, double b) { return traj.inverse_sup(a, b); }},
                     segment_width);
  }

  static auto piecewise(const Any_trajectory& traj, double segment_width) -> Thinning_bound {
    return piecewise(std::function<double(double, double)>{[traj](double a, double b) { return traj.inverse_sup(a, b); }},
                     segment_width);
  }

  static auto piecewise(std::function<double(double, double)> sup, double segment_width) -> Thinning_bound {
    if (!(segment_width > 0.0)) {
      throw std::domain_error{"segment width must be positive"};
    }
    auto b = Thinning_bound{};
    b.sup_ = std::make_shared<std::function<double(double, double)>>(std::move(sup));
    b.width_ = segment_width;
    return b;
  }

  auto is_constant() const -> bool { return sup_ == nullptr; }

  // Bound valid on [t, segment_end(t)).
  auto rate_at(double t) const -> double {
    if (is_constant()) {
      return lambda_;
    }
    auto j = segment(t);
    auto& cache = cache_;
    while (cache.size() <= j) {
      auto a = static_cast<double>(cache.size()) * width_;
      auto v = (*sup_)(a, a + width_);
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw Simulation_error{"local bound on 1/N_e is not positive and finite near t = " + std::to_string(a)};
      }
      cache.push_back(v);
    }
    return cache[j];
  }

  auto segment_end(double t) const -> double {
    if (is_constant()) {
      return std::numeric_limits<double>::infinity();
    }
    return static_cast<double>(segment(t) + 1) * width_;
  }

 private:
  auto segment(double t) const -> std::size_t {
    auto j = std::floor(t / width_);
    if (j > 1e8) {
      throw Simulation_error{"thinning ran past 1e8 bound segments; 1/N_e may not diverge"};
    }
    // Guard against t landing exactly on a boundary through rounding in segment_end.
    auto s = static_cast<std::size_t>(std::max(0.0, j));
    if (static_cast<double>(s + 1) * width_ <= t) {
      ++s;
    }
    return s;
  }

  double lambda_ = 1.0;
  double width_ = 0.0;
  std::shared_ptr<std::function<double(double, double)>> sup_;
  mutable std::vector<double> cache_;  // per-copy; share a bound across threads by copying it
};

}  // namespace coalgp

#pragma once

// Pointwise posterior summaries of N_e(t) on a grid, and the accuracy metrics used to compare
// an estimate against a known trajectory.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "coalgp/error.hpp"
#include "coalgp/gp_prior.hpp"
#include "coalgp/likelihood.hpp"
#include "coalgp/mcmc.hpp"
#include "coalgp/random.hpp"
#include "coalgp/trajectory.hpp"

namespace coalgp {

// Linear interpolation between order statistics (type 7).  `sorted` must be non-empty and sorted.
inline auto quantile_type7(std::span<const double> sorted, double p) -> double {
  if (sorted.empty()) {
    throw std::invalid_argument{"quantile of an empty sample"};
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error{"quantile level must lie in [0, 1]"};
  }
  auto h = (static_cast<double>(sorted.size()) - 1.0) * p;
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  auto frac = h - static_cast<double>(lo);
  if (frac == 0.0 || sorted[lo] == sorted[hi]) {
    return sorted[lo];  // also keeps infinite order statistics out of the interpolation
  }
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline auto regular_grid(double start, double end, std::size_t k) -> std::vector<double> {
  if (k == 0) {
    throw std::domain_error{"grid needs at least one point"};
  }
  if (k == 1) {
    return {start};
  }
  auto grid = std::vector<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    grid[i] = start + (end - start) * static_cast<double>(i) / static_cast<double>(k - 1);
  }
  grid.back() = end;
  return grid;
}

struct Posterior_summary {
  std::vector<double> grid;
  std::vector<double> median;
  std::vector<double> lower;  // 2.5%
  std::vector<double> upper;  // 97.5%
  std::vector<bool> extrapolated;
  std::size_t draws = 0;
};

// Streams chain draws into per-grid-point N_e samples.  Each draw's predictive randomness
// comes from its own stream keyed by (seed, iteration), so the result does not depend on the
// order in which draws arrive.
class Summary_accumulator {
 public:
  Summary_accumulator(std::vector<double> grid, Gp_kernel kernel, std::uint64_t seed)
      : grid_{std::move(grid)}, kernel_{kernel}, seed_{seed}, samples_(grid_.size()) {
    detail::check_sorted(grid_);
  }

  void add(const Chain_draw& draw) {
    if (draw.times.empty()) {
      throw std::invalid_argument{"chain draw has no field points"};
    }
    auto rng = make_stream(splitmix64(seed_ ^ static_cast<std::uint64_t>(draw.iteration)), streams::k_summary);
    auto f = predictive_draw(draw.times, draw.values, grid_, kernel_.with_theta(draw.theta()), rng);
    for (std::size_t g = 0; g < grid_.size(); ++g) {
      samples_[g].push_back(ne_from_f(f[g], draw.lambda));
    }
    root_time_ = std::max(root_time_, draw.times.back());
    ++draws_;
  }

  auto draws() const -> std::size_t { return draws_; }

  auto finish() const -> Posterior_summary {
    if (draws_ == 0) {
      throw Evaluation_error{"cannot summarize an empty chain"};
    }
    auto out = Posterior_summary{grid_, {}, {}, {}, {}, draws_};
    auto sorted = std::vector<double>{};
    for (std::size_t g = 0; g < grid_.size(); ++g) {
      sorted = samples_[g];
      std::sort(sorted.begin(), sorted.end());
      out.median.push_back(quantile_type7(sorted, 0.5));
      out.lower.push_back(quantile_type7(sorted, 0.025));
      out.upper.push_back(quantile_type7(sorted, 0.975));
      out.extrapolated.push_back(grid_[g] < 0.0 || grid_[g] > root_time_);
    }
    return out;
  }

 private:
  std::vector<double> grid_;
  Gp_kernel kernel_;
  std::uint64_t seed_;
  std::vector<std::vector<double>> samples_;
  double root_time_ = 0.0;
  std::size_t draws_ = 0;
};

inline auto summarize(std::span<const Chain_draw> draws, std::vector<double> grid, const Gp_kernel& kernel,
                      std::uint64_t seed) -> Posterior_summary {
  auto acc = Summary_accumulator{std::move(grid), kernel, seed};
  for (const auto& d : draws) {
    acc.add(d);
  }
  return acc.finish();
}

inline auto summarize(const Chain_output& chain, std::vector<double> grid, const Gp_kernel& kernel,
                      std::uint64_t seed) -> Posterior_summary {
  return summarize(std::span<const Chain_draw>{chain.draws}, std::move(grid), kernel, seed);
}

namespace detail {

inline void check_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw std::invalid_argument{"metric inputs differ in length (" + std::to_string(a) + " vs " + std::to_string(b) +
                                ")"};
  }
}

}  // namespace detail

// Sum of relative errors.
inline auto sre(std::span<const double> est, std::span<const double> truth) -> double {
  detail::check_same_length(est.size(), truth.size());
  auto sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    sum += std::abs(est[i] - truth[i]) / truth[i];
  }
  return sum;
}

// Mean relative width of the credible band.
inline auto mrw(std::span<const double> lower, std::span<const double> upper, std::span<const double> truth)
    -> double {
  detail::check_same_length(lower.size(), truth.size());
  detail::check_same_length(upper.size(), truth.size());
  if (truth.empty()) {
    throw std::invalid_argument{"metric of an empty grid"};
  }
  auto sum = 0.0;
  auto k = static_cast<double>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sum += (upper[i] - lower[i]) / (k * truth[i]);
  }
  return sum;
}

// Fraction of grid points where the band covers the truth.
inline auto envelope(std::span<const double> lower, std::span<const double> upper, std::span<const double> truth)
    -> double {
  detail::check_same_length(lower.size(), truth.size());
  detail::check_same_length(upper.size(), truth.size());
  if (truth.empty()) {
    throw std::invalid_argument{"metric of an empty grid"};
  }
  auto covered = std::size_t{0};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    covered += (lower[i] <= truth[i] && truth[i] <= upper[i]) ? 1 : 0;
  }
  return static_cast<double>(covered) / static_cast<double>(truth.size());
}

// Total variation of an estimate along a regular grid.
inline auto variation(std::span<const double> est) -> double {
  if (est.size() < 2) {
    throw std::invalid_argument{"variation needs at least two grid points"};
  }
  auto sum = 0.0;
  for (std::size_t i = 0; i + 1 < est.size(); ++i) {
    sum += std::abs(est[i + 1] - est[i]);
  }
  return sum;
}

struct Metric_report {
  double sre = 0.0;
  double mrw = 0.0;
  double envelope = 0.0;
  double variation = 0.0;
  std::size_t k = 0;
};

inline auto evaluate(const Posterior_summary& s, std::span<const double> truth) -> Metric_report {
  return Metric_report{sre(s.median, truth), mrw(s.lower, s.upper, truth), envelope(s.lower, s.upper, truth),
                       variation(s.median), truth.size()};
}

template <Population_trajectory Traj>
auto truth_on_grid(const Traj& traj, std::span<const double> grid) -> std::vector<double> {
  auto out = std::vector<double>(grid.size());
  std::transform(grid.begin(), grid.end(), out.begin(), [&](double t) { return traj.ne(t); });
  return out;
}

namespace detail {

inline auto parse_number_list(std::string_view text) -> std::vector<double> {
  auto out = std::vector<double>{};
  while (!text.empty()) {
    auto comma = text.find(',');
    auto piece = text.substr(0, comma);
    auto value = 0.0;
    auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (ec != std::errc{} || ptr != piece.data() + piece.size()) {
      throw Validation_error{"not a number: '" + std::string{piece} + "'"};
    }
    out.push_back(value);
    if (comma == std::string_view::npos) {
      break;
    }
    text.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace detail

// Built-in trajectories by name: "constant[:N]", "expgrowth[:scale,rate]",
// "boombust[:growth,decline,breakpoint]".
inline auto builtin_trajectory(std::string_view spec) -> Any_trajectory {
  auto colon = spec.find(':');
  auto name = spec.substr(0, colon);
  auto args = colon == std::string_view::npos ? std::vector<double>{} : detail::parse_number_list(spec.substr(colon + 1));
  auto need = [&](std::size_t max_args) {
    if (args.size() > max_args) {
      throw Validation_error{"too many parameters in trajectory spec '" + std::string{spec} + "'"};
    }
  };
  if (name == "constant") {
    need(1);
    auto t = Constant_trajectory{args.empty() ? 1.0 : args[0]};
    if (!(t.size > 0.0)) {
      throw Validation_error{"constant population size must be positive"};
    }
    return t;
  }
  if (name == "expgrowth") {
    need(2);
    auto t = Exponential_growth{};
    if (!args.empty()) {
      t.scale = args[0];
    }
    if (args.size() > 1) {
      t.rate = args[1];
    }
    if (!(t.scale > 0.0) || !std::isfinite(t.rate)) {
      throw Validation_error{"expgrowth needs scale > 0 and a finite rate"};
    }
    return t;
  }
  if (name == "boombust") {
    need(3);
    auto t = Expansion_crash{};
    if (!args.empty()) {
      t.growth = args[0];
    }
    if (args.size() > 1) {
      t.decline = args[1];
    }
    if (args.size() > 2) {
      t.breakpoint = args[2];
    }
    if (!(t.growth > 0.0) || !(t.decline > 0.0) || !(t.breakpoint > 0.0)) {
      throw Validation_error{"boombust needs positive growth, decline and breakpoint"};
    }
    return t;
  }
  throw Validation_error{"unknown trajectory '" + std::string{name} + "' (expected constant, expgrowth or boombust)"};
}

}  // namespace coalgp

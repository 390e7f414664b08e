#pragma once

// Coalescent densities (exact, for deterministic N_e), the sigmoidal link between the GP and
// N_e, the prior on the bound lambda, and the augmented-data likelihood of observed plus
// thinned points.  Everything is in log space.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "coalgp/genealogy.hpp"
#include "coalgp/gp_prior.hpp"
#include "coalgp/trajectory.hpp"

namespace coalgp {

// log(1 + e^x) without overflow.
inline auto softplus(double x) -> double {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log sigmoid(f) = log 1/(1 + e^{-f}).
inline auto log_sigmoid(double f) -> double { return -softplus(-f); }

// log(1 - sigmoid(f)) = log 1/(1 + e^{f}).
inline auto log_one_minus_sigmoid(double f) -> double { return -softplus(f); }

inline auto sigmoid(double f) -> double { return std::exp(log_sigmoid(f)); }

// N_e = (1 + e^{-f}) / lambda; always > 1/lambda.
inline auto log_ne_from_f(double f, double lambda) -> double { return softplus(-f) - std::log(lambda); }

inline auto ne_from_f(double f, double lambda) -> double { return std::exp(log_ne_from_f(f, lambda)); }

// Mixture prior on lambda: uniform mass eps on (0, best_guess), exponential tail with mean
// best_guess carrying 1 - eps above it.  The point lambda = best_guess belongs to the tail.
struct Lambda_prior {
  double best_guess = 10.0;
  double eps = 0.01;

  void validate() const {
    if (!(best_guess > 0.0) || !(eps > 0.0 && eps < 1.0)) {
      throw std::domain_error{"lambda prior needs best_guess > 0 and 0 < eps < 1"};
    }
  }

  auto cdf(double lambda) const -> double {
    if (lambda <= 0.0) {
      return 0.0;
    }
    if (lambda < best_guess) {
      return eps * lambda / best_guess;
    }
    return eps + (1.0 - eps) * -std::expm1(-(lambda - best_guess) / best_guess);
  }
};

inline auto lambda_log_prior(double lambda, const Lambda_prior& prior) -> double {
  if (!(lambda > 0.0)) {
    return -std::numeric_limits<double>::infinity();
  }
  if (lambda < prior.best_guess) {
    return std::log(prior.eps / prior.best_guess);
  }
  return std::log((1.0 - prior.eps) / prior.best_guess) - (lambda - prior.best_guess) / prior.best_guess;
}

// Coalescent intensity C_{i,k} / N_e(t) at time t (right-closed intervals).
template <Population_trajectory Traj>
auto conditional_intensity(double t, const Interval_grid& grid, const Traj& traj) -> double {
  auto i = grid.locate(t);
  if (i < 0) {
    throw std::domain_error{"conditional_intensity: t = " + std::to_string(t) + " is outside the genealogy"};
  }
  return grid.intervals[static_cast<std::size_t>(i)].factor / traj.ne(t);
}

// Per-epoch log conditional densities log P(t_{k-1} | t_k, ...), oldest-last.
template <Population_trajectory Traj>
auto log_coalescent_density_terms(const Interval_grid& grid, const Traj& traj) -> std::vector<double> {
  auto terms = std::vector<double>(static_cast<std::size_t>(grid.num_epochs()), 0.0);
  for (const auto& iv : grid.intervals) {
    auto& term = terms[static_cast<std::size_t>(iv.epoch)];
    if (iv.factor > 0.0) {
      term -= iv.factor * integrate_inverse(traj, iv.start, iv.end);
    }
    if (iv.ends_with_coalescence) {
      term += std::log(iv.factor) - std::log(traj.ne(iv.end));
    }
  }
  return terms;
}

template <Population_trajectory Traj>
auto log_coalescent_likelihood(const Interval_grid& grid, const Traj& traj) -> double {
  auto sum = 0.0;
  for (auto term : log_coalescent_density_terms(grid, traj)) {
    sum += term;
  }
  return sum;
}

template <Population_trajectory Traj>
auto log_coalescent_likelihood(const Coalescent_data& d, const Traj& traj) -> double {
  return log_coalescent_likelihood(build_interval_grid(d), traj);
}

namespace detail {

struct Epoch_tally {
  std::vector<double> coalescent_log_sigmoid;  // per epoch
  std::vector<bool> has_coalescent;
  std::vector<double> latent_log_reject;  // per epoch, summed in time order
  std::vector<int> latent_per_interval;
};

inline auto tally_field(const Latent_field& field, const Interval_grid& grid) -> Epoch_tally {
  auto epochs = static_cast<std::size_t>(grid.num_epochs());
  auto tally = Epoch_tally{std::vector<double>(epochs, 0.0), std::vector<bool>(epochs, false),
                           std::vector<double>(epochs, 0.0), std::vector<int>(grid.intervals.size(), 0)};
  for (std::size_t p = 0; p < field.size(); ++p) {
    auto kind = field.kind(p);
    if (kind == Point_kind::origin) {
      continue;
    }
    auto iv = field.interval(p);
    if (iv < 0 || static_cast<std::size_t>(iv) >= grid.intervals.size()) {
      throw std::invalid_argument{"field point at time " + std::to_string(field.time(p)) + " has no valid interval"};
    }
    const auto& interval = grid.intervals[static_cast<std::size_t>(iv)];
    auto e = static_cast<std::size_t>(interval.epoch);
    if (kind == Point_kind::coalescent) {
      if (!interval.ends_with_coalescence || field.time(p) != interval.end) {
        throw std::invalid_argument{"coalescent field point does not match its interval"};
      }
      tally.coalescent_log_sigmoid[e] = log_sigmoid(field.value(p));
      tally.has_coalescent[e] = true;
    } else {
      tally.latent_log_reject[e] += log_one_minus_sigmoid(field.value(p));
      ++tally.latent_per_interval[static_cast<std::size_t>(iv)];
    }
  }
  for (std::size_t e = 0; e < epochs; ++e) {
    if (!tally.has_coalescent[e]) {
      throw std::invalid_argument{"field is missing the f-value at a coalescent time"};
    }
  }
  return tally;
}

}  // namespace detail

// Augmented log-likelihood for isochronous data: per epoch,
// (m_k + 1) log(C_k lambda) - C_k lambda (t_{k-1} - t_k) + log sigmoid(f(t_{k-1})) + sum log(1 - sigmoid(f_latent)).
inline auto log_augmented_likelihood_isochronous(const Latent_field& field, const Interval_grid& grid, double lambda)
    -> double {
  auto tally = detail::tally_field(field, grid);
  auto sum = 0.0;
  for (auto e = 0; e < grid.num_epochs(); ++e) {
    const auto& iv = grid.intervals[static_cast<std::size_t>(grid.coalescence_interval[static_cast<std::size_t>(e)])];
    if (iv.sub_index != 0 || grid.coalescence_interval[static_cast<std::size_t>(e)] != e) {
      throw std::invalid_argument{"log_augmented_likelihood_isochronous: grid is heterochronous"};
    }
    auto m = static_cast<double>(tally.latent_per_interval[static_cast<std::size_t>(e)]);
    auto rate = iv.factor * lambda;
    auto acc = (m + 1.0) * std::log(rate) - rate * (iv.end - iv.start);
    acc += tally.coalescent_log_sigmoid[static_cast<std::size_t>(e)];
    acc += tally.latent_log_reject[static_cast<std::size_t>(e)];
    sum += acc;
  }
  return sum;
}

// Augmented log-likelihood for any sampling schedule.  Per epoch the coalescence-ending
// interval contributes (1 + m_0) log(lambda C_0) - lambda C_0 l(I_0) + log sigmoid(f(t_{k-1})),
// the latent points contribute log(1 - sigmoid(f)), and each earlier interval of the epoch
// contributes m_i log(lambda C_i) - lambda C_i l(I_i).
inline auto log_augmented_likelihood(const Latent_field& field, const Interval_grid& grid, double lambda) -> double {
  auto tally = detail::tally_field(field, grid);
  auto sum = 0.0;
  for (auto e = 0; e < grid.num_epochs(); ++e) {
    auto last = static_cast<std::size_t>(grid.coalescence_interval[static_cast<std::size_t>(e)]);
    const auto& iv0 = grid.intervals[last];
    auto m0 = static_cast<double>(tally.latent_per_interval[last]);
    auto rate0 = iv0.factor * lambda;
    auto acc = (m0 + 1.0) * std::log(rate0) - rate0 * (iv0.end - iv0.start);
    acc += tally.coalescent_log_sigmoid[static_cast<std::size_t>(e)];
    acc += tally.latent_log_reject[static_cast<std::size_t>(e)];
    auto first = e == 0 ? std::size_t{0} : static_cast<std::size_t>(grid.coalescence_interval[static_cast<std::size_t>(e) - 1]) + 1;
    for (auto i = last; i-- > first;) {
      const auto& iv = grid.intervals[i];
      auto m = tally.latent_per_interval[i];
      auto rate = iv.factor * lambda;
      if (m > 0) {
        if (!(rate > 0.0)) {
          return -std::numeric_limits<double>::infinity();  // latent point where no coalescence is possible
        }
        acc += static_cast<double>(m) * std::log(rate);
      }
      acc -= rate * (iv.end - iv.start);
    }
    sum += acc;
  }
  return sum;
}

// sum_k sum_i C_{i,k} l(I_{i,k}): the total hazard length multiplying lambda.
inline auto total_hazard_length(const Interval_grid& grid) -> double { return grid.total_hazard_length(); }

}  // namespace coalgp

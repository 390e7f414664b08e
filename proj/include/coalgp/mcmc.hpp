#pragma once

// MCMC over the augmented posterior of (latent points, f at observed and latent times, theta,
// lambda) given a genealogy.  One iteration runs, in order: a birth/death sweep over every
// interval, latent-point relocations, an elliptical slice update of f, a Gibbs draw of theta
// and a reflected-uniform Metropolis-Hastings step for lambda.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coalgp/genealogy.hpp"
#include "coalgp/gp_prior.hpp"
#include "coalgp/likelihood.hpp"
#include "coalgp/random.hpp"
#include "coalgp/simulate.hpp"

namespace coalgp {

struct Gamma_prior {
  double shape = 0.001;
  double rate = 0.001;

  auto log_density_at_log(double log_x) const -> double {
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * log_x - rate * std::exp(log_x);
  }
};

struct Mcmc_config {
  std::int64_t iterations = 100'000;
  std::int64_t burnin = 20'000;
  std::int64_t thin = 10;
  std::uint64_t seed = 1;
  Gamma_prior theta_prior;
  Lambda_prior lambda_prior;
  double lambda_half_width = 0.0;  // <= 0 selects 10% of the lambda best guess
  int rj_sweeps = 1;               // birth/death proposals per interval per iteration
  int location_moves = 10;         // relocation proposals per iteration

  auto effective_half_width() const -> double {
    return lambda_half_width > 0.0 ? lambda_half_width : 0.1 * lambda_prior.best_guess;
  }

  void validate() const {
    if (iterations < 1 || burnin < 0 || thin < 1 || burnin >= iterations) {
      throw std::domain_error{"MCMC needs iterations >= 1, 0 <= burnin < iterations and thin >= 1"};
    }
    if (!(theta_prior.shape > 0.0) || !(theta_prior.rate > 0.0)) {
      throw std::domain_error{"Gamma prior on theta needs positive shape and rate"};
    }
    lambda_prior.validate();
    if (rj_sweeps < 0 || location_moves < 0) {
      throw std::domain_error{"move counts must be non-negative"};
    }
  }
};

struct Chain_state {
  Latent_field field;
  std::vector<int> latent_per_interval;
  double log_theta = 0.0;  // theta can underflow under very diffuse priors
  double lambda = 1.0;

  auto theta() const -> double { return std::exp(log_theta); }
};

struct Acceptance {
  std::int64_t proposed = 0;
  std::int64_t accepted = 0;

  auto rate() const -> double {
    return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
  }
  void record(bool ok) {
    ++proposed;
    accepted += ok ? 1 : 0;
  }
};

struct Move_stats {
  Acceptance rj_add;
  Acceptance rj_remove;
  Acceptance location;
  Acceptance lambda;
  std::int64_t ess_updates = 0;
  std::int64_t ess_shrinks = 0;
};

struct Chain_draw {
  std::int64_t iteration = 0;
  double log_theta = 0.0;
  double lambda = 0.0;
  std::size_t latent = 0;
  double log_posterior = 0.0;
  std::vector<double> times;
  std::vector<double> values;

  auto theta() const -> double { return std::exp(log_theta); }
};

struct Chain_output {
  std::vector<Chain_draw> draws;
  std::vector<double> log_posterior_trace;
  Move_stats stats;
};

// Raised when the log posterior becomes non-finite; carries the offending state.
class Mcmc_abort : public std::runtime_error {
 public:
  Mcmc_abort(const std::string& what, std::int64_t iteration, Chain_state state)
      : std::runtime_error{what}, iteration_{iteration}, state_{std::move(state)} {}

  auto iteration() const -> std::int64_t { return iteration_; }
  auto state() const -> const Chain_state& { return state_; }

 private:
  std::int64_t iteration_;
  Chain_state state_;
};

// log a_up for adding a latent point with value f_new to an interval of length `length` and
// coalescent factor `factor` that currently holds m latent points.
inline auto rj_log_accept_add(double length, double lambda, double factor, int m, double f_new) -> double {
  return std::log(length) + std::log(lambda) + std::log(factor) - std::log(static_cast<double>(m) + 1.0) -
         softplus(f_new);
}

// log a_down for removing a latent point with value f_old from an interval holding m >= 1 points.
inline auto rj_log_accept_remove(double length, double lambda, double factor, int m, double f_old) -> double {
  return std::log(static_cast<double>(m)) + softplus(f_old) - std::log(length) - std::log(lambda) -
         std::log(factor);
}

inline auto rj_accept_add(double length, double lambda, double factor, int m, double f_new) -> double {
  return std::exp(rj_log_accept_add(length, lambda, factor, m, f_new));
}

inline auto rj_accept_remove(double length, double lambda, double factor, int m, double f_old) -> double {
  return std::exp(rj_log_accept_remove(length, lambda, factor, m, f_old));
}

// Acceptance for moving a latent point from value f_old to f_new inside one interval.
inline auto location_log_accept(double f_old, double f_new) -> double { return softplus(f_old) - softplus(f_new); }

namespace detail {

inline auto accept_log(double log_a, Rng& rng) -> bool {
  if (std::isnan(log_a)) {
    return false;
  }
  return log_a >= 0.0 || std::log(uniform_open(rng)) < log_a;
}

// Uniform on (start, end].
inline auto uniform_in_interval(const Interval& iv, Rng& rng) -> double {
  return iv.end - iv.length() * std::generate_canonical<double, 64>(rng);
}

// Field index of the j-th (0-based) latent point inside interval `iv_index`.
inline auto nth_latent_in(const Latent_field& field, const Interval& iv, int iv_index, int j) -> std::size_t {
  for (auto p = field.lower_bound(iv.start); p < field.size() && field.time(p) <= iv.end; ++p) {
    if (field.kind(p) == Point_kind::latent && field.interval(p) == iv_index) {
      if (j-- == 0) {
        return p;
      }
    }
  }
  throw std::logic_error{"latent point bookkeeping out of sync"};
}

}  // namespace detail

// Initial state: f = 0 at every coalescent time (and t_n = 0), no latent points,
// theta = prior mean (1 when that is not a usable number), lambda = best guess.
inline auto initial_state(const Coalescent_data& data, const Interval_grid& grid, const Mcmc_config& cfg)
    -> Chain_state {
  auto state = Chain_state{};
  state.field.push_back(0.0, 0.0, Point_kind::origin, -1);
  for (std::size_t e = 0; e < grid.coalescence_interval.size(); ++e) {
    state.field.push_back(data.coal_times[e + 1], 0.0, Point_kind::coalescent, grid.coalescence_interval[e]);
  }
  state.latent_per_interval.assign(grid.intervals.size(), 0);
  auto mean = cfg.theta_prior.shape / cfg.theta_prior.rate;
  state.log_theta = (std::isfinite(mean) && mean > 1e-6 && mean < 1e6) ? std::log(mean) : 0.0;
  state.lambda = cfg.lambda_prior.best_guess;
  return state;
}

// State that holds a simulated (T, N, f) record, e.g. for joint-distribution tests.
inline auto state_from_record(const Simulation_record& rec, const Interval_grid& grid, double theta, double lambda)
    -> Chain_state {
  if (!rec.field) {
    throw std::invalid_argument{"state_from_record: record has no GP field"};
  }
  auto state = Chain_state{*rec.field, std::vector<int>(grid.intervals.size(), 0), std::log(theta), lambda};
  for (std::size_t p = 0; p < state.field.size(); ++p) {
    if (state.field.kind(p) == Point_kind::latent) {
      ++state.latent_per_interval[static_cast<std::size_t>(state.field.interval(p))];
    }
  }
  return state;
}

// Product of thinning acceptance/rejection probabilities at the field points (log).
inline auto log_thinning_likelihood(const Latent_field& field, std::span<const double> values) -> double {
  auto sum = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) {
    switch (field.kind(p)) {
      case Point_kind::coalescent: sum += log_sigmoid(values[p]); break;
      case Point_kind::latent: sum += log_one_minus_sigmoid(values[p]); break;
      case Point_kind::origin: break;
    }
  }
  return sum;
}

inline auto log_augmented_posterior(const Chain_state& state, const Interval_grid& grid, const Gp_kernel& kernel,
                                    const Mcmc_config& cfg) -> double {
  auto lp = cfg.theta_prior.log_density_at_log(state.log_theta) + lambda_log_prior(state.lambda, cfg.lambda_prior);
  if (state.field.empty()) {
    return lp;
  }
  return lp + log_augmented_likelihood(state.field, grid, state.lambda) +
         log_prior_density(state.field, kernel.with_theta(state.theta()));
}

// Birth/death proposals, one per interval, applied in time order.  The field is rebuilt in a
// single pass: `out` holds every point up to the end of the current interval and the rest of the
// old field follows unchanged, so each edit only shifts points of the current interval.
inline void rj_update(Chain_state& state, const Interval_grid& grid, const Gp_kernel& kernel, Rng& rng,
                      Move_stats& stats, Latent_field& out) {
  const auto& old = state.field;
  out.clear();
  out.reserve(old.size() + grid.intervals.size());
  auto r = std::size_t{0};
  for (std::size_t i = 0; i < grid.intervals.size(); ++i) {
    const auto& iv = grid.intervals[i];
    for (; r < old.size() && old.time(r) <= iv.end; ++r) {
      out.push_back(old.time(r), old.value(r), old.kind(r), old.interval(r));
    }
    auto& m = state.latent_per_interval[i];
    if (std::generate_canonical<double, 64>(rng) < 0.5) {
      if (!(iv.factor > 0.0) || !(iv.length() > 0.0)) {
        stats.rj_add.record(false);
        continue;
      }
      auto t = detail::uniform_in_interval(iv, rng);
      auto pos = out.lower_bound(t);
      if (pos < out.size() && out.time(pos) == t) {
        stats.rj_add.record(false);
        continue;
      }
      auto left = pos > 0 ? std::optional<Anchor>{Anchor{out.time(pos - 1), out.value(pos - 1)}} : std::nullopt;
      auto right = pos < out.size() ? std::optional<Anchor>{Anchor{out.time(pos), out.value(pos)}}
                   : r < old.size() ? std::optional<Anchor>{Anchor{old.time(r), old.value(r)}}
                                    : std::nullopt;
      auto law = conditional_law(t, left, right, kernel);
      auto f = law.mean + std::sqrt(law.variance) * standard_normal(rng);
      auto ok = detail::accept_log(rj_log_accept_add(iv.length(), state.lambda, iv.factor, m, f), rng);
      if (ok) {
        out.insert(t, f, Point_kind::latent, static_cast<int>(i));
        ++m;
      }
      stats.rj_add.record(ok);
    } else {
      if (m == 0) {
        stats.rj_remove.record(false);
        continue;
      }
      auto j = static_cast<int>(std::generate_canonical<double, 64>(rng) * m);
      j = std::min(j, m - 1);
      auto p = detail::nth_latent_in(out, iv, static_cast<int>(i), j);
      auto ok = detail::accept_log(rj_log_accept_remove(iv.length(), state.lambda, iv.factor, m, out.value(p)), rng);
      if (ok) {
        out.erase(p);
        --m;
      }
      stats.rj_remove.record(ok);
    }
  }
  for (; r < old.size(); ++r) {
    out.push_back(old.time(r), old.value(r), old.kind(r), old.interval(r));
  }
  std::swap(state.field, out);
}

inline void rj_update(Chain_state& state, const Interval_grid& grid, const Gp_kernel& kernel, Rng& rng,
                      Move_stats& stats) {
  auto staging = Latent_field{};
  rj_update(state, grid, kernel, rng, stats, staging);
}

// Moves one latent point to a uniform location in its interval.  The interval is chosen among
// intervals holding latent points, with probability proportional to length.
inline void location_update(Chain_state& state, const Interval_grid& grid, const Gp_kernel& kernel, Rng& rng,
                            Move_stats& stats) {
  if (state.field.num_latent() == 0) {
    return;
  }
  auto total = 0.0;
  for (std::size_t i = 0; i < grid.intervals.size(); ++i) {
    if (state.latent_per_interval[i] > 0) {
      total += grid.intervals[i].length();
    }
  }
  auto target = total * std::generate_canonical<double, 64>(rng);
  auto chosen = std::size_t{0};
  auto last_nonempty = std::size_t{0};
  for (std::size_t i = 0; i < grid.intervals.size(); ++i) {
    if (state.latent_per_interval[i] == 0) {
      continue;
    }
    last_nonempty = i;
    target -= grid.intervals[i].length();
    if (target < 0.0) {
      chosen = i;
      break;
    }
    chosen = last_nonempty;
  }
  const auto& iv = grid.intervals[chosen];
  auto m = state.latent_per_interval[chosen];
  auto j = std::min(static_cast<int>(std::generate_canonical<double, 64>(rng) * m), m - 1);
  auto p = detail::nth_latent_in(state.field, iv, static_cast<int>(chosen), j);
  auto t = detail::uniform_in_interval(iv, rng);
  if (state.field.contains_time(t)) {
    stats.location.record(false);
    return;
  }
  auto f = conditional_draw(state.field, t, kernel, rng, p);
  auto ok = detail::accept_log(location_log_accept(state.field.value(p), f), rng);
  if (ok) {
    state.field.relocate(p, t, f, static_cast<int>(chosen));
  }
  stats.location.record(ok);
}

// One elliptical slice sampling transition of `f` for a target proportional to
// N(f; 0, Sigma) * exp(log_lik(f)), where `nu` is a fresh draw from N(0, Sigma).  Returns the
// number of bracket shrinks.
template <typename LogLik>
auto elliptical_slice(std::span<double> f, std::span<const double> nu, LogLik&& log_lik, Rng& rng,
                      std::vector<double>& scratch) -> int {
  scratch.resize(f.size());
  auto log_y = log_lik(std::span<const double>{f}) + std::log(uniform_open(rng));
  auto angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  auto lo = angle - 2.0 * std::numbers::pi;
  auto hi = angle;
  auto shrinks = 0;
  while (true) {
    auto c = std::cos(angle);
    auto s = std::sin(angle);
    for (std::size_t i = 0; i < f.size(); ++i) {
      scratch[i] = f[i] * c + nu[i] * s;
    }
    if (log_lik(std::span<const double>{scratch}) > log_y) {
      std::copy(scratch.begin(), scratch.end(), f.begin());
      return shrinks;
    }
    if (++shrinks > 100'000) {
      return shrinks;  // bracket collapsed onto the current state; keep f
    }
    if (angle < 0.0) {
      lo = angle;
    } else {
      hi = angle;
    }
    angle = uniform(rng, lo, hi);
  }
}

inline void ess_update(Chain_state& state, const Gp_kernel& kernel, Rng& rng, Move_stats& stats,
                       std::vector<double>& nu, std::vector<double>& scratch) {
  if (state.field.empty()) {
    return;
  }
  nu.resize(state.field.size());
  sample_prior(state.field.times(), kernel, rng, nu);
  const auto& field = state.field;
  auto shrinks = elliptical_slice(
      state.field.values(), nu, [&field](std::span<const double> v) { return log_thinning_likelihood(field, v); }, rng,
      scratch);
  ++stats.ess_updates;
  stats.ess_shrinks += shrinks;
}

// theta | f ~ Gamma(shape + d/2, rate + f'Q(1)f / 2).
inline void gibbs_theta(Chain_state& state, const Gp_kernel& kernel, const Gamma_prior& prior, Rng& rng) {
  auto d = static_cast<double>(state.field.size());
  auto quad = structure_quadratic_form(state.field.times(), state.field.values(), kernel);
  state.log_theta = log_gamma_draw(rng, prior.shape + 0.5 * d, prior.rate + 0.5 * quad);
}

// log acceptance ratio for lambda -> proposed, given the number of thinning proposals
// (coalescences plus latent points) and the total hazard length.
inline auto lambda_log_accept(double lambda, double proposed, const Lambda_prior& prior, double num_proposals,
                              double hazard_length) -> double {
  if (!(proposed > 0.0)) {
    return -std::numeric_limits<double>::infinity();
  }
  auto log_a = lambda_log_prior(proposed, prior) - lambda_log_prior(lambda, prior);
  if (num_proposals > 0.0) {
    log_a += num_proposals * (std::log(proposed) - std::log(lambda));
  }
  return log_a - (proposed - lambda) * hazard_length;
}

inline void mh_lambda(Chain_state& state, const Lambda_prior& prior, double half_width, const Interval_grid& grid,
                      Rng& rng, Move_stats& stats) {
  auto proposed = state.lambda + uniform(rng, -half_width, half_width);
  if (proposed < 0.0) {
    proposed = -proposed;
  }
  auto num_proposals = static_cast<double>(grid.num_epochs()) + static_cast<double>(state.field.num_latent());
  auto ok = detail::accept_log(lambda_log_accept(state.lambda, proposed, prior, num_proposals,
                                                 grid.total_hazard_length()),
                               rng);
  if (ok) {
    state.lambda = proposed;
  }
  stats.lambda.record(ok);
}

// Reusable buffers for one chain.
struct Mcmc_workspace {
  std::vector<double> nu;
  std::vector<double> scratch;
  Latent_field staging;
};

// One full iteration.
inline void mcmc_sweep(Chain_state& state, const Interval_grid& grid, const Mcmc_config& cfg, const Gp_kernel& kernel,
                       Rng& rng, Move_stats& stats, Mcmc_workspace& ws) {
  if (!state.field.empty()) {
    auto k = kernel.with_theta(state.theta());
    for (auto r = 0; r < cfg.rj_sweeps; ++r) {
      rj_update(state, grid, k, rng, stats, ws.staging);
    }
    for (auto r = 0; r < cfg.location_moves; ++r) {
      location_update(state, grid, k, rng, stats);
    }
    ess_update(state, k, rng, stats, ws.nu, ws.scratch);
  }
  gibbs_theta(state, kernel, cfg.theta_prior, rng);
  mh_lambda(state, cfg.lambda_prior, cfg.effective_half_width(), grid, rng, stats);
}

struct Chain_callbacks {
  std::function<void(const Chain_draw&)> on_draw;  // when set, draws are streamed instead of stored
  std::function<void(std::int64_t, const Move_stats&)> on_progress;
  std::int64_t progress_every = 0;
};

inline auto run_chain(const Interval_grid& grid, Chain_state state, const Mcmc_config& cfg, const Gp_kernel& kernel,
                      const Chain_callbacks& callbacks = {}) -> Chain_output {
  cfg.validate();
  auto rng = make_stream(cfg.seed, streams::k_mcmc);
  auto out = Chain_output{};
  auto ws = Mcmc_workspace{};
  for (std::int64_t it = 1; it <= cfg.iterations; ++it) {
    mcmc_sweep(state, grid, cfg, kernel, rng, out.stats, ws);
    if (it > cfg.burnin && (it - cfg.burnin) % cfg.thin == 0) {
      auto lp = log_augmented_posterior(state, grid, kernel, cfg);
      if (!std::isfinite(lp)) {
        throw Mcmc_abort{"non-finite log posterior at iteration " + std::to_string(it), it, state};
      }
      out.log_posterior_trace.push_back(lp);
      auto draw = Chain_draw{it,
                             state.log_theta,
                             state.lambda,
                             state.field.num_latent(),
                             lp,
                             {state.field.times().begin(), state.field.times().end()},
                             {state.field.values().begin(), state.field.values().end()}};
      if (callbacks.on_draw) {
        callbacks.on_draw(draw);
      } else {
        out.draws.push_back(std::move(draw));
      }
    }
    if (callbacks.on_progress && callbacks.progress_every > 0 && it % callbacks.progress_every == 0) {
      callbacks.on_progress(it, out.stats);
    }
  }
  return out;
}

inline auto run_chain(const Coalescent_data& data, const Interval_grid& grid, const Mcmc_config& cfg,
                      const Gp_kernel& kernel, const Chain_callbacks& callbacks = {}) -> Chain_output {
  validate(data);
  return run_chain(grid, initial_state(data, grid, cfg), cfg, kernel, callbacks);
}

inline auto run_chain(const Coalescent_data& data, const Mcmc_config& cfg, const Gp_kernel& kernel,
                      const Chain_callbacks& callbacks = {}) -> Chain_output {
  return run_chain(data, build_interval_grid(data), cfg, kernel, callbacks);
}

// Chain on the empty-data target: no genealogy, so only the hyperparameter updates act and the
// stationary law is the prior.
inline auto run_prior_chain(const Mcmc_config& cfg, const Gp_kernel& kernel, const Chain_callbacks& callbacks = {})
    -> Chain_output {
  auto state = Chain_state{};
  auto mean = cfg.theta_prior.shape / cfg.theta_prior.rate;
  state.log_theta = (std::isfinite(mean) && mean > 1e-6 && mean < 1e6) ? std::log(mean) : 0.0;
  state.lambda = cfg.lambda_prior.best_guess;
  return run_chain(Interval_grid{}, std::move(state), cfg, kernel, callbacks);
}

}  // namespace coalgp

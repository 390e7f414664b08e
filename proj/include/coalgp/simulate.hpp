#pragma once

// Coalescent simulation by thinning (deterministic or GP-distributed N_e, isochronous or
// heterochronous sampling) and by time transformation, which serves as the exact oracle for
// deterministic trajectories.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coalgp/error.hpp"
#include "coalgp/genealogy.hpp"
#include "coalgp/gp_prior.hpp"
#include "coalgp/likelihood.hpp"
#include "coalgp/random.hpp"
#include "coalgp/trajectory.hpp"

namespace coalgp {

// Sampling times (ascending, first 0) and the number of sequences sampled at each.
struct Sampling_schedule {
  std::vector<double> times;
  std::vector<int> counts;

  static auto isochronous(int n) -> Sampling_schedule { return {{0.0}, {n}}; }

  auto total() const -> int {
    auto sum = 0;
    for (auto c : counts) {
      sum += c;
    }
    return sum;
  }

  void validate() const {
    if (times.empty() || times.size() != counts.size() || times.front() != 0.0) {
      throw std::domain_error{"sampling schedule needs matching times/counts starting at time 0"};
    }
    for (std::size_t j = 1; j < times.size(); ++j) {
      if (!(times[j] > times[j - 1]) || !std::isfinite(times[j])) {
        throw std::domain_error{"sampling times must be finite and strictly increasing"};
      }
    }
    for (auto c : counts) {
      if (c < 1) {
        throw std::domain_error{"sample counts must be positive"};
      }
    }
    if (total() < 2) {
      throw std::domain_error{"need at least two samples in total"};
    }
  }
};

struct Simulation_options {
  std::int64_t max_proposals_per_interval = 10'000'000;
};

struct Simulation_record {
  Coalescent_data data;
  std::vector<std::vector<double>> latent_by_epoch;  // epoch 0 = (t_n, t_{n-1}]
  std::optional<Latent_field> field;                 // GP simulations only
  std::int64_t proposals = 0;

  auto num_latent() const -> std::size_t {
    auto n = std::size_t{0};
    for (const auto& v : latent_by_epoch) {
      n += v.size();
    }
    return n;
  }
};

namespace detail {

inline void check_cap(std::int64_t proposals, const Simulation_options& options) {
  if (proposals > options.max_proposals_per_interval) {
    throw Simulation_error{"more than " + std::to_string(options.max_proposals_per_interval) +
                           " thinning proposals in one interval; lambda is far too large or 1/N_e does not diverge"};
  }
}

// Next proposal time; fails once the exponential step vanishes below double resolution.
inline auto advance(double t, double e) -> double {
  auto next = t + e;
  if (!(next > t)) {
    throw Simulation_error{"proposal time stalled at t = " + std::to_string(t) + "; step below double resolution"};
  }
  return next;
}

template <Population_trajectory Traj>
auto acceptance_probability(const Traj& traj, double t, double bound) -> double {
  auto p = 1.0 / (traj.ne(t) * bound);
  if (p > 1.0 + 1e-12) {
    throw Simulation_error{"thinning bound violated: 1/N_e(" + std::to_string(t) + ") exceeds the bound " +
                           std::to_string(bound)};
  }
  return p;
}

struct Raw_point {
  double time;
  double value;
  Point_kind kind;
};

// Assigns interval indices once the coalescent times (hence the grid) are known.
inline auto finish_field(const Coalescent_data& data, const std::vector<Raw_point>& points) -> Latent_field {
  auto grid = build_interval_grid(data);
  auto field = Latent_field{};
  for (const auto& p : points) {
    field.push_back(p.time, p.value, p.kind, p.kind == Point_kind::origin ? -1 : grid.locate(p.time));
  }
  return field;
}

}  // namespace detail

// Isochronous thinning with deterministic N_e.  Proposal gaps are Exponential(C_k * bound);
// a proposal t is accepted as the next coalescence with probability 1 / (N_e(t) * bound).
template <Population_trajectory Traj>
auto simulate_iso_thinning(int n, const Traj& traj, const Thinning_bound& bound, Rng& rng,
                           const Simulation_options& options = {}) -> Simulation_record {
  if (n < 2) {
    throw std::domain_error{"simulate_iso_thinning: n must be >= 2"};
  }
  auto rec = Simulation_record{};
  rec.data.coal_times.push_back(0.0);
  rec.data.samp_times = {0.0};
  rec.data.samp_counts = {n};
  rec.latent_by_epoch.resize(static_cast<std::size_t>(n - 1));
  auto t = 0.0;
  for (auto k = n; k > 1; --k) {
    auto factor = static_cast<double>(coalescent_factor(k));
    auto& latent = rec.latent_by_epoch[static_cast<std::size_t>(n - k)];
    auto proposals = std::int64_t{0};
    while (true) {
      detail::check_cap(++proposals, options);
      auto lambda = bound.rate_at(t);
      auto seg_end = bound.segment_end(t);
      auto e = exponential(rng, factor * lambda);
      auto u = uniform_open(rng);
      if (t + e >= seg_end) {
        t = seg_end;
        continue;
      }
      t = detail::advance(t, e);
      if (u <= detail::acceptance_probability(traj, t, lambda)) {
        rec.data.coal_times.push_back(t);
        break;
      }
      latent.push_back(t);
    }
    rec.proposals += proposals;
  }
  return rec;
}

// Heterochronous thinning with deterministic N_e.  A proposal accepted beyond the next sampling
// time resets the clock to that sampling time and adds its samples; rejected proposals
// advance the clock.
template <Population_trajectory Traj>
auto simulate_hetero_thinning(const Sampling_schedule& schedule, const Traj& traj, const Thinning_bound& bound,
                              Rng& rng, const Simulation_options& options = {}) -> Simulation_record {
  schedule.validate();
  auto n = schedule.total();
  auto m = schedule.times.size();
  auto rec = Simulation_record{};
  rec.data.coal_times.push_back(0.0);
  rec.data.samp_times = schedule.times;
  rec.data.samp_counts = schedule.counts;
  rec.latent_by_epoch.resize(static_cast<std::size_t>(n - 1));
  auto t = 0.0;
  auto lineages = schedule.counts[0];
  auto next = std::size_t{1};
  auto epoch = std::size_t{0};
  auto proposals = std::int64_t{0};
  while (true) {
    if (lineages < 2) {
      if (next == m) {
        break;
      }
      t = schedule.times[next];
      lineages += schedule.counts[next++];
      continue;
    }
    detail::check_cap(++proposals, options);
    auto s_next = next < m ? schedule.times[next] : std::numeric_limits<double>::infinity();
    auto factor = static_cast<double>(coalescent_factor(lineages));
    auto lambda = bound.rate_at(t);
    auto seg_end = bound.segment_end(t);
    auto e = exponential(rng, factor * lambda);
    auto u = uniform_open(rng);
    auto cand = detail::advance(t, e);
    if (cand >= seg_end) {
      if (seg_end < s_next) {
        t = seg_end;
      } else {
        t = s_next;
        lineages += schedule.counts[next++];
      }
      continue;
    }
    if (u <= detail::acceptance_probability(traj, cand, lambda)) {
      if (cand < s_next) {
        t = cand;
        rec.data.coal_times.push_back(t);
        --lineages;
        ++epoch;
        rec.proposals += proposals;
        proposals = 0;
      } else {
        t = s_next;
        lineages += schedule.counts[next++];
      }
    } else {
      if (cand < s_next) {
        rec.latent_by_epoch[epoch].push_back(cand);
      }
      t = cand;
    }
  }
  rec.proposals += proposals;
  return rec;
}

// Isochronous thinning with 1/N_e = lambda * sigmoid(f), f ~ GP.  f is drawn at each proposal
// from its conditional given all values drawn so far; accepted points are coalescences and the
// rest are recorded as latent points together with every f-value.
inline auto simulate_iso_thinning_gp(int n, const Gp_kernel& kernel, double lambda, Rng& rng,
                                     const Simulation_options& options = {}) -> Simulation_record {
  if (n < 2) {
    throw std::domain_error{"simulate_iso_thinning_gp: n must be >= 2"};
  }
  if (!(lambda > 0.0)) {
    throw std::domain_error{"simulate_iso_thinning_gp: lambda must be positive"};
  }
  kernel.validate();
  auto rec = Simulation_record{};
  rec.data.coal_times.push_back(0.0);
  rec.data.samp_times = {0.0};
  rec.data.samp_counts = {n};
  rec.latent_by_epoch.resize(static_cast<std::size_t>(n - 1));
  auto points = std::vector<detail::Raw_point>{};
  auto f0 = conditional_law(0.0, std::nullopt, std::nullopt, kernel);
  points.push_back({0.0, f0.mean + std::sqrt(f0.variance) * standard_normal(rng), Point_kind::origin});
  auto t = 0.0;
  for (auto k = n; k > 1; --k) {
    auto factor = static_cast<double>(coalescent_factor(k));
    auto& latent = rec.latent_by_epoch[static_cast<std::size_t>(n - k)];
    auto proposals = std::int64_t{0};
    while (true) {
      detail::check_cap(++proposals, options);
      auto e = exponential(rng, factor * lambda);
      auto u = uniform_open(rng);
      t = detail::advance(t, e);
      auto law = conditional_law(t, Anchor{points.back().time, points.back().value}, std::nullopt, kernel);
      auto f = law.mean + std::sqrt(law.variance) * standard_normal(rng);
      if (u <= sigmoid(f)) {
        rec.data.coal_times.push_back(t);
        points.push_back({t, f, Point_kind::coalescent});
        break;
      }
      latent.push_back(t);
      points.push_back({t, f, Point_kind::latent});
    }
    rec.proposals += proposals;
  }
  rec.field = detail::finish_field(rec.data, points);
  return rec;
}

// Heterochronous counterpart of simulate_iso_thinning_gp.  Proposals beyond the next sampling
// time are never recorded; their f-values are discarded and play no part in later draws.
inline auto simulate_hetero_thinning_gp(const Sampling_schedule& schedule, const Gp_kernel& kernel, double lambda,
                                        Rng& rng, const Simulation_options& options = {}) -> Simulation_record {
  schedule.validate();
  if (!(lambda > 0.0)) {
    throw std::domain_error{"simulate_hetero_thinning_gp: lambda must be positive"};
  }
  kernel.validate();
  auto n = schedule.total();
  auto m = schedule.times.size();
  auto rec = Simulation_record{};
  rec.data.coal_times.push_back(0.0);
  rec.data.samp_times = schedule.times;
  rec.data.samp_counts = schedule.counts;
  rec.latent_by_epoch.resize(static_cast<std::size_t>(n - 1));
  auto points = std::vector<detail::Raw_point>{};
  auto f0 = conditional_law(0.0, std::nullopt, std::nullopt, kernel);
  points.push_back({0.0, f0.mean + std::sqrt(f0.variance) * standard_normal(rng), Point_kind::origin});
  auto t = 0.0;
  auto lineages = schedule.counts[0];
  auto next = std::size_t{1};
  auto epoch = std::size_t{0};
  auto proposals = std::int64_t{0};
  while (true) {
    if (lineages < 2) {
      if (next == m) {
        break;
      }
      t = schedule.times[next];
      lineages += schedule.counts[next++];
      continue;
    }
    detail::check_cap(++proposals, options);
    auto s_next = next < m ? schedule.times[next] : std::numeric_limits<double>::infinity();
    auto factor = static_cast<double>(coalescent_factor(lineages));
    auto e = exponential(rng, factor * lambda);
    auto u = uniform_open(rng);
    auto cand = detail::advance(t, e);
    auto law = conditional_law(cand, Anchor{points.back().time, points.back().value}, std::nullopt, kernel);
    auto f = law.mean + std::sqrt(law.variance) * standard_normal(rng);
    if (u <= sigmoid(f)) {
      if (cand < s_next) {
        t = cand;
        rec.data.coal_times.push_back(t);
        points.push_back({t, f, Point_kind::coalescent});
        --lineages;
        ++epoch;
        rec.proposals += proposals;
        proposals = 0;
      } else {
        t = s_next;
        lineages += schedule.counts[next++];
      }
    } else {
      if (cand < s_next) {
        rec.latent_by_epoch[epoch].push_back(cand);
        points.push_back({cand, f, Point_kind::latent});
      }
      t = cand;
    }
  }
  rec.proposals += proposals;
  rec.field = detail::finish_field(rec.data, points);
  return rec;
}

// Smallest x in (start, limit] with factor * integral_start^x 1/N_e = target, or nullopt when the
// hazard accumulated up to a finite `limit` stays below target.  Bracketing plus bisection to
// 1e-12 in time.
template <Population_trajectory Traj>
auto solve_cumulative_hazard(const Traj& traj, double start, double factor, double target,
                             double limit = std::numeric_limits<double>::infinity()) -> std::optional<double> {
  auto hazard = [&](double x) { return factor * integrate_inverse(traj, start, x); };
  auto hi = 0.0;
  if (std::isfinite(limit)) {
    if (hazard(limit) < target) {
      return std::nullopt;
    }
    hi = limit;
  } else {
    auto width = std::max(1e-6, target * traj.ne(start) / factor);
    hi = start + width;
    auto doublings = 0;
    while (hazard(hi) < target) {
      if (++doublings > 2000 || !std::isfinite(hi)) {
        throw Simulation_error{"time-transform inversion: bracketing exhausted (1/N_e may not diverge)"};
      }
      width *= 2.0;
      hi = start + width;
    }
  }
  auto lo = start;
  for (auto iter = 0; iter < 400 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++iter) {
    auto mid = 0.5 * (lo + hi);
    if (hazard(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

// Exact simulation by the random time change: each waiting time solves
// integral of the piecewise intensity = Exponential(1).
template <Population_trajectory Traj>
auto simulate_time_transform(const Sampling_schedule& schedule, const Traj& traj, Rng& rng) -> Coalescent_data {
  schedule.validate();
  auto m = schedule.times.size();
  auto d = Coalescent_data{{0.0}, schedule.times, schedule.counts};
  auto t = 0.0;
  auto lineages = schedule.counts[0];
  auto next = std::size_t{1};
  while (true) {
    if (lineages < 2) {
      if (next == m) {
        break;
      }
      t = schedule.times[next];
      lineages += schedule.counts[next++];
      continue;
    }
    auto target = exponential(rng, 1.0);
    while (true) {
      auto factor = static_cast<double>(coalescent_factor(lineages));
      auto limit = next < m ? schedule.times[next] : std::numeric_limits<double>::infinity();
      if (factor > 0.0) {
        if (auto x = solve_cumulative_hazard(traj, t, factor, target, limit)) {
          t = *x;
          d.coal_times.push_back(t);
          --lineages;
          break;
        }
        target -= factor * integrate_inverse(traj, t, limit);
      }
      if (next == m) {
        throw Simulation_error{"time-transform: single lineage with no remaining samples"};
      }
      t = schedule.times[next];
      lineages += schedule.counts[next++];
    }
  }
  return d;
}

template <Population_trajectory Traj>
auto simulate_time_transform(int n, const Traj& traj, Rng& rng) -> Coalescent_data {
  return simulate_time_transform(Sampling_schedule::isochronous(n), traj, rng);
}

}  // namespace coalgp

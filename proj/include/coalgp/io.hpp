#pragma once

// JSON / JSON-lines / CSV serialization of coalescent data, simulation records, chains and
// summaries.

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coalgp/error.hpp"
#include "coalgp/genealogy.hpp"
#include "coalgp/gp_prior.hpp"
#include "coalgp/mcmc.hpp"
#include "coalgp/simulate.hpp"
#include "coalgp/summary.hpp"

namespace coalgp {

using Json = nlohmann::json;

inline constexpr const char* k_version = "0.1.0";

inline void to_json(Json& j, const Coalescent_data& d) {
  j = Json{{"coal_times", d.coal_times}, {"samp_times", d.samp_times}, {"samp_counts", d.samp_counts}};
}

inline void from_json(const Json& j, Coalescent_data& d) {
  try {
    j.at("coal_times").get_to(d.coal_times);
    d.samp_times = j.contains("samp_times") ? j.at("samp_times").get<std::vector<double>>() : std::vector<double>{0.0};
    d.samp_counts = j.contains("samp_counts") ? j.at("samp_counts").get<std::vector<int>>()
                                              : std::vector<int>{static_cast<int>(d.coal_times.size())};
  } catch (const nlohmann::json::exception& e) {
    throw Validation_error{std::string{"malformed coalescent data: "} + e.what()};
  }
}

inline auto to_string(Point_kind kind) -> const char* {
  switch (kind) {
    case Point_kind::origin: return "origin";
    case Point_kind::coalescent: return "coalescent";
    case Point_kind::latent: return "latent";
  }
  return "?";
}

inline void to_json(Json& j, const Latent_field& f) {
  auto kinds = Json::array();
  for (auto k : f.kinds()) {
    kinds.push_back(to_string(k));
  }
  j = Json{{"times", std::vector<double>(f.times().begin(), f.times().end())},
           {"values", std::vector<double>(f.values().begin(), f.values().end())},
           {"kinds", kinds}};
}

inline void to_json(Json& j, const Simulation_record& r) {
  j = Json(r.data);
  j["latent"] = r.latent_by_epoch;
  j["proposals"] = r.proposals;
  if (r.field) {
    j["field"] = Json(*r.field);
  }
}

inline void to_json(Json& j, const Gp_kernel& k) {
  j = Json{{"kind", k.kind == Kernel_kind::brownian_motion ? "bm" : "ou"}};
  if (k.kind == Kernel_kind::brownian_motion) {
    j["sigma0sq"] = k.initial_variance;
  } else {
    j["phi"] = k.rate;
  }
}

inline void from_json(const Json& j, Gp_kernel& k) {
  auto kind = j.at("kind").get<std::string>();
  if (kind == "bm") {
    k = Gp_kernel::brownian(1.0, j.value("sigma0sq", 100.0));
  } else if (kind == "ou") {
    k = Gp_kernel::ornstein_uhlenbeck(1.0, j.value("phi", 1.0));
  } else {
    throw Validation_error{"unknown kernel kind '" + kind + "'"};
  }
}

inline void to_json(Json& j, const Acceptance& a) {
  j = Json{{"proposed", a.proposed}, {"accepted", a.accepted}, {"rate", a.rate()}};
}

inline void to_json(Json& j, const Move_stats& s) {
  j = Json{{"rj_add", s.rj_add},
           {"rj_remove", s.rj_remove},
           {"location", s.location},
           {"lambda", s.lambda},
           {"ess_updates", s.ess_updates},
           {"ess_shrinks", s.ess_shrinks}};
}

inline void to_json(Json& j, const Mcmc_config& c) {
  j = Json{{"iterations", c.iterations},
           {"burnin", c.burnin},
           {"thin", c.thin},
           {"seed", c.seed},
           {"alpha", c.theta_prior.shape},
           {"beta", c.theta_prior.rate},
           {"lambda_hat", c.lambda_prior.best_guess},
           {"eps", c.lambda_prior.eps},
           {"lambda_halfwidth", c.effective_half_width()},
           {"rj_sweeps", c.rj_sweeps},
           {"location_moves", c.location_moves}};
}

inline void to_json(Json& j, const Chain_draw& d) {
  j = Json{{"iter", d.iteration},  {"theta", d.theta()},       {"log_theta", d.log_theta}, {"lambda", d.lambda},
           {"latent", d.latent},   {"log_post", d.log_posterior}, {"t", d.times},          {"f", d.values}};
}

inline void from_json(const Json& j, Chain_draw& d) {
  j.at("iter").get_to(d.iteration);
  d.log_theta = j.contains("log_theta") ? j.at("log_theta").get<double>() : std::log(j.at("theta").get<double>());
  j.at("lambda").get_to(d.lambda);
  d.latent = j.value("latent", std::size_t{0});
  d.log_posterior = j.value("log_post", 0.0);
  j.at("t").get_to(d.times);
  j.at("f").get_to(d.values);
  if (d.times.size() != d.values.size()) {
    throw Validation_error{"chain draw has mismatched t and f arrays"};
  }
}

inline void to_json(Json& j, const Chain_state& s) {
  j = Json{{"field", s.field}, {"log_theta", s.log_theta}, {"lambda", s.lambda},
           {"latent_per_interval", s.latent_per_interval}};
}

inline void to_json(Json& j, const Metric_report& m) {
  j = Json{{"sre", m.sre}, {"mrw", m.mrw}, {"envelope", m.envelope}, {"variation", m.variation}, {"K", m.k}};
}

// Chain file: a header line {"type":"header",...}, one line per draw, and a trailing
// {"type":"footer",...} line with acceptance statistics.
struct Chain_file {
  Json header;
  std::vector<Chain_draw> draws;
  Json footer;
};

// Streams draws to `on_draw` when given; otherwise collects them.
template <typename OnDraw>
auto read_chain_jsonl(std::istream& in, OnDraw&& on_draw) -> Chain_file {
  auto out = Chain_file{};
  auto line = std::string{};
  auto line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    auto j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Parse_error{"chain file line " + std::to_string(line_no) + " is not a JSON object", 0};
    }
    auto type = j.value("type", std::string{"draw"});
    if (type == "header") {
      out.header = std::move(j);
    } else if (type == "footer") {
      out.footer = std::move(j);
    } else {
      try {
        on_draw(j.get<Chain_draw>());
      } catch (const nlohmann::json::exception& e) {
        throw Validation_error{"chain file line " + std::to_string(line_no) + ": " + e.what()};
      }
    }
  }
  return out;
}

inline auto read_chain_jsonl(std::istream& in) -> Chain_file {
  auto draws = std::vector<Chain_draw>{};
  auto out = read_chain_jsonl(in, [&](Chain_draw d) { draws.push_back(std::move(d)); });
  out.draws = std::move(draws);
  return out;
}

inline void write_json_line(std::ostream& out, const Json& j) { out << j.dump() << '\n'; }

inline void write_summary_csv(std::ostream& out, const Posterior_summary& s) {
  auto old_precision = out.precision(17);
  out << "time,median,lo95,hi95,extrapolated\n";
  for (std::size_t g = 0; g < s.grid.size(); ++g) {
    out << s.grid[g] << ',' << s.median[g] << ',' << s.lower[g] << ',' << s.upper[g] << ','
        << (s.extrapolated[g] ? 1 : 0) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace coalgp

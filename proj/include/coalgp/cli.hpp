#pragma once

// Command-line front end: `simulate`, `infer` and `summarize` subcommands.  Kept in a header
// so tests can drive it in-process through run_cli.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "coalgp/coalgp.hpp"
#include "coalgp/io.hpp"
#include "coalgp/stats.hpp"

namespace coalgp::cli {

inline constexpr int k_exit_ok = 0;
inline constexpr int k_exit_usage = 2;
inline constexpr int k_exit_runtime = 3;

// Bad flags, unreadable inputs and other problems the caller can fix.
class Usage_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relative output paths are placed under $COALGP_OUTPUT_DIR when it is set.
inline auto output_path(const std::string& path) -> std::filesystem::path {
  auto p = std::filesystem::path{path};
  if (const auto* dir = std::getenv("COALGP_OUTPUT_DIR"); dir != nullptr && *dir != '\0' && p.is_relative()) {
    p = std::filesystem::path{dir} / p;
  }
  if (p.has_parent_path()) {
    std::filesystem::create_directories(p.parent_path());
  }
  return p;
}

inline auto open_output(const std::filesystem::path& p) -> std::ofstream {
  auto f = std::ofstream{p, std::ios::binary};
  if (!f) {
    throw std::runtime_error{"cannot open '" + p.string() + "' for writing"};
  }
  return f;
}

inline auto read_text(const std::string& path, const char* what) -> std::string {
  auto f = std::ifstream{path, std::ios::binary};
  if (!f) {
    throw Usage_error{std::string{"cannot read "} + what + " '" + path + "'"};
  }
  auto ss = std::ostringstream{};
  ss << f.rdbuf();
  return ss.str();
}

// `<dir>/<stem><suffix>`, dropping the last extension of `path`.
inline auto sibling(const std::filesystem::path& path, const std::string& suffix) -> std::filesystem::path {
  auto out = path;
  out.replace_extension();
  out += suffix;
  return out;
}

// Runs fn(i) for i in [0, count) on up to `threads` workers.  Results must be written by index
// so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }
  auto next = std::atomic<std::size_t>{0};
  auto failure = std::exception_ptr{};
  auto failure_mutex = std::mutex{};
  auto work = [&] {
    for (auto i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        auto lock = std::lock_guard{failure_mutex};
        if (!failure) {
          failure = std::current_exception();
        }
        next = count;
      }
    }
  };
  auto pool = std::vector<std::thread>{};
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back(work);
  }
  for (auto& t : pool) {
    t.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

inline auto default_threads() -> unsigned { return std::max(1U, std::thread::hardware_concurrency()); }

// ---- trajectory and schedule specs ----

struct Trajectory_choice {
  std::string text;
  std::optional<Any_trajectory> deterministic;
  std::optional<Gp_kernel> gp;
};

// "gp:bm[,theta[,sigma0sq]]" or "gp:ou[,theta[,phi]]"; anything else is a built-in name.
inline auto parse_trajectory(const std::string& text) -> Trajectory_choice {
  auto out = Trajectory_choice{text, std::nullopt, std::nullopt};
  if (text.rfind("gp:", 0) != 0) {
    out.deterministic = builtin_trajectory(text);
    return out;
  }
  auto rest = std::string_view{text}.substr(3);
  auto comma = rest.find(',');
  auto kind = rest.substr(0, comma);
  auto args = comma == std::string_view::npos ? std::vector<double>{} : detail::parse_number_list(rest.substr(comma + 1));
  if (args.size() > 2) {
    throw Validation_error{"too many parameters in '" + text + "'"};
  }
  auto theta = args.empty() ? 1.0 : args[0];
  if (!(theta > 0.0)) {
    throw Validation_error{"GP precision theta must be positive"};
  }
  if (kind == "bm") {
    auto v = args.size() > 1 ? args[1] : 100.0;
    if (!(v > 0.0)) {
      throw Validation_error{"initial variance must be positive"};
    }
    out.gp = Gp_kernel::brownian(theta, v);
  } else if (kind == "ou") {
    auto phi = args.size() > 1 ? args[1] : 1.0;
    if (!(phi > 0.0)) {
      throw Validation_error{"OU rate must be positive"};
    }
    out.gp = Gp_kernel::ornstein_uhlenbeck(theta, phi);
  } else {
    throw Validation_error{"unknown GP kernel '" + std::string{kind} + "' (expected bm or ou)"};
  }
  return out;
}

// "time:count,time:count,..." with the first time 0.
inline auto parse_schedule(const std::string& text) -> Sampling_schedule {
  auto s = Sampling_schedule{};
  auto rest = std::string_view{text};
  while (!rest.empty()) {
    auto comma = rest.find(',');
    auto item = rest.substr(0, comma);
    auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw Validation_error{"schedule entries look like time:count, got '" + std::string{item} + "'"};
    }
    auto t = detail::parse_number_list(item.substr(0, colon));
    auto c = detail::parse_number_list(item.substr(colon + 1));
    if (t.size() != 1 || c.size() != 1 || c[0] != std::floor(c[0]) || c[0] < 1.0 || c[0] > 1e7) {
      throw Validation_error{"bad schedule entry '" + std::string{item} + "'"};
    }
    s.times.push_back(t[0]);
    s.counts.push_back(static_cast<int>(c[0]));
    if (comma == std::string_view::npos) {
      break;
    }
    rest.remove_prefix(comma + 1);
  }
  try {
    s.validate();
  } catch (const std::domain_error& e) {
    throw Validation_error{e.what()};
  }
  return s;
}

// ---- simulate ----

struct Simulate_args {
  bool iso = false;
  bool hetero = false;
  int n = 0;
  std::string schedule;
  std::string trajectory = "constant:1";
  std::optional<double> lambda;
  double bound_width = 0.05;
  std::uint64_t seed = 1;
  int replicates = 1;
  int oracle_replicates = 0;  // 0: same as replicates
  std::int64_t max_proposals = Simulation_options{}.max_proposals_per_interval;
  unsigned threads = 0;
  std::string out;
};

inline auto simulate_one(const Simulate_args& a, const Trajectory_choice& traj, const Sampling_schedule& schedule,
                         const std::optional<Thinning_bound>& bound, Rng& rng) -> Simulation_record {
  auto options = Simulation_options{a.max_proposals};
  if (traj.gp) {
    return a.hetero ? simulate_hetero_thinning_gp(schedule, *traj.gp, *a.lambda, rng, options)
                    : simulate_iso_thinning_gp(a.n, *traj.gp, *a.lambda, rng, options);
  }
  return a.hetero ? simulate_hetero_thinning(schedule, *traj.deterministic, *bound, rng, options)
                  : simulate_iso_thinning(a.n, *traj.deterministic, *bound, rng, options);
}

inline auto simulate_config_json(const Simulate_args& a, const Sampling_schedule& schedule) -> Json {
  auto j = Json{{"mode", a.hetero ? "hetero" : "iso"},
                {"trajectory", a.trajectory},
                {"seed", a.seed},
                {"replicates", a.replicates},
                {"samp_times", schedule.times},
                {"samp_counts", schedule.counts}};
  if (a.lambda) {
    j["bound"] = Json{{"kind", "constant"}, {"lambda", *a.lambda}};
  } else {
    j["bound"] = Json{{"kind", "piecewise"}, {"segment_width", a.bound_width}};
  }
  return j;
}

// Per-coalescence KS distances between thinning replicates and time-transform replicates.
inline auto ks_report(const std::vector<Coalescent_data>& thinned, const std::vector<Coalescent_data>& oracle) -> Json {
  auto per = Json::array();
  auto worst = 0.0;
  auto all_pass = true;
  auto n = thinned.front().coal_times.size();
  auto m1 = static_cast<double>(thinned.size());
  auto m2 = static_cast<double>(oracle.size());
  auto critical = 1.358 * std::sqrt((m1 + m2) / (m1 * m2));
  for (std::size_t i = 1; i < n; ++i) {
    auto a = std::vector<double>{};
    auto b = std::vector<double>{};
    for (const auto& d : thinned) {
      a.push_back(d.coal_times[i]);
    }
    for (const auto& d : oracle) {
      b.push_back(d.coal_times[i]);
    }
    auto ks = ks_distance(std::move(a), std::move(b));
    worst = std::max(worst, ks);
    all_pass = all_pass && ks < critical;
    per.push_back(Json{{"index", i}, {"ks", ks}, {"pass", ks < critical}});
  }
  return Json{{"thinned_replicates", thinned.size()},
              {"oracle_replicates", oracle.size()},
              {"critical_95", critical},
              {"max_ks", worst},
              {"all_pass", all_pass},
              {"per_coalescence", per}};
}

inline auto cmd_simulate(const Simulate_args& a, std::ostream& out, std::ostream& err) -> int {
  if (a.iso && a.hetero) {
    throw Usage_error{"--iso and --hetero are mutually exclusive"};
  }
  auto hetero = a.hetero || (!a.iso && !a.schedule.empty());
  auto args = a;
  args.hetero = hetero;
  auto schedule = Sampling_schedule{};
  if (hetero) {
    if (a.schedule.empty()) {
      throw Usage_error{"--hetero needs --schedule time:count,..."};
    }
    schedule = parse_schedule(a.schedule);
    args.n = schedule.total();
  } else {
    if (!a.schedule.empty()) {
      throw Usage_error{"--schedule requires heterochronous mode"};
    }
    if (a.n < 2) {
      throw Usage_error{"isochronous simulation needs -n >= 2"};
    }
    schedule = Sampling_schedule::isochronous(a.n);
  }
  if (a.replicates < 1) {
    throw Usage_error{"--replicates must be >= 1"};
  }
  if (a.replicates > 1 && a.out.empty()) {
    throw Usage_error{"--replicates > 1 needs --out"};
  }
  auto traj = parse_trajectory(a.trajectory);
  auto bound = std::optional<Thinning_bound>{};
  if (traj.gp) {
    if (!a.lambda || !(*a.lambda > 0.0)) {
      throw Usage_error{"GP trajectories need --lambda > 0 (the upper bound of 1/N_e)"};
    }
  } else if (a.lambda) {
    if (!(*a.lambda > 0.0)) {
      throw Usage_error{"--lambda must be positive"};
    }
    bound = Thinning_bound::constant(*a.lambda);
  } else {
    if (!(a.bound_width > 0.0)) {
      throw Usage_error{"--bound-width must be positive"};
    }
    bound = Thinning_bound::piecewise(*traj.deterministic, a.bound_width);
  }

  auto count = static_cast<std::size_t>(a.replicates);
  auto threads = a.threads == 0 ? default_threads() : a.threads;
  auto records = std::vector<Simulation_record>(count);
  parallel_for(count, threads, [&](std::size_t r) {
    auto rng = make_stream(a.seed, streams::k_replicate_base + r);
    auto local = bound;  // each copy owns its lazily filled bound cache
    records[r] = simulate_one(args, traj, schedule, local, rng);
  });

  auto config = simulate_config_json(args, schedule);
  if (count == 1) {
    auto j = Json(records.front());
    j["version"] = k_version;
    j["config"] = config;
    if (a.out.empty()) {
      out << j.dump(1) << '\n';
    } else {
      auto path = output_path(a.out);
      auto f = open_output(path);
      f << j.dump(1) << '\n';
      err << "wrote " << path.string() << '\n';
    }
    return k_exit_ok;
  }

  auto path = output_path(a.out);
  {
    auto f = open_output(path);
    write_json_line(f, Json{{"type", "header"}, {"version", k_version}, {"config", config}});
    for (std::size_t r = 0; r < count; ++r) {
      auto j = Json(records[r]);
      j["replicate"] = r;
      write_json_line(f, j);
    }
  }
  err << "wrote " << count << " records to " << path.string() << '\n';
  if (!traj.deterministic) {
    err << "no exact oracle for GP trajectories; skipping the KS report\n";
    return k_exit_ok;
  }
  auto oracle_count = static_cast<std::size_t>(a.oracle_replicates > 0 ? a.oracle_replicates : a.replicates);
  auto oracle = std::vector<Coalescent_data>(oracle_count);
  auto oracle_seed = splitmix64(a.seed ^ streams::k_oracle);
  parallel_for(oracle_count, threads, [&](std::size_t r) {
    auto rng = make_stream(oracle_seed, streams::k_replicate_base + r);
    oracle[r] = simulate_time_transform(schedule, *traj.deterministic, rng);
  });
  auto thinned = std::vector<Coalescent_data>{};
  for (const auto& rec : records) {
    thinned.push_back(rec.data);
  }
  auto report = ks_report(thinned, oracle);
  auto ks_path = sibling(path, ".ks.json");
  auto f = open_output(ks_path);
  f << report.dump(1) << '\n';
  out << "max KS distance " << report["max_ks"].get<double>() << " (95% critical value "
      << report["critical_95"].get<double>() << ")\n";
  err << "wrote " << ks_path.string() << '\n';
  return k_exit_ok;
}

// ---- infer ----

struct Infer_args {
  std::string tree;
  std::string data;
  int record = 0;
  std::string tip_dates;
  std::string date_delim;
  Mcmc_config mcmc;
  std::string kernel = "bm";
  double phi = 1.0;
  double sigma0sq = 100.0;
  int chains = 1;
  unsigned threads = 0;
  std::string unit = "unspecified";
  std::string out = "chain";
  std::int64_t progress = -1;  // -1: every 10% of the run
};

inline auto load_data_json(const std::string& path, int record) -> Coalescent_data {
  auto text = read_text(path, "data file");
  auto j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    // Replicate files are JSON lines: pick the record with the requested index.
    auto lines = std::istringstream{text};
    auto line = std::string{};
    while (std::getline(lines, line)) {
      auto r = Json::parse(line, nullptr, false);
      if (r.is_object() && r.contains("coal_times") && r.value("replicate", 0) == record) {
        return r.get<Coalescent_data>();
      }
    }
    throw Validation_error{"'" + path + "' holds no coalescent data (replicate " + std::to_string(record) + ")"};
  }
  if (!j.is_object()) {
    throw Validation_error{"'" + path + "' is not a JSON object"};
  }
  return j.get<Coalescent_data>();
}

inline auto load_input(const Infer_args& a) -> Coalescent_data {
  if (a.tree.empty() == a.data.empty()) {
    throw Usage_error{"give exactly one of --tree and --data"};
  }
  if (!a.data.empty()) {
    auto d = load_data_json(a.data, a.record);
    validate(d);
    return d;
  }
  auto text = read_text(a.tree, "tree file");
  auto options = Newick_options{};
  if (!a.date_delim.empty()) {
    if (a.date_delim.size() != 1) {
      throw Usage_error{"--date-delim must be a single character"};
    }
    options.date_delimiter = a.date_delim.front();
  }
  auto dates = Tip_dates{};
  if (!a.tip_dates.empty()) {
    auto in = std::istringstream{read_text(a.tip_dates, "tip-date table")};
    dates = read_tip_dates(in);
  }
  auto g = parse_newick(text, a.tip_dates.empty() ? nullptr : &dates, options);
  return extract_coalescent_data(g);
}

inline auto make_kernel(const std::string& kind, double phi, double sigma0sq) -> Gp_kernel {
  if (kind == "bm") {
    if (!(sigma0sq > 0.0)) {
      throw Usage_error{"--sigma0sq must be positive"};
    }
    return Gp_kernel::brownian(1.0, sigma0sq);
  }
  if (kind == "ou") {
    if (!(phi > 0.0)) {
      throw Usage_error{"--phi must be positive"};
    }
    return Gp_kernel::ornstein_uhlenbeck(1.0, phi);
  }
  throw Usage_error{"--kernel must be bm or ou"};
}

inline auto chain_seed(std::uint64_t seed, int chain) -> std::uint64_t {
  return chain == 0 ? seed : splitmix64(seed ^ (streams::k_chain_base + static_cast<std::uint64_t>(chain)));
}

inline auto cmd_infer(const Infer_args& a, std::ostream& out, std::ostream& err) -> int {
  auto data = load_input(a);
  auto kernel = make_kernel(a.kernel, a.phi, a.sigma0sq);
  try {
    a.mcmc.validate();
  } catch (const std::domain_error& e) {
    throw Usage_error{e.what()};
  }
  if (a.chains < 1) {
    throw Usage_error{"--chains must be >= 1"};
  }
  auto grid = build_interval_grid(data);
  auto prefix = output_path(a.out);
  auto chain_path = [&](int c, const std::string& suffix) {
    auto p = prefix;
    p += a.chains == 1 ? suffix : ".chain" + std::to_string(c) + suffix;
    return p;
  };
  auto progress_every = a.progress >= 0 ? a.progress : std::max<std::int64_t>(1, a.mcmc.iterations / 10);
  auto err_mutex = std::mutex{};
  auto results = std::vector<Json>(static_cast<std::size_t>(a.chains));
  auto aborted = std::vector<bool>(static_cast<std::size_t>(a.chains), false);

  auto run_one = [&](std::size_t ci) {
    auto c = static_cast<int>(ci);
    auto cfg = a.mcmc;
    cfg.seed = chain_seed(a.mcmc.seed, c);
    auto path = chain_path(c, ".jsonl");
    auto file = open_output(path);
    write_json_line(file, Json{{"type", "header"},
                               {"version", k_version},
                               {"chain", c},
                               {"config", cfg},
                               {"kernel", kernel},
                               {"unit", a.unit},
                               {"data", data}});
    auto draws = std::int64_t{0};
    auto callbacks = Chain_callbacks{};
    callbacks.on_draw = [&](const Chain_draw& d) {
      write_json_line(file, Json(d));
      ++draws;
    };
    callbacks.progress_every = progress_every;
    callbacks.on_progress = [&](std::int64_t it, const Move_stats& s) {
      auto lock = std::lock_guard{err_mutex};
      err << (a.chains > 1 ? "[chain " + std::to_string(c) + "] " : std::string{}) << "iter " << it << '/'
          << cfg.iterations << std::fixed << std::setprecision(3) << "  add " << s.rj_add.rate() << "  remove "
          << s.rj_remove.rate() << "  move " << s.location.rate() << "  lambda " << s.lambda.rate()
          << std::defaultfloat << '\n';
    };
    try {
      auto output = run_chain(data, grid, cfg, kernel, callbacks);
      auto footer = Json{{"type", "footer"}, {"draws", draws}, {"stats", output.stats}};
      write_json_line(file, footer);
      results[ci] = Json{{"file", path.filename().string()}, {"seed", cfg.seed}, {"draws", draws}, {"stats", output.stats}};
    } catch (const Mcmc_abort& e) {
      auto dump_path = chain_path(c, ".abort.json");
      auto dump = open_output(dump_path);
      dump << Json{{"message", e.what()}, {"iteration", e.iteration()}, {"chain", c}, {"state", e.state()}}.dump(1)
           << '\n';
      auto lock = std::lock_guard{err_mutex};
      err << "error: " << e.what() << "; state written to " << dump_path.string() << '\n';
      aborted[ci] = true;
      results[ci] = Json{{"file", path.filename().string()}, {"seed", cfg.seed}, {"aborted", true}};
    }
  };
  auto threads = a.threads == 0 ? default_threads() : a.threads;
  parallel_for(static_cast<std::size_t>(a.chains), threads, run_one);

  auto meta = Json{{"version", k_version},
                   {"command", "infer"},
                   {"input", a.tree.empty() ? a.data : a.tree},
                   {"config", a.mcmc},
                   {"kernel", kernel},
                   {"unit", a.unit},
                   {"tips", data.num_tips()},
                   {"root_time", data.root_time()},
                   {"isochronous", data.isochronous()},
                   {"chains", results}};
  auto meta_path = prefix;
  meta_path += ".meta.json";
  open_output(meta_path) << meta.dump(1) << '\n';
  if (std::find(aborted.begin(), aborted.end(), true) != aborted.end()) {
    return k_exit_runtime;
  }
  for (const auto& r : results) {
    out << r["file"].get<std::string>() << ": " << r["draws"].get<std::int64_t>() << " draws\n";
  }
  return k_exit_ok;
}

// ---- summarize ----

struct Summarize_args {
  std::string chain;
  std::size_t grid = 150;
  std::optional<double> grid_max;
  std::string truth;
  std::uint64_t seed = 1;
  std::string out;
};

inline auto cmd_summarize(const Summarize_args& a, std::ostream& out, std::ostream& err) -> int {
  if (a.grid < 1) {
    throw Usage_error{"--grid must be >= 1"};
  }
  auto truth_traj = a.truth.empty() ? std::optional<Any_trajectory>{} : builtin_trajectory(a.truth);
  if (truth_traj && a.grid < 2) {
    throw Usage_error{"metrics need --grid >= 2"};
  }
  auto in = std::istringstream{read_text(a.chain, "chain file")};
  auto chain = read_chain_jsonl(in);
  auto kernel = Gp_kernel::brownian(1.0);
  if (chain.header.contains("kernel")) {
    kernel = chain.header["kernel"].get<Gp_kernel>();
  } else {
    err << "warning: chain header has no kernel; assuming Brownian motion\n";
  }
  auto root = 0.0;
  if (chain.header.contains("data")) {
    root = chain.header["data"].get<Coalescent_data>().root_time();
  } else {
    for (const auto& d : chain.draws) {
      root = std::max(root, d.times.empty() ? 0.0 : d.times.back());
    }
  }
  auto end = a.grid_max.value_or(root);
  if (!(end >= 0.0)) {
    throw Usage_error{"--grid-max must be non-negative"};
  }
  if (end > root) {
    err << "warning: grid extends past the root time " << root << "; rows beyond it are extrapolated\n";
  }
  auto summary = summarize(chain.draws, regular_grid(0.0, end, a.grid), kernel, a.seed);

  auto path = output_path(a.out.empty() ? sibling(a.chain, ".summary.csv").filename().string() : a.out);
  {
    auto f = open_output(path);
    write_summary_csv(f, summary);
  }
  err << "wrote " << path.string() << " (" << summary.draws << " draws, " << a.grid << " grid points)\n";
  if (truth_traj) {
    auto truth = truth_on_grid(*truth_traj, summary.grid);
    auto report = evaluate(summary, truth);
    auto j = Json(report);
    j["truth"] = a.truth;
    auto metrics_path = sibling(path, ".metrics.json");
    open_output(metrics_path) << j.dump(1) << '\n';
    out << std::setprecision(6) << "SRE " << report.sre << "  MRW " << report.mrw << "  envelope " << report.envelope
        << "  variation " << report.variation << '\n';
  }
  return k_exit_ok;
}

// ---- entry point ----

inline auto run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) -> int {
  auto app = CLI::App{"Coalescent simulation and sigmoidal-GP inference of effective population size"};
  app.set_version_flag("--version", std::string{k_version});
  app.require_subcommand(1);

  auto sim = Simulate_args{};
  auto* s = app.add_subcommand("simulate", "Simulate coalescent times by thinning");
  s->add_flag("--iso", sim.iso, "All samples at time 0 (default)");
  s->add_flag("--hetero", sim.hetero, "Serial sampling; needs --schedule");
  s->add_option("-n", sim.n, "Number of tips (isochronous)");
  s->add_option("--schedule", sim.schedule, "Sampling schedule time:count,... starting at time 0");
  s->add_option("--traj", sim.trajectory,
                "constant[:N] | expgrowth[:scale,rate] | boombust[:g,d,b] | gp:bm[,theta[,sigma0sq]] | "
                "gp:ou[,theta[,phi]]")
      ->capture_default_str();
  s->add_option("--lambda", sim.lambda, "Constant bound on 1/N_e; for GP trajectories the sigmoid scale");
  s->add_option("--bound-width", sim.bound_width, "Segment width of the piecewise bound")->capture_default_str();
  s->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  s->add_option("--replicates", sim.replicates, "Number of replicates")->capture_default_str();
  s->add_option("--oracle-replicates", sim.oracle_replicates, "Time-transform replicates for the KS report");
  s->add_option("--max-proposals", sim.max_proposals, "Proposal cap per interval")->capture_default_str();
  s->add_option("--threads", sim.threads, "Worker threads (0: all cores)");
  s->add_option("--out", sim.out, "Output file (stdout when omitted and --replicates is 1)");

  auto inf = Infer_args{};
  auto* i = app.add_subcommand("infer", "Sample the posterior of N_e(t) given a genealogy");
  i->add_option("--tree", inf.tree, "Newick genealogy with branch lengths");
  i->add_option("--data", inf.data, "Coalescent data JSON (e.g. simulate output)");
  i->add_option("--record", inf.record, "Replicate index when --data holds several records");
  i->add_option("--tip-dates", inf.tip_dates, "Two-column table of tip label and sampling date");
  i->add_option("--date-delim", inf.date_delim, "Tip labels carry dates after this character");
  i->add_option("--iters", inf.mcmc.iterations, "MCMC iterations")->capture_default_str();
  i->add_option("--burnin", inf.mcmc.burnin, "Discarded iterations")->capture_default_str();
  i->add_option("--thin", inf.mcmc.thin, "Keep every thin-th iteration")->capture_default_str();
  i->add_option("--lambda-hat", inf.mcmc.lambda_prior.best_guess, "Best guess for lambda")->capture_default_str();
  i->add_option("--eps", inf.mcmc.lambda_prior.eps, "Prior mass below the best guess")->capture_default_str();
  i->add_option("--alpha", inf.mcmc.theta_prior.shape, "Gamma shape for theta")->capture_default_str();
  i->add_option("--beta", inf.mcmc.theta_prior.rate, "Gamma rate for theta")->capture_default_str();
  i->add_option("--seed", inf.mcmc.seed, "Random seed")->capture_default_str();
  i->add_option("--kernel", inf.kernel, "GP kernel: bm or ou")->capture_default_str();
  i->add_option("--phi", inf.phi, "OU mean-reversion rate")->capture_default_str();
  i->add_option("--sigma0sq", inf.sigma0sq, "BM variance at time 0")->capture_default_str();
  i->add_option("--lambda-halfwidth", inf.mcmc.lambda_half_width, "Lambda proposal half-width (0: 10% of best guess)");
  i->add_option("--location-moves", inf.mcmc.location_moves, "Latent relocations per iteration")
      ->capture_default_str();
  i->add_option("--rj-sweeps", inf.mcmc.rj_sweeps, "Birth/death proposals per interval")->capture_default_str();
  i->add_option("--chains", inf.chains, "Independent chains")->capture_default_str();
  i->add_option("--threads", inf.threads, "Worker threads (0: all cores)");
  i->add_option("--unit", inf.unit, "Time unit recorded in the metadata")->capture_default_str();
  i->add_option("--out", inf.out, "Output prefix")->capture_default_str();
  i->add_option("--progress", inf.progress, "Report every N iterations (0: never)");

  auto sum = Summarize_args{};
  auto* m = app.add_subcommand("summarize", "Posterior median and 95% band of N_e(t) on a grid");
  m->add_option("--chain", sum.chain, "Chain file written by infer")->required();
  m->add_option("--grid", sum.grid, "Number of grid points")->capture_default_str();
  m->add_option("--grid-max", sum.grid_max, "Grid end (default: root time)");
  m->add_option("--truth", sum.truth, "Built-in trajectory to score against");
  m->add_option("--seed", sum.seed, "Random seed for predictive draws")->capture_default_str();
  m->add_option("--out", sum.out, "CSV output (default: <chain>.summary.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    auto code = app.exit(e, out, err);
    return code == 0 ? k_exit_ok : k_exit_usage;
  }

  try {
    if (s->parsed()) {
      return cmd_simulate(sim, out, err);
    }
    if (i->parsed()) {
      return cmd_infer(inf, out, err);
    }
    return cmd_summarize(sum, out, err);
  } catch (const Usage_error& e) {
    err << "error: " << e.what() << '\n';
    return k_exit_usage;
  } catch (const Parse_error& e) {
    err << "error: " << e.what() << '\n';
    return k_exit_usage;
  } catch (const Validation_error& e) {
    err << "error: " << e.what() << '\n';
    return k_exit_usage;
  } catch (const std::logic_error& e) {
    // domain_error / invalid_argument from argument checks
    err << "error: " << e.what() << '\n';
    return k_exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return k_exit_runtime;
  }
}

}  // namespace coalgp::cli

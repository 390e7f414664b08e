#pragma once

// Genealogy ingestion: Newick parsing, tip dates, and reduction of a dated tree to the
// coalescent/sampling times and interval structure used by the likelihood and simulators.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "coalgp/error.hpp"

namespace coalgp {

// binom(k, 2): number of lineage pairs that may merge.
constexpr auto coalescent_factor(long long k) -> long long {
  if (k < 1) {
    throw std::domain_error{"coalescent_factor: lineage count must be >= 1"};
  }
  return k * (k - 1) / 2;
}

inline constexpr int k_no_node = -1;

struct Tree_node {
  std::string label;
  int parent = k_no_node;
  std::vector<int> children;
  double branch_length = 0.0;  // to parent; unused at the root
  double height = 0.0;         // time before the most recent tip

  auto is_tip() const -> bool { return children.empty(); }
};

// Rooted binary tree with node heights.  Node 0 is the root.
class Genealogy {
 public:
  Genealogy() = default;
  explicit Genealogy(std::vector<Tree_node> nodes) : nodes_{std::move(nodes)} { validate(); }

  auto nodes() const -> const std::vector<Tree_node>& { return nodes_; }
  auto at(int i) const -> const Tree_node& { return nodes_.at(static_cast<std::size_t>(i)); }
  auto root() const -> int { return 0; }
  auto size() const -> int { return static_cast<int>(nodes_.size()); }

  auto num_tips() const -> int {
    return static_cast<int>(std::ranges::count_if(nodes_, [](const auto& n) { return n.is_tip(); }));
  }

  auto root_height() const -> double { return nodes_.empty() ? 0.0 : nodes_.front().height; }

 private:
  void validate() const {
    if (nodes_.empty()) {
      throw Validation_error{"genealogy has no nodes"};
    }
    auto tips = 0;
    for (const auto& node : nodes_) {
      if (node.is_tip()) {
        ++tips;
        if (node.height < 0.0) {
          throw Validation_error{"tip '" + node.label + "' has negative height"};
        }
        continue;
      }
      if (node.children.size() != 2) {
        throw Validation_error{"genealogy is not binary"};
      }
      for (auto c : node.children) {
        if (!(node.height > nodes_.at(static_cast<std::size_t>(c)).height)) {
          throw Validation_error{"internal node height does not exceed the height of its child"};
        }
      }
    }
    if (tips < 2 || static_cast<int>(nodes_.size()) != 2 * tips - 1) {
      throw Validation_error{"genealogy must have n >= 2 tips and n - 1 internal nodes"};
    }
  }

  std::vector<Tree_node> nodes_;
};

using Tip_dates = std::map<std::string, double>;

struct Newick_options {
  // When set, tip labels look like `name<delim>date`; the date is stripped from the label.
  std::optional<char> date_delimiter;
  // Tips whose branch-length heights differ by less than this (relative to the root height)
  // are considered sampled at the same time; also the tolerance for date consistency.
  double height_tolerance = 1e-9;
  double date_tolerance = 1e-6;
};

namespace detail {

class Newick_reader {
 public:
  explicit Newick_reader(std::string_view text) : text_{text} {}

  auto read() -> std::vector<Tree_node> {
    skip_blank();
    read_subtree(k_no_node);
    skip_blank();
    if (!consume(';')) {
      fail("expected ';' at end of tree");
    }
    skip_blank();
    if (pos_ != text_.size()) {
      fail("unexpected text after ';' (only one tree per input is supported)");
    }
    return std::move(nodes_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw Parse_error{what, pos_}; }

  auto peek() const -> int { return pos_ < text_.size() ? static_cast<unsigned char>(text_[pos_]) : -1; }

  auto consume(char c) -> bool {
    if (peek() == static_cast<unsigned char>(c)) {
      ++pos_;
      return true;
    }
    return false;
  }

  void skip_blank() {
    while (pos_ < text_.size()) {
      auto c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else if (c == '[') {  // comment, e.g. BEAST annotations
        auto close = text_.find(']', pos_);
        if (close == std::string_view::npos) {
          fail("unterminated comment");
        }
        pos_ = close + 1;
      } else {
        break;
      }
    }
  }

  auto read_label() -> std::string {
    auto label = std::string{};
    if (consume('\'')) {
      while (true) {
        if (pos_ >= text_.size()) {
          fail("unterminated quoted label");
        }
        auto c = text_[pos_++];
        if (c == '\'') {
          if (consume('\'')) {
            label.push_back('\'');
          } else {
            break;
          }
        } else {
          label.push_back(c);
        }
      }
      return label;
    }
    while (pos_ < text_.size()) {
      auto c = text_[pos_];
      if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' || c == ' ' ||
          c == '\t' || c == '\n' || c == '\r') {
        break;
      }
      label.push_back(c);
      ++pos_;
    }
    return label;
  }

  auto read_number() -> double {
    auto begin = text_.data() + pos_;
    auto end = text_.data() + text_.size();
    auto value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr == begin) {
      fail("expected a branch length");
    }
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  auto read_subtree(int parent) -> int {
    auto index = static_cast<int>(nodes_.size());
    auto node = Tree_node{};
    node.parent = parent;
    nodes_.push_back(std::move(node));
    if (consume('(')) {
      while (true) {
        skip_blank();
        auto child = read_subtree(index);
        nodes_[static_cast<std::size_t>(index)].children.push_back(child);
        skip_blank();
        if (consume(',')) {
          continue;
        }
        if (consume(')')) {
          break;
        }
        fail(pos_ >= text_.size() ? "unexpected end of input (unbalanced parentheses)"
                                  : "expected ',' or ')'");
      }
      if (nodes_[static_cast<std::size_t>(index)].children.size() != 2) {
        fail("only binary trees are supported");
      }
    }
    skip_blank();
    nodes_[static_cast<std::size_t>(index)].label = read_label();
    skip_blank();
    if (consume(':')) {
      skip_blank();
      nodes_[static_cast<std::size_t>(index)].branch_length = read_number();
      skip_blank();
    } else if (parent != k_no_node) {
      fail(pos_ >= text_.size() ? "unexpected end of input (missing branch length)"
                                : "missing branch length");
    }
    if (nodes_[static_cast<std::size_t>(index)].children.empty() &&
        nodes_[static_cast<std::size_t>(index)].label.empty() && parent == k_no_node) {
      fail("tree has no nodes");
    }
    return index;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<Tree_node> nodes_;
};

inline auto parse_date(const std::string& s, const std::string& context) -> double {
  auto value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Validation_error{"cannot read date '" + s + "' for " + context};
  }
  return value;
}

}  // namespace detail

// Reads a two-column (label, date) table; tabs or spaces separate the columns.  Blank lines
// and lines starting with '#' are skipped.
inline auto read_tip_dates(std::istream& in) -> Tip_dates {
  auto dates = Tip_dates{};
  auto line = std::string{};
  auto line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#' || line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    auto fields = std::istringstream{line};
    auto label = std::string{};
    auto date = std::string{};
    if (!(fields >> label >> date)) {
      throw Validation_error{"tip-date table line " + std::to_string(line_no) + " needs two columns"};
    }
    dates[label] = detail::parse_date(date, "tip '" + label + "'");
  }
  return dates;
}

// Parses a single Newick tree with branch lengths.  Heights are normalized so that the most
// recent tip has height 0.  When dates are supplied (sidecar table or label suffix), tip
// heights are max_date - date and must agree with the branch lengths.
inline auto parse_newick(std::string_view text, const Tip_dates* tip_dates = nullptr,
                         const Newick_options& options = {}) -> Genealogy {
  auto nodes = detail::Newick_reader{text}.read();

  // Depth from the root; children always follow their parent in preorder.
  auto depth = std::vector<double>(nodes.size(), 0.0);
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i].branch_length < 0.0) {
      throw Validation_error{"negative branch length on node '" + nodes[i].label + "'"};
    }
    depth[i] = depth[static_cast<std::size_t>(nodes[i].parent)] + nodes[i].branch_length;
  }
  auto max_depth = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_tip()) {
      max_depth = std::max(max_depth, depth[i]);
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i].height = max_depth - depth[i];
  }
  auto scale = std::max(1.0, nodes[0].height);

  // Optional dates.
  auto dates = std::vector<std::optional<double>>(nodes.size());
  auto any_dates = false;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i].is_tip()) {
      continue;
    }
    if (options.date_delimiter) {
      auto cut = nodes[i].label.rfind(*options.date_delimiter);
      if (cut == std::string::npos) {
        throw Validation_error{"tip '" + nodes[i].label + "' has no date suffix"};
      }
      dates[i] = detail::parse_date(nodes[i].label.substr(cut + 1), "tip '" + nodes[i].label + "'");
      nodes[i].label.resize(cut);
      any_dates = true;
    } else if (tip_dates != nullptr) {
      auto it = tip_dates->find(nodes[i].label);
      if (it == tip_dates->end()) {
        throw Validation_error{"no date for tip '" + nodes[i].label + "'"};
      }
      dates[i] = it->second;
      any_dates = true;
    }
  }

  if (any_dates) {
    auto max_date = -std::numeric_limits<double>::infinity();
    for (const auto& d : dates) {
      if (d) {
        max_date = std::max(max_date, *d);
      }
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!dates[i]) {
        continue;
      }
      auto h = max_date - *dates[i];
      if (std::abs(h - nodes[i].height) > options.date_tolerance * scale) {
        throw Validation_error{"date of tip '" + nodes[i].label + "' implies height " + std::to_string(h) +
                               " but branch lengths give " + std::to_string(nodes[i].height)};
      }
      nodes[i].height = h;
    }
  } else {
    // Snap tip heights that differ only by rounding in the branch lengths.
    auto tip_heights = std::vector<double>{};
    for (const auto& node : nodes) {
      if (node.is_tip()) {
        tip_heights.push_back(node.height);
      }
    }
    std::ranges::sort(tip_heights);
    auto representative = std::vector<double>{};
    for (auto h : tip_heights) {
      if (representative.empty() || h - representative.back() > options.height_tolerance * scale) {
        representative.push_back(representative.empty() && h <= options.height_tolerance * scale ? 0.0 : h);
      }
    }
    for (auto& node : nodes) {
      if (!node.is_tip()) {
        continue;
      }
      auto it = std::ranges::upper_bound(representative, node.height + options.height_tolerance * scale);
      node.height = *std::prev(it);
    }
  }

  return Genealogy{std::move(nodes)};
}

namespace detail {

inline void write_newick_node(const Genealogy& g, int i, std::ostringstream& out) {
  const auto& node = g.at(i);
  if (!node.is_tip()) {
    out << '(';
    write_newick_node(g, node.children[0], out);
    out << ',';
    write_newick_node(g, node.children[1], out);
    out << ')';
  }
  out << node.label;
  if (node.parent != k_no_node) {
    out << ':' << (g.at(node.parent).height - node.height);
  }
}

}  // namespace detail

inline auto to_newick(const Genealogy& g) -> std::string {
  auto out = std::ostringstream{};
  out.precision(17);
  detail::write_newick_node(g, g.root(), out);
  out << ';';
  return out.str();
}

// Sufficient statistics of a genealogy.  All vectors are in ascending time order:
// coal_times = {t_n = 0, t_{n-1}, ..., t_1}; samp_times = {s_m = 0, ..., s_1} with matching
// samp_counts.
struct Coalescent_data {
  std::vector<double> coal_times;
  std::vector<double> samp_times;
  std::vector<int> samp_counts;

  auto num_tips() const -> int { return static_cast<int>(coal_times.size()); }
  auto isochronous() const -> bool { return samp_times.size() == 1; }
  auto root_time() const -> double { return coal_times.back(); }

  // All n samples taken at time 0.
  static auto isochronous_from(std::vector<double> coal_times) -> Coalescent_data {
    auto n = static_cast<int>(coal_times.size());
    return Coalescent_data{std::move(coal_times), {0.0}, {n}};
  }
};

inline void validate(const Coalescent_data& d) {
  const auto& t = d.coal_times;
  const auto& s = d.samp_times;
  if (t.size() < 2) {
    throw Validation_error{"need at least two tips"};
  }
  if (t.front() != 0.0) {
    throw Validation_error{"first coalescent time must be 0"};
  }
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1]) || !std::isfinite(t[i])) {
      throw Validation_error{"coalescent times must be finite and strictly increasing"};
    }
  }
  if (s.empty() || s.size() != d.samp_counts.size()) {
    throw Validation_error{"sampling times and counts must be non-empty and of equal length"};
  }
  if (s.front() != 0.0) {
    throw Validation_error{"first sampling time must be 0"};
  }
  for (std::size_t j = 1; j < s.size(); ++j) {
    if (!(s[j] > s[j - 1])) {
      throw Validation_error{"sampling times must be strictly increasing"};
    }
  }
  auto total = 0;
  for (auto c : d.samp_counts) {
    if (c < 1) {
      throw Validation_error{"sample counts must be positive"};
    }
    total += c;
  }
  if (total != d.num_tips()) {
    throw Validation_error{"sample counts must sum to the number of tips"};
  }
  if (!(t.back() > s.back())) {
    throw Validation_error{"root must be older than the oldest sample"};
  }
  // Lineages active just before each coalescence: samples strictly earlier minus earlier merges.
  auto j = std::size_t{0};
  auto active = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    while (j < s.size() && s[j] < t[i]) {
      active += d.samp_counts[j++];
    }
    if (active < 2) {
      throw Validation_error{"fewer than two lineages before coalescence at time " + std::to_string(t[i])};
    }
    --active;
  }
}

inline auto extract_coalescent_data(const Genealogy& g) -> Coalescent_data {
  auto internal = std::vector<double>{};
  auto tips = std::vector<double>{};
  for (const auto& node : g.nodes()) {
    (node.is_tip() ? tips : internal).push_back(node.height);
  }
  std::ranges::sort(internal);
  std::ranges::sort(tips);
  auto scale = std::max(1.0, g.root_height());
  for (std::size_t i = 1; i < internal.size(); ++i) {
    if (internal[i] - internal[i - 1] <= 1e-12 * scale) {
      throw Validation_error{"tied internal node heights at " + std::to_string(internal[i])};
    }
  }
  auto d = Coalescent_data{};
  d.coal_times.reserve(internal.size() + 1);
  d.coal_times.push_back(0.0);
  d.coal_times.insert(d.coal_times.end(), internal.begin(), internal.end());
  for (auto h : tips) {
    if (!d.samp_times.empty() && d.samp_times.back() == h) {
      ++d.samp_counts.back();
    } else {
      d.samp_times.push_back(h);
      d.samp_counts.push_back(1);
    }
  }
  if (d.samp_times.front() != 0.0) {
    throw Validation_error{"most recent tip must have height 0"};
  }
  validate(d);
  return d;
}

// One interval I_{i,k}: (start, end] with a constant number of lineages.
struct Interval {
  double start = 0.0;
  double end = 0.0;
  int lineages = 0;
  double factor = 0.0;  // binom(lineages, 2)
  bool ends_with_coalescence = false;
  int epoch = 0;      // 0 for (t_n, t_{n-1}], ..., n-2 for (t_2, t_1]; k = n - epoch
  int sub_index = 0;  // 0 for the coalescence-ending interval, counting back toward t_k

  auto length() const -> double { return end - start; }
};

// Chronological list of intervals covering (0, t_1].
struct Interval_grid {
  std::vector<Interval> intervals;
  std::vector<int> coalescence_interval;  // per epoch, index of its coalescence-ending interval

  auto num_epochs() const -> int { return static_cast<int>(coalescence_interval.size()); }

  // Index of the interval containing t, or -1 when t is outside (0, t_1].
  auto locate(double t) const -> int {
    if (intervals.empty() || !(t > intervals.front().start) || t > intervals.back().end) {
      return -1;
    }
    auto it = std::ranges::lower_bound(intervals, t, {}, &Interval::end);
    return static_cast<int>(it - intervals.begin());
  }

  auto total_hazard_length() const -> double {
    auto sum = 0.0;
    for (const auto& iv : intervals) {
      sum += iv.factor * iv.length();
    }
    return sum;
  }
};

namespace detail {

inline void number_sub_intervals(Interval_grid& grid) {
  grid.coalescence_interval.clear();
  auto epoch_start = std::size_t{0};
  for (std::size_t i = 0; i < grid.intervals.size(); ++i) {
    if (grid.intervals[i].ends_with_coalescence) {
      for (auto j = epoch_start; j <= i; ++j) {
        grid.intervals[j].sub_index = static_cast<int>(i - j);
      }
      grid.coalescence_interval.push_back(static_cast<int>(i));
      epoch_start = i + 1;
    }
  }
}

}  // namespace detail

// Event sweep valid for any sampling schedule.  A sample taken exactly at a coalescent time
// joins after the coalescence (intervals are right-closed at coalescent times).
inline auto build_interval_grid_general(const Coalescent_data& d) -> Interval_grid {
  auto grid = Interval_grid{};
  const auto& t = d.coal_times;
  const auto& s = d.samp_times;
  auto lineages = d.samp_counts.front();
  auto cur = 0.0;
  auto epoch = 0;
  auto j = std::size_t{1};
  for (std::size_t i = 1; i < t.size(); ++i) {
    while (j < s.size() && s[j] < t[i]) {
      if (s[j] > cur) {
        grid.intervals.push_back(Interval{cur, s[j], lineages,
                                          static_cast<double>(coalescent_factor(lineages)), false, epoch, 0});
        cur = s[j];
      }
      lineages += d.samp_counts[j++];
    }
    grid.intervals.push_back(
        Interval{cur, t[i], lineages, static_cast<double>(coalescent_factor(lineages)), true, epoch, 0});
    cur = t[i];
    --lineages;
    ++epoch;
  }
  detail::number_sub_intervals(grid);
  return grid;
}

// Closed form for isochronous data: one interval (t_k, t_{k-1}] per epoch with binom(k, 2).
inline auto build_interval_grid_isochronous(const Coalescent_data& d) -> Interval_grid {
  auto grid = Interval_grid{};
  auto n = d.num_tips();
  for (auto e = 0; e < n - 1; ++e) {
    auto k = n - e;
    grid.intervals.push_back(Interval{d.coal_times[static_cast<std::size_t>(e)],
                                      d.coal_times[static_cast<std::size_t>(e) + 1], k,
                                      static_cast<double>(coalescent_factor(k)), true, e, 0});
    grid.coalescence_interval.push_back(e);
  }
  return grid;
}

inline auto build_interval_grid(const Coalescent_data& d) -> Interval_grid {
  return d.isochronous() ? build_interval_grid_isochronous(d) : build_interval_grid_general(d);
}

}  // namespace coalgp

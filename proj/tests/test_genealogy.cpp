#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "coalgp/genealogy.hpp"
#include "coalgp/random.hpp"

using namespace coalgp;

namespace {

auto internal_heights(const Genealogy& g) -> std::vector<double> {
  auto out = std::vector<double>{};
  for (const auto& node : g.nodes()) {
    if (!node.is_tip()) {
      out.push_back(node.height);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Random binary tree as Newick: tips get random heights in {0, h1, h2}, internal nodes merge
// random pairs of active subtrees at increasing heights above their children.
auto random_newick(Rng& rng, int n, bool heterochronous) -> std::string {
  struct Sub {
    std::string text;
    double height;
  };
  auto active = std::vector<Sub>{};
  auto pending = std::vector<Sub>{};
  for (auto i = 0; i < n; ++i) {
    auto h = heterochronous ? std::vector<double>{0.0, 0.25, 0.6}[static_cast<std::size_t>(i % 3)] : 0.0;
    if (i == 0) {
      h = 0.0;
    }
    pending.push_back({"T" + std::to_string(i), h});
  }
  std::sort(pending.begin(), pending.end(), [](const Sub& a, const Sub& b) { return a.height > b.height; });
  auto now = 0.0;
  while (!pending.empty() && pending.back().height <= now) {
    active.push_back(pending.back());
    pending.pop_back();
  }
  while (active.size() + pending.size() > 1) {
    now += 0.05 + uniform(rng, 0.0, 0.3);
    while (!pending.empty() && pending.back().height <= now) {
      active.push_back(pending.back());
      pending.pop_back();
    }
    if (active.size() < 2) {
      continue;
    }
    auto i = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(active.size())));
    auto a = active[i];
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(i));
    auto j = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(active.size())));
    auto b = active[j];
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
    auto out = std::ostringstream{};
    out.precision(17);
    out << '(' << a.text << ':' << (now - a.height) << ',' << b.text << ':' << (now - b.height) << ')';
    active.push_back({out.str(), now});
  }
  return active.front().text + ";";
}

}  // namespace

TEST(CoalescentFactor, Examples) {
  EXPECT_EQ(coalescent_factor(2), 1);
  EXPECT_EQ(coalescent_factor(1), 0);
  EXPECT_EQ(coalescent_factor(100), 4950);
  EXPECT_THROW((void)coalescent_factor(0), std::domain_error);
  EXPECT_THROW((void)coalescent_factor(-3), std::domain_error);
}

TEST(ParseNewick, TwoTipTree) {
  auto g = parse_newick("(A:1.0,B:1.0);");
  EXPECT_EQ(g.num_tips(), 2);
  EXPECT_EQ(g.size(), 3U);
  EXPECT_DOUBLE_EQ(g.root_height(), 1.0);
  for (const auto& node : g.nodes()) {
    if (node.is_tip()) {
      EXPECT_EQ(node.height, 0.0);
    }
  }
}

TEST(ParseNewick, ThreeTipTree) {
  auto g = parse_newick("((A:0.3,B:0.3):0.7,C:1.0);");
  EXPECT_DOUBLE_EQ(g.root_height(), 1.0);
  auto h = internal_heights(g);
  ASSERT_EQ(h.size(), 2U);
  EXPECT_NEAR(h[0], 0.3, 1e-15);
  EXPECT_DOUBLE_EQ(h[1], 1.0);
}

TEST(ParseNewick, UnbalancedInputReportsEndOfInput) {
  try {
    (void)parse_newick("(A:1.0,B:1.0");
    FAIL() << "expected Parse_error";
  } catch (const Parse_error& e) {
    EXPECT_EQ(e.position(), 12U);
    EXPECT_NE(std::string{e.what()}.find("end of input"), std::string::npos);
  }
}

TEST(ParseNewick, MalformedInputs) {
  EXPECT_THROW((void)parse_newick("(A,B:1.0);"), Parse_error);           // missing branch length
  EXPECT_THROW((void)parse_newick("(A:1,B:1,C:1);"), Parse_error);       // multifurcation
  EXPECT_THROW((void)parse_newick("(A:1,B:1); (C:1,D:1);"), Parse_error);  // two trees
  EXPECT_THROW((void)parse_newick("(A:1,B:x);"), Parse_error);
  EXPECT_THROW((void)parse_newick(""), Parse_error);
}

TEST(ParseNewick, QuotedLabelsAndComments) {
  auto g = parse_newick("('tip one':1.0[&rate=1],B:1.0)root;");
  EXPECT_EQ(g.num_tips(), 2);
  auto labels = std::vector<std::string>{};
  for (const auto& node : g.nodes()) {
    if (node.is_tip()) {
      labels.push_back(node.label);
    }
  }
  std::sort(labels.begin(), labels.end());
  EXPECT_EQ(labels, (std::vector<std::string>{"B", "tip one"}));
}

TEST(ParseNewick, DatesFromLabelSuffix) {
  auto opts = Newick_options{};
  opts.date_delimiter = '|';
  auto g = parse_newick("((A|2000.5:0.3,B|2000.5:0.3):0.7,C|2000.0:0.5);", nullptr, opts);
  auto d = extract_coalescent_data(g);
  EXPECT_EQ(d.samp_times, (std::vector<double>{0.0, 0.5}));
  EXPECT_EQ(d.samp_counts, (std::vector<int>{2, 1}));
}

TEST(ParseNewick, DatesFromSidecarTable) {
  auto table = std::istringstream{"# label\tdate\nA\t10\nB\t10\nC\t9.5\n"};
  auto dates = read_tip_dates(table);
  auto g = parse_newick("((A:0.3,B:0.3):0.7,C:0.5);", &dates);
  auto d = extract_coalescent_data(g);
  EXPECT_EQ(d.samp_times, (std::vector<double>{0.0, 0.5}));
  EXPECT_NEAR(d.coal_times[1], 0.3, 1e-12);
  EXPECT_NEAR(d.coal_times[2], 1.0, 1e-12);
}

TEST(ParseNewick, InconsistentDatesRejected) {
  auto dates = Tip_dates{{"A", 10.0}, {"B", 10.0}, {"C", 12.0}};
  EXPECT_THROW((void)parse_newick("((A:0.3,B:0.3):0.7,C:1.0);", &dates), Validation_error);
  auto missing = Tip_dates{{"A", 10.0}};
  EXPECT_THROW((void)parse_newick("(A:1,B:1);", &missing), Validation_error);
}

TEST(ParseNewick, RoundTripPreservesHeights) {
  auto rng = make_stream(11, 0);
  for (auto rep = 0; rep < 50; ++rep) {
    auto text = random_newick(rng, 3 + rep % 17, rep % 2 == 1);
    auto g = parse_newick(text);
    auto again = parse_newick(to_newick(g));
    auto a = internal_heights(g);
    auto b = internal_heights(again);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
    }
  }
}

TEST(ExtractCoalescentData, Examples) {
  auto two = extract_coalescent_data(parse_newick("(A:1.0,B:1.0);"));
  EXPECT_EQ(two.coal_times, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(two.samp_times, (std::vector<double>{0.0}));
  EXPECT_EQ(two.samp_counts, (std::vector<int>{2}));
  EXPECT_TRUE(two.isochronous());

  auto three = extract_coalescent_data(parse_newick("((A:0.3,B:0.3):0.7,C:1.0);"));
  ASSERT_EQ(three.coal_times.size(), 3U);
  EXPECT_EQ(three.coal_times[0], 0.0);
  EXPECT_NEAR(three.coal_times[1], 0.3, 1e-15);
  EXPECT_EQ(three.coal_times[2], 1.0);

  auto hetero = extract_coalescent_data(parse_newick("((A:0.3,B:0.3):0.7,C:0.5);"));
  EXPECT_FALSE(hetero.isochronous());
  EXPECT_EQ(hetero.samp_times, (std::vector<double>{0.0, 0.5}));
  EXPECT_EQ(hetero.samp_counts, (std::vector<int>{2, 1}));
  EXPECT_NEAR(hetero.coal_times[1], 0.3, 1e-15);
  EXPECT_EQ(hetero.coal_times[2], 1.0);
}

TEST(ExtractCoalescentData, TiedHeightsRejected) {
  EXPECT_THROW((void)extract_coalescent_data(parse_newick("((A:0.5,B:0.5):0.5,(C:0.5,D:0.5):0.5);")),
               Validation_error);
}

TEST(ValidateCoalescentData, RejectsBadInputs) {
  EXPECT_THROW(validate(Coalescent_data{{0.0, 1.0, 0.5}, {0.0}, {3}}), Validation_error);
  EXPECT_THROW(validate(Coalescent_data{{0.0, 1.0}, {0.0}, {3}}), Validation_error);
  EXPECT_THROW(validate(Coalescent_data{{0.0, 1.0}, {0.0, 2.0}, {1, 1}}), Validation_error);  // root before sample
  EXPECT_THROW(validate(Coalescent_data{{0.0, 0.3, 1.0}, {0.0, 0.5}, {1, 2}}), Validation_error);  // 1 lineage coalesces
  EXPECT_NO_THROW(validate(Coalescent_data{{0.0, 0.3, 1.0}, {0.0, 0.5}, {2, 1}}));
}

TEST(IntervalGrid, IsochronousExample) {
  auto grid = build_interval_grid(Coalescent_data::isochronous_from({0.0, 0.3, 1.0}));
  ASSERT_EQ(grid.intervals.size(), 2U);
  EXPECT_EQ(grid.intervals[0].start, 0.0);
  EXPECT_EQ(grid.intervals[0].end, 0.3);
  EXPECT_EQ(grid.intervals[0].factor, 3.0);
  EXPECT_EQ(grid.intervals[1].start, 0.3);
  EXPECT_EQ(grid.intervals[1].end, 1.0);
  EXPECT_EQ(grid.intervals[1].factor, 1.0);
}

TEST(IntervalGrid, HeterochronousExample) {
  auto grid = build_interval_grid(Coalescent_data{{0.0, 0.3, 1.0}, {0.0, 0.5}, {2, 1}});
  ASSERT_EQ(grid.intervals.size(), 3U);
  const auto& i03 = grid.intervals[0];
  EXPECT_EQ(i03.start, 0.0);
  EXPECT_EQ(i03.end, 0.3);
  EXPECT_EQ(i03.lineages, 2);
  EXPECT_EQ(i03.factor, 1.0);
  EXPECT_TRUE(i03.ends_with_coalescence);
  const auto& i12 = grid.intervals[1];
  EXPECT_EQ(i12.start, 0.3);
  EXPECT_EQ(i12.end, 0.5);
  EXPECT_EQ(i12.lineages, 1);
  EXPECT_EQ(i12.factor, 0.0);
  EXPECT_FALSE(i12.ends_with_coalescence);
  EXPECT_EQ(i12.sub_index, 1);
  const auto& i02 = grid.intervals[2];
  EXPECT_EQ(i02.start, 0.5);
  EXPECT_EQ(i02.end, 1.0);
  EXPECT_EQ(i02.lineages, 2);
  EXPECT_EQ(i02.factor, 1.0);
  EXPECT_EQ(i02.sub_index, 0);
  EXPECT_EQ(grid.coalescence_interval, (std::vector<int>{0, 2}));
}

TEST(IntervalGrid, SampleAtCoalescentTimeJoinsAfterCoalescence) {
  auto grid = build_interval_grid(Coalescent_data{{0.0, 0.3, 1.0}, {0.0, 0.3}, {2, 1}});
  ASSERT_EQ(grid.intervals.size(), 2U);
  EXPECT_EQ(grid.intervals[0].lineages, 2);
  EXPECT_EQ(grid.intervals[1].lineages, 2);
}

TEST(IntervalGrid, LocateIsRightClosed) {
  auto grid = build_interval_grid(Coalescent_data::isochronous_from({0.0, 0.3, 1.0}));
  EXPECT_EQ(grid.locate(0.0), -1);
  EXPECT_EQ(grid.locate(0.3), 0);
  EXPECT_EQ(grid.locate(0.30000001), 1);
  EXPECT_EQ(grid.locate(1.0), 1);
  EXPECT_EQ(grid.locate(1.5), -1);
}

// Properties over random genealogies.
TEST(IntervalGrid, Properties) {
  auto rng = make_stream(5, 0);
  for (auto rep = 0; rep < 200; ++rep) {
    auto hetero = rep % 2 == 1;
    auto d = extract_coalescent_data(parse_newick(random_newick(rng, 2 + rep % 30, hetero)));
    auto grid = build_interval_grid(d);

    // Contiguous cover of (0, t_1] with lengths summing to t_1.
    auto total = 0.0;
    auto prev_end = 0.0;
    for (const auto& iv : grid.intervals) {
      EXPECT_EQ(iv.start, prev_end);
      EXPECT_GE(iv.length(), 0.0);
      EXPECT_EQ(iv.factor, static_cast<double>(coalescent_factor(iv.lineages)));
      if (iv.factor == 0.0) {
        EXPECT_EQ(iv.lineages, 1);
      }
      total += iv.length();
      prev_end = iv.end;
    }
    EXPECT_NEAR(total, d.root_time(), 1e-12 * d.root_time());
    EXPECT_EQ(grid.num_epochs(), d.num_tips() - 1);

    // Independent lineage-count reconstruction from events.
    auto lineage_at = [&](double t) {  // lineages on (t - 0, t]
      auto count = 0;
      for (std::size_t j = 0; j < d.samp_times.size(); ++j) {
        count += d.samp_times[j] < t ? d.samp_counts[j] : 0;
      }
      for (std::size_t i = 1; i < d.coal_times.size(); ++i) {
        count -= d.coal_times[i] < t ? 1 : 0;
      }
      return count;
    };
    EXPECT_EQ(grid.intervals.front().lineages, d.samp_counts.front());
    for (const auto& iv : grid.intervals) {
      EXPECT_EQ(iv.lineages, lineage_at(iv.end)) << "interval ending at " << iv.end;
      if (iv.ends_with_coalescence) {
        EXPECT_GE(iv.lineages, 2);
      }
    }
    EXPECT_EQ(lineage_at(d.root_time() + 1e-9), 1);

    if (d.isochronous()) {
      auto general = build_interval_grid_general(d);
      auto closed = build_interval_grid_isochronous(d);
      ASSERT_EQ(general.intervals.size(), closed.intervals.size());
      for (std::size_t i = 0; i < general.intervals.size(); ++i) {
        EXPECT_EQ(general.intervals[i].start, closed.intervals[i].start);
        EXPECT_EQ(general.intervals[i].end, closed.intervals[i].end);
        EXPECT_EQ(general.intervals[i].factor, closed.intervals[i].factor);
        EXPECT_EQ(closed.intervals[i].factor,
                  static_cast<double>(coalescent_factor(d.num_tips() - static_cast<int>(i))));
      }
    }
  }
}

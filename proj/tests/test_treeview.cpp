#include <gtest/gtest.h>

#include <numeric>

#include "treeview/treeview.hpp"

using namespace treeview;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

SurrogateNode branch(int factor, int value, int eq, int ne, std::vector<double> h) {
  SurrogateNode n;
  n.factor = factor;
  n.value = value;
  n.eq_child = eq;
  n.ne_child = ne;
  n.histogram = std::move(h);
  return n;
}

SurrogateNode leaf(std::vector<double> h) {
  SurrogateNode n;
  n.histogram = std::move(h);
  n.leaf_class = static_cast<int>(argmax_first(n.histogram));
  return n;
}

// 0: F0==1 [10,10,10] -> 1 leaf [9,1,0] | 2: F1==0 [1,9,10] -> 3 leaf [1,0,8] | 4 leaf [0,9,2]
struct Fixture {
  DecisionTreeSurrogate tree{2, 3,
                             {branch(0, 1, 1, 2, {10, 10, 10}), leaf({9, 1, 0}), branch(1, 0, 3, 4, {1, 9, 10}),
                              leaf({1, 0, 8}), leaf({0, 9, 2})}};
  std::vector<FactorPredictor> predictors;
  std::vector<std::vector<double>> importances{{0.2, 0.5, 0.3}, {0.6, 0.0, 0.4}};
  std::vector<std::string> features{"red", "green", "blue"};
  std::vector<std::string> classes{"A", "B", "C"};

  ExplanationArtifacts view() const { return {predictors, tree, importances, features, classes}; }
};

RenderConfig two_features() {
  RenderConfig cfg;
  cfg.top_features = 2;
  return cfg;
}

DecisionPath path_of(std::vector<std::vector<double>> hists) {
  DecisionPath p;
  for (std::size_t i = 0; i < hists.size(); ++i) {
    PathStep s;
    s.node = static_cast<int>(i);
    s.factor = i + 1 < hists.size() ? static_cast<int>(i) : -1;
    s.histogram = std::move(hists[i]);
    p.steps.push_back(std::move(s));
  }
  return p;
}

DecisionTreeSurrogate random_tree(Rng& rng, std::size_t classes, MatrixXi& meta_out) {
  const Eigen::Index k = 3, t = 150;
  meta_out.resize(k, t);
  for (Eigen::Index i = 0; i < meta_out.size(); ++i) meta_out.data()[i] = static_cast<int>(rng.below(3));
  std::vector<int> y(static_cast<std::size_t>(t));
  for (Eigen::Index s = 0; s < t; ++s) {
    y[static_cast<std::size_t>(s)] =
        rng.uniform() < 0.6 ? (meta_out(0, s) + 2 * meta_out(1, s)) % static_cast<int>(classes) : static_cast<int>(rng.below(classes));
  }
  MetaFeatureMatrix m;
  m.values = meta_out;
  m.sample_ids.resize(static_cast<std::size_t>(t));
  return fit_surrogate(m, y, classes, {std::nullopt, 1 + rng.below(5), 0.0});
}

}  // namespace

TEST(Rejections, HandComputedRows) {
  const DecisionPath p = path_of({{10, 10, 10}, {1, 9, 10}, {1, 0, 8}});
  // leaf argmax C exempt; A holds 1/20 = 0.05 (not below) then 1/9; B hits zero at step 2
  EXPECT_EQ(compute_rejections(p, 0.05), (std::vector<RejectionEvent>{{1, 1, 1}}));
  // tighter threshold: A drops at step 1 already (0.05 < 0.12)
  EXPECT_EQ(compute_rejections(p, 0.12), (std::vector<RejectionEvent>{{0, 0, 0}, {1, 1, 1}}));
  EXPECT_EQ(compute_rejections(p, 0.0), (std::vector<RejectionEvent>{{1, 1, 1}}));
}

TEST(Rejections, UniformRootLosingFourClasses) {
  const DecisionPath p = path_of({{5, 5, 5, 5, 5, 5, 5}, {0, 4, 0, 3, 0, 0, 5}, {0, 0, 0, 1, 0, 0, 5}});
  const auto ev = compute_rejections(p, 0.05);
  std::vector<int> root;
  for (const auto& e : ev) {
    if (e.row == 0) root.push_back(e.class_id);
  }
  EXPECT_EQ(root, (std::vector<int>{0, 2, 4, 5}));
  EXPECT_EQ(ev.size(), 5u);  // class 1 falls at the second test; 3 and 6 survive
}

TEST(Rejections, ZeroThresholdNeedsZeroCount) {
  const DecisionPath p = path_of({{50, 50}, {1, 49}, {1, 30}});
  EXPECT_TRUE(compute_rejections(p, 0.0).empty());
  EXPECT_EQ(compute_rejections(p, 0.05).size(), 1u);
}

TEST(Rejections, ArgmaxExemptEvenBelowThreshold) {
  // every class is below 0.5 at the leaf; only the argmax survives
  const DecisionPath p = path_of({{3, 3, 3}, {3, 3, 3}});
  const auto ev = compute_rejections(p, 0.5);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].class_id, 1);
  EXPECT_EQ(ev[1].class_id, 2);
}

TEST(Layout, SingleLeafTree) {
  const DecisionTreeSurrogate t(1, 2, {leaf({3, 5})});
  const std::vector<FactorPredictor> preds;
  const std::vector<std::vector<double>> imp{{1.0}};
  const std::vector<std::string> feats{"f"}, classes{"no", "yes"};
  const int meta[] = {0};
  const TreeViewLayout l = layout_from_meta(meta, 1, {preds, t, imp, feats, classes}, {});
  EXPECT_EQ(l.rows.size(), 1u);
  EXPECT_TRUE(l.rejections.empty());
  EXPECT_EQ(l.footer.predicted_class, 1);
  EXPECT_EQ(render_text(l), "row  test  no  yes  top features\n0    leaf  \xC2\xB7   \xC2\xB7\npredicted=yes true=yes correct\n");
  const std::string text = render_text(l);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(Layout, CorrectFixture) {
  const Fixture f;
  const int meta[] = {0, 0};
  const TreeViewLayout l = layout_from_meta(meta, 2, f.view(), two_features());
  ASSERT_EQ(l.rows.size(), 3u);
  EXPECT_EQ(l.footer.predicted_class, 2);
  EXPECT_EQ(l.footer.correct(), std::optional<bool>(true));
  for (const auto& row : l.rows) EXPECT_EQ(row.status[2], CellStatus::Alive);
  EXPECT_EQ(l.rows[1].status[1], CellStatus::RejectedHere);
  EXPECT_EQ(l.rows[2].status[1], CellStatus::RejectedEarlier);
  EXPECT_EQ(l.rows[0].top_features.size(), 2u);
  EXPECT_EQ(l.rows[0].top_features[0].name, "green");
  EXPECT_EQ(l.rows[1].top_features[1].name, "blue");
  EXPECT_TRUE(l.rows[2].top_features.empty());
  EXPECT_NEAR(l.rows[1].probability[2], 0.5, 1e-12);
}

TEST(Layout, MisclassifiedFixture) {
  const Fixture f;
  const int meta[] = {0, 0};
  const TreeViewLayout l = layout_from_meta(meta, 1, f.view(), two_features());
  EXPECT_EQ(l.footer.correct(), std::optional<bool>(false));
  EXPECT_EQ(l.rows[1].status[1], CellStatus::RejectedHere);  // the true class is rejected on the way
  EXPECT_NE(render_text(l).find("MISMATCH"), std::string::npos);
  const std::string svg = render_svg(l, two_features());
  EXPECT_EQ(count_of(svg, "class=\"verdict mismatch\""), 1u);
  EXPECT_EQ(count_of(svg, "class=\"verdict correct\""), 0u);
}

TEST(RenderText, GoldenFixture) {
  const Fixture f;
  const int meta[] = {0, 0};
  const TreeViewLayout l = layout_from_meta(meta, 2, f.view(), two_features());
  const std::string expect =
      "row  test      A  B  C  top features\n"
      "0    F0=1 no   \xC2\xB7  \xC2\xB7  \xC2\xB7  green, blue\n"
      "1    F1=0 yes  \xC2\xB7  X  \xC2\xB7  red, blue\n"
      "2    leaf      \xC2\xB7  x  \xC2\xB7\n"
      "predicted=C true=C correct\n";
  EXPECT_EQ(render_text(l), expect);
}

TEST(RenderText, UnicodeWidthsByCodePoint) {
  EXPECT_EQ(display_width("\xCE\xB2""eta"), 4u);
  Fixture f;
  f.classes = {"\xC3\x84pfel", "B", "C"};  // 5 code points, 6 bytes
  const int meta[] = {0, 0};
  const std::string text = render_text(layout_from_meta(meta, std::nullopt, f.view(), two_features()));
  const auto first_line = text.substr(0, text.find('\n'));
  EXPECT_EQ(first_line, "row  test      \xC3\x84pfel  B  C  top features");
  const auto second = text.substr(text.find('\n') + 1, text.find('\n', text.find('\n') + 1) - text.find('\n') - 1);
  EXPECT_EQ(second, "0    F0=1 no   \xC2\xB7      \xC2\xB7  \xC2\xB7  green, blue");
  EXPECT_EQ(text.substr(text.rfind("predicted")), "predicted=C\n");
}

TEST(RenderSvg, CellAndBoxCounts) {
  const Fixture f;
  const int meta[] = {0, 0};
  const TreeViewLayout l = layout_from_meta(meta, 2, f.view(), two_features());
  const std::string svg = render_svg(l, two_features());
  EXPECT_EQ(count_of(svg, "<rect class=\"cell "), 9u);
  EXPECT_EQ(count_of(svg, "class=\"rejection-box\""), 1u);
  EXPECT_EQ(count_of(svg, "<g class=\"header\">"), 1u);
  EXPECT_EQ(count_of(svg, "<g class=\"footer\">"), 1u);
  EXPECT_EQ(count_of(svg, "class=\"verdict correct\""), 1u);
  EXPECT_EQ(count_of(svg, "class=\"top-feature\""), 2u);  // one per tested row
  EXPECT_EQ(svg.rfind("</svg>\n"), svg.size() - 7);
}

TEST(RenderSvg, SevenClassesFourRows) {
  // chain: each test peels off one or more classes
  std::vector<SurrogateNode> nodes{branch(0, 0, 1, 2, {5, 5, 5, 5, 5, 5, 5}), leaf({5, 0, 0, 0, 0, 0, 0}),
                                   branch(1, 0, 3, 4, {0, 5, 5, 5, 5, 5, 5}), leaf({0, 5, 5, 0, 0, 0, 0}),
                                   branch(2, 0, 5, 6, {0, 0, 0, 5, 5, 5, 5}), leaf({0, 0, 0, 5, 1, 0, 0}),
                                   leaf({0, 0, 0, 0, 4, 5, 5})};
  const DecisionTreeSurrogate t(3, 7, nodes);
  const std::vector<FactorPredictor> preds;
  const std::vector<std::vector<double>> imp(3, std::vector<double>{1.0});
  const std::vector<std::string> feats{"x"}, classes{"a", "b", "c", "d", "e", "f", "g"};
  const int meta[] = {1, 1, 0};
  const TreeViewLayout l = layout_from_meta(meta, 3, {preds, t, imp, feats, classes}, {});
  ASSERT_EQ(l.rows.size(), 4u);
  const std::string svg = render_svg(l, {});
  EXPECT_EQ(count_of(svg, "<rect class=\"cell "), 28u);
  EXPECT_EQ(count_of(svg, "class=\"class-name\""), 7u);
  EXPECT_EQ(count_of(svg, "class=\"row-label\""), 4u);
  EXPECT_EQ(count_of(svg, "class=\"rejection-box\""), l.rejections.size());
  EXPECT_EQ(l.rejections.front().row, 0u);  // the root test removes class a
}

TEST(RenderSvg, NoRejectionsNoRedOutline) {
  const DecisionTreeSurrogate t(1, 2, {leaf({3, 5})});
  const std::vector<FactorPredictor> preds;
  const std::vector<std::vector<double>> imp{{1.0}};
  const std::vector<std::string> feats{"f"}, classes{"no", "yes"};
  const int meta[] = {0};
  const RenderConfig cfg;
  const std::string svg = render_svg(layout_from_meta(meta, std::nullopt, {preds, t, imp, feats, classes}, cfg), cfg);
  EXPECT_EQ(count_of(svg, "rejection-box"), 0u);
  EXPECT_EQ(count_of(svg, "stroke=\"" + cfg.reject_color + "\""), 0u);
}

TEST(RenderSvg, DeterministicAndEscaped) {
  Fixture f;
  f.classes = {"A&B", "<b>", "C"};
  const int meta[] = {0, 0};
  const TreeViewLayout l = layout_from_meta(meta, 0, f.view(), two_features());
  const std::string a = render_svg(l, two_features());
  EXPECT_EQ(a, render_svg(l, two_features()));
  EXPECT_NE(a.find("A&amp;B"), std::string::npos);
  EXPECT_EQ(a.find("<b>"), std::string::npos);
}

TEST(LayoutJson, RoundTripRendersIdentically) {
  const Fixture f;
  const int meta[] = {0, 0};
  TreeViewLayout l = layout_from_meta(meta, 2, f.view(), two_features());
  l.sample_id = "s-17";
  l.footer.network_class = 1;
  const TreeViewLayout back = layout_from_json(nlohmann::json::parse(layout_to_json(l).dump()));
  EXPECT_EQ(render_svg(back, two_features()), render_svg(l, two_features()));
  EXPECT_EQ(render_text(back), render_text(l));
  EXPECT_EQ(back.rejections, l.rejections);
  EXPECT_EQ(back.meta_feature, l.meta_feature);
}

TEST(TraceExplanation, ArtifactMismatch) {
  const Fixture f;
  const double row[] = {1, 2, 3};
  EXPECT_THROW(trace_explanation(row, std::nullopt, f.view(), {}), ValidationError);  // no predictors, K=2
}

TEST(RejectionProperties, SoundCompleteMonotone) {
  Rng rng(21);
  std::size_t checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t classes = 2 + rng.below(6);
    MatrixXi meta;
    const DecisionTreeSurrogate tree = random_tree(rng, classes, meta);
    const std::vector<FactorPredictor> preds;
    const std::vector<std::vector<double>> imp(3, std::vector<double>{0.5, 0.5});
    const std::vector<std::string> feats{"u", "v"};
    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
    for (double tau : {0.0, 0.05, 0.2}) {
      RenderConfig cfg;
      cfg.rejection_threshold = tau;
      for (Eigen::Index s = 0; s < meta.cols(); s += 7) {
        const int m[] = {meta(0, s), meta(1, s), meta(2, s)};
        const TreeViewLayout l = layout_from_meta(m, std::nullopt, {preds, tree, imp, feats, names}, cfg);
        const DecisionPath path = tree.path(m);
        ASSERT_EQ(l.rows.size(), path.size());
        std::vector<int> events(classes, 0);
        for (const auto& e : l.rejections) {
          ++events[static_cast<std::size_t>(e.class_id)];
          EXPECT_NE(e.class_id, l.footer.predicted_class);
          EXPECT_LT(e.row + 1, path.size());
          EXPECT_EQ(e.factor, path.steps[e.row].factor);
        }
        const auto& last = l.rows.back();
        const auto& leaf_hist = path.steps.back().histogram;
        for (std::size_t z = 0; z < classes; ++z) {
          ASSERT_EQ(l.rows[0].status.size(), classes);
          const bool alive_at_leaf = last.status[z] == CellStatus::Alive;
          EXPECT_EQ(events[z] + (alive_at_leaf ? 1 : 0), 1) << "class " << z;
          int here = 0;
          bool dropped = false;
          for (const auto& row : l.rows) {
            here += row.status[z] == CellStatus::RejectedHere;
            if (dropped) EXPECT_NE(row.status[z], CellStatus::Alive);
            dropped |= row.status[z] != CellStatus::Alive;
          }
          EXPECT_LE(here, 1);
          if (tau == 0.0) EXPECT_EQ(alive_at_leaf, leaf_hist[z] > 0 || static_cast<int>(z) == l.footer.predicted_class);
        }
        const double n = std::accumulate(leaf_hist.begin(), leaf_hist.end(), 0.0);
        if (std::count_if(leaf_hist.begin(), leaf_hist.end(), [](double v) { return v > 0; }) == 1 && n > 0) {
          EXPECT_EQ(std::count(last.status.begin(), last.status.end(), CellStatus::Alive), 1);
        }
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 1000u);
}

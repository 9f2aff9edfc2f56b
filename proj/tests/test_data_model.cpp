#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "multmix/design.hpp"
#include "multmix/formula.hpp"
#include "multmix/simulate.hpp"

using namespace multmix;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::InvalidArgument;
}

Dataset read_text(const std::string& text, const std::string& y, const std::vector<std::string>& cols,
                  const ReadOptions& o = {}) {
  std::istringstream in(text);
  return read_csv(in, y, cols, o);
}

}  // namespace

TEST(ReadCsv, FirstAppearanceLevelOrder) {
  Dataset ds = read_text("y,G,F\n1.5,b,x\n2,a,y\n-3e-1,b,y\n", "y", {"G", "F"});
  EXPECT_EQ(ds.n_obs(), 3u);
  EXPECT_EQ(ds.dropped(), 0u);
  EXPECT_EQ(ds.factor("G").levels, (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(ds.factor("G").codes, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(ds.response(), (std::vector<double>{1.5, 2.0, -0.3}));
}

TEST(ReadCsv, SortLevelsOption) {
  ReadOptions o;
  o.sort_levels = true;
  Dataset ds = read_text("y,G\n1,b\n2,a\n3,c\n", "y", {"G"}, o);
  EXPECT_EQ(ds.factor("G").levels, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(ds.labels("G"), (std::vector<std::string>{"b", "a", "c"}));
}

TEST(ReadCsv, MissingRowsAreDroppedAndCounted) {
  Dataset ds = read_text("y,G\n1,a\n,b\n3,NA\n4,b\n", "y", {"G"});
  EXPECT_EQ(ds.n_obs(), 2u);
  EXPECT_EQ(ds.dropped(), 2u);
  Dataset one = read_text("y,G\n1,a\n,b\n3,a\n4,b\n", "y", {"G"});
  EXPECT_EQ(one.n_obs(), 3u);
  EXPECT_EQ(one.dropped(), 1u);
}

TEST(ReadCsv, IncompleteTableKeepsAvailableCells) {
  // 17 x 18 potential cells with 58 of them missing, as in an unbalanced study.
  std::ostringstream os;
  os << "y,G,F\n";
  int missing = 0;
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 18; ++j) {
      const bool hole = (i * 18 + j) % 5 == 1 && missing < 58;
      if (hole) ++missing;
      os << (hole ? std::string("NA") : std::to_string(i + 0.1 * j)) << ",g" << i << ",f" << j << "\n";
    }
  Dataset ds = read_text(os.str(), "y", {"G", "F"});
  EXPECT_EQ(ds.n_obs(), 248u);
  EXPECT_EQ(ds.dropped(), 58u);
}

TEST(ReadCsv, QuotedFieldsAndBom) {
  Dataset ds = read_text("\xEF\xBB\xBFy,\"G\"\n1,\"a, b\"\n2,c\n", "y", {"G"});
  EXPECT_EQ(ds.factor("G").levels[0], "a, b");
}

TEST(ReadCsv, Errors) {
  EXPECT_EQ(kind_of([] { read_text("y,G\n1,a\n", "y", {"Judge"}); }), ErrorKind::MissingColumn);
  EXPECT_EQ(kind_of([] { read_text("y,G\nNA,a\n,b\n", "y", {"G"}); }), ErrorKind::EmptyData);
  EXPECT_EQ(kind_of([] { read_text("", "y", {"G"}); }), ErrorKind::EmptyData);
  try {
    read_text("y,G\n1,a\nabc,b\n", "y", {"G"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
  }
}

TEST(ReadCsv, CombineJoinsLabels) {
  ReadOptions o;
  o.combine = {{"Product", {"TV", "Pic"}}};
  Dataset ds = read_text("y,TV,Pic\n1,t1,p1\n2,t1,p2\n3,t2,p1\n4,t1,p1\n", "y", {"Product"}, o);
  EXPECT_EQ(ds.factor("Product").levels, (std::vector<std::string>{"t1:p1", "t1:p2", "t2:p1"}));
  EXPECT_EQ(level_counts(ds, "Product"), 3);
}

TEST(Dataset, RoundTripAndInvariants) {
  const std::vector<std::string> labels = {"x", "y", "x", "z", "y"};
  Dataset ds = Dataset::from_labels("r", {1, 2, 3, 4, 5}, {{"A", labels}, {"B", {"u", "u", "u", "u", "u"}}});
  EXPECT_EQ(ds.labels("A"), labels);
  EXPECT_EQ(level_counts(ds, "A"), 3);
  EXPECT_EQ(level_counts(ds, "B"), 1);
  EXPECT_EQ(kind_of([&] { level_counts(ds, "C"); }), ErrorKind::UnknownFactor);
  EXPECT_EQ(kind_of([] { Dataset("y", {}, {}); }), ErrorKind::EmptyData);
  Factor bad{{0, 3}, {"a", "b"}};
  EXPECT_THROW(Dataset("y", {1, 2}, {{"F", bad}}), Error);
}

TEST(Dataset, PermutationKeepsLevelDictionaries) {
  Rng rng(1);
  TwoWayTruth t;
  t.beta = Eigen::VectorXd::LinSpaced(3, 0, 2);
  Dataset ds = simulate_two_way(3, 3, 2, t, rng);
  std::vector<std::size_t> perm(ds.n_obs());
  std::iota(perm.rbegin(), perm.rend(), std::size_t{0});
  Dataset p = ds.permuted(perm);
  EXPECT_EQ(p.factor("G").levels, ds.factor("G").levels);
  EXPECT_EQ(p.response().front(), ds.response().back());
  EXPECT_EQ(p.labels("F").front(), ds.labels("F").back());
}

TEST(ParseFormula, FullModel) {
  const ModelSpec ms =
      parse_formula("Cutting ~ 1 + Product + (1|Assessor) + (1|Assessor:Product) + mp(Assessor,Product)");
  EXPECT_EQ(ms.response, "Cutting");
  EXPECT_EQ(ms.fixed_factors, (std::vector<std::string>{"Product"}));
  EXPECT_EQ(ms.random_intercepts, (std::vector<std::string>{"Assessor"}));
  ASSERT_EQ(ms.random_interactions.size(), 1u);
  EXPECT_EQ(ms.random_interactions[0], (std::pair<std::string, std::string>{"Assessor", "Product"}));
  ASSERT_TRUE(ms.mult_term);
  EXPECT_EQ(ms.mult_term->random, "Assessor");
  EXPECT_EQ(ms.mult_term->fixed, "Product");
}

TEST(ParseFormula, PlainMixedModelAndWhitespace) {
  const ModelSpec a = parse_formula("y ~ 1 + F + (1|G)");
  EXPECT_FALSE(a.mult_term);
  EXPECT_EQ(parse_formula("  y~F+( 1 | G )\n"), a);  // implied intercept
}

TEST(ParseFormula, RoundTripIsFixedPoint) {
  for (const char* f : {"y ~ 1 + F + (1|G) + (1|G:F) + mp(G,F)", "y~F+mp(G,F)", "z ~ (1|A:B) + (1|A)"}) {
    const ModelSpec a = parse_formula(f);
    const std::string printed = to_string(a);
    EXPECT_EQ(parse_formula(printed), a);
    EXPECT_EQ(to_string(parse_formula(printed)), printed);
  }
}

TEST(ParseFormula, Errors) {
  EXPECT_EQ(kind_of([] { parse_formula("y ~ 1 + mp(G,F)"); }), ErrorKind::Semantic);
  try {
    parse_formula("y ~ 1 + mp(G,F)");
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'F'"), std::string::npos);
  }
  EXPECT_EQ(kind_of([] { parse_formula("y ~ F + G + mp(G,F) + mp(H,F)"); }), ErrorKind::UnsupportedModel);
  EXPECT_EQ(kind_of([] { parse_formula("y ~ 0 + F"); }), ErrorKind::UnsupportedModel);
  EXPECT_EQ(kind_of([] { parse_formula("y ~ F + F"); }), ErrorKind::Semantic);
  EXPECT_EQ(kind_of([] { parse_formula(""); }), ErrorKind::Syntax);
  try {
    parse_formula("y ~ 1 + (x|G)");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.offset(), 9u);
    EXPECT_NE(std::string(e.what()).find("byte 9"), std::string::npos);
  }
  try {
    parse_formula("y ~ 1 + F )");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.offset(), 10u);
  }
}

TEST(ValidateAgainst, BindingAndErrors) {
  Rng rng(2);
  TwoWayTruth t;
  t.beta = Eigen::VectorXd::LinSpaced(12, 0, 1);
  Dataset ds = simulate_two_way(8, 12, 2, t, rng);
  const ModelBinding b = validate_against(parse_formula("y ~ 1 + F + (1|G) + (1|G:F) + mp(G,F)"), ds);
  EXPECT_EQ(b.levels("G"), 8);
  EXPECT_EQ(b.levels("F"), 12);
  EXPECT_EQ(kind_of([&] { validate_against(parse_formula("y ~ F + (1|Judge)"), ds); }),
            ErrorKind::MissingColumn);
  Dataset single = Dataset::from_labels("y", {1, 2, 3}, {{"F", {"a", "b", "a"}}, {"G", {"g", "g", "g"}}});
  EXPECT_EQ(kind_of([&] { validate_against(parse_formula("y ~ F + (1|G)"), single); }),
            ErrorKind::DegenerateFactor);
}

TEST(BuildLayout, DimensionsOfTheFullModel) {
  Rng rng(3);
  TwoWayTruth t;
  t.beta = Eigen::VectorXd::LinSpaced(12, 0, 1);
  Dataset ds = simulate_two_way(8, 12, 2, t, rng);
  const DesignLayout lay = build_layout(parse_formula("y ~ 1 + F + (1|G) + (1|G:F) + mp(G,F)"), ds);
  EXPECT_EQ(lay.n, 192);
  EXPECT_EQ(lay.p, 12);
  EXPECT_EQ(lay.q, 2 * 8 + 8 * 12);
  EXPECT_TRUE(lay.has_rho());
  // (a_i, b_i) pairs come first, interleaved.
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(lay.column(lay.a_term, i), 2 * i);
    EXPECT_EQ(lay.slope_column(i), 2 * i + 1);
  }
  const Eigen::MatrixXd x = dense_fixed(lay);
  for (int k = 0; k < lay.n; ++k) EXPECT_EQ(x.row(k).sum(), 1.0);
}

TEST(BuildLayout, WheatShapeWithoutInteraction) {
  Rng rng(4);
  TwoWayTruth t;
  t.beta = Eigen::VectorXd::LinSpaced(45, 0, 1);
  Dataset ds = simulate_two_way(50, 45, 1, t, rng);
  const DesignLayout lay = build_layout(parse_formula("y ~ 1 + F + (1|G) + mp(G,F)"), ds);
  EXPECT_EQ(lay.q, 100);
  EXPECT_EQ(lay.p, 45);
  EXPECT_LT(lay.d_term, 0);
}

TEST(BuildLayout, SingleGroupIsRejected) {
  Dataset ds = Dataset::from_labels("y", {1, 2, 3, 4}, {{"G", {"g", "g", "g", "g"}}, {"F", {"a", "b", "a", "b"}}});
  // Layouts are only built from validated bindings, which need 2+ levels.
  EXPECT_EQ(kind_of([&] { build_layout(parse_formula("y ~ F + (1|G) + mp(G,F)"), ds); }),
            ErrorKind::DegenerateFactor);
}

TEST(MultCovariate, CenteringAndMean) {
  Eigen::VectorXd b(3);
  b << 5, 5, 5;
  auto m = mult_covariate(b);
  EXPECT_EQ(m.nu, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(m.mu, 5.0);
  Eigen::VectorXd c(2);
  c << 4, 6;
  m = mult_covariate(c);
  EXPECT_EQ(m.nu[0], -1.0);
  EXPECT_EQ(m.nu[1], 1.0);
  EXPECT_EQ(m.mu, 5.0);
  Eigen::VectorXd table(12);
  table << 7.1057, 8.5980, 7.6681, 6.9428, 6.5361, 6.7693, 5.6357, 6.7778, 4.3898, 4.2358, 4.0981, 4.0615;
  m = mult_covariate(table);
  EXPECT_NEAR(m.nu.sum(), 0.0, 1e-13);
  EXPECT_NEAR(m.mu, 72.8187 / 12, 1e-12);
  EXPECT_NEAR(m.mu, 6.07, 5e-3);
  // Shifting every cell mean leaves the covariate unchanged.
  const auto shifted = mult_covariate((table.array() + 3.0).matrix());
  EXPECT_LT((shifted.nu - m.nu).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(LoadingRow, StructureOfTheRows) {
  Rng rng(5);
  TwoWayTruth t;
  t.beta = Eigen::VectorXd::LinSpaced(3, 1, 3);
  Dataset ds = simulate_two_way(2, 3, 1, t, rng);
  const DesignLayout full = build_layout(parse_formula("y ~ F + (1|G) + (1|G:F) + mp(G,F)"), ds);
  const DesignLayout no_d = build_layout(parse_formula("y ~ F + (1|G) + mp(G,F)"), ds);
  const DesignLayout plain = build_layout(parse_formula("y ~ F + (1|G) + (1|G:F)"), ds);
  Eigen::VectorXd beta(3);
  beta << 1.0, 2.0, 4.0;
  const Eigen::VectorXd nu = mult_covariate(beta).nu;
  for (int k = 0; k < full.n; ++k) {
    const int j = full.fixed_level[k];
    const int i = ds.factor("G").codes[k];
    EXPECT_EQ(loading_row(full, k, nu).size(), 3u);
    EXPECT_EQ(loading_row(no_d, k, nu).size(), 2u);
    const Eigen::MatrixXd z = dense_loadings(full, beta);
    EXPECT_EQ(z(k, full.column(full.a_term, i)), 1.0);
    EXPECT_EQ(z(k, full.slope_column(i)), nu[j]);
    EXPECT_EQ(z(k, full.column(full.d_term, i * 3 + j)), 1.0);
    EXPECT_NEAR(z.row(k).sum(), 2.0 + nu[j], 1e-15);
  }
  EXPECT_FALSE(plain.slope);
  EXPECT_EQ(plain.q, 2 + 6);
  // A level at the center puts a zero in the slope column.
  Eigen::VectorXd centered(3);
  centered << 1.0, 2.0, 3.0;
  const Eigen::MatrixXd zc = dense_loadings(full, centered);
  for (int k = 0; k < full.n; ++k)
    if (full.fixed_level[k] == 1) EXPECT_EQ(zc(k, full.slope_column(ds.factor("G").codes[k])), 0.0);
}

TEST(GroupLineEmitter, SlopeAndIntercept) {
  const GroupLine l = group_line(-0.0986, 0.8508, 6.0682);
  EXPECT_DOUBLE_EQ(l.slope, 1.8508);
  EXPECT_DOUBLE_EQ(l.intercept, -0.0986 - 6.0682 * 0.8508);
  EXPECT_EQ(group_line(0.3, 0.0, 5.0).slope, 1.0);
}

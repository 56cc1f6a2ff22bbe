#include "dlk/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

namespace dlk {
namespace {

double norm_of_row(const Matrix& x, std::size_t i) {
  double s = 0;
  for (double v : x.row(i)) s += v * v;
  return std::sqrt(s);
}

// Kolmogorov distance between the sample and a continuous CDF.
template <class Cdf>
double ks_distance(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double worst = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    worst = std::max({worst, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return worst;
}

TEST(BallAnnulus, NormsSizesAndLabels) {
  LabeledSet d = make_ball_annulus();
  ASSERT_EQ(d.size(), 200u);
  EXPECT_EQ(d.features(), 2u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = norm_of_row(d.x, i);
    if (i < 100) {
      EXPECT_EQ(d.y[i], 0);
      EXPECT_LE(r, 1.0);
    } else {
      EXPECT_EQ(d.y[i], 1);
      EXPECT_GE(r, 1.0);
      EXPECT_LE(r, 2.0);
    }
  }
}

TEST(BallAnnulus, RadialDistributionIsAreaUniform) {
  const std::size_t n = 10000;
  LabeledSet d = make_ball_annulus(n, n, 5);
  std::vector<double> inner, outer;
  for (std::size_t i = 0; i < d.size(); ++i) (d.y[i] == 0 ? inner : outer).push_back(norm_of_row(d.x, i));
  EXPECT_LT(ks_distance(inner, [](double r) { return r * r; }), 0.1);
  EXPECT_LT(ks_distance(outer, [](double r) { return (r * r - 1.0) / 3.0; }), 0.1);
  // Much tighter than the pinned 0.1 at this sample size.
  EXPECT_LT(ks_distance(inner, [](double r) { return r * r; }), 0.02);
  // A radius-uniform sampler would sit far away.
  EXPECT_GT(ks_distance(inner, [](double r) { return r; }), 0.2);
}

TEST(Generators, BitwiseReproducible) {
  EXPECT_EQ(make_ball_annulus(30, 30, 9).x, make_ball_annulus(30, 30, 9).x);
  EXPECT_NE(make_ball_annulus(30, 30, 9).x, make_ball_annulus(30, 30, 10).x);
  EXPECT_EQ(make_blobs(20, 1.0, 4).data.x, make_blobs(20, 1.0, 4).data.x);
  EXPECT_EQ(make_shapes_grid(5, 2).x, make_shapes_grid(5, 2).x);
  const auto a = make_copy_sequence(3, 6, 2, 8), b = make_copy_sequence(3, 6, 2, 8);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].inputs, b[i].inputs);
}

TEST(Xor, CanonicalPoints) {
  LabeledSet d = make_xor();
  EXPECT_EQ(d.x, Matrix::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
  EXPECT_EQ(d.y, (std::vector<int>{0, 1, 1, 0}));
}

TEST(Blobs, CertifiedSeparableWithMargin) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Blobs b = make_blobs(40, 1.0, seed, 2 + seed % 3);
    EXPECT_NEAR(norm(b.witness), 1.0, 1e-12);
    LabeledSet pm = with_convention(b.data, LabelConvention::PlusMinusOne);
    MistakeBound bound = certify_bound(pm, b.witness);
    EXPECT_GE(bound.margin, 0.5);
  }
}

TEST(ShapesGrid, ImagesAndLabels) {
  LabeledSet d = make_shapes_grid(10, 3, 0.0);
  ASSERT_EQ(d.size(), 20u);
  EXPECT_EQ(d.features(), kShapeSide * kShapeSide);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    ones += d.y[i];
    double lit = 0;
    for (double v : d.x.row(i)) {
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      lit += v;
    }
    EXPECT_GT(lit, 0.0);
  }
  EXPECT_EQ(ones, 10u);
}

TEST(CopySequence, TargetsAreShiftedInputs) {
  const auto seqs = make_copy_sequence(4, 5, 1, 1);
  ASSERT_EQ(seqs.size(), 4u);
  for (const SequenceExample& s : seqs) {
    ASSERT_EQ(s.inputs.size(), 5u);
    EXPECT_EQ(s.targets[0], Vector{0.0});
    for (std::size_t t = 1; t < 5; ++t) EXPECT_EQ(s.targets[t], s.inputs[t - 1]);
    for (const Vector& x : s.inputs) {
      EXPECT_GE(x[0], -1.0);
      EXPECT_LE(x[0], 1.0);
    }
  }
  const auto lag3 = make_copy_sequence(2, 7, 3, 2);
  const Table t = copy_sequence_table(lag3, 3);
  EXPECT_EQ(t.labels, (std::vector<int>{3, 3}));
  const auto back = copy_sequences_from_table(t);
  for (std::size_t i = 0; i < lag3.size(); ++i) {
    EXPECT_EQ(back[i].inputs, lag3[i].inputs);
    EXPECT_EQ(back[i].targets, lag3[i].targets);
  }
}

TEST(Split, SizesDisjointAndDeterministic) {
  auto [train, valid] = split_indices(10, 0.8, 1);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(valid.size(), 2u);
  std::set<std::size_t> all(train.begin(), train.end());
  for (std::size_t i : valid) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 10u);
  EXPECT_EQ(*all.rbegin(), 9u);
  EXPECT_EQ(split_indices(10, 0.8, 1), split_indices(10, 0.8, 1));
  EXPECT_EQ(split_indices(7, 0.5, 0).first.size(), 4u);
  EXPECT_THROW(split_indices(10, 0.99, 1), std::invalid_argument);
  EXPECT_THROW(split_indices(10, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(split_indices(10, 1.0, 1), std::invalid_argument);

  LabeledSet d = make_ball_annulus(5, 5, 2);
  auto [tr, va] = split(d, 0.8, 3);
  EXPECT_EQ(tr.size(), 8u);
  EXPECT_EQ(va.size(), 2u);
  EXPECT_EQ(tr.x.cols(), 2u);
}

TEST(Csv, RoundTripIsExact) {
  Table t = to_table(make_ball_annulus(7, 5, 4));
  std::ostringstream out;
  write_csv(out, t);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "f0,f1,label");
  std::istringstream in(out.str());
  Table back = read_csv(in);
  EXPECT_EQ(back.x, t.x);
  EXPECT_EQ(back.labels, t.labels);
  std::istringstream again(out.str());
  EXPECT_EQ(read_matrix_csv(again), t.x);
}

TEST(Csv, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_csv(in);
    } catch (const CsvError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("f0,f1,label\n1,2,0\n3,x,1\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("f0,f1,label\n1,2\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("f0,f1,label\n1,2,0.5\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("a,b,label\n1,2,0\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("f0,f1\n1,2\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("").find("line 1"), std::string::npos);
  EXPECT_NE(message("f0,label\nnan,1\n").find("line 2"), std::string::npos);
}

}  // namespace
}  // namespace dlk

#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"

using namespace dans;
using namespace dans::testing;

namespace {

constexpr double kTol = 1e-4;

// Random values kept away from the ReLU kink.
Matrix away_from_zero(Index r, Index c, Rng& rng) {
  Matrix m = random_matrix(r, c, rng);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] += m.data()[i] >= 0 ? 0.1 : -0.1;
  return m;
}

}  // namespace

TEST(Autodiff, ElementwiseAndMatmulGradients) {
  Rng rng(1);
  Tensor a(away_from_zero(4, 3, rng)), b(random_matrix(3, 5, rng)), c(random_matrix(4, 3, rng)),
      row(random_matrix(1, 3, rng));
  auto check = [&](const char* name, std::function<Var(Tape&)> f, std::vector<Tensor*> ps) {
    EXPECT_LT(gradient_check(f, ps), kTol) << name;
  };
  check("matmul", [&](Tape& t) { return t.sum(t.matmul(t.param(a), t.param(b))); }, {&a, &b});
  check("add", [&](Tape& t) { return t.sum(t.mul(t.add(t.param(a), t.param(c)), t.param(c))); }, {&a, &c});
  check("add_broadcast", [&](Tape& t) {
    Var x = t.add(t.param(a), t.param(row));
    return t.sum(t.mul(x, x));
  }, {&a, &row});
  check("sub", [&](Tape& t) {
    Var x = t.sub(t.param(a), t.param(c));
    return t.sum(t.mul(x, x));
  }, {&a, &c});
  check("scale", [&](Tape& t) { return t.sum(t.mul(t.scale(t.param(a), -2.5), t.param(c))); }, {&a, &c});
  check("relu", [&](Tape& t) { return t.sum(t.mul(t.relu(t.param(a)), t.param(c))); }, {&a, &c});
  check("sigmoid", [&](Tape& t) { return t.sum(t.mul(t.sigmoid(t.param(a)), t.param(c))); }, {&a, &c});
  check("log_sigmoid", [&](Tape& t) { return t.sum(t.mul(t.log_sigmoid(t.param(a)), t.param(c))); }, {&a, &c});
  check("softmax", [&](Tape& t) { return t.sum(t.mul(t.softmax(t.param(a)), t.param(c))); }, {&a, &c});
  check("mse", [&](Tape& t) { return t.mse(t.param(a), t.param(c)); }, {&a, &c});
  check("mean", [&](Tape& t) { return t.mean(t.mul(t.param(a), t.param(a))); }, {&a});
  check("concat", [&](Tape& t) {
    Var x = t.concat_cols({t.param(a), t.param(c)});
    return t.sum(t.mul(x, t.sigmoid(x)));
  }, {&a, &c});
}

TEST(Autodiff, LayerNormGradient) {
  Rng rng(2);
  Tensor x(random_matrix(5, 6, rng)), gain(random_matrix(1, 6, rng)), shift(random_matrix(1, 6, rng)),
      w(random_matrix(5, 6, rng));
  auto f = [&](Tape& t) {
    return t.sum(t.mul(t.layer_norm(t.param(x), t.param(gain), t.param(shift)), t.param(w)));
  };
  EXPECT_LT(gradient_check(f, {&x, &gain, &shift}), kTol);
}

TEST(Autodiff, EmbeddingLookupGradientWithRepeats) {
  Rng rng(3);
  Tensor table(random_matrix(6, 4, rng)), w(random_matrix(5, 4, rng));
  std::vector<int> ids = {0, 3, 3, 5, 0};
  auto f = [&](Tape& t) {
    Var x = t.embedding_lookup(t.param(table), ids);
    return t.sum(t.mul(t.mul(x, x), t.param(w)));
  };
  EXPECT_LT(gradient_check(f, {&table}), kTol);
}

TEST(Autodiff, RowNormAndTranslationDistance) {
  Rng rng(4);
  Tensor a(random_matrix(4, 5, rng)), ent(random_matrix(7, 5, rng)), rel(random_matrix(3, 5, rng)),
      tails(random_matrix(4, 5, rng));
  std::vector<int> h = {0, 2, 6, 2}, r = {1, 0, 2, 1}, t_ids = {3, 4, 1, 5};
  for (int p : {1, 2}) {
    EXPECT_LT(gradient_check([&](Tape& t) { return t.sum(t.row_norm(t.param(a), p)); }, {&a}), kTol) << p;
    auto by_id = [&](Tape& t) {
      return t.sum(t.translation_distance(t.param(ent), t.param(rel), h, r, t_ids, Var{-1}, p));
    };
    EXPECT_LT(gradient_check(by_id, {&ent, &rel}), kTol) << p;
    auto by_rows = [&](Tape& t) {
      return t.sum(t.translation_distance(t.param(ent), t.param(rel), h, r, {}, t.param(tails), p));
    };
    EXPECT_LT(gradient_check(by_rows, {&ent, &rel, &tails}), kTol) << p;
  }
}

TEST(Autodiff, TranslationDistanceMatchesComposedOps) {
  Rng rng(5);
  Tensor ent(random_matrix(5, 3, rng)), rel(random_matrix(2, 3, rng));
  std::vector<int> h = {0, 4}, r = {1, 0}, tl = {2, 2};
  Tape tape;
  Var fused = tape.translation_distance(tape.param(ent), tape.param(rel), h, r, tl, Var{-1}, 1);
  Var composed = tape.row_norm(tape.sub(tape.add(tape.embedding_lookup(tape.param(ent), h),
                                                 tape.embedding_lookup(tape.param(rel), r)),
                                        tape.embedding_lookup(tape.param(ent), tl)),
                               1);
  for (Index i = 0; i < 2; ++i) EXPECT_NEAR(tape.value(fused)(i, 0), tape.value(composed)(i, 0), 1e-12);
}

TEST(Autodiff, LayerNormOfConstantIsZero) {
  Tensor x(Matrix::Constant(1, 8, 3.7));
  LayerNorm ln(8);
  Tape tape;
  Var y = ln.forward(tape, tape.param(x));
  EXPECT_LT(tape.value(y).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Autodiff, LogSigmoidIsStable) {
  EXPECT_NEAR(log_sigmoid(0.0), -std::numbers::ln2, 1e-12);
  EXPECT_NEAR(log_sigmoid(-800.0), -800.0, 1e-9);
  EXPECT_NEAR(log_sigmoid(800.0), 0.0, 1e-12);
  Tape tape;
  Matrix m(1, 2);
  m << -800.0, 800.0;
  Var y = tape.log_sigmoid(tape.constant(m));
  EXPECT_TRUE(tape.value(y).allFinite());
}

TEST(Autodiff, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Matrix::Zero(2, 3));
  Var b = tape.constant(Matrix::Zero(4, 5));
  try {
    tape.matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("(2x3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4x5)"), std::string::npos) << msg;
  }
  EXPECT_THROW(tape.add(a, b), ShapeError);
}

TEST(Autodiff, NonFiniteValuesTrip) {
  Tape tape;
  Matrix m(1, 1);
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(tape.constant(m), NumericalError);
  Var big = tape.constant(Matrix::Constant(1, 1, 1e200));
  EXPECT_THROW(tape.mul(big, big), NumericalError);
}

TEST(Networks, MlpWithLayerNormGradient) {
  Rng rng(6);
  Mlp mlp({5, 8, 5}, rng);
  LayerNorm ln(5);
  ln.gain.value = random_matrix(1, 5, rng);
  Tensor x(random_matrix(3, 5, rng)), target(random_matrix(3, 5, rng));
  auto f = [&](Tape& t) { return t.mse(ln.forward(t, mlp.forward(t, t.param(x))), t.param(target)); };
  auto params = mlp.parameters();
  params.push_back(&ln.gain);
  params.push_back(&ln.shift);
  params.push_back(&x);
  EXPECT_LT(gradient_check(f, params), kTol);
}

TEST(AdamW, ZeroGradientLeavesParamsUnchanged) {
  Tensor w(Matrix::Constant(2, 2, 0.7));
  AdamW opt({&w}, {1e-2, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    opt.step();
  }
  EXPECT_EQ(w.value, Matrix::Constant(2, 2, 0.7));
}

TEST(AdamW, QuadraticDescentIsMonotone) {
  Tensor w(Matrix::Constant(1, 1, 1.0));
  AdamW opt({&w}, {1e-2, 0.9, 0.999, 1e-8, 0.0});
  double prev = 1.0;
  for (int i = 0; i < 50; ++i) {
    opt.zero_grad();
    Tape tape;
    Var x = tape.param(w);
    Var loss = tape.sum(tape.mul(x, x));
    EXPECT_LE(tape.item(loss), prev + 1e-15);
    prev = tape.item(loss);
    tape.backward(loss);
    opt.step();
    if (i == 0) {
      EXPECT_LT(std::abs(w.value(0, 0)), 1.0);
    }
  }
  EXPECT_LT(prev, 1.0);
}

TEST(AdamW, RunsAreBitIdentical) {
  auto run = [] {
    Rng rng(7);
    Mlp mlp({4, 6, 1}, rng);
    AdamW opt(mlp.parameters(), {1e-2, 0.9, 0.999, 1e-8, 0.01});
    Matrix x = random_matrix(8, 4, rng), y = random_matrix(8, 1, rng);
    for (int s = 0; s < 20; ++s) {
      opt.zero_grad();
      Tape tape;
      Var loss = tape.mse(mlp.forward(tape, tape.constant(x)), tape.constant(y));
      tape.backward(loss);
      opt.step();
    }
    std::vector<Matrix> out;
    for (auto* p : mlp.parameters()) out.push_back(p->value);
    return out;
  };
  auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i] == b[i]);
}

TEST(TimeEmbedding, ZeroNormAndDistinct) {
  RowVector e0 = time_embedding(0, 16);
  for (int i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(e0(i), i % 2 == 0 ? 0.0 : 1.0);
  std::vector<RowVector> all;
  for (int t = 0; t <= 1000; ++t) {
    all.push_back(time_embedding(t, 64));
    EXPECT_LE(all.back().norm(), std::sqrt(64.0) + 1e-12);
  }
  double closest = 1e9;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) closest = std::min(closest, (all[i] - all[j]).norm());
  EXPECT_GT(closest, 1e-6);
}

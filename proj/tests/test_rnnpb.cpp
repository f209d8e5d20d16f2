#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace iloci;
using iloci::testing::random_weights;
using iloci::testing::small_config;
using iloci::testing::toy_sequence;

namespace {

// Loop-based re-implementation of one step, independent of the Eigen expressions.
StepOutput step_oracle(const NetWeights& w, const Vector& x, const Vector& pb, const Vector& c) {
  std::vector<double> in;
  for (Eigen::Index i = 0; i < x.size(); ++i) in.push_back(x(i));
  for (Eigen::Index i = 0; i < pb.size(); ++i) in.push_back(pb(i));
  for (Eigen::Index i = 0; i < c.size(); ++i) in.push_back(c(i));
  auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  StepOutput o{Vector(w.io_dim()), Vector(w.context_dim()), Vector(w.hidden_dim())};
  for (int h = 0; h < w.hidden_dim(); ++h) {
    double a = w.b_hidden(h);
    for (std::size_t i = 0; i < in.size(); ++i) a += w.w_in(h, static_cast<Eigen::Index>(i)) * in[i];
    o.hidden(h) = sig(a);
  }
  for (int k = 0; k < w.io_dim(); ++k) {
    double a = w.b_out(k);
    for (int h = 0; h < w.hidden_dim(); ++h) a += w.w_out(k, h) * o.hidden(h);
    o.prediction(k) = sig(a);
  }
  for (int k = 0; k < w.context_dim(); ++k) {
    double a = w.b_ctx(k);
    for (int h = 0; h < w.hidden_dim(); ++h) a += w.w_ctx(k, h) * o.hidden(h);
    o.context(k) = sig(a);
  }
  return o;
}

}  // namespace

TEST(Weights, InitIsSeededAndBounded) {
  NetConfig c;
  auto a = init_weights(c), b = init_weights(c);
  EXPECT_TRUE(a == b);
  c.rng_seed = 2;
  EXPECT_FALSE(a == init_weights(c));
  double worst = 0;
  a.for_each([&](const double& v) { worst = std::max(worst, std::abs(v)); });
  EXPECT_LE(worst, 0.1);
  EXPECT_EQ(a.size(), static_cast<std::size_t>(60 * 35 + 60 + 6 * 60 + 6 + 25 * 60 + 25));
}

TEST(Config, DefaultsAndValidation) {
  NetConfig c;
  EXPECT_EQ(c.io_dim, 6);
  EXPECT_EQ(c.pb_dim, 4);
  EXPECT_EQ(c.context_dim, 25);
  EXPECT_EQ(c.hidden_dim, 60);
  EXPECT_NO_THROW(c.validate());
  c.hidden_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  NetConfig r;
  r.closed_loop_ratio = 1.5;
  EXPECT_THROW(r.validate(), ConfigError);
}

TEST(Forward, ZeroWeightsGiveOneHalf) {
  NetConfig c;
  auto w = NetWeights::zeros(c);
  auto s = forward_step(w, Vector::Constant(6, 0.3), Vector::Constant(4, 0.7), Vector::Constant(25, 0.5));
  EXPECT_TRUE(s.prediction.isApprox(Vector::Constant(6, 0.5)));
  EXPECT_TRUE(s.context.isApprox(Vector::Constant(25, 0.5)));
}

TEST(Forward, MatchesLoopOracle) {
  NetConfig c;
  auto w = random_weights(c, 9, 1.0);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    Vector x(6), pb(4), ctx(25);
    for (auto* v : {&x, &pb, &ctx})
      for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = unit_uniform(rng);
    auto a = forward_step(w, x, pb, ctx), b = step_oracle(w, x, pb, ctx);
    EXPECT_LT((a.prediction - b.prediction).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((a.context - b.context).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((a.hidden - b.hidden).cwiseAbs().maxCoeff(), 1e-14);
    auto again = forward_step(w, x, pb, ctx);
    EXPECT_EQ(a.prediction, again.prediction);
  }
}

TEST(Forward, GenerateFeedsPredictionsBack) {
  NetConfig c = small_config();
  auto w = random_weights(c, 3, 1.0);
  Vector pb = Vector::Constant(c.pb_dim, 0.4), x0 = Vector::Constant(6, 0.5);
  auto g = generate(w, pb, x0, 5);
  ASSERT_EQ(g.rows(), 5);
  Vector x = x0, ctx = Vector::Constant(c.context_dim, kContextInit);
  for (int t = 0; t < 5; ++t) {
    auto s = step_oracle(w, x, pb, ctx);
    EXPECT_LT((g.row(t).transpose() - s.prediction).cwiseAbs().maxCoeff(), 1e-14);
    x = s.prediction, ctx = s.context;
  }
  auto r = regenerate(w, pb, x0, 6);
  EXPECT_EQ(r.rows(), 6);
  EXPECT_EQ(Vector(r.row(0).transpose()), x0);
  EXPECT_EQ(Sequence(r.bottomRows(5)), g);
}

TEST(Loss, MseIsTwiceLossPerValue) {
  NetConfig c = small_config();
  auto w = random_weights(c, 1);
  auto s = toy_sequence(0, 8);
  const Vector u = Vector::Zero(c.pb_dim);
  const double e = sequence_loss(w, s, u);
  // Teacher-forced one-step predictions, computed step by step.
  Vector ctx = Vector::Constant(c.context_dim, kContextInit);
  double sq = 0;
  for (int t = 0; t < 7; ++t) {
    auto st = step_oracle(w, s.row(t).transpose(), sigmoid(u), ctx);
    sq += (st.prediction - s.row(t + 1).transpose()).squaredNorm();
    ctx = st.context;
  }
  EXPECT_NEAR(e, 0.5 * sq, 1e-12);
  EXPECT_NEAR(loss_to_mse(e, 7, 6), sq / 42.0, 1e-14);
}

TEST(Gradient, MatchesCentralDifferencesTeacherForced) {
  NetConfig c = small_config();
  std::mt19937_64 rng(21);
  for (int i = 0; i < 6; ++i) {
    auto w = random_weights(c, 100 + i, 0.8);
    auto s = toy_sequence(i, 4 + i);
    Vector u(c.pb_dim);
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = 2 * unit_uniform(rng) - 1;
    EXPECT_LT(gradient_check(w, s, u), 1e-4) << "instance " << i;
  }
}

TEST(Gradient, MatchesCentralDifferencesWithFeedback) {
  NetConfig c = small_config();
  std::mt19937_64 rng(22);
  for (int i = 0; i < 6; ++i) {
    auto w = random_weights(c, 200 + i, 0.8);
    auto s = toy_sequence(i + 3, 5 + i);
    Vector u(c.pb_dim);
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = 2 * unit_uniform(rng) - 1;
    EXPECT_LT(gradient_check(w, s, u, 0.8), 1e-4) << "instance " << i;
    EXPECT_LT(gradient_check(w, s, u, 1.0), 1e-4) << "instance " << i;
  }
}

TEST(Train, SingleShortSequenceReachesTarget) {
  NetConfig c = small_config();
  c.max_epochs = 20000;
  Sequence s(11, 6);
  for (int t = 0; t <= 10; ++t)
    for (int k = 0; k < 6; ++k) s(t, k) = 0.5 + 0.3 * (std::sin(0.6 * (t + 1) + k) - std::sin(0.6 * t + k));
  auto r = train(init_weights(c), {s}, {Vector::Zero(c.pb_dim)}, c);
  EXPECT_LE(r.final_mse, c.target_mse);
  EXPECT_LT(r.epochs, c.max_epochs);
  EXPECT_GT(r.initial_mse, r.final_mse);
}

TEST(Train, DistinctSequencesGetDistinctPb) {
  NetConfig c = small_config();
  c.max_epochs = 3000;
  auto r = train(init_weights(c), {toy_sequence(0, 10), toy_sequence(1, 10)},
                 {Vector::Zero(c.pb_dim), Vector::Zero(c.pb_dim)}, c);
  EXPECT_GT((r.pbs[0] - r.pbs[1]).norm(), 0.0);
  for (const auto& pb : r.pbs) EXPECT_TRUE((pb.array() > 0).all() && (pb.array() < 1).all());
}

TEST(Train, ZeroWeightRateFreezesWeights) {
  NetConfig c = small_config();
  c.learn_rate_w = 0.0;
  c.max_epochs = 50;
  const auto w0 = init_weights(c);
  auto r = train(w0, {toy_sequence(0, 10)}, {Vector::Zero(c.pb_dim)}, c);
  EXPECT_TRUE(r.weights == w0);
  EXPECT_EQ(r.epochs, 50);
}

TEST(Train, NonFiniteLossReportsEpochAndRates) {
  NetConfig c = small_config();
  Sequence s = toy_sequence(0, 6);
  s(3, 2) = std::nan("");
  try {
    train(init_weights(c), {s}, {Vector::Zero(c.pb_dim)}, c);
    FAIL();
  } catch (const DivergenceError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("epoch 0"), std::string::npos);
    EXPECT_NE(m.find("learn_rate_w"), std::string::npos);
  }
}

TEST(Train, IsDeterministic) {
  NetConfig c = small_config();
  c.max_epochs = 200;
  auto a = train(init_weights(c), {toy_sequence(0, 9)}, {Vector::Zero(c.pb_dim)}, c);
  auto b = train(init_weights(c), {toy_sequence(0, 9)}, {Vector::Zero(c.pb_dim)}, c);
  EXPECT_TRUE(a.weights == b.weights);
  EXPECT_EQ(a.pbs[0], b.pbs[0]);
}

TEST(Train, ClippingBoundsTheStep) {
  NetConfig c = small_config();
  c.max_epochs = 1;
  c.learn_rate_pb = 0.0;
  c.learn_rate_w = 100.0;
  c.grad_clip = 0.01;
  const auto w0 = init_weights(c);
  auto r = train(w0, {toy_sequence(2, 9)}, {Vector::Zero(c.pb_dim)}, c);
  NetWeights diff = r.weights;
  diff.axpy(-1.0, w0);
  double sq = 0;
  diff.for_each([&](const double& v) { sq += v * v; });
  EXPECT_NEAR(std::sqrt(sq), 100.0 * 0.01, 1e-9);
}

TEST(Recognize, FrozenWeightsAndDeterministic) {
  NetConfig c = small_config();
  c.max_epochs = 2000;
  auto r = train(init_weights(c), {toy_sequence(0, 10), toy_sequence(1, 10)},
                 {Vector::Zero(c.pb_dim), Vector::Zero(c.pb_dim)}, c);
  auto a = recognize(r.weights, toy_sequence(0, 10), c);
  auto b = recognize(r.weights, toy_sequence(0, 10), c);
  EXPECT_EQ(a.pb, b.pb);
  c.recog_iters = 0;
  auto z = recognize(r.weights, toy_sequence(0, 10), c);
  EXPECT_TRUE(z.pb.isApprox(Vector::Constant(c.pb_dim, 0.5)));
}

TEST(Snapshot, WeightsRoundTripExactly) {
  NetConfig c = small_config();
  c.closed_loop_ratio = 0.3;
  auto w = random_weights(c, 8);
  const auto bytes = serialize(c, w);
  auto [c2, w2] = deserialize_weights(bytes);
  EXPECT_TRUE(c2 == c);
  EXPECT_TRUE(w2 == w);
  auto bad = bytes;
  bad.back() ^= 0x10;
  EXPECT_THROW(deserialize_weights(bad), CorruptFileError);
  auto other = bytes;
  other[0] = 'X';
  EXPECT_THROW(deserialize_weights(other), CorruptFileError);
}

#include <doctest.h>

#include "asf/metrics.hpp"
#include "asf/train.hpp"
#include "test_util.hpp"

using namespace asf;

namespace {

DatasetSpec train_spec() {
  DatasetSpec s;
  s.num_videos = 30;
  s.activities = 4;
  s.t_full = 256;
  s.width = 4;
  s.height = 4;
  s.channels = 8;
  s.seed = 21;
  return s;
}

HeadConfig small_head(std::size_t a = 4) {
  HeadConfig cfg;
  cfg.backbone_channels = 32;
  cfg.feature_channels = 16;
  cfg.observations = 4;
  cfg.activities = a;
  cfg.groups = 2;
  return cfg;
}

struct TrainFixture {
  std::vector<SyntheticVideo> videos;
  std::vector<const SyntheticVideo*> train_ptrs;
  BackboneStub backbone{8, 32, 8, 42};
  Tensor<float> mask;

  TrainFixture() {
    videos = generate_dataset(train_spec());
    std::vector<std::vector<std::uint8_t>> train_labels;
    for (const auto& v : videos)
      if (!v.is_eval) {
        train_ptrs.push_back(&v);
        train_labels.push_back(v.labels);
      }
    mask = compute_mask<float>(train_labels, 4);
  }
};

}  // namespace

TEST_CASE("combined loss averages the two output branches") {
  auto oa = constant(Tensor<double>({2}, {0.5, 0.5}));
  auto oc = constant(Tensor<double>({2}, {0.5, 0.5}));
  std::vector<std::uint8_t> labels = {1, 0};
  auto l = bce_loss(oa, oc, labels);
  CHECK(l->value[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // asymmetric branches: mean of the two BCE values
  auto oa2 = constant(Tensor<double>({1}, {0.9}));
  auto oc2 = constant(Tensor<double>({1}, {0.6}));
  std::vector<std::uint8_t> one = {1};
  const double ref = 0.5 * (-std::log(0.9) - std::log(0.6));
  CHECK(bce_loss(oa2, oc2, one)->value[0] == doctest::Approx(ref).epsilon(1e-12));

  Predictions<double> single;
  single.f_oa = oa2;
  single.f_out = oa2;
  CHECK(prediction_loss(single, one)->value[0] ==
        doctest::Approx(-std::log(0.9)).epsilon(1e-12));
}

TEST_CASE("sgd step closed forms") {
  auto w = leaf(Tensor<float>({1}, {1.0f}));
  w->grad = Tensor<float>({1}, {1.0f});
  w->has_grad = true;
  std::vector<NamedParam<float>> params = {{"w", w, false}};
  sgd_step(params, 0.05, 0.0);
  CHECK(w->value[0] == doctest::Approx(0.95f));

  // with decay: w <- w - lr*(g + wd*w)
  auto w2 = leaf(Tensor<float>({1}, {1.0f}));
  w2->grad = Tensor<float>({1}, {1.0f});
  w2->has_grad = true;
  std::vector<NamedParam<float>> p2 = {{"w", w2, false}};
  sgd_step(p2, 0.05, 1.0);
  CHECK(w2->value[0] == doctest::Approx(0.90f));

  // biases skip the decay term
  auto b = leaf(Tensor<float>({1}, {1.0f}));
  b->grad = Tensor<float>({1}, {1.0f});
  b->has_grad = true;
  std::vector<NamedParam<float>> pb = {{"b", b, true}};
  sgd_step(pb, 0.05, 1.0);
  CHECK(b->value[0] == doctest::Approx(0.95f));

  auto nograd = leaf(Tensor<float>({1}, {1.0f}));
  std::vector<NamedParam<float>> pn = {{"w", nograd, false}};
  CHECK_THROWS_AS(sgd_step(pn, 0.05, 0.0), ContractError);
}

TEST_CASE("sgd on a quadratic converges to the minimum") {
  // f(w) = (w - 3)^2; gradient 2(w-3)
  auto w = leaf(Tensor<double>({1}, {0.0}));
  std::vector<NamedParam<double>> params = {{"w", w, false}};
  for (int i = 0; i < 200; ++i) {
    w->zero_grad();
    w->grad = Tensor<double>({1}, {2.0 * (w->value[0] - 3.0)});
    w->has_grad = true;
    sgd_step(params, 0.1, 0.0);
  }
  CHECK(w->value[0] == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("training is deterministic under the seed") {
  TrainFixture fx;
  TrainConfig cfg;
  cfg.iterations = 8;
  cfg.finetune_iterations = 4;
  cfg.batch_size = 3;
  cfg.seed = 31;

  HeadParams<float> p1(small_head(), {}, 5);
  HeadParams<float> p2(small_head(), {}, 5);
  auto r1 = train(fx.train_ptrs, fx.backbone, p1, fx.mask, cfg);
  auto r2 = train(fx.train_ptrs, fx.backbone, p2, fx.mask, cfg);
  REQUIRE(r1.loss_curve.size() == 12);
  CHECK(r1.loss_curve == r2.loss_curve);
  auto n1 = p1.named_params(), n2 = p2.named_params();
  for (std::size_t i = 0; i < n1.size(); ++i)
    CHECK(test::bitwise_equal(n1[i].var->value, n2[i].var->value));

  // different train seed changes the trajectory
  HeadParams<float> p3(small_head(), {}, 5);
  cfg.seed = 32;
  auto r3 = train(fx.train_ptrs, fx.backbone, p3, fx.mask, cfg);
  CHECK(r1.loss_curve != r3.loss_curve);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  TrainFixture fx;
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.finetune_iterations = 0;
  cfg.batch_size = 2;
  cfg.learning_rate = 0.0;
  cfg.weight_decay = 0.0;

  HeadParams<float> params(small_head(), {}, 5);
  HeadParams<float> reference(small_head(), {}, 5);
  train(fx.train_ptrs, fx.backbone, params, fx.mask, cfg);
  auto a = params.named_params(), b = reference.named_params();
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(test::bitwise_equal(a[i].var->value, b[i].var->value));
}

TEST_CASE("loss decreases over a short run") {
  TrainFixture fx;
  TrainConfig cfg;
  cfg.iterations = 60;
  cfg.finetune_iterations = 0;
  cfg.batch_size = 6;

  HeadParams<float> params(small_head(), {}, 5);
  auto res = train(fx.train_ptrs, fx.backbone, params, fx.mask, cfg);
  REQUIRE(res.loss_curve.size() == 60);
  double head = 0, tail = 0;
  for (int i = 0; i < 15; ++i) {
    head += res.loss_curve[i];
    tail += res.loss_curve[60 - 15 + i];
  }
  CHECK(tail < head);
  for (double l : res.loss_curve) CHECK(std::isfinite(l));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate(256));
  CHECK_THROWS_AS(cfg.validate(128), ConfigError);  // tuning rate 8 infeasible
  cfg.tuning_rates = {2, 4};
  CHECK_NOTHROW(cfg.validate(128));
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(256), ConfigError);
}

TEST_CASE("standard view plan covers the rate mix with valid offsets") {
  auto plan = ViewPlan::standard(256);
  REQUIRE(plan.views.size() == 30);
  std::size_t r2 = 0, r4 = 0, r8 = 0;
  for (const auto& v : plan.views) {
    if (v.rate == 2) ++r2;
    if (v.rate == 4) ++r4;
    if (v.rate == 8) ++r8;
    CHECK(v.offset + 32 * v.rate <= 256);
  }
  CHECK(r2 == 9);
  CHECK(r4 == 12);
  CHECK(r8 == 9);
  CHECK_NOTHROW(plan.validate(256));
  CHECK_THROWS_AS(plan.validate(128), ConfigError);

  // offsets within a rate are non-decreasing and span the feasible range
  for (std::size_t i = 1; i < plan.views.size(); ++i)
    if (plan.views[i].rate == plan.views[i - 1].rate)
      CHECK(plan.views[i].offset >= plan.views[i - 1].offset);
  CHECK(plan.views.front().offset == 0);
  // last r=2 view reaches the end of the feasible offset range
  std::size_t last_r2 = 0;
  for (const auto& v : plan.views)
    if (v.rate == 2) last_r2 = std::max(last_r2, v.offset);
  CHECK(last_r2 == 256 - 64);
}

TEST_CASE("multi-view prediction is invariant to view order") {
  TrainFixture fx;
  HeadParams<float> params(small_head(), {}, 5);
  ViewPlan plan = ViewPlan::standard(256, 3, 4, 3);
  ViewPlan shuffled = plan;
  std::reverse(shuffled.views.begin(), shuffled.views.end());
  std::swap(shuffled.views[0], shuffled.views[3]);
  auto a = multi_view_predict(fx.videos[0], fx.backbone, params, fx.mask, plan);
  auto b = multi_view_predict(fx.videos[0], fx.backbone, params, fx.mask, shuffled);
  CHECK(test::bitwise_equal(a, b));
}

TEST_CASE("constant-in-time video: every rate and view gives the same answer") {
  TrainFixture fx;
  // freeze frame 0 across time
  SyntheticVideo v = fx.videos[0];
  const std::size_t frame = 4 * 4;
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t t = 1; t < 256; ++t)
      for (std::size_t p = 0; p < frame; ++p)
        v.frames[(c * 256 + t) * frame + p] = v.frames[(c * 256 + 0) * frame + p];

  HeadParams<float> params(small_head(), {}, 5);
  auto at = [&](std::size_t rate, std::size_t offset) {
    ViewPlan one;
    one.views = {View{rate, offset}};
    return multi_view_predict(v, fx.backbone, params, fx.mask, one);
  };
  auto base = at(2, 0);
  CHECK(test::bitwise_equal(base, at(4, 0)));
  CHECK(test::bitwise_equal(base, at(8, 0)));
  CHECK(test::bitwise_equal(base, at(2, 17)));

  // a 30-view plan sums 30 identical predictions
  auto all = multi_view_predict(v, fx.backbone, params, fx.mask,
                                ViewPlan::standard(256));
  Tensor<float> acc(base.shape());
  for (int i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += base[j];
  CHECK(test::bitwise_equal(all, acc));
}

TEST_CASE("average precision closed forms and oracle") {
  // ranked [1, 0, 1]: AP = (1/1 + 2/3) / 2 = 0.8333...
  CHECK(average_precision({0.9, 0.8, 0.7}, {1, 0, 1}) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  // all positives first -> 1.0
  CHECK(average_precision({0.9, 0.8, 0.1}, {1, 1, 0}) == doctest::Approx(1.0));
  // positive ranked last among n
  CHECK(average_precision({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1}) ==
        doctest::Approx(0.25));
  CHECK_THROWS_AS(average_precision({0.5}, {0}), ContractError);
  CHECK_THROWS_AS(average_precision({0.5, 0.4}, {1}), DimensionError);

  // brute-force oracle on random instances
  Rng rng(71);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rng.uniform_index(30);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform(0, 1);
      labels[i] = rng.bernoulli(0.4) ? 1 : 0;
      any = any || labels[i];
    }
    if (!any) labels[0] = 1;

    // independent implementation: sort index pairs, walk down the ranking
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] > scores[b];
    });
    double tp = 0, ap = 0, pos = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (!labels[order[r]]) continue;
      tp += 1;
      ap += tp / double(r + 1);
      pos += 1;
    }
    ap /= pos;
    CHECK(average_precision(scores, labels) == doctest::Approx(ap).epsilon(1e-9));
  }
}

TEST_CASE("average precision is invariant under monotone score maps") {
  Rng rng(72);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 5 + rng.uniform_index(20);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform(-5, 5);
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    labels[0] = 1;
    std::vector<double> mapped(n);
    for (std::size_t i = 0; i < n; ++i) mapped[i] = std::tanh(scores[i]) * 3 + 10;
    CHECK(average_precision(scores, labels) ==
          doctest::Approx(average_precision(mapped, labels)).epsilon(1e-12));
  }
}

TEST_CASE("random scores give chance-level average precision") {
  Rng rng(73);
  const double prevalence = 0.3;
  double total = 0;
  const int trials = 200;
  for (int rep = 0; rep < trials; ++rep) {
    const std::size_t n = 100;
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform(0, 1);
      labels[i] = rng.bernoulli(prevalence) ? 1 : 0;
      any = any || labels[i];
    }
    if (!any) labels[0] = 1;
    total += average_precision(scores, labels);
  }
  // chance AP concentrates near the prevalence
  CHECK(std::abs(total / trials - prevalence) < 0.05);
}

TEST_CASE("mean average precision excludes empty activities with a warning") {
  std::vector<std::vector<double>> scores = {{0.9, 0.2, 0.3},
                                             {0.1, 0.8, 0.4},
                                             {0.7, 0.3, 0.2}};
  std::vector<std::vector<std::uint8_t>> labels = {{1, 0, 0},
                                                   {0, 1, 0},
                                                   {1, 0, 0}};
  auto rep = mean_average_precision(scores, labels);
  REQUIRE(rep.ap.size() == 3);
  CHECK(rep.positives[0] == 2);
  CHECK(rep.positives[2] == 0);
  CHECK(std::isnan(rep.ap[2]));
  CHECK_FALSE(rep.warnings.empty());
  // map averages only the two populated activities
  CHECK(rep.map == doctest::Approx(0.5 * (rep.ap[0] + rep.ap[1])));
  CHECK(rep.ap[0] == doctest::Approx(1.0));
}

// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "optformer/model.hpp"
#include "optformer/optim.hpp"
#include "optformer/sam.hpp"
#include "optformer/schedule.hpp"
#include "test_util.hpp"

using namespace optformer;

TEST_CASE("schedule boundary values") {
  SUBCASE("wsd") {
    Schedule s;
    s.kind = ScheduleKind::Wsd;
    s.total = 1000;
    s.warmup = 100;
    s.decay_start = 800;
    s.min_mult = 0.1;
    CHECK(schedule_value(s, 0) == 0.0);
    CHECK(schedule_value(s, 50) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(schedule_value(s, 100) == 1.0);   // stable phase start
    CHECK(schedule_value(s, 450) == 1.0);   // exactly 1 through the plateau
    CHECK(schedule_value(s, 799) == 1.0);
    CHECK(schedule_value(s, 800) == 1.0);   // decay branch endpoint
    CHECK(schedule_value(s, 1000) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(schedule_value(s, 900) == doctest::Approx(0.55).epsilon(1e-12));
    CHECK_THROWS_AS(schedule_value(s, -1), ConfigError);
    CHECK_THROWS_AS(schedule_value(s, 1001), ConfigError);
  }
  SUBCASE("warmup-cosine") {
    Schedule s;
    s.kind = ScheduleKind::WarmupCosine;
    s.total = 1000;
    s.warmup = 100;
    s.min_mult = 0.1;
    CHECK(schedule_value(s, 0) == 0.0);
    CHECK(schedule_value(s, 100) == 1.0);  // cos(0) branch
    CHECK(schedule_value(s, 1000) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(schedule_value(s, 550) == doctest::Approx(0.55).epsilon(1e-12));  // halfway cosine
    for (long t = 0; t <= 1000; t += 7) {
      const double v = schedule_value(s, t);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("invalid shapes") {
    Schedule s;
    s.warmup = 2000;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
}

TEST_CASE("adamw_step hand cases") {
  SUBCASE("single step from zero state, beta1=beta2=0, wd=0") {
    Tensor x{{3}, {1.0, -2.0, 0.5}};
    Tensor g{{3}, {0.3, -0.4, 0.0}};
    Tensor expect = x;
    for (int i = 0; i < 3; ++i)
      expect.data[i] -= 0.1 * g.data[i] / (std::abs(g.data[i]) + 1e-8);
    AdamWState st;
    adamw_step(x, g, st, 1, 0.1, 0.0, 0.0, 0.0, 1e-8);
    for (int i = 0; i < 3; ++i) CHECK(x.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
  }
  SUBCASE("pure decoupled shrink when gradient and moments are zero") {
    Tensor x{{2}, {2.0, -3.0}};
    Tensor g = Tensor::zeros({2});
    AdamWState st;
    adamw_step(x, g, st, 1, 0.1, 0.5, 0.9, 0.95, 1e-8);
    CHECK(x.data[0] == doctest::Approx(2.0 * (1.0 - 0.5 * 0.1)).epsilon(1e-15));
    CHECK(x.data[1] == doctest::Approx(-3.0 * (1.0 - 0.5 * 0.1)).epsilon(1e-15));
  }
  SUBCASE("constant gradient converges to a sign-scaled step") {
    Tensor x{{2}, {0.0, 0.0}};
    Tensor g{{2}, {0.5, -2.0}};
    AdamWState st;
    double prev0 = x.data[0];
    double step0 = 0.0;
    for (int k = 1; k <= 400; ++k) {
      adamw_step(x, g, st, k, 1e-3, 0.0, 0.9, 0.95, 1e-8);
      step0 = prev0 - x.data[0];
      prev0 = x.data[0];
    }
    // mhat -> g, vhat -> g^2, so the per-step move approaches lr * sign(g)
    CHECK(step0 == doctest::Approx(1e-3).epsilon(1e-4));
  }
  SUBCASE("shape mismatch") {
    Tensor x{{2}, {0.0, 0.0}};
    Tensor g{{3}, {0.0, 0.0, 0.0}};
    AdamWState st;
    CHECK_THROWS_AS(adamw_step(x, g, st, 1, 0.1, 0.0, 0.9, 0.95, 1e-8), ShapeError);
  }
}

TEST_CASE("muon_step") {
  SUBCASE("zero gradient and state leave the weight unchanged") {
    Tensor w{{2, 2}, {1.0, 2.0, 3.0, 4.0}};
    Tensor g = Tensor::zeros({2, 2});
    Tensor mom;
    Tensor before = w;
    muon_step(w, g, mom, 0.1, 0.95, 5);
    CHECK(testutil::max_abs_diff(w, before) == 0.0);
  }
  SUBCASE("orthogonal first-step gradient moves along that matrix") {
    const double c = std::cos(0.3), s = std::sin(0.3);
    Tensor q{{2, 2}, {c, -s, s, c}};
    Tensor w = Tensor::zeros({2, 2});
    Tensor mom;
    muon_step(w, q, mom, 0.01, 0.95, 6);
    for (int i = 0; i < 4; ++i)
      CHECK(w.data[static_cast<std::size_t>(i)] ==
            doctest::Approx(-0.01 * q.data[static_cast<std::size_t>(i)]).epsilon(1e-6));
  }
  SUBCASE("applied update is near-orthogonal for random gradients") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
      Tensor w = Tensor::zeros({4, 8});
      Tensor g = testutil::random_tensor(rng, {4, 8});
      Tensor mom;
      muon_step(w, g, mom, 1.0, 0.95, 5);  // lr 1: w = -update
      Eigen::MatrixXd u(4, 8);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 8; ++j) u(i, j) = -w.at(i, j);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(u);
      for (int i = 0; i < svd.singularValues().size(); ++i)
        CHECK(std::abs(svd.singularValues()(i) - 1.0) < 0.3);
    }
  }
  SUBCASE("non-rank-2 tensors are rejected") {
    Tensor w{{4}, {1.0, 2.0, 3.0, 4.0}};
    Tensor g = Tensor::zeros({4});
    Tensor mom;
    CHECK_THROWS_AS(muon_step(w, g, mom, 0.1, 0.95, 5), ConfigError);
  }
}

TEST_CASE("gradient clipping") {
  Tensor a{{2}, {3.0, 0.0}};
  Tensor b{{1}, {4.0}};
  std::vector<Tensor*> grads = {&a, &b};
  const double norm = clip_global_norm(grads, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a.data[0] == doctest::Approx(0.6));
  CHECK(b.data[0] == doctest::Approx(0.8));
  // already inside the ball: untouched
  Tensor c{{1}, {0.5}};
  std::vector<Tensor*> g2 = {&c};
  clip_global_norm(g2, 1.0);
  CHECK(c.data[0] == 0.5);
}

TEST_CASE("four-group parameter routing") {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.dim = 16;
  cfg.context = 8;
  cfg.vocab = 16;
  cfg.variant = BlockVariant::TMM;
  ParamStore params = init_params(cfg);
  int matrices = 0, embeddings = 0, norms = 0, scalars = 0;
  for (const auto& [name, t] : params.items()) {
    switch (classify_param(name, t)) {
      case ParamGroupKind::Matrix:
        ++matrices;
        CHECK(t.rank() == 2);  // Muon only ever sees rank-2 tensors
        CHECK(name.find("emb") == std::string::npos);
        break;
      case ParamGroupKind::Embedding:
        ++embeddings;
        CHECK((name.rfind("emb.", 0) == 0 || name.rfind("aux_emb.", 0) == 0));
        break;
      case ParamGroupKind::NormAndBias:
        ++norms;
        CHECK(t.rank() == 1);
        break;
      case ParamGroupKind::Scalar:
        ++scalars;
        CHECK(t.numel() == 1);
        break;
    }
  }
  CHECK(matrices == 2 * 6);    // wq wk wv wo w1 w2 per layer
  CHECK(embeddings == 4);      // emb.tok emb.pos aux_emb.v.tok aux_emb.v.pos
  CHECK(norms == 2 * 6 + 1);   // ln1 ln2 ln_v.a ln_v.m b1 b2 per layer + ln_f
  CHECK(scalars == 2 * 2 * 4); // mu beta gamma nu, two substeps, two layers
}

TEST_CASE("model optimizer determinism and state round-trip") {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.dim = 8;
  cfg.context = 4;
  cfg.vocab = 8;
  cfg.variant = BlockVariant::HB;
  OptimConfig ocfg;
  ocfg.muon_lr = 0.05;
  ocfg.adamw_lr = 1e-3;

  auto fake_grads = [&](const ParamStore& p, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> grads;
    for (const auto& [name, t] : p.items()) grads.push_back(testutil::random_tensor(rng, t.shape, 0.1));
    return grads;
  };

  ParamStore p1 = init_params(cfg);
  ParamStore p2 = init_params(cfg);
  ModelOptimizer o1(p1, ocfg), o2(p2, ocfg);
  for (int k = 0; k < 3; ++k) {
    o1.step(p1, fake_grads(p1, 10 + k), 1.0);
    o2.step(p2, fake_grads(p2, 10 + k), 1.0);
  }
  for (std::size_t i = 0; i < p1.items().size(); ++i)
    CHECK(p1.items()[i].second.data == p2.items()[i].second.data);

  // state round-trip: a reloaded optimizer continues identically
  ModelOptimizer o3(p1, ocfg);
  o3.load_state(o1.state_tensors(), o1.steps_taken());
  ParamStore p3 = p1;
  o1.step(p1, fake_grads(p1, 99), 0.5);
  o3.step(p3, fake_grads(p3, 99), 0.5);
  for (std::size_t i = 0; i < p1.items().size(); ++i)
    CHECK(p1.items()[i].second.data == p3.items()[i].second.data);
}

TEST_CASE("sam_wrap") {
  // 2-parameter quadratic: L = 0.5 * lambda * ||x||^2, grad = lambda * x
  ParamStore params;
  params.add("x", Tensor{{2}, {1.0, 0.0}});
  const double lambda = 2.0;
  int calls = 0;
  std::vector<double> seen_second_point;
  GradFn grad_fn = [&](const ParamStore& p) {
    ++calls;
    const Tensor& x = p.get("x");
    seen_second_point = x.data;
    GradEval ge;
    ge.loss = 0.5 * lambda * (x.data[0] * x.data[0] + x.data[1] * x.data[1]);
    ge.grads.push_back(Tensor{{2}, {lambda * x.data[0], lambda * x.data[1]}});
    return ge;
  };

  SUBCASE("perturbation norm is rho and the gradient is taken at x + rho") {
    const double rho = 0.05;
    GradEval ge = sam_wrap(grad_fn, params, rho);
    // ||g|| = 2 at x=(1,0), so the ascent point is x + 0.025 * g = (1.05, 0)
    CHECK(seen_second_point[0] == doctest::Approx(1.05).epsilon(1e-12));
    const double moved = std::hypot(seen_second_point[0] - 1.0, seen_second_point[1]);
    CHECK(std::abs(moved - rho) < 1e-10);
    // SAM gradient of the quadratic is lambda * (x + rho)
    CHECK(ge.grads[0].data[0] == doctest::Approx(lambda * 1.05).epsilon(1e-12));
    // parameters restored exactly
    CHECK(params.get("x").data[0] == 1.0);
    CHECK(params.get("x").data[1] == 0.0);
  }
  SUBCASE("rho = 0 reduces to the plain gradient in one call") {
    calls = 0;
    GradEval ge = sam_wrap(grad_fn, params, 0.0);
    CHECK(calls == 1);
    CHECK(ge.grads[0].data[0] == doctest::Approx(2.0));
  }
  SUBCASE("zero gradient falls back to the plain gradient") {
    params.get("x").data = {0.0, 0.0};
    bool fell_back = false;
    GradEval ge = sam_wrap(grad_fn, params, 0.05, &fell_back);
    CHECK(fell_back);
    CHECK(ge.grads[0].data[0] == 0.0);
  }
}

TEST_CASE("sawd activates sam only in the wsd decay phase") {
  Schedule wsd;
  wsd.kind = ScheduleKind::Wsd;
  wsd.total = 100;
  wsd.warmup = 10;
  wsd.decay_start = 80;
  CHECK(!sam_active(SamMode::Sawd, wsd, 0));
  CHECK(!sam_active(SamMode::Sawd, wsd, 79));
  CHECK(sam_active(SamMode::Sawd, wsd, 80));
  CHECK(sam_active(SamMode::Sawd, wsd, 100));
  CHECK(sam_active(SamMode::On, wsd, 0));
  CHECK(!sam_active(SamMode::Off, wsd, 90));
  Schedule cosine = wsd;
  cosine.kind = ScheduleKind::WarmupCosine;
  CHECK(!sam_active(SamMode::Sawd, cosine, 90));
}

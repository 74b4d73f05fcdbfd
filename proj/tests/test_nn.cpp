#include <doctest.h>

#include <cmath>
#include <random>

#include "tami/error.hpp"
#include "tami/gradcheck.hpp"
#include "tami/nn.hpp"

using namespace tami;
using namespace tami::nn;

namespace {

std::vector<double> rand_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("forward basics") {
  Mlp id({{2, 2}, {Activation::identity}, 0});
  id.weight(0, 0, 0) = 1;
  id.weight(0, 0, 1) = 0;
  id.weight(0, 1, 0) = 0;
  id.weight(0, 1, 1) = 1;
  CHECK(id.forward(std::vector<double>{3.0, -4.0}) == std::vector<double>{3.0, -4.0});

  Mlp r({{2, 2}, {Activation::relu}, 0});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) r.weight(0, i, j) = i == j;
  }
  CHECK(r.forward(std::vector<double>{-1.0, 2.0}) == std::vector<double>{0.0, 2.0});
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) <= 1.0);
  CHECK_THROWS_AS(id.forward(std::vector<double>{1.0}), DataError);
}

TEST_CASE("initialization is seed deterministic with zero bias") {
  const MlpSpec spec{{5, 7, 3}, {Activation::relu, Activation::identity}, 42};
  Mlp a(spec), b(spec);
  CHECK(std::vector<double>(a.params().begin(), a.params().end()) ==
        std::vector<double>(b.params().begin(), b.params().end()));
  for (std::size_t r = 0; r < 7; ++r) CHECK(a.bias(0, r) == 0.0);
  const double he = std::sqrt(6.0 / 5.0);
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(a.weight(0, r, c)) <= he);
  }
  const double xavier = std::sqrt(6.0 / (7.0 + 3.0));
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 7; ++c) CHECK(std::abs(a.weight(1, r, c)) <= xavier);
  }
}

TEST_CASE("backward on a 1x1 linear layer") {
  Mlp lin({{1, 1}, {Activation::identity}, 0});
  lin.weight(0, 0, 0) = 2.0;
  lin.bias(0, 0) = 0.5;
  MlpTape tape;
  const std::vector<double> x = {3.0};
  lin.forward(x, tape);
  CHECK(tape.output()[0] == 6.5);
  std::vector<double> dp(2, 0.0), dx(1);
  lin.backward(tape, std::vector<double>{1.5}, dp, dx);
  CHECK(dp[0] == 1.5 * 3.0);
  CHECK(dp[1] == 1.5);
  CHECK(dx[0] == 1.5 * 2.0);
}

TEST_CASE("zero upstream gives zero gradients") {
  Mlp net({{4, 6, 2}, {Activation::relu, Activation::sigmoid}, 3});
  MlpTape tape;
  std::mt19937_64 rng(1);
  net.forward(rand_vec(4, rng), tape);
  std::vector<double> dp(net.num_params(), 0.0);
  net.backward(tape, std::vector<double>(2, 0.0), dp);
  for (double g : dp) CHECK(g == 0.0);
}

TEST_CASE("backward matches central differences on random shapes") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> width(1, 6);
  const Activation acts[] = {Activation::relu, Activation::identity, Activation::sigmoid};
  for (int trial = 0; trial < 10; ++trial) {
    MlpSpec spec;
    const std::size_t layers = 1 + trial % 3;
    spec.sizes.push_back(width(rng));
    for (std::size_t l = 0; l < layers; ++l) {
      spec.sizes.push_back(width(rng));
      spec.activations.push_back(acts[(trial + l) % 3]);
    }
    spec.seed = trial;
    Mlp net(spec);
    {
      auto p = net.mutable_params();
      for (double& x : p) x += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
    }
    const auto x = rand_vec(net.input_dim(), rng);
    const auto w = rand_vec(net.output_dim(), rng);
    auto f = [&](const std::vector<double>& in) {
      const auto y = net.forward(in);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
      return s;
    };
    MlpTape tape;
    net.forward(x, tape);
    std::vector<double> dp(net.num_params(), 0.0), dx(net.input_dim());
    net.backward(tape, w, dp, dx);
    auto p = net.mutable_params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i], h = fd_step(saved);
      p[i] = saved + h;
      const double fp = f(x);
      p[i] = saved - h;
      const double fm = f(x);
      p[i] = saved;
      CHECK(relative_error(dp[i], (fp - fm) / (2 * h)) < 1e-5);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      const double h = fd_step(x[i]);
      xp[i] += h;
      xm[i] -= h;
      CHECK(relative_error(dx[i], (f(xp) - f(xm)) / (2 * h)) < 1e-5);
    }
  }
}

TEST_CASE("stale tapes are rejected") {
  Mlp net({{2, 2}, {Activation::identity}, 0});
  MlpTape tape;
  net.forward(std::vector<double>{1, 2}, tape);
  net.mutable_params()[0] += 1.0;
  std::vector<double> dp(net.num_params(), 0.0);
  CHECK_THROWS(net.backward(tape, std::vector<double>{1, 1}, dp));
  Mlp other({{2, 2}, {Activation::identity}, 1});
  MlpTape fresh;
  net.forward(std::vector<double>{1, 2}, fresh);
  CHECK_THROWS(other.backward(fresh, std::vector<double>{1, 1}, dp));
}

TEST_CASE("binary cross-entropy") {
  CHECK(bce_loss(0.5, 1.0).loss == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(0.5, 1.0).loss == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(bce_loss(1.0, 1.0).loss < 2e-7);
  CHECK(std::isfinite(bce_loss(0.0, 1.0).loss));
  CHECK(bce_loss(0.0, 1.0).loss == doctest::Approx(-std::log(kProbClamp)));
  const double p = 0.3, h = 1e-6;
  const double fd = (bce_loss(p + h, 0.0).loss - bce_loss(p - h, 0.0).loss) / (2 * h);
  CHECK(relative_error(bce_loss(p, 0.0).dloss_dp, fd) < 1e-6);
}

TEST_CASE("adam") {
  SUBCASE("zero gradients leave parameters unchanged") {
    std::vector<double> v = {1.0, -2.0}, g = {0.0, 0.0};
    AdamState st({}, {2});
    for (int i = 0; i < 10; ++i) st.step({{"w", v, g}});
    CHECK(v == std::vector<double>{1.0, -2.0});
  }
  SUBCASE("first step moves by about -lr") {
    std::vector<double> v = {0.0}, g = {1.0};
    AdamState st({}, {1});
    st.step({{"w", v, g}});
    // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
    CHECK(v[0] == doctest::Approx(-1e-4 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(st.step_count() == 1);
  }
  SUBCASE("deterministic") {
    std::vector<double> a = {0.3, 0.1}, b = a, g = {0.2, -0.7};
    AdamState sa({}, {2}), sb({}, {2});
    for (int i = 0; i < 5; ++i) {
      sa.step({{"w", a, g}});
      sb.step({{"w", b, g}});
    }
    CHECK(a == b);
  }
  SUBCASE("non-finite gradient names the block and changes nothing") {
    std::vector<double> a = {1.0}, b = {2.0}, ga = {0.5}, gb = {NAN};
    AdamState st({}, {1, 1});
    try {
      st.step({{"first", a, ga}, {"second", b, gb}});
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(std::string(e.what()).find("second") != std::string::npos);
    }
    CHECK(a[0] == 1.0);
    CHECK(b[0] == 2.0);
  }
}

TEST_CASE("200 Adam steps halve the BCE of a small MLP") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (int i = 0; i < 32; ++i) {
      xs.push_back(rand_vec(4, rng));
      ys.push_back(rng() % 2);
    }
    Mlp net({{4, 16, 1}, {Activation::relu, Activation::sigmoid}, seed});
    AdamState st({0.01}, {net.num_params()});
    auto loss = [&] {
      double l = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) l += bce_loss(net.forward(xs[i])[0], ys[i]).loss;
      return l / xs.size();
    };
    const double before = loss();
    std::vector<double> grad(net.num_params());
    for (int step = 0; step < 200; ++step) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        MlpTape tape;
        net.forward(xs[i], tape);
        const auto b = bce_loss(tape.output()[0], ys[i]);
        net.backward(tape, std::vector<double>{b.dloss_dp / xs.size()}, grad);
      }
      st.step({{"net", net.mutable_params(), grad}});
    }
    CHECK(loss() <= 0.5 * before);
  }
}

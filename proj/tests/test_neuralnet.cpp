#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "figphm/error.hpp"
#include "figphm/neuralnet.hpp"
#include "figphm/rng.hpp"

using namespace figphm;
using namespace figphm::nn;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double range = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-range, range);
  return t;
}

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("conv1d") {
  const Tensor x({3, 1}, std::vector<double>{1, 2, 3});
  const Tensor k({1, 2, 1}, std::vector<double>{1, 1});
  const Tensor b({1}, std::vector<double>{0});
  const auto y = conv1d(x, k, b);
  CHECK(y.shape() == std::vector<std::size_t>{2, 1});
  CHECK(vec(y) == std::vector<double>{3, 5});

  const auto c = conv1d(x, Tensor({1, 2, 1}), Tensor({1}, std::vector<double>{0.7}));
  CHECK(vec(c) == std::vector<double>{0.7, 0.7});

  const auto id = conv1d(x, Tensor({1, 1, 1}, std::vector<double>{1}), Tensor({1}));
  CHECK(vec(id) == vec(x));

  CHECK_THROWS_WITH(conv1d(Tensor({1, 1}), k, b), doctest::Contains("sequence shorter than kernel"));
}

TEST_CASE("conv1d is linear in its input") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 3 + rng.below(6), d = 1 + rng.below(4), w = 1 + rng.below(3), F = 1 + rng.below(4);
    const auto k = random_tensor({F, w, d}, rng);
    const Tensor zero_bias({F});
    const auto x = random_tensor({T, d}, rng);
    const auto y = random_tensor({T, d}, rng);
    const double a = rng.uniform(-2, 2), c = rng.uniform(-2, 2);
    Tensor mix({T, d});
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + c * y[i];
    const auto lhs = conv1d(mix, k, zero_bias);
    const auto cx = conv1d(x, k, zero_bias);
    const auto cy = conv1d(y, k, zero_bias);
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (a * cx[i] + c * cy[i])) < 1e-10);
  }
}

TEST_CASE("maxpool1d") {
  const auto p = maxpool1d(Tensor({4, 1}, std::vector<double>{3, 5, 2, 4}), 2);
  CHECK(vec(p.output) == std::vector<double>{5, 4});
  const auto tie = maxpool1d(Tensor({4, 1}, std::vector<double>{1, 1, 1, 1}), 2);
  CHECK(vec(tie.output) == std::vector<double>{1, 1});
  const auto g = maxpool1d_backward(Tensor({2, 1}, std::vector<double>{1, 1}), tie.argmax, {4, 1});
  CHECK(vec(g) == std::vector<double>{1, 0, 1, 0});
  const auto odd = maxpool1d(Tensor({5, 1}, std::vector<double>{1, 2, 3, 4, 99}), 2);
  CHECK(vec(odd.output) == std::vector<double>{2, 4});
  CHECK_THROWS(maxpool1d(Tensor({1, 1}), 2));

  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor({2 + rng.below(9), 1 + rng.below(3)}, rng);
    const auto r = relu(x);
    for (double v : r.values()) CHECK(v >= 0);
    const auto y = maxpool1d(x, 2);
    const double mx = *std::max_element(x.values().begin(), x.values().end());
    for (double v : y.output.values()) CHECK(v <= mx);
  }
}

TEST_CASE("dropout") {
  Rng rng(3);
  const auto x = random_tensor({10, 4}, rng);
  for (Mode m : {Mode::train, Mode::eval}) CHECK(vec(dropout(x, 0.0, m, 1).output) == vec(x));
  CHECK(vec(dropout(x, 0.7, Mode::eval, 1).output) == vec(x));
  CHECK_THROWS(dropout(x, 1.0, Mode::train, 1));
  CHECK(vec(dropout(x, 0.5, Mode::train, 9).output) == vec(dropout(x, 0.5, Mode::train, 9).output));

  const Tensor ones({100000}, 1.0);
  const auto d = dropout(ones, 0.5, Mode::train, 42);
  double kept = 0, sum = 0;
  for (double v : d.output.values()) {
    kept += v != 0;
    sum += v;
  }
  CHECK(std::abs(kept / 100000 - 0.5) <= 0.01);
  CHECK(std::abs(sum / 100000 - 1.0) <= 0.02);
}

TEST_CASE("dense and activations") {
  const Tensor x({2}, std::vector<double>{-1, 2});
  const Tensor I({2, 2}, std::vector<double>{1, 0, 0, 1});
  CHECK(vec(dense(x, I, Tensor({2}), Activation::none)) == vec(x));
  CHECK(vec(dense(x, I, Tensor({2}), Activation::relu)) == std::vector<double>{0, 2});
  CHECK(sigmoid(0) == 0.5);
  CHECK(sigmoid(-800) >= 0);
  CHECK(sigmoid(800) <= 1);
  CHECK(std::isfinite(sigmoid(-800)));
  CHECK_THROWS(dense(x, Tensor({2, 3}), Tensor({2}), Activation::none));
}

TEST_CASE("bce loss") {
  CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(1.0, 1) <= 1e-6);
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const double p = rng.uniform();
    CHECK(bce_loss(p, 1) == doctest::Approx(bce_loss(1 - p, 0)).epsilon(1e-12));
    CHECK(bce_loss(p, 0) >= 0);
  }
}

TEST_CASE("bce loss from logits agrees with the probability form") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double z = 20 * rng.uniform() - 10;
    for (double y : {0.0, 1.0}) {
      CHECK(bce_loss_logit(z, y) == doctest::Approx(bce_loss(sigmoid(z), y)).epsilon(1e-9));
    }
  }
  // Both saturate at the clamp.
  CHECK(bce_loss_logit(-60, 1) == doctest::Approx(bce_loss(0.0, 1)));
  CHECK(bce_loss_logit(60, 1) == doctest::Approx(bce_loss(1.0, 1)));
  CHECK(bce_loss_logit(60, 0) == doctest::Approx(bce_loss(1.0, 0)));
}

TEST_CASE("adam") {
  std::vector<double> p{1, -2, 3};
  const std::vector<double> zero(3, 0.0);
  AdamState s;
  adam_step(p, zero, s);
  CHECK(p == std::vector<double>{1, -2, 3});
  CHECK(s.step == 1);

  std::vector<double> q{0, 0, 0};
  const std::vector<double> g{0.5, -3, 1e-3};
  AdamState t;
  adam_step(q, g, t);
  for (std::size_t i = 0; i < 3; ++i) {
    // After one step m_hat = g and v_hat = g^2.
    const double expected = -1e-3 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(q[i] == doctest::Approx(expected).epsilon(1e-12));
  }

  std::vector<double> a{1, 2}, b{1, 2};
  AdamState sa = t, sb = t;
  sa.m.assign(2, 0.1);
  sa.v.assign(2, 0.2);
  sb = sa;
  adam_step(a, std::vector<double>{0.3, -0.4}, sa);
  adam_step(b, std::vector<double>{0.3, -0.4}, sb);
  CHECK(a == b);
}

TEST_CASE("gradient check on a linear model") {
  Rng rng(5);
  const auto w = random_tensor({6}, rng);
  const auto x = random_tensor({6}, rng);
  auto loss = [&](std::span<const double> p) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * x[i];
    return s;
  };
  CHECK(gradient_check(loss, w.values(), x.values(), 1e-4) <= 1e-9);
  CHECK(relative_error(0, 0) == 0);
}

TEST_CASE("layer gradients against finite differences") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 6 + rng.below(4), d = 2, w = 2 + rng.below(2), F = 3;
    auto x = random_tensor({T, d}, rng);
    auto k = random_tensor({F, w, d}, rng);
    auto b = random_tensor({F}, rng, 0.1);
    const auto up = random_tensor({T - w + 1, F}, rng);
    // loss = sum(up * conv(x))
    auto loss_x = [&](std::span<const double> p) {
      Tensor xi({T, d}, std::vector<double>(p.begin(), p.end()));
      const auto y = conv1d(xi, k, b);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * up[i];
      return s;
    };
    Tensor gx({T, d}), gk({F, w, d}), gb({F});
    conv1d_backward(x, k, up, &gx, gk, gb);
    CHECK(gradient_check(loss_x, x.values(), gx.values(), 1e-5) < 1e-7);
    auto loss_k = [&](std::span<const double> p) {
      Tensor ki({F, w, d}, std::vector<double>(p.begin(), p.end()));
      const auto y = conv1d(x, ki, b);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * up[i];
      return s;
    };
    CHECK(gradient_check(loss_k, k.values(), gk.values(), 1e-5) < 1e-7);
    double sum_up = 0;
    for (std::size_t t = 0; t < T - w + 1; ++t) sum_up += up.at(t, 0);
    CHECK(gb[0] == doctest::Approx(sum_up).epsilon(1e-12));

    const Tensor dW({2, 3}, std::vector<double>{0.3, -0.2, 0.5, 0.1, 0.4, -0.6});
    const Tensor db({2}, std::vector<double>{0.05, -0.1});
    const auto v = random_tensor({3}, rng);
    const Tensor gout({2}, std::vector<double>{1.0, -0.5});
    for (Activation act : {Activation::none, Activation::sigmoid}) {
      const auto out = dense(v, dW, db, act);
      Tensor gin({3}), gw({2, 3}), gbias({2});
      dense_backward(v, dW, out, gout, act, &gin, gw, gbias);
      auto loss_v = [&](std::span<const double> p) {
        const auto o = dense(Tensor({3}, std::vector<double>(p.begin(), p.end())), dW, db, act);
        return o[0] * gout[0] + o[1] * gout[1];
      };
      CHECK(gradient_check(loss_v, v.values(), gin.values(), 1e-5) < 1e-7);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "figphm_nn_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "m.ckpt";
  const std::vector<double> params{1.5, -0.0, 3.25e-300, 1e300};
  nlohmann::json manifest{{"kind", "demo"}};
  write_checkpoint(path, manifest, params);
  const auto c = read_checkpoint(path);
  CHECK(c.params == params);
  CHECK(c.manifest["kind"] == "demo");
  CHECK(c.manifest["version"] == std::string(kCheckpointVersion));

  std::ifstream raw(path, std::ios::binary);
  std::string first;
  std::getline(raw, first);
  CHECK(first == kCheckpointVersion);

  {
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "figphm-ckpt-0\n{}\n";
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.ckpt"), DataError);
  {
    std::ofstream trunc(dir / "trunc.ckpt", std::ios::binary);
    trunc << kCheckpointVersion << "\n{\"param_count\": 3}\n" << std::string(8, '\0');
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "trunc.ckpt"), DataError);
  std::filesystem::remove_all(dir);
}

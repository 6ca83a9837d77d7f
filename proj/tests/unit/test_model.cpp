#include <algorithm>
#include <cmath>
#include <random>

#include "common.hpp"
#include "crossdose/error.hpp"
#include "crossdose/model.hpp"
#include "crossdose/trainer.hpp"
#include "doctest.h"

using namespace crossdose;
using namespace crossdose::nn;

namespace {

// 3x3 conv + bias + BN (gamma, beta) per unit, 1x1 head with bias.
std::size_t expected_params(int in, int depth, int base) {
  auto unit = [](std::size_t i, std::size_t o) { return 9 * i * o + 3 * o; };
  std::size_t n = 0;
  std::size_t prev = static_cast<std::size_t>(in);
  for (int l = 0; l < depth; ++l) {
    const std::size_t c = static_cast<std::size_t>(base) << l;
    n += unit(prev, c) + unit(c, c);
    prev = c;
  }
  for (int l = depth - 2; l >= 0; --l) {
    const std::size_t c = static_cast<std::size_t>(base) << l;
    n += unit(2 * c, c) + unit(2 * c, c) + unit(c, c);
  }
  return n + static_cast<std::size_t>(base) + 1;
}

Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, float lo = 0.0f, float hi = 4.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(n, c, h, w);
  for (auto& v : t.data) v = u(rng);
  return t;
}

Parameter& param(Model& m, const std::string& name) {
  for (auto& p : m.parameters())
    if (p.name == name) return p;
  throw std::runtime_error("no parameter " + name);
}

double dot_loss(const Tensor& out, const Tensor& r) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<double>(out.data[i]) * r.data[i];
  return s;
}

}  // namespace

TEST_CASE("parameter counts follow the layer formula") {
  for (Variant v : {Variant::kResidual, Variant::kDirect, Variant::kDoseEmbedded}) {
    ModelSpec s;
    s.variant = v;
    const auto m = Model::build(s, 1);
    CHECK(m.parameter_count() == expected_params(s.input_channels(), 3, 16));
  }
  CHECK(Model::build(ModelSpec{}, 0).parameter_count() == 130289);
  ModelSpec small;
  small.depth = 2;
  small.base_channels = 8;
  CHECK(Model::build(small, 0).parameter_count() == expected_params(1, 2, 8));
  CHECK(Model::build(ModelSpec{}, 0).describe().find("total parameters: 130289") != std::string::npos);
}

TEST_CASE("same seed builds the same network, variants share backbones") {
  ModelSpec r, d;
  d.variant = Variant::kDirect;
  const auto a = Model::build(r, 42), b = Model::build(r, 42), c = Model::build(d, 42), e = Model::build(r, 43);
  REQUIRE(a.parameters().size() == c.parameters().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].value == b.parameters()[i].value);
    CHECK(a.parameters()[i].value == c.parameters()[i].value);
    differs |= a.parameters()[i].value != e.parameters()[i].value;
  }
  CHECK(differs);
}

TEST_CASE("freshly built residual model is the identity on nonnegative input") {
  const auto m = Model::build(ModelSpec{}, 7);
  const auto x = random_tensor(2, 1, 16, 16, 3);
  CHECK(m.infer(x).data == x.data);
  auto neg = x;
  neg.data[5] = -2.0f;
  CHECK(m.infer(neg).data[5] == doctest::Approx(-0.02f));
  for (float v : m.predict_noise(x).data) CHECK(v == 0.0f);
}

TEST_CASE("residual output composes backbone and head") {
  auto m = Model::build(ModelSpec{}, 9);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd(0.0f, 0.5f);
  for (auto& v : param(m, "head.weight").value) v = nd(rng);
  param(m, "head.bias").value[0] = -1.0f;
  const auto x = random_tensor(1, 1, 16, 16, 4);
  const auto f = m.predict_noise(x);
  const auto y = m.infer(x);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const float pre = f.data[i] + x.data[i];
    CHECK(y.data[i] == doctest::Approx(pre >= 0 ? pre : 0.01f * pre));
  }
}

TEST_CASE("shapes and usage errors") {
  const auto m = Model::build(ModelSpec{}, 1);
  CHECK_THROWS_AS(m.infer(Tensor(1, 1, 18, 16)), ValidationError);
  CHECK_THROWS_AS(m.infer(Tensor(1, 2, 16, 16)), ValidationError);
  const std::vector<float> code{0.5f};
  CHECK_THROWS_AS(m.infer(Tensor(1, 1, 16, 16), code), UsageError);

  ModelSpec de;
  de.variant = Variant::kDoseEmbedded;
  const auto e = Model::build(de, 1);
  CHECK_THROWS_AS(e.infer(Tensor(1, 1, 16, 16)), UsageError);
  CHECK_THROWS_AS(e.denoise(RasterF32(16, 16)), UsageError);
  CHECK_THROWS_AS(e.predict_noise(Tensor(1, 1, 16, 16)), UsageError);
  CHECK(e.infer(Tensor(1, 1, 16, 16), code).c == 1);

  const auto odd = m.denoise(testutil::random_raster(30, 21, 2));
  CHECK(odd.height == 30);
  CHECK(odd.width == 21);

  ModelSpec bad;
  bad.depth = 1;
  CHECK_THROWS_AS(Model::build(bad, 0), ValidationError);
  CHECK_THROWS_AS(parse_variant("unet"), ValidationError);
  CHECK(parse_variant("dose-embedded") == Variant::kDoseEmbedded);
}

TEST_CASE("dose code endpoints") {
  CHECK(encode_dose(Dose(1)) == doctest::Approx(0.0f));
  CHECK(encode_dose(Dose(50)) == doctest::Approx(1.0f));
  CHECK(encode_dose(Dose(10)) == doctest::Approx(std::log10(10.0) / std::log10(50.0)));
}

TEST_CASE("dose-embedded outputs separate by dose after a few steps") {
  ModelSpec s;
  s.variant = Variant::kDoseEmbedded;
  s.depth = 2;
  s.base_channels = 8;
  auto m = Model::build(s, 5);
  const auto x = random_tensor(2, 1, 16, 16, 8);
  const std::vector<float> codes{0.0f, 1.0f};
  std::vector<std::vector<float>> vel;
  for (const auto& p : m.parameters()) vel.emplace_back(p.value.size(), 0.0f);
  for (int step = 0; step < 10; ++step) {
    Tape tape;
    const auto out = m.forward_train(x, codes, tape);
    // Target: x scaled by a dose-dependent factor, so the map must depend on the code.
    Tensor g(out.n, out.c, out.h, out.w);
    for (int i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < out.plane(); ++k) {
        const float target = x.channel(i, 0)[k] * (i == 0 ? 0.5f : 1.5f);
        g.channel(i, 0)[k] = (out.channel(i, 0)[k] - target) / static_cast<float>(out.size());
      }
    m.zero_grad();
    m.backward(tape, g);
    for (std::size_t p = 0; p < m.parameters().size(); ++p) {
      auto& prm = m.parameters()[p];
      train::sgd_momentum_step<float>(prm.value, prm.grad, vel[p], 0.05, 0.9, 0.0);
    }
  }
  const auto one = random_tensor(1, 1, 16, 16, 8);
  const std::vector<float> lo{0.0f}, hi{1.0f};
  const auto a = m.infer(one, lo), b = m.infer(one, hi);
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a.data[i] - b.data[i]);
  CHECK(diff / static_cast<double>(a.size()) > 1e-3);
}

TEST_CASE("backward agrees with per-tensor directional finite differences") {
  // Float differences across LeakyReLU and max-pool kinks are unreliable, so the
  // internal slope is raised to keep the network close to smooth.
  for (Variant v : {Variant::kResidual, Variant::kDirect}) {
    ModelSpec s;
    s.variant = v;
    s.depth = 2;
    s.base_channels = 8;
    s.internal_leaky_slope = 0.9;
    auto m = Model::build(s, 11);
    std::mt19937_64 rng(2);
    std::normal_distribution<float> nd(0.0f, 0.3f);
    for (auto& w : param(m, "head.weight").value) w = nd(rng);
    const auto x = random_tensor(2, 1, 8, 8, 12, 0.5f, 4.0f);
    const auto r = random_tensor(2, 1, 8, 8, 13, -1.0f, 1.0f);

    Tape tape;
    m.zero_grad();
    m.forward_train(x, {}, tape);
    m.backward(tape, r);
    auto loss = [&] {
      Tape t;
      return dot_loss(m.forward_train(x, {}, t), r);
    };
    const double eps = 1e-3;
    for (auto& p : m.parameters()) {
      std::vector<float> dir(p.value.size());
      double analytic = 0;
      for (std::size_t i = 0; i < dir.size(); ++i) {
        dir[i] = nd(rng);
        analytic += static_cast<double>(dir[i]) * p.grad[i];
      }
      const auto keep = p.value;
      for (std::size_t i = 0; i < dir.size(); ++i) p.value[i] = keep[i] + static_cast<float>(eps) * dir[i];
      const double up = loss();
      for (std::size_t i = 0; i < dir.size(); ++i) p.value[i] = keep[i] - static_cast<float>(eps) * dir[i];
      const double dn = loss();
      p.value = keep;
      INFO(p.name);
      const double fd = (up - dn) / (2 * eps);
      CHECK(std::abs(fd - analytic) <= 0.05 * std::max(std::abs(fd), std::abs(analytic)) + 0.02);
    }
  }
}

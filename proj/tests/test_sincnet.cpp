#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "doctest.h"
#include "hymad/ops.hpp"
#include "hymad/optim.hpp"
#include "hymad/sincnet.hpp"
#include "test_util.hpp"

using namespace hymad;
using namespace hymad::sincnet;
using namespace hymad::testing;

namespace {

// |DFT| of the zero-padded kernel at bin frequencies k·fs/n.
std::vector<double> dft_magnitude(const std::vector<double>& taps, std::size_t n) {
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < taps.size(); ++t)
      acc += taps[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) /
                                            static_cast<double>(n));
    mag[k] = std::abs(acc);
  }
  return mag;
}

}  // namespace

TEST_CASE("constrain_cutoffs") {
  auto c = constrain_cutoffs(0.0, 0.0, 8000.0);
  CHECK(c.f1 == 0.0);
  CHECK(c.f2 == 1.0);
  CHECK(constrain_cutoffs(-50.0, 3.0, 8000.0).f1 == 50.0);
  c = constrain_cutoffs(100.0, 40.0, 8000.0);
  CHECK(c.f1 == 100.0);
  CHECK(c.f2 == 141.0);

  SUBCASE("ordering holds for arbitrary raw values") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(-20000.0, 20000.0);
    for (int i = 0; i < 1000; ++i) {
      c = constrain_cutoffs(d(rng), d(rng), 8000.0);
      CHECK(c.f1 >= 0.0);
      CHECK(c.f1 < c.f2);
      CHECK(c.f2 <= 4000.0);
    }
  }
}

TEST_CASE("build_filter") {
  const double fs = 8000.0;
  auto w = hamming_window(129);
  auto h = build_filter(300.0, 700.0, 129, fs, Window::kHamming);
  CHECK(std::fabs(h.at(64) - 2.0 * (700.0 / fs - 300.0 / fs) * w[64]) <= 1e-15);

  auto flat = bandpass_taps(500.0, 500.0, 65, fs, Window::kNone);
  for (double v : flat) CHECK(v == 0.0);

  SUBCASE("even symmetry") {
    for (auto win : {Window::kHamming, Window::kNone}) {
      auto taps = bandpass_taps(37.0, 912.0, 251, fs, win);
      for (std::size_t j = 0; j < 125; ++j) CHECK(std::fabs(taps[j] - taps[250 - j]) <= 1e-12);
    }
  }

  SUBCASE("band-pass response") {
    auto taps = bandpass_taps(50.0, 150.0, 251, fs, Window::kHamming);
    const std::size_t n = 8000;  // 1 Hz bins
    auto mag = dft_magnitude(taps, n);
    double pass = 0.0, stop = 0.0;
    int np = 0, ns = 0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
      const double f = static_cast<double>(k);
      if (f >= 50.0 && f <= 150.0) {
        pass += mag[k];
        ++np;
      } else if (f <= 25.0 || f >= 300.0) {
        stop += mag[k];
        ++ns;
      }
    }
    CHECK(pass / np >= 10.0 * (stop / ns));
  }

  CHECK_THROWS_AS(build_filter(200.0, 100.0, 65, fs, Window::kNone), ValidationError);
  CHECK_THROWS_AS(build_filter(100.0, 4001.0, 65, fs, Window::kNone), ValidationError);
  CHECK_THROWS_AS(build_filter(100.0, 200.0, 64, fs, Window::kNone), ValidationError);
}

TEST_CASE("init_filterbank") {
  auto bank = init_filterbank(4, 8000.0, InitStrategy::kLinear);
  auto cuts = bank.cutoffs();
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::fabs(cuts[k].f1 - 1000.0 * k) <= 1e-9);
    CHECK(std::fabs(cuts[k].f2 - 1000.0 * (k + 1)) <= 1e-9);
  }
  auto single = init_filterbank(1, 8000.0, InitStrategy::kLinear).cutoffs();
  CHECK(single[0].f1 == 0.0);
  CHECK(single[0].f2 == 4000.0);

  auto low = init_filterbank(32, 8000.0, InitStrategy::kLowBand).cutoffs();
  CHECK(std::fabs(low.back().f2 - 1000.0) <= 1e-9);
  for (std::size_t k = 0; k < 32; ++k) {
    CHECK(std::fabs(low[k].f1 - 31.25 * k) <= 1e-9);
    CHECK(std::fabs(low[k].f2 - 31.25 * (k + 1)) <= 1e-9);
  }
  CHECK_THROWS_AS(init_filterbank(0, 8000.0, InitStrategy::kLinear), ValidationError);
}

TEST_CASE("sinc_conv_forward") {
  std::mt19937_64 rng(2);
  auto bank = init_filterbank(4, 8000.0, InitStrategy::kLinear, 17);
  auto kernels = sinc_kernels(bank);

  SUBCASE("impulse reproduces kernels") {
    std::vector<double> x(64, 0.0);
    const std::size_t at = 32;
    x[at] = 1.0;
    auto y = sinc_conv_forward(Tensor::from({64}, x), bank).values;
    CHECK(y.shape() == Shape{4, 64});
    for (std::size_t k = 0; k < 4; ++k)
      for (long n = -8; n <= 8; ++n)
        CHECK(y.at(k, at + n) == doctest::Approx(kernels.at(k, n + 8)).epsilon(1e-14));
  }
  SUBCASE("zero input") {
    auto y = sinc_conv_forward(Tensor::zeros({64}), bank).values;
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("double-loop oracle") {
    auto x = random_tensor({64}, rng);
    auto expect = naive_conv_same(std::vector<double>(x.data().begin(), x.data().end()),
                                  to_mat(kernels));
    CHECK(max_abs_diff(sinc_conv_forward(x, bank).values.data(), flatten(expect)) <= 1e-10);
  }
  SUBCASE("linearity") {
    auto x = random_tensor({96}, rng), z = random_tensor({96}, rng);
    const double a = 1.7, b = -0.3;
    std::vector<double> mix(96);
    for (std::size_t i = 0; i < 96; ++i) mix[i] = a * x.at(i) + b * z.at(i);
    auto yx = sinc_conv_forward(x, bank).values, yz = sinc_conv_forward(z, bank).values;
    auto ym = sinc_conv_forward(Tensor::from({96}, mix), bank).values;
    for (std::size_t i = 0; i < ym.numel(); ++i)
      CHECK(std::fabs(ym.at(i) - (a * yx.at(i) + b * yz.at(i))) <= 1e-10);
  }
  SUBCASE("pooled output length") {
    auto y = sinc_conv_pooled(random_tensor({8000}, rng), init_filterbank(8, 8000.0, InitStrategy::kLowBand, 129), 16);
    CHECK(y.values.shape() == Shape{8, 500});
  }
  CHECK_THROWS_AS(sinc_conv_forward(Tensor::zeros({10}), bank), ValidationError);
}

TEST_CASE("cutoff gradients match finite differences") {
  std::mt19937_64 rng(3);
  auto bank = init_filterbank(4, 8000.0, InitStrategy::kLowBand, 33);
  // Move off the |θ| kink at zero and away from band edges.
  for (std::size_t k = 0; k < 4; ++k) {
    bank.theta1.mutable_data()[k] += 17.0 + 3.0 * k;
    bank.theta2.mutable_data()[k] -= 40.0;
  }
  bank.theta1.mutable_data()[1] *= -1.0;
  auto x = random_tensor({128}, rng);
  auto report = grad_check(
      [&] {
        auto z = sinc_conv_pooled(x, bank, 4).values;
        return mean(mul(z, z));
      },
      {{"theta1", bank.theta1}, {"theta2", bank.theta2}});
  CHECK(report.max_rel_err <= 1e-4);

  SUBCASE("optimizer steps keep the ordering") {
    AdamW opt({bank.theta1, bank.theta2}, {.lr = 500.0, .weight_decay = 0.0});
    for (int step = 0; step < 20; ++step) {
      opt.zero_grad();
      auto z = sinc_conv_pooled(x, bank, 4).values;
      backward(scale(mean(mul(z, z)), -1.0));
      opt.step();
      for (const auto& c : bank.cutoffs()) {
        CHECK(c.f1 >= 0.0);
        CHECK(c.f1 < c.f2);
        CHECK(c.f2 <= 4000.0);
      }
    }
  }
}

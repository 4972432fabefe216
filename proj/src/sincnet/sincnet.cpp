#include "hymad/sincnet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hymad/ops.hpp"

namespace hymad::sincnet {

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// 2g·sinc(2πgn) with sinc(0) = 1; for n != 0 this is sin(2πgn)/(πn).
double lowpass_tap(double g, double n) {
  if (n == 0.0) return 2.0 * g;
  return std::sin(2.0 * std::numbers::pi * g * n) / (std::numbers::pi * n);
}

// d/dg of lowpass_tap: 2cos(2πgn), which also holds at n = 0.
double lowpass_tap_dg(double g, double n) {
  return 2.0 * std::cos(2.0 * std::numbers::pi * g * n);
}

void check_kernel_len(std::size_t length) {
  if (length == 0 || length % 2 == 0) {
    throw ValidationError("sinc kernel length must be odd and positive, got " +
                          std::to_string(length));
  }
}

}  // namespace

Cutoffs constrain_cutoffs(double theta1, double theta2, double fs,
                          double min_band) {
  const double nyquist = fs / 2.0;
  Cutoffs c;
  c.f1 = std::min(std::fabs(theta1), nyquist - min_band);
  c.f2 = std::min(c.f1 + min_band + std::fabs(theta2), nyquist);
  return c;
}

std::vector<double> hamming_window(std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (length < 2) return w;
  const double denom = static_cast<double>(length - 1);
  for (std::size_t j = 0; j < length; ++j) {
    w[j] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi *
                                  static_cast<double>(j) / denom);
  }
  return w;
}

std::vector<double> bandpass_taps(double f1, double f2, std::size_t length,
                                  double fs, Window window) {
  check_kernel_len(length);
  const auto half = static_cast<double>((length - 1) / 2);
  const double g1 = f1 / fs, g2 = f2 / fs;
  const auto w = window == Window::kHamming ? hamming_window(length)
                                            : std::vector<double>(length, 1.0);
  std::vector<double> taps(length);
  for (std::size_t j = 0; j < length; ++j) {
    const double n = static_cast<double>(j) - half;
    taps[j] = w[j] * (lowpass_tap(g2, n) - lowpass_tap(g1, n));
  }
  return taps;
}

Tensor build_filter(double f1, double f2, std::size_t length, double fs,
                    Window window) {
  if (!(f1 >= 0.0 && f1 < f2 && f2 <= fs / 2.0)) {
    throw ValidationError("build_filter: cutoffs must satisfy 0 <= f1 < f2 <= "
                          "fs/2, got f1=" + std::to_string(f1) +
                          " f2=" + std::to_string(f2));
  }
  return Tensor::from({length}, bandpass_taps(f1, f2, length, fs, window));
}

std::vector<Cutoffs> SincFilterBank::cutoffs() const {
  std::vector<Cutoffs> out;
  out.reserve(channels());
  for (std::size_t k = 0; k < channels(); ++k)
    out.push_back(constrain_cutoffs(theta1.at(k), theta2.at(k), fs, min_band));
  return out;
}

SincFilterBank init_filterbank(std::size_t channels, double fs,
                               InitStrategy strategy, std::size_t kernel_len,
                               Window window) {
  if (channels == 0) {
    throw ValidationError("init_filterbank: filter count must be >= 1");
  }
  check_kernel_len(kernel_len);
  const double top = strategy == InitStrategy::kLinear ? fs / 2.0 : fs / 8.0;
  const double width = top / static_cast<double>(channels);
  SincFilterBank bank;
  bank.kernel_len = kernel_len;
  bank.fs = fs;
  bank.window = window;
  if (width <= bank.min_band) {
    throw ValidationError("init_filterbank: " + std::to_string(channels) +
                          " bands are narrower than the minimum band");
  }
  std::vector<double> t1(channels), t2(channels);
  for (std::size_t k = 0; k < channels; ++k) {
    const double lo = width * static_cast<double>(k);
    const double hi = k + 1 == channels ? top : width * static_cast<double>(k + 1);
    t1[k] = lo;
    t2[k] = hi - lo - bank.min_band;
  }
  bank.theta1 = Tensor::from({channels}, std::move(t1), true);
  bank.theta2 = Tensor::from({channels}, std::move(t2), true);
  return bank;
}

Tensor sinc_kernels(const SincFilterBank& bank) {
  check_kernel_len(bank.kernel_len);
  const auto C = bank.channels();
  const auto L = bank.kernel_len;
  if (bank.theta2.numel() != C) {
    throw ShapeError("sinc_kernels: theta1/theta2 lengths differ");
  }
  const double fs = bank.fs, nyquist = fs / 2.0, min_band = bank.min_band;
  const auto window = bank.window == Window::kHamming
                          ? hamming_window(L)
                          : std::vector<double>(L, 1.0);
  const auto half = static_cast<double>((L - 1) / 2);

  // Chain factors df1/dθ1, df2/dθ1, df2/dθ2 per filter (zero when clamped).
  std::vector<double> g1(C), g2(C), d1_t1(C), d2_t1(C), d2_t2(C);
  Buffer out(C * L);
  for (std::size_t k = 0; k < C; ++k) {
    const double t1 = bank.theta1.at(k), t2 = bank.theta2.at(k);
    const auto c = constrain_cutoffs(t1, t2, fs, min_band);
    const bool f1_free = std::fabs(t1) < nyquist - min_band;
    const bool f2_free = c.f1 + min_band + std::fabs(t2) < nyquist;
    d1_t1[k] = f1_free ? sign_of(t1) : 0.0;
    d2_t1[k] = f2_free ? d1_t1[k] : 0.0;
    d2_t2[k] = f2_free ? sign_of(t2) : 0.0;
    g1[k] = c.f1 / fs;
    g2[k] = c.f2 / fs;
    for (std::size_t j = 0; j < L; ++j) {
      const double n = static_cast<double>(j) - half;
      out[k * L + j] =
          window[j] * (lowpass_tap(g2[k], n) - lowpass_tap(g1[k], n));
    }
  }

  Tensor p1 = bank.theta1, p2 = bank.theta2;
  return Tensor::make_result(
      {C, L}, std::move(out), "sinc_kernels", {bank.theta1, bank.theta2},
      [p1, p2, C, L, fs, half, window, g1 = std::move(g1),
       g2 = std::move(g2), d1_t1 = std::move(d1_t1),
       d2_t1 = std::move(d2_t1),
       d2_t2 = std::move(d2_t2)](const Node& node) mutable {
        for (std::size_t k = 0; k < C; ++k) {
          // dL/df for each cutoff, in Hz.
          double df1 = 0.0, df2 = 0.0;
          for (std::size_t j = 0; j < L; ++j) {
            const double n = static_cast<double>(j) - half;
            const double gy = node.grad[k * L + j] * window[j];
            df2 += gy * lowpass_tap_dg(g2[k], n);
            df1 -= gy * lowpass_tap_dg(g1[k], n);
          }
          df1 /= fs;
          df2 /= fs;
          if (p1.requires_grad())
            p1.grad_buffer()[k] += df1 * d1_t1[k] + df2 * d2_t1[k];
          if (p2.requires_grad()) p2.grad_buffer()[k] += df2 * d2_t2[k];
        }
      });
}

FeatureMap sinc_conv_forward(const Tensor& x, const SincFilterBank& bank) {
  return {conv1d_same(x, sinc_kernels(bank))};
}

FeatureMap sinc_conv_pooled(const Tensor& x, const SincFilterBank& bank,
                            std::size_t stride) {
  return {conv1d_same_pooled(x, sinc_kernels(bank), stride)};
}

}  // namespace hymad::sincnet

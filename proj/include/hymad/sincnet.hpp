#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hymad/tensor.hpp"

namespace hymad::sincnet {

enum class Window { kHamming, kNone };
enum class InitStrategy { kLinear, kLowBand };

inline constexpr double kDefaultMinBand = 1.0;  // Hz

struct Cutoffs {
  double f1 = 0.0;  // Hz
  double f2 = 0.0;  // Hz
};

/// Maps unconstrained parameters to a valid band:
///   f1 = min(|θ1|, fs/2 - min_band)
///   f2 = min(f1 + min_band + |θ2|, fs/2)
/// so 0 <= f1 < f2 <= fs/2 always holds.
Cutoffs constrain_cutoffs(double theta1, double theta2, double fs,
                          double min_band = kDefaultMinBand);

/// Symmetric Hamming window of length L.
std::vector<double> hamming_window(std::size_t length);

/// Raw band-pass taps over centered indices n = -(L-1)/2 .. (L-1)/2:
///   h[n] = 2 g2 sinc(2π g2 n) - 2 g1 sinc(2π g1 n),  g = f / fs.
/// No validation of the cutoffs.
std::vector<double> bandpass_taps(double f1, double f2, std::size_t length,
                                  double fs, Window window);

/// Validated single kernel; requires 0 <= f1 < f2 <= fs/2 and odd L.
Tensor build_filter(double f1, double f2, std::size_t length, double fs,
                    Window window);

struct SincFilterBank {
  Tensor theta1;  // [C], raw low-cutoff parameters
  Tensor theta2;  // [C], raw bandwidth parameters
  std::size_t kernel_len = 129;
  double fs = 8000.0;
  Window window = Window::kHamming;
  double min_band = kDefaultMinBand;

  std::size_t channels() const { return theta1.numel(); }
  std::vector<Cutoffs> cutoffs() const;
};

/// Builds C contiguous equal-width bands over (0, fs/2] (linear) or
/// (0, fs/8] (low-band), with thetas chosen so constrain_cutoffs
/// reproduces the band edges.
SincFilterBank init_filterbank(std::size_t channels, double fs,
                               InitStrategy strategy,
                               std::size_t kernel_len = 129,
                               Window window = Window::kHamming);

/// Differentiable C x L kernel matrix of the bank; grads flow to
/// theta1/theta2.
Tensor sinc_kernels(const SincFilterBank& bank);

struct FeatureMap {
  Tensor values;  // C_total x L1
};

/// Same-padded convolution of x[T] with every kernel of the bank (L1 = T).
FeatureMap sinc_conv_forward(const Tensor& x, const SincFilterBank& bank);

/// Convolution followed by non-overlapping average pooling (L1 = T / stride).
FeatureMap sinc_conv_pooled(const Tensor& x, const SincFilterBank& bank,
                            std::size_t stride);

}  // namespace hymad::sincnet

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "dfd/tensor.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

// Paired real/imaginary planes of identical shape.
struct ComplexMap {
  Tensor re;
  Tensor im;
};

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

// In-place iterative radix-2 decimation-in-time FFT, unnormalized, forward sign.
// Throws ContractError unless data.size() is a power of two.
void fft_radix2(std::vector<std::complex<double>>& data);

// Direct O(N^2) summation X[k] = sum_n x[n] e^{-2 pi i k n / N}.
ComplexMap dft_naive(const Tensor& signal);
ComplexMap dft_naive(const ComplexMap& signal);

ComplexMap fft_1d(const Tensor& signal);
ComplexMap fft_1d(const ComplexMap& signal);

// Row FFTs then column FFTs over an [H,W] plane; H and W powers of two.
ComplexMap fft_2d(const Tensor& plane);

// sqrt(re^2 + im^2) elementwise.
Tensor magnitude_spectrum(const ComplexMap& spectrum);

// Differentiable per-plane magnitude spectrum over the two trailing axes.
// Each [H,W] plane is zero-padded to the next power of two per axis, transformed,
// and the magnitude is cropped back to [H,W]. The gradient at a zero-magnitude
// bin is taken as 0.
Tensor fft_magnitude(const Tensor& x);

}  // namespace DFD_PRECISION_NS
}  // namespace dfd

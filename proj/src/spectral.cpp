#include "dfd/spectral.hpp"

#include <cmath>
#include <numbers>

namespace dfd {
inline namespace DFD_PRECISION_NS {

namespace {

using Complex = std::complex<double>;

std::vector<Complex> to_complex(const Tensor& re, const Tensor* im) {
  std::vector<Complex> out(re.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = Complex(static_cast<double>(re.data()[i]),
                     im ? static_cast<double>(im->data()[i]) : 0.0);
  }
  return out;
}

ComplexMap from_complex(const std::vector<Complex>& values, const Shape& shape) {
  std::vector<Real> re(values.size()), im(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    re[i] = static_cast<Real>(values[i].real());
    im[i] = static_cast<Real>(values[i].imag());
  }
  return {Tensor::from_values(shape, std::move(re)), Tensor::from_values(shape, std::move(im))};
}

void require_1d(const Tensor& t) {
  if (t.rank() != 1) throw ShapeError("1-D signal expected, got " + shape_str(t.shape()));
  if (t.size() == 0) throw ContractError("transform of an empty signal");
}

void check_pair(const ComplexMap& m) {
  if (m.re.shape() != m.im.shape()) {
    throw ShapeError("complex map planes differ: " + shape_str(m.re.shape()) + " vs " +
                     shape_str(m.im.shape()));
  }
}

std::vector<Complex> naive(const std::vector<Complex>& x) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      // Reduce k*j mod n before scaling keeps the angle small and exact.
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) /
                           static_cast<double>(n);
      acc += x[j] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

// 2-D transform of a row-major rows x cols complex plane, in place.
void fft_plane(std::vector<Complex>& plane, std::size_t rows, std::size_t cols) {
  std::vector<Complex> line(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(plane.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, line.begin());
    fft_radix2(line);
    std::copy(line.begin(), line.end(), plane.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  line.resize(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) line[r] = plane[r * cols + c];
    fft_radix2(line);
    for (std::size_t r = 0; r < rows; ++r) plane[r * cols + c] = line[r];
  }
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_radix2(std::vector<Complex>& data) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) {
    throw ContractError("radix-2 FFT needs a power-of-two length, got " + std::to_string(n));
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  std::vector<Complex> twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = Complex(std::cos(angle), std::sin(angle));
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex t = twiddle[k * step] * data[start + k + half];
        const Complex u = data[start + k];
        data[start + k] = u + t;
        data[start + k + half] = u - t;
      }
    }
  }
}

ComplexMap dft_naive(const Tensor& signal) {
  require_1d(signal);
  return from_complex(naive(to_complex(signal, nullptr)), signal.shape());
}

ComplexMap dft_naive(const ComplexMap& signal) {
  check_pair(signal);
  require_1d(signal.re);
  return from_complex(naive(to_complex(signal.re, &signal.im)), signal.re.shape());
}

ComplexMap fft_1d(const Tensor& signal) {
  require_1d(signal);
  auto values = to_complex(signal, nullptr);
  fft_radix2(values);
  return from_complex(values, signal.shape());
}

ComplexMap fft_1d(const ComplexMap& signal) {
  check_pair(signal);
  require_1d(signal.re);
  auto values = to_complex(signal.re, &signal.im);
  fft_radix2(values);
  return from_complex(values, signal.re.shape());
}

ComplexMap fft_2d(const Tensor& plane) {
  if (plane.rank() != 2) throw ShapeError("2-D plane expected, got " + shape_str(plane.shape()));
  const std::size_t h = plane.extent(0), w = plane.extent(1);
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw ContractError("fft_2d needs power-of-two extents, got " + shape_str(plane.shape()));
  }
  auto values = to_complex(plane, nullptr);
  fft_plane(values, h, w);
  return from_complex(values, plane.shape());
}

Tensor magnitude_spectrum(const ComplexMap& spectrum) {
  check_pair(spectrum);
  std::vector<Real> out(spectrum.re.size());
  auto re = spectrum.re.data();
  auto im = spectrum.im.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<Real>(std::hypot(static_cast<double>(re[i]), static_cast<double>(im[i])));
  }
  return Tensor::from_values(spectrum.re.shape(), std::move(out));
}

Tensor fft_magnitude(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("fft_magnitude needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t h = x.shape()[x.rank() - 2], w = x.shape()[x.rank() - 1];
  if (h == 0 || w == 0) throw ShapeError("fft_magnitude on empty plane " + shape_str(x.shape()));
  const std::size_t ph = next_power_of_two(h), pw = next_power_of_two(w);
  const std::size_t planes = x.size() / (h * w);
  auto xv = x.data();

  // Cropped spectra are kept for the backward rule.
  std::vector<Complex> spectra(planes * h * w);
  std::vector<Real> out(x.size());
  std::vector<Complex> buffer(ph * pw);
  for (std::size_t p = 0; p < planes; ++p) {
    std::fill(buffer.begin(), buffer.end(), Complex(0.0, 0.0));
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        buffer[r * pw + c] = Complex(static_cast<double>(xv[(p * h + r) * w + c]), 0.0);
      }
    }
    fft_plane(buffer, ph, pw);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const Complex v = buffer[r * pw + c];
        spectra[(p * h + r) * w + c] = v;
        out[(p * h + r) * w + c] = static_cast<Real>(std::abs(v));
      }
    }
  }
  return make_result(
      x.shape(), std::move(out), {&x},
      [x, h, w, ph, pw, planes, spectra = std::move(spectra)](const Tensor& o) mutable {
        // For real input and y_k = |X_k|: dL/dx = Re(FFT(conj(G))) with
        // G_k = g_k X_k / |X_k|, restricted to the unpadded region.
        auto g = o.grad();
        auto gx = x.mutable_grad();
        std::vector<Complex> buffer(ph * pw);
        for (std::size_t p = 0; p < planes; ++p) {
          std::fill(buffer.begin(), buffer.end(), Complex(0.0, 0.0));
          for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
              const std::size_t i = (p * h + r) * w + c;
              const double mag = std::abs(spectra[i]);
              if (mag == 0.0) continue;
              buffer[r * pw + c] = std::conj(spectra[i] * (static_cast<double>(g[i]) / mag));
            }
          }
          fft_plane(buffer, ph, pw);
          for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
              gx[(p * h + r) * w + c] += static_cast<Real>(buffer[r * pw + c].real());
            }
          }
        }
      });
}

}  // namespace DFD_PRECISION_NS
}  // namespace dfd

#include "sempsf/convolution.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

namespace sempsf {

namespace {

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

// FFTW planning is not thread-safe; plans are made once per shape under a
// lock and then executed on caller-owned arrays through the new-array API.
enum class PlanKind { forward_c2c, inverse_c2c, forward_r2c, inverse_c2r };

fftw_plan plan_for(PlanKind kind, Index rows, Index cols) {
  static std::mutex mutex;
  static std::map<std::tuple<int, Index, Index>, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(mutex);
  const auto key = std::make_tuple(static_cast<int>(kind), rows, cols);
  if (auto it = plans.find(key); it != plans.end()) return it->second;

  const int n0 = static_cast<int>(rows), n1 = static_cast<int>(cols);
  const Index half = cols / 2 + 1;
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fftw_plan plan = nullptr;
  std::vector<std::complex<double>> cbuf(static_cast<std::size_t>(rows * std::max(cols, half)));
  std::vector<double> rbuf(static_cast<std::size_t>(rows * cols));
  switch (kind) {
    case PlanKind::forward_c2c:
      plan = fftw_plan_dft_2d(n0, n1, as_fftw(cbuf.data()), as_fftw(cbuf.data()), FFTW_FORWARD, flags);
      break;
    case PlanKind::inverse_c2c:
      plan = fftw_plan_dft_2d(n0, n1, as_fftw(cbuf.data()), as_fftw(cbuf.data()), FFTW_BACKWARD, flags);
      break;
    case PlanKind::forward_r2c:
      plan = fftw_plan_dft_r2c_2d(n0, n1, rbuf.data(), as_fftw(cbuf.data()), flags);
      break;
    case PlanKind::inverse_c2r:
            plan = fftw_plan_dft_c2r_2d(n0, n1, as_fftw(cbuf.data()), rbuf.data(), flags);
      break;
  }
  if (plan == nullptr) throw Error("FFT planning failed for " + std::to_string(rows) + "x" + std::to_string(cols));
  plans.emplace(key, plan);
  return plan;
}

// Half spectrum rows x (cols / 2 + 1) of a real image.
Spectrum rfft2(const Image2D& img) {
  Spectrum out(img.rows(), img.cols() / 2 + 1);
  Image2D in = img;  // r2c plans may not preserve their input
  fftw_execute_dft_r2c(plan_for(PlanKind::forward_r2c, img.rows(), img.cols()), in.data(), as_fftw(out.data()));
  return out;
}

Image2D irfft2(const Spectrum& half, Index cols) {
  Spectrum in = half;  // c2r always destroys its input
  Image2D out(half.rows(), cols);
  fftw_execute_dft_c2r(plan_for(PlanKind::inverse_c2r, half.rows(), cols), as_fftw(in.data()), out.data());
  out /= static_cast<double>(half.rows() * cols);
  return out;
}

bool is_centered_delta(const Kernel2D& k) {
  const Index cy = (k.rows() - 1) / 2, cx = (k.cols() - 1) / 2;
  for (Index r = 0; r < k.rows(); ++r) {
    for (Index c = 0; c < k.cols(); ++c) {
      if (k(r, c) != ((r == cy && c == cx) ? 1.0 : 0.0)) return false;
    }
  }
  return true;
}

}  // namespace

Spectrum fft2(const Image2D& img) { return fft2(Spectrum(img.cast<std::complex<double>>())); }

Spectrum fft2(const Spectrum& data) {
  Spectrum in = data, out(data.rows(), data.cols());
  fftw_execute_dft(plan_for(PlanKind::forward_c2c, data.rows(), data.cols()), as_fftw(in.data()), as_fftw(out.data()));
  return out;
}

Image2D ifft2_real(const Spectrum& spec) {
  Spectrum in = spec, out(spec.rows(), spec.cols());
  fftw_execute_dft(plan_for(PlanKind::inverse_c2c, spec.rows(), spec.cols()), as_fftw(in.data()), as_fftw(out.data()));
  return out.real() / static_cast<double>(spec.size());
}

Spectrum kernel_spectrum(const Kernel2D& kernel, Index rows, Index cols) {
  if (kernel.rows() > rows || kernel.cols() > cols) {
    throw Error("kernel (" + std::to_string(kernel.rows()) + "x" + std::to_string(kernel.cols()) +
                ") is larger than the image (" + std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  const Index cy = (kernel.rows() - 1) / 2, cx = (kernel.cols() - 1) / 2;
  Spectrum embedded = Spectrum::Zero(rows, cols);
  for (Index i = 0; i < kernel.rows(); ++i) {
    for (Index j = 0; j < kernel.cols(); ++j) {
      const Index r = ((i - cy) % rows + rows) % rows;
      const Index c = ((j - cx) % cols + cols) % cols;
      embedded(r, c) += kernel(i, j);
    }
  }
  return fft2(embedded);
}

CirculantOperator::CirculantOperator(const Kernel2D& kernel, Index rows, Index cols)
    : rows_(rows), cols_(cols), identity_(is_centered_delta(kernel)) {
  if (kernel.rows() % 2 == 0 || kernel.cols() % 2 == 0) throw Error("kernel dimensions must be odd");
  if (!all_finite(kernel)) throw Error("kernel contains non-finite taps");
  spectrum_ = kernel_spectrum(kernel, rows, cols);
  half_ = spectrum_.leftCols(cols / 2 + 1);
}

Image2D CirculantOperator::filter(const Image2D& x, bool conjugate, bool normal) const {
  if (x.rows() != rows_ || x.cols() != cols_) throw Error("image size does not match the operator");
  if (identity_) return x;
  Spectrum s = rfft2(x);
  if (normal) {
    s *= half_.abs2().cast<std::complex<double>>();
  } else if (conjugate) {
    s *= half_.conjugate();
  } else {
    s *= half_;
  }
  return irfft2(s, cols_);
}

Image2D CirculantOperator::apply(const Image2D& x) const { return filter(x, false, false); }
Image2D CirculantOperator::apply_adjoint(const Image2D& x) const { return filter(x, true, false); }
Image2D CirculantOperator::apply_normal(const Image2D& x) const { return filter(x, false, true); }

double CirculantOperator::max_gain_squared() const { return spectrum_.abs2().maxCoeff(); }

Image2D convolve_circular(const Image2D& img, const Kernel2D& kernel) {
  require_finite_image(img, "convolve_circular");
  return CirculantOperator(kernel, img.rows(), img.cols()).apply(img);
}

Kernel2D reflect_kernel(const Kernel2D& kernel) { return kernel.reverse(); }

Image2D convolve_rows_circular(const Image2D& img, const Kernel1D& taps) {
  const Index w = img.cols();
  const Index center = (taps.size() - 1) / 2;
  Image2D out = Image2D::Zero(img.rows(), w);
  for (Index r = 0; r < img.rows(); ++r) {
    for (Index c = 0; c < w; ++c) {
      double acc = 0.0;
      for (Index k = 0; k < taps.size(); ++k) {
        acc += taps(k) * img(r, ((c - (k - center)) % w + w) % w);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

Image2D gaussian_smooth(const Image2D& img, double sigma) {
  if (sigma < 0.0) throw Error("smoothing sigma must be >= 0");
  if (sigma == 0.0) return img;
  const Index radius = static_cast<Index>(std::ceil(4.0 * sigma));
  Kernel1D taps(2 * radius + 1);
  for (Index k = -radius; k <= radius; ++k) taps(k + radius) = std::exp(-0.5 * k * k / (sigma * sigma));
  taps /= taps.sum();

  auto reflect = [](Index i, Index n) {
    if (n == 1) return Index{0};
    const Index period = 2 * n - 2;
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
  };

  const Index h = img.rows(), w = img.cols();
  Image2D tmp(h, w), out(h, w);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      double acc = 0.0;
      for (Index k = -radius; k <= radius; ++k) acc += taps(k + radius) * img(r, reflect(c + k, w));
      tmp(r, c) = acc;
    }
  }
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      double acc = 0.0;
      for (Index k = -radius; k <= radius; ++k) acc += taps(k + radius) * tmp(reflect(r + k, h), c);
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace sempsf

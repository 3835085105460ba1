#include <string>

#include "voxsync/error.hpp"
#include "voxsync/grid.hpp"

namespace voxsync {

ConvKernel::ConvKernel(int size_, int in, int out) : size(size_), in_channels(in), out_channels(out) {
  if (size_ < 1 || size_ % 2 == 0) throw InputError("conv kernel size must be odd");
  if (in <= 0 || out <= 0) throw InputError("conv kernel channel counts must be positive");
  weights.assign(static_cast<std::size_t>(size_) * size_ * size_ * in * out, 0.0);
  bias.assign(static_cast<std::size_t>(out), 0.0);
}

ConvKernel ConvKernel::identity(int channels, int size) {
  ConvKernel k(size, channels, channels);
  const int c = size / 2;
  for (int i = 0; i < channels; ++i) k.weight(c, c, c, i, i) = 1.0;
  return k;
}

namespace {

void check_shapes(const SparseLattice& lattice, std::span<const double> input, const ConvKernel& kernel) {
  if (kernel.size < 1 || kernel.size % 2 == 0) throw InputError("conv kernel size must be odd");
  if (kernel.weights.size() != static_cast<std::size_t>(kernel.size) * kernel.size * kernel.size *
                                   kernel.in_channels * kernel.out_channels ||
      kernel.bias.size() != static_cast<std::size_t>(kernel.out_channels)) {
    throw InputError("conv kernel storage does not match its declared shape");
  }
  if (input.size() != lattice.size() * kernel.in_channels) {
    throw InputError("sparse_conv3 input has " + std::to_string(input.size()) + " values, expected " +
                     std::to_string(lattice.size() * kernel.in_channels));
  }
}

// Calls fn(site, tap_dx, tap_dy, tap_dz, neighbor) for every occupied neighbor.
template <typename Fn>
void for_each_tap(const SparseLattice& lattice, int size, Fn&& fn) {
  const int half = size / 2;
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    const auto& s = lattice.site(i);
    for (int dz = 0; dz < size; ++dz) {
      for (int dy = 0; dy < size; ++dy) {
        for (int dx = 0; dx < size; ++dx) {
          const std::int32_t n = lattice.find(static_cast<int>(s.x) + dx - half, static_cast<int>(s.y) + dy - half,
                                              static_cast<int>(s.z) + dz - half);
          if (n >= 0) fn(i, dx, dy, dz, static_cast<std::size_t>(n));
        }
      }
    }
  }
}

}  // namespace

std::vector<double> sparse_conv3(const SparseLattice& lattice, std::span<const double> input,
                                 const ConvKernel& kernel) {
  check_shapes(lattice, input, kernel);
  const int cin = kernel.in_channels;
  const int cout = kernel.out_channels;
  std::vector<double> out(lattice.size() * cout);
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    for (int co = 0; co < cout; ++co) out[i * cout + co] = kernel.bias[co];
  }
  for_each_tap(lattice, kernel.size, [&](std::size_t i, int dx, int dy, int dz, std::size_t n) {
    const double* x = input.data() + n * cin;
    double* y = out.data() + i * cout;
    for (int ci = 0; ci < cin; ++ci) {
      const double* w = kernel.weights.data() + kernel.offset(dx, dy, dz, ci, 0);
      for (int co = 0; co < cout; ++co) y[co] += w[co] * x[ci];
    }
  });
  return out;
}

SparseConvGradients sparse_conv3_backward(const SparseLattice& lattice, std::span<const double> input,
                                          const ConvKernel& kernel, std::span<const double> upstream) {
  check_shapes(lattice, input, kernel);
  const int cin = kernel.in_channels;
  const int cout = kernel.out_channels;
  if (upstream.size() != lattice.size() * cout) throw InputError("sparse_conv3 upstream has wrong size");

  SparseConvGradients g;
  g.input.assign(input.size(), 0.0);
  g.weights.assign(kernel.weights.size(), 0.0);
  g.bias.assign(kernel.bias.size(), 0.0);
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    for (int co = 0; co < cout; ++co) g.bias[co] += upstream[i * cout + co];
  }
  for_each_tap(lattice, kernel.size, [&](std::size_t i, int dx, int dy, int dz, std::size_t n) {
    const double* x = input.data() + n * cin;
    const double* u = upstream.data() + i * cout;
    double* gx = g.input.data() + n * cin;
    for (int ci = 0; ci < cin; ++ci) {
      const std::size_t base = kernel.offset(dx, dy, dz, ci, 0);
      const double* w = kernel.weights.data() + base;
      double* gw = g.weights.data() + base;
      double acc = 0.0;
      for (int co = 0; co < cout; ++co) {
        gw[co] += u[co] * x[ci];
        acc += w[co] * u[co];
      }
      gx[ci] += acc;
    }
  });
  return g;
}

}  // namespace voxsync

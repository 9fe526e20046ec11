#include <algorithm>

#include "ids/errors.hpp"
#include "ids/layers.hpp"

namespace ids {

namespace {

std::size_t pad_left(const Conv1DParams& p) {
  return p.padding == Padding::same ? (p.kernel_size() - 1) / 2 : 0;
}

}  // namespace

void Conv1DParams::collect(const std::string& prefix, std::vector<NamedVar>& out) const {
  out.push_back({prefix + ".kernel", kernel, true});
  out.push_back({prefix + ".bias", bias, true});
}

Conv1DParams make_conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, Rng& rng,
                         Padding padding, std::size_t stride) {
  if (in_channels == 0 || out_channels == 0 || kernel_size == 0 || stride == 0) {
    throw ConfigError("conv1d: channels, kernel size and stride must be positive");
  }
  Conv1DParams p;
  p.kernel = Var(glorot_uniform({out_channels, in_channels, kernel_size}, in_channels * kernel_size,
                                out_channels * kernel_size, rng),
                 true);
  p.bias = Var(Tensor({out_channels}, Real(0)), true);
  p.padding = padding;
  p.stride = stride;
  return p;
}

std::size_t conv1d_output_length(std::size_t length, const Conv1DParams& p) {
  if (p.padding == Padding::same) return (length + p.stride - 1) / p.stride;
  if (length < p.kernel_size()) {
    throw DimensionError("conv1d: sequence length " + std::to_string(length) + " shorter than kernel " +
                         std::to_string(p.kernel_size()));
  }
  return (length - p.kernel_size()) / p.stride + 1;
}

Var conv1d_forward(Tape& tape, const Var& x, const Conv1DParams& p) {
  const Shape& xs = x.shape();
  if (xs.size() != 2 && xs.size() != 3) {
    throw DimensionError("conv1d: expected [T, C] or [B, T, C], got " + to_string(xs));
  }
  const bool batched = xs.size() == 3;
  const std::size_t batch = batched ? xs[0] : 1;
  const std::size_t length = xs[xs.size() - 2], cin = xs.back();
  if (cin != p.in_channels()) {
    throw DimensionError("conv1d: input has " + std::to_string(cin) + " channels, kernel " +
                         to_string(p.kernel.shape()) + " expects " + std::to_string(p.in_channels()));
  }
  const std::size_t k = p.kernel_size(), cout = p.out_channels(), stride = p.stride, left = pad_left(p);
  const std::size_t out_len = conv1d_output_length(length, p);
  const std::size_t width = k * cin, rows = batch * out_len;

  // im2col: row (b, t) holds the receptive field, column j*cin + c.
  std::vector<Real> cols(rows * width, Real(0));
  const Real* in = x.value().raw();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_len; ++t) {
      Real* row = cols.data() + (b * out_len + t) * width;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(left);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) continue;
        std::copy_n(in + (b * length + static_cast<std::size_t>(src)) * cin, cin, row + j * cin);
      }
    }
  }
  // Kernel as a [k*cin, cout] matrix.
  std::vector<Real> wmat(width * cout);
  const Real* kern = p.kernel.value().raw();
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t j = 0; j < k; ++j) wmat[(j * cin + c) * cout + o] = kern[(o * cin + c) * k + j];
    }
  }

  Shape os = batched ? Shape{batch, out_len, cout} : Shape{out_len, cout};
  Tensor out(os);
  kernel::gemm(cols.data(), wmat.data(), out.raw(), rows, cout, width, false, false, false);
  const Real* bias = p.bias.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < cout; ++o) out.raw()[r * cout + o] += bias[o];
  }

  Var kernel_var = p.kernel, bias_var = p.bias;
  return tape.record(
      std::move(out), {&x, &p.kernel, &p.bias},
      [x, kernel_var, bias_var, cols = std::move(cols), wmat = std::move(wmat), batch, length, cin, cout, k, stride,
       left, out_len, rows, width](const Node& o) {
        const Real* g = o.grad.raw();
        if (kernel_var.requires_grad()) {
          std::vector<Real> dw(width * cout, Real(0));
          kernel::gemm(cols.data(), g, dw.data(), width, cout, rows, true, false, false);
          Real* dk = kernel_var.grad_slot().raw();
          for (std::size_t oc = 0; oc < cout; ++oc) {
            for (std::size_t c = 0; c < cin; ++c) {
              for (std::size_t j = 0; j < k; ++j) dk[(oc * cin + c) * k + j] += dw[(j * cin + c) * cout + oc];
            }
          }
        }
        if (bias_var.requires_grad()) {
          Real* db = bias_var.grad_slot().raw();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t oc = 0; oc < cout; ++oc) db[oc] += g[r * cout + oc];
          }
        }
        if (x.requires_grad()) {
          std::vector<Real> dcols(rows * width);
          kernel::gemm(g, wmat.data(), dcols.data(), rows, width, cout, false, true, false);
          Real* dx = x.grad_slot().raw();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < out_len; ++t) {
              const Real* row = dcols.data() + (b * out_len + t) * width;
              for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t src =
                    static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(left);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) continue;
                Real* dst = dx + (b * length + static_cast<std::size_t>(src)) * cin;
                for (std::size_t c = 0; c < cin; ++c) dst[c] += row[j * cin + c];
              }
            }
          }
        }
      });
}

}  // namespace ids

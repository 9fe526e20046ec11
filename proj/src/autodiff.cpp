#include "ids/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ids/errors.hpp"

namespace ids {

Tensor& Node::grad_slot() {
  if (grad.empty()) grad = Tensor(value.shape(), Real(0));
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(Real(0));
}

Var Tape::record(Tensor value, std::initializer_list<const Var*> inputs, BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const Var* v : inputs) needs = needs || v->requires_grad();
  }
  Var out(std::move(value), needs);
  if (needs) ops_.push_back({out, std::move(fn)});
  return out;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const Var& v : inputs) needs = needs || v.requires_grad();
  }
  Var out(std::move(value), needs);
  if (needs) ops_.push_back({out, std::move(fn)});
  return out;
}

void Tape::backward(const Var& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw ContractError("loss does not depend on any tensor that requires a gradient");
  loss.grad_slot()[0] += Real(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (it->output.has_grad()) it->backward(*it->output.node());
  }
}

namespace {

// Gradient slot of v, or nullptr when v does not take gradients.
Tensor* slot(const Var& v) { return grad_target(v); }

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.shape().size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(v.shape()));
  }
}

}  // namespace

namespace kernel {

void gemm(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t n, std::size_t k, bool trans_a,
          bool trans_b, bool accumulate) {
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
                     K = static_cast<Eigen::Index>(k);
  Eigen::Map<const Mat> A(a, trans_a ? K : M, trans_a ? M : K);
  Eigen::Map<const Mat> B(b, trans_b ? N : K, trans_b ? K : N);
  Eigen::Map<Mat> C(c, M, N);
  if (!accumulate) C.setZero();
  if (trans_a && trans_b) {
    C.noalias() += A.transpose() * B.transpose();
  } else if (trans_a) {
    C.noalias() += A.transpose() * B;
  } else if (trans_b) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() += A * B;
  }
}

Tensor softmax_forward(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  const std::size_t outer = prod(s, 0, axis), len = s[axis], inner = prod(s, axis + 1, s.size());
  Tensor y(s);
  const Real* in = x.raw();
  Real* out = y.raw();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      Real mx = in[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, in[base + j * inner]);
      Real total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const Real e = std::exp(in[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  return y;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const Shape& s = x.shape();
  const std::size_t rank = s.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * s[i];
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = s[perm[i]];
  Tensor y(out_shape);
  std::vector<std::size_t> idx(rank, 0);
  const Real* in = x.raw();
  Real* out = y.raw();
  for (std::size_t flat = 0; flat < y.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_strides[perm[i]];
    out[flat] = in[src];
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return y;
}

}  // namespace kernel

Var matmul(Tape& tape, const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ for " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  Tensor out({m, n});
  kernel::gemm(a.value().raw(), b.value().raw(), out.raw(), m, n, k, false, false, false);
  return tape.record(std::move(out), {&a, &b}, [a, b, m, n, k](const Node& o) {
    if (Tensor* ga = slot(a)) kernel::gemm(o.grad.raw(), b.value().raw(), ga->raw(), m, k, n, false, true, true);
    if (Tensor* gb = slot(b)) kernel::gemm(a.value().raw(), o.grad.raw(), gb->raw(), k, n, m, true, false, true);
  });
}

Var linear(Tape& tape, const Var& x, const Var& w) {
  require_rank(w, 2, "linear");
  const Shape& xs = x.shape();
  if (xs.empty() || xs.back() != w.shape()[0]) {
    throw DimensionError("linear: input " + to_string(xs) + " does not match weight " + to_string(w.shape()));
  }
  const std::size_t in = w.shape()[0], outd = w.shape()[1], rows = x.value().size() / in;
  Shape os = xs;
  os.back() = outd;
  Tensor out(os);
  kernel::gemm(x.value().raw(), w.value().raw(), out.raw(), rows, outd, in, false, false, false);
  return tape.record(std::move(out), {&x, &w}, [x, w, rows, in, outd](const Node& o) {
    if (Tensor* gx = slot(x)) kernel::gemm(o.grad.raw(), w.value().raw(), gx->raw(), rows, in, outd, false, true, true);
    if (Tensor* gw = slot(w)) kernel::gemm(x.value().raw(), o.grad.raw(), gw->raw(), in, outd, rows, true, false, true);
  });
}

Var batched_matmul(Tape& tape, const Var& a, const Var& b, bool transpose_b) {
  require_rank(a, 3, "batched_matmul");
  require_rank(b, 3, "batched_matmul");
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
  const std::size_t bk = transpose_b ? b.shape()[2] : b.shape()[1];
  const std::size_t n = transpose_b ? b.shape()[1] : b.shape()[2];
  if (b.shape()[0] != batch || bk != k) {
    throw DimensionError("batched_matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + (transpose_b ? " (transposed)" : ""));
  }
  Tensor out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    kernel::gemm(a.value().raw() + i * m * k, b.value().raw() + i * k * n, out.raw() + i * m * n, m, n, k, false,
                 transpose_b, false);
  }
  return tape.record(std::move(out), {&a, &b}, [a, b, batch, m, n, k, transpose_b](const Node& o) {
    Tensor* ga = slot(a);
    Tensor* gb = slot(b);
    for (std::size_t i = 0; i < batch; ++i) {
      const Real* dc = o.grad.raw() + i * m * n;
      const Real* ai = a.value().raw() + i * m * k;
      const Real* bi = b.value().raw() + i * k * n;
      if (ga) kernel::gemm(dc, bi, ga->raw() + i * m * k, m, k, n, false, !transpose_b, true);
      if (gb) {
        if (transpose_b) {
          kernel::gemm(dc, ai, gb->raw() + i * k * n, n, k, m, true, false, true);
        } else {
          kernel::gemm(ai, dc, gb->raw() + i * k * n, k, n, m, true, false, true);
        }
      }
    }
  });
}

Var elementwise(Tape& tape, const Var& a, const Var& b, Binary op) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const bool same = as == bs;
  const bool broadcast = !same && bs.size() == 1 && !as.empty() && as.back() == bs[0];
  if (!same && !broadcast) {
    throw DimensionError("elementwise: shapes " + to_string(as) + " and " + to_string(bs) + " do not broadcast");
  }
  const std::size_t n = a.value().size(), width = b.value().size();
  Tensor out(as);
  const Real* x = a.value().raw();
  const Real* y = b.value().raw();
  Real* z = out.raw();
  for (std::size_t i = 0; i < n; ++i) {
    const Real yv = y[same ? i : i % width];
    switch (op) {
      case Binary::add: z[i] = x[i] + yv; break;
      case Binary::sub: z[i] = x[i] - yv; break;
      case Binary::mul: z[i] = x[i] * yv; break;
    }
  }
  return tape.record(std::move(out), {&a, &b}, [a, b, op, same, n, width](const Node& o) {
    const Real* g = o.grad.raw();
    if (Tensor* ga = slot(a)) {
      Real* d = ga->raw();
      const Real* y = b.value().raw();
      for (std::size_t i = 0; i < n; ++i) d[i] += op == Binary::mul ? g[i] * y[same ? i : i % width] : g[i];
    }
    if (Tensor* gb = slot(b)) {
      Real* d = gb->raw();
      const Real* x = a.value().raw();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = same ? i : i % width;
        switch (op) {
          case Binary::add: d[j] += g[i]; break;
          case Binary::sub: d[j] -= g[i]; break;
          case Binary::mul: d[j] += g[i] * x[i]; break;
        }
      }
    }
  });
}

Var add(Tape& tape, const Var& a, const Var& b) { return elementwise(tape, a, b, Binary::add); }
Var sub(Tape& tape, const Var& a, const Var& b) { return elementwise(tape, a, b, Binary::sub); }
Var mul(Tape& tape, const Var& a, const Var& b) { return elementwise(tape, a, b, Binary::mul); }

Var scale(Tape& tape, const Var& x, Real factor) {
  Tensor out = x.value();
  for (Real& v : out.data()) v *= factor;
  return tape.record(std::move(out), {&x}, [x, factor](const Node& o) {
    Real* d = slot(x)->raw();
    for (std::size_t i = 0; i < o.grad.size(); ++i) d[i] += factor * o.grad[i];
  });
}

Var one_minus(Tape& tape, const Var& x) {
  Tensor out = x.value();
  for (Real& v : out.data()) v = Real(1) - v;
  return tape.record(std::move(out), {&x}, [x](const Node& o) {
    Real* d = slot(x)->raw();
    for (std::size_t i = 0; i < o.grad.size(); ++i) d[i] -= o.grad[i];
  });
}

Var activate(Tape& tape, const Var& x, Activation kind) {
  Tensor out = x.value();
  for (Real& v : out.data()) {
    switch (kind) {
      case Activation::relu: v = v < 0 ? Real(0) : v; break;  // NaN passes through
      case Activation::sigmoid: v = Real(1) / (Real(1) + std::exp(-v)); break;
      case Activation::tanh: v = std::tanh(v); break;
    }
  }
  return tape.record(std::move(out), {&x}, [x, kind](const Node& o) {
    Real* d = slot(x)->raw();
    const Real* g = o.grad.raw();
    const Real* y = o.value.raw();
    const Real* in = x.value().raw();
    const std::size_t n = o.grad.size();
    switch (kind) {
      case Activation::relu:
        for (std::size_t i = 0; i < n; ++i) d[i] += in[i] > 0 ? g[i] : Real(0);
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * y[i] * (Real(1) - y[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * (Real(1) - y[i] * y[i]);
        break;
    }
  });
}

Var relu(Tape& tape, const Var& x) { return activate(tape, x, Activation::relu); }
Var sigmoid(Tape& tape, const Var& x) { return activate(tape, x, Activation::sigmoid); }
Var tanh(Tape& tape, const Var& x) { return activate(tape, x, Activation::tanh); }

Var softmax(Tape& tape, const Var& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + to_string(s));
  }
  const std::size_t outer = prod(s, 0, axis), len = s[axis], inner = prod(s, axis + 1, s.size());
  return tape.record(kernel::softmax_forward(x.value(), axis), {&x}, [x, outer, len, inner](const Node& o) {
    Real* d = slot(x)->raw();
    const Real* g = o.grad.raw();
    const Real* y = o.value.raw();
    for (std::size_t oi = 0; oi < outer; ++oi) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = oi * len * inner + i;
        Real dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t p = base + j * inner;
          d[p] += y[p] * (g[p] - dot);
        }
      }
    }
  });
}

Var sum(Tape& tape, const Var& x) {
  const auto data = x.value().data();
  const Real total = std::accumulate(data.begin(), data.end(), Real(0));
  return tape.record(Tensor::scalar(total), {&x}, [x](const Node& o) {
    const Real g = o.grad[0];
    for (Real& v : slot(x)->data()) v += g;
  });
}

Var reshape(Tape& tape, const Var& x, Shape shape) {
  return tape.record(x.value().reshaped(std::move(shape)), {&x}, [x](const Node& o) {
    Real* d = slot(x)->raw();
    for (std::size_t i = 0; i < o.grad.size(); ++i) d[i] += o.grad[i];
  });
}

Var concat(Tape& tape, std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " invalid for shape " + to_string(first));
  }
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: shape " + to_string(s) + " incompatible with " + to_string(first) +
                           " along axis " + std::to_string(axis));
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  const std::size_t outer = prod(first, 0, axis), inner = prod(first, axis + 1, first.size());
  Shape os = first;
  os[axis] = total;
  Tensor out(os);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Real* src = parts[p].value().raw();
    const std::size_t chunk = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * chunk, chunk, out.raw() + o * total * inner + offset * inner);
    }
    offset += lens[p];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), parts, [inputs, lens, outer, inner, total](const Node& o) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      const std::size_t chunk = lens[p] * inner;
      if (Tensor* g = slot(inputs[p])) {
        for (std::size_t oi = 0; oi < outer; ++oi) {
          const Real* src = o.grad.raw() + oi * total * inner + offset * inner;
          Real* dst = g->raw() + oi * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += lens[p];
    }
  });
}

Var slice(Tape& tape, const Var& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") on axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis + 1, s.size()), full = s[axis];
  Shape os = s;
  os[axis] = length;
  Tensor out(os);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.value().raw() + (o * full + start) * inner, length * inner, out.raw() + o * length * inner);
  }
  return tape.record(std::move(out), {&x}, [x, outer, inner, full, start, length](const Node& o) {
    Real* d = slot(x)->raw();
    for (std::size_t oi = 0; oi < outer; ++oi) {
      const Real* src = o.grad.raw() + oi * length * inner;
      Real* dst = d + (oi * full + start) * inner;
      for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
    }
  });
}

Var stack(Tape& tape, std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("stack: no inputs");
  const Shape& s = parts[0].shape();
  if (axis > s.size()) throw DimensionError("stack: axis " + std::to_string(axis) + " invalid for " + to_string(s));
  for (const Var& p : parts) {
    if (p.shape() != s) throw DimensionError("stack: shape " + to_string(p.shape()) + " differs from " + to_string(s));
  }
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis, s.size()), count = parts.size();
  Shape os = s;
  os.insert(os.begin() + static_cast<std::ptrdiff_t>(axis), count);
  Tensor out(os);
  for (std::size_t p = 0; p < count; ++p) {
    const Real* src = parts[p].value().raw();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * inner, inner, out.raw() + (o * count + p) * inner);
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), parts, [inputs, outer, inner, count](const Node& o) {
    for (std::size_t p = 0; p < count; ++p) {
      Tensor* g = slot(inputs[p]);
      if (!g) continue;
      for (std::size_t oi = 0; oi < outer; ++oi) {
        const Real* src = o.grad.raw() + (oi * count + p) * inner;
        Real* dst = g->raw() + oi * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var permute(Tape& tape, const Var& x, const std::vector<std::size_t>& perm) {
  const std::size_t rank = x.shape().size();
  std::vector<std::size_t> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  bool valid = perm.size() == rank;
  for (std::size_t i = 0; valid && i < rank; ++i) valid = sorted[i] == i;
  if (!valid) throw DimensionError("permute: invalid axis order for shape " + to_string(x.shape()));
  std::vector<std::size_t> inverse(rank);
  for (std::size_t i = 0; i < rank; ++i) inverse[perm[i]] = i;
  return tape.record(kernel::permute(x.value(), perm), {&x}, [x, inverse](const Node& o) {
    const Tensor back = kernel::permute(o.grad, inverse);
    Real* d = slot(x)->raw();
    for (std::size_t i = 0; i < back.size(); ++i) d[i] += back[i];
  });
}

}  // namespace ids

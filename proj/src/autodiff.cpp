#include "pei/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <sstream>

#include <Eigen/Core>

#include "pei/warp.hpp"

namespace pei::ad {

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (int i = 0; i < rank; ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Tensor

template <typename T>
bool Tensor<T>::valid() const {
  return tape_ != nullptr && id_ >= 0 && generation_ == tape_->generation_ &&
         static_cast<std::size_t>(id_) < tape_->size();
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return tape_->checked(*this).shape;
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  return tape_->checked(*this).value;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return tape_->checked(*this).grad;
}

template <typename T>
T Tensor<T>::item() const {
  const auto& n = tape_->checked(*this);
  if (n.value.size() != 1) throw DimensionError("item() on a non-scalar tensor");
  return n.value[0];
}

template <typename T>
Image<T> Tensor<T>::image() const {
  const auto& n = tape_->checked(*this);
  if (n.shape.rank != 3) throw DimensionError("image() requires a rank-3 tensor");
  return Image<T>::from_values(n.shape[0], n.shape[1], n.shape[2], n.value);
}

// ---------------------------------------------------------------- Tape

template <typename T>
const typename Tape<T>::Node& Tape<T>::checked(const Tensor<T>& t) const {
  if (t.tape_ != this || !t.valid()) {
    throw std::logic_error("tensor does not belong to a live tape (backward before forward?)");
  }
  return nodes_[static_cast<std::size_t>(t.id_)];
}

template <typename T>
Tensor<T> Tape<T>::leaf(Shape shape, std::vector<T> values, bool needs_grad, Parameter<T>* p) {
  if (values.size() != shape.size()) throw DimensionError("leaf value count does not match shape");
  Node n;
  n.shape = shape;
  n.value = std::move(values);
  n.needs_grad = needs_grad;
  n.param = p;
  nodes_.push_back(std::move(n));
  return Tensor<T>(this, static_cast<int>(nodes_.size() - 1), generation_);
}

template <typename T>
Tensor<T> Tape<T>::constant(Shape shape, std::vector<T> values) {
  return leaf(shape, std::move(values), false, nullptr);
}

template <typename T>
Tensor<T> Tape<T>::constant(const Image<T>& img) {
  auto d = img.data();
  return constant(Shape::image(img.channels(), img.height(), img.width()),
                  std::vector<T>(d.begin(), d.end()));
}

template <typename T>
Tensor<T> Tape<T>::variable(Shape shape, std::vector<T> values) {
  return leaf(shape, std::move(values), true, nullptr);
}

template <typename T>
Tensor<T> Tape<T>::variable(const Image<T>& img) {
  auto d = img.data();
  return variable(Shape::image(img.channels(), img.height(), img.width()),
                  std::vector<T>(d.begin(), d.end()));
}

template <typename T>
Tensor<T> Tape<T>::parameter(Parameter<T>& p) {
  if (p.value.size() != p.shape.size()) throw DimensionError("parameter " + p.name + " is malformed");
  if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), T(0));
  return leaf(p.shape, p.value, true, &p);
}

template <typename T>
Tensor<T> Tape<T>::record(Shape shape, std::vector<T> value, std::vector<int> inputs, BackwardFn fn) {
  Node n;
  n.shape = shape;
  n.value = std::move(value);
  for (int i : inputs) n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(i)].needs_grad;
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Tensor<T>(this, static_cast<int>(nodes_.size() - 1), generation_);
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  const Node& root = checked(loss);
  if (root.value.size() != 1) throw DimensionError("backward requires a scalar loss");
  const int last = loss.id();
  for (int i = 0; i <= last; ++i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.needs_grad) {
      n.grad.assign(n.value.size(), T(0));
    } else {
      n.grad.clear();
    }
  }
  if (!nodes_[static_cast<std::size_t>(last)].needs_grad) return;
  nodes_[static_cast<std::size_t>(last)].grad[0] = T(1);
  for (int i = last; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.needs_grad && n.backward) n.backward(*this, i);
  }
  for (int i = 0; i <= last; ++i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.param != nullptr) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
    }
  }
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  ++generation_;
}

// ---------------------------------------------------------------- helpers

namespace {

template <typename T>
Tape<T>& same_tape(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw std::logic_error("tensors live on different tapes");
  return *a.tape();
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Each channel becomes an (h + 2p) x (w + 2p) plane followed by zeros up to
// `plane` entries, so shifted slices of length h * (w + 2p) stay in bounds.
template <typename T>
void pad_planes(const T* x, int cin, int h, int w, int p, Padding pad, Eigen::Index plane, T* xp) {
  const int wp = w + 2 * p;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const bool zero = pad == Padding::zero;
  for (int ci = 0; ci < cin; ++ci) {
    const T* src = x + ci * hw;
    T* dst = xp + ci * plane;
    for (int py = 0; py < h + 2 * p; ++py) {
      T* drow = dst + static_cast<std::size_t>(py) * wp;
      int sy = py - p;
      if (sy < 0 || sy >= h) {
        if (zero) {
          std::fill(drow, drow + wp, T(0));
          continue;
        }
        sy = reflect_index(sy, h);
      }
      const T* srow = src + static_cast<std::size_t>(sy) * w;
      for (int px = 0; px < p; ++px) drow[px] = zero ? T(0) : srow[reflect_index(px - p, w)];
      std::memcpy(drow + p, srow, sizeof(T) * w);
      for (int px = w + p; px < wp; ++px) drow[px] = zero ? T(0) : srow[reflect_index(px - p, w)];
    }
    std::fill(dst + static_cast<std::size_t>(h + 2 * p) * wp, dst + plane, T(0));
  }
}

// Adjoint of pad_planes, accumulated into x.
template <typename T>
void unpad_planes_add(const T* xp, int cin, int h, int w, int p, Padding pad, Eigen::Index plane, T* x) {
  const int wp = w + 2 * p;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const bool zero = pad == Padding::zero;
  for (int ci = 0; ci < cin; ++ci) {
    const T* src = xp + ci * plane;
    T* dst = x + ci * hw;
    for (int py = 0; py < h + 2 * p; ++py) {
      const T* srow = src + static_cast<std::size_t>(py) * wp;
      int sy = py - p;
      if (sy < 0 || sy >= h) {
        if (zero) continue;
        sy = reflect_index(sy, h);
      }
      T* drow = dst + static_cast<std::size_t>(sy) * w;
      if (!zero) {
        for (int px = 0; px < p; ++px) drow[reflect_index(px - p, w)] += srow[px];
        for (int px = w + p; px < wp; ++px) drow[reflect_index(px - p, w)] += srow[px];
      }
      for (int xx = 0; xx < w; ++xx) drow[xx] += srow[xx + p];
    }
  }
}

// Filter (cout, cin, k, k) regrouped as k * k stacked (cout x cin) tap matrices.
template <typename T>
RowMat<T> tap_matrices(const T* weight, int cout, int cin, int taps) {
  RowMat<T> m(static_cast<Eigen::Index>(taps) * cout, cin);
  for (int t = 0; t < taps; ++t) {
    for (int co = 0; co < cout; ++co) {
      for (int ci = 0; ci < cin; ++ci) m(t * cout + co, ci) = weight[(co * cin + ci) * taps + t];
    }
  }
  return m;
}

// Separable 1D interpolation table for bilinear upsampling.
struct Interp1D {
  std::vector<int> i0, i1;
  std::vector<double> w0, w1;
};

Interp1D upsample_table(int n_in, int factor) {
  Interp1D t;
  const int n_out = n_in * factor;
  t.i0.resize(n_out);
  t.i1.resize(n_out);
  t.w0.resize(n_out);
  t.w1.resize(n_out);
  for (int o = 0; o < n_out; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
    const int a = std::min(static_cast<int>(std::floor(src)), n_in - 1);
    const int b = std::min(a + 1, n_in - 1);
    const double f = src - a;
    t.i0[o] = a;
    t.i1[o] = b;
    t.w0[o] = 1.0 - f;
    t.w1[o] = f;
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------- primitives

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_same(a, b, "add");
  auto va = a.values();
  auto vb = b.values();
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  const int ia = a.id(), ib = b.id();
  return tape.record(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    for (int in : {ia, ib}) {
      auto& n = t.node(in);
      if (!n.needs_grad) continue;
      for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_same(a, b, "sub");
  auto va = a.values();
  auto vb = b.values();
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  const int ia = a.id(), ib = b.id();
  return tape.record(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    if (auto& na = t.node(ia); na.needs_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i];
    }
    if (auto& nb = t.node(ib); nb.needs_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) nb.grad[i] -= g[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_same(a, b, "mul");
  auto va = a.values();
  auto vb = b.values();
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  const int ia = a.id(), ib = b.id();
  return tape.record(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& na = t.node(ia);
    auto& nb = t.node(ib);
    if (na.needs_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * nb.value[i];
    }
    if (nb.needs_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) nb.grad[i] += g[i] * na.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
  Tape<T>& tape = *a.tape();
  auto va = a.values();
  const T st = static_cast<T>(s);
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = st * va[i];
  const int ia = a.id();
  return tape.record(a.shape(), std::move(out), {ia}, [ia, st](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& n = t.node(ia);
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += st * g[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tape<T>& tape = *a.tape();
  auto va = a.values();
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] > T(0) ? va[i] : T(0);
  const int ia = a.id();
  return tape.record(a.shape(), std::move(out), {ia}, [ia](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& n = t.node(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (n.value[i] > T(0)) n.grad[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  Tape<T>& tape = *a.tape();
  auto va = a.values();
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(va[i]);
  const int ia = a.id();
  return tape.record(a.shape(), std::move(out), {ia}, [ia](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& n = t.node(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = n.value[i];
      if (v > T(0)) {
        n.grad[i] += g[i];
      } else if (v < T(0)) {
        n.grad[i] -= g[i];
      }
    }
  });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  Tape<T>& tape = *a.tape();
  auto va = a.values();
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * va[i];
  const int ia = a.id();
  return tape.record(a.shape(), std::move(out), {ia}, [ia](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& n = t.node(ia);
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += T(2) * n.value[i] * g[i];
  });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a, double eps) {
  Tape<T>& tape = *a.tape();
  auto va = a.values();
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(va[i] + static_cast<T>(eps));
  const int ia = a.id();
  return tape.record(a.shape(), std::move(out), {ia}, [ia](Tape<T>& t, int self) {
    const auto& node = t.node(self);
    auto& n = t.node(ia);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      n.grad[i] += node.grad[i] / (T(2) * node.value[i]);
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  Tape<T>& tape = *a.tape();
  double s = 0.0;
  for (const T v : a.values()) s += v;
  const int ia = a.id();
  return tape.record(Shape::scalar(), {static_cast<T>(s)}, {ia}, [ia](Tape<T>& t, int self) {
    const T g = t.node(self).grad[0];
    for (T& v : t.node(ia).grad) v += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  Tape<T>& tape = *a.tape();
  double s = 0.0;
  for (const T v : a.values()) s += v;
  const double n = static_cast<double>(a.values().size());
  const int ia = a.id();
  return tape.record(Shape::scalar(), {static_cast<T>(s / n)}, {ia}, [ia, n](Tape<T>& t, int self) {
    const T g = static_cast<T>(t.node(self).grad[0] / n);
    for (T& v : t.node(ia).grad) v += g;
  });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.rank != 3 || sb.rank != 3 || sa[1] != sb[1] || sa[2] != sb[2]) {
    throw DimensionError("concat_channels: incompatible shapes " + sa.str() + " and " + sb.str());
  }
  std::vector<T> out;
  out.reserve(sa.size() + sb.size());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  const int ia = a.id(), ib = b.id();
  const std::size_t na = sa.size();
  return tape.record(Shape::image(sa[0] + sb[0], sa[1], sa[2]), std::move(out), {ia, ib},
                     [ia, ib, na](Tape<T>& t, int self) {
                       const auto& g = t.node(self).grad;
                       if (auto& x = t.node(ia); x.needs_grad) {
                         for (std::size_t i = 0; i < na; ++i) x.grad[i] += g[i];
                       }
                       if (auto& y = t.node(ib); y.needs_grad) {
                         for (std::size_t i = 0; i < y.grad.size(); ++i) y.grad[i] += g[na + i];
                       }
                     });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Padding pad) {
  Tape<T>& tape = same_tape(x, weight);
  same_tape(x, bias);
  const Shape sx = x.shape();
  const Shape sw = weight.shape();
  if (sx.rank != 3 || sw.rank != 4 || sw[1] != sx[0] || sw[2] != sw[3] || sw[2] % 2 == 0) {
    throw DimensionError("conv2d: incompatible input " + sx.str() + " and weight " + sw.str());
  }
  if (bias.shape().size() != static_cast<std::size_t>(sw[0])) {
    throw DimensionError("conv2d: bias length does not match output channels");
  }
  const int cin = sx[0], h = sx[1], w = sx[2], cout = sw[0], k = sw[2];
  // Output pixel (y, x) sits at column y * wp + x of a "wide" result whose
  // k * k tap products are plain GEMMs against shifted slices of the padded
  // input; the extra 2p columns per row are discarded.
  const int p = k / 2, wp = w + 2 * p, taps = k * k;
  const Eigen::Index plane = static_cast<Eigen::Index>(h + 2 * p) * wp + (k - 1);
  const Eigen::Index len = static_cast<Eigen::Index>(h) * wp;
  auto xp = std::make_shared<RowMat<T>>(cin, plane);
  pad_planes(x.values().data(), cin, h, w, p, pad, plane, xp->data());

  std::vector<T> out(static_cast<std::size_t>(cout) * h * w);
  {
    const RowMat<T> wt = tap_matrices(weight.values().data(), cout, cin, taps);
    RowMat<T> wide = RowMat<T>::Zero(cout, len);
    for (int t = 0; t < taps; ++t) {
      const Eigen::Index off = static_cast<Eigen::Index>(t / k) * wp + t % k;
      wide.noalias() += wt.middleRows(static_cast<Eigen::Index>(t) * cout, cout) * xp->middleCols(off, len);
    }
    auto b = bias.values();
    for (int co = 0; co < cout; ++co) {
      for (int y = 0; y < h; ++y) {
        T* dst = out.data() + (static_cast<std::size_t>(co) * h + y) * w;
        const T* src = wide.data() + co * len + static_cast<Eigen::Index>(y) * wp;
        for (int xx = 0; xx < w; ++xx) dst[xx] = src[xx] + b[co];
      }
    }
  }

  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return tape.record(
      Shape::image(cout, h, w), std::move(out), {ix, iw, ib},
      [ix, iw, ib, xp, cin, h, w, cout, k, p, wp, taps, plane, len, pad](Tape<T>& t, int self) {
        const auto& g = t.node(self).grad;
        RowMat<T> gw = RowMat<T>::Zero(cout, len);
        for (int co = 0; co < cout; ++co) {
          for (int y = 0; y < h; ++y) {
            std::memcpy(gw.data() + co * len + static_cast<Eigen::Index>(y) * wp,
                        g.data() + (static_cast<std::size_t>(co) * h + y) * w, sizeof(T) * w);
          }
        }
        auto offset = [&](int tap) { return static_cast<Eigen::Index>(tap / k) * wp + tap % k; };
        if (auto& nw = t.node(iw); nw.needs_grad) {
          RowMat<T> d(cout, cin);
          for (int tap = 0; tap < taps; ++tap) {
            d.noalias() = gw * xp->middleCols(offset(tap), len).transpose();
            for (int co = 0; co < cout; ++co) {
              for (int ci = 0; ci < cin; ++ci) nw.grad[(co * cin + ci) * taps + tap] += d(co, ci);
            }
          }
        }
        if (auto& nb = t.node(ib); nb.needs_grad) {
          for (int co = 0; co < cout; ++co) nb.grad[co] += gw.row(co).sum();
        }
        if (auto& nx = t.node(ix); nx.needs_grad) {
          const RowMat<T> wt = tap_matrices(t.node(iw).value.data(), cout, cin, taps);
          RowMat<T> dxp = RowMat<T>::Zero(cin, plane);
          for (int tap = 0; tap < taps; ++tap) {
            dxp.middleCols(offset(tap), len).noalias() +=
                wt.middleRows(static_cast<Eigen::Index>(tap) * cout, cout).transpose() * gw;
          }
          unpad_planes_add(dxp.data(), cin, h, w, p, pad, plane, nx.grad.data());
        }
      });
}

template <typename T>
Tensor<T> linear_op(const Tensor<T>& x, const LinearMap<T>& map) {
  Tape<T>& tape = *x.tape();
  if (!(x.shape() == map.in_shape)) {
    throw DimensionError("linear_op: input " + x.shape().str() + " does not match operator domain " +
                         map.in_shape.str());
  }
  std::vector<T> out(map.out_shape.size());
  map.forward(x.values().data(), out.data());
  const int ix = x.id();
  auto adjoint = map.adjoint;
  const std::size_t n_in = map.in_shape.size();
  return tape.record(map.out_shape, std::move(out), {ix}, [ix, adjoint, n_in](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    std::vector<T> tmp(n_in);
    adjoint(g.data(), tmp.data());
    auto& n = t.node(ix);
    for (std::size_t i = 0; i < n_in; ++i) n.grad[i] += tmp[i];
  });
}

template <typename T>
LinearMap<T> bilinear_upsample_map(int channels, int height, int width, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
  auto ty = std::make_shared<Interp1D>(upsample_table(height, factor));
  auto tx = std::make_shared<Interp1D>(upsample_table(width, factor));
  const int ho = height * factor, wo = width * factor;
  LinearMap<T> m;
  m.in_shape = Shape::image(channels, height, width);
  m.out_shape = Shape::image(channels, ho, wo);
  m.forward = [=](const T* in, T* out) {
    for (int c = 0; c < channels; ++c) {
      const T* src = in + static_cast<std::size_t>(c) * height * width;
      T* dst = out + static_cast<std::size_t>(c) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        const T* r0 = src + static_cast<std::size_t>(ty->i0[oy]) * width;
        const T* r1 = src + static_cast<std::size_t>(ty->i1[oy]) * width;
        const double a = ty->w0[oy], b = ty->w1[oy];
        for (int ox = 0; ox < wo; ++ox) {
          const int x0 = tx->i0[ox], x1 = tx->i1[ox];
          const double top = tx->w0[ox] * r0[x0] + tx->w1[ox] * r0[x1];
          const double bot = tx->w0[ox] * r1[x0] + tx->w1[ox] * r1[x1];
          dst[static_cast<std::size_t>(oy) * wo + ox] = static_cast<T>(a * top + b * bot);
        }
      }
    }
  };
  m.adjoint = [=](const T* in, T* out) {
    std::fill(out, out + static_cast<std::size_t>(channels) * height * width, T(0));
    for (int c = 0; c < channels; ++c) {
      const T* src = in + static_cast<std::size_t>(c) * ho * wo;
      T* dst = out + static_cast<std::size_t>(c) * height * width;
      for (int oy = 0; oy < ho; ++oy) {
        T* r0 = dst + static_cast<std::size_t>(ty->i0[oy]) * width;
        T* r1 = dst + static_cast<std::size_t>(ty->i1[oy]) * width;
        const double a = ty->w0[oy], b = ty->w1[oy];
        for (int ox = 0; ox < wo; ++ox) {
          const double g = src[static_cast<std::size_t>(oy) * wo + ox];
          const int x0 = tx->i0[ox], x1 = tx->i1[ox];
          r0[x0] += static_cast<T>(a * tx->w0[ox] * g);
          r0[x1] += static_cast<T>(a * tx->w1[ox] * g);
          r1[x0] += static_cast<T>(b * tx->w0[ox] * g);
          r1[x1] += static_cast<T>(b * tx->w1[ox] * g);
        }
      }
    }
  };
  return m;
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int factor) {
  const Shape s = x.shape();
  if (s.rank != 3) throw DimensionError("bilinear_upsample expects a C x H x W tensor");
  return linear_op(x, bilinear_upsample_map<T>(s[0], s[1], s[2], factor));
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  return mean(square(sub(a, b)));
}

#define PEI_AD_INSTANTIATE(T)                                                           \
  template class Tensor<T>;                                                             \
  template class Tape<T>;                                                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> scale(const Tensor<T>&, double);                                   \
  template Tensor<T> relu(const Tensor<T>&);                                            \
  template Tensor<T> abs(const Tensor<T>&);                                             \
  template Tensor<T> square(const Tensor<T>&);                                          \
  template Tensor<T> sqrt(const Tensor<T>&, double);                                    \
  template Tensor<T> sum(const Tensor<T>&);                                             \
  template Tensor<T> mean(const Tensor<T>&);                                            \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Padding); \
  template Tensor<T> linear_op(const Tensor<T>&, const LinearMap<T>&);                  \
  template LinearMap<T> bilinear_upsample_map(int, int, int, int);                      \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, int);                          \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);

PEI_AD_INSTANTIATE(float)
PEI_AD_INSTANTIATE(double)

#undef PEI_AD_INSTANTIATE

}  // namespace pei::ad

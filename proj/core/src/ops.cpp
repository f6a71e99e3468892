#include "a2j/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bilinear.hpp"
#include "eigen_util.hpp"

namespace a2j {

using detail::cmat;
using detail::make_result;
using detail::mat;
using detail::set_backward;
using detail::wants_grad;

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Buffer<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  auto out = make_result<T>(a.shape(), std::move(v), {&a, &b});
  set_backward(out, [o = out.node().get(), an = a.node().get(), bn = b.node().get()] {
    for (auto* n : {an, bn}) {
      if (!wants_grad(n)) continue;
      for (std::size_t i = 0; i < o->grad.size(); ++i) n->grad[i] += o->grad[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Buffer<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  auto out = make_result<T>(a.shape(), std::move(v), {&a, &b});
  set_backward(out, [o = out.node().get(), an = a.node().get(), bn = b.node().get()] {
    if (wants_grad(an))
      for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
    if (wants_grad(bn))
      for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] -= o->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Buffer<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  auto out = make_result<T>(a.shape(), std::move(v), {&a, &b});
  set_backward(out, [o = out.node().get(), an = a.node().get(), bn = b.node().get()] {
    if (wants_grad(an))
      for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * bn->value[i];
    if (wants_grad(bn))
      for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i] * an->value[i];
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Buffer<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * factor;
  auto out = make_result<T>(a.shape(), std::move(v), {&a});
  set_backward(out, [o = out.node().get(), an = a.node().get(), factor] {
    if (!wants_grad(an)) return;
    for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * factor;
  });
  return out;
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "add_bias");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (bias.size() != d) {
    throw ShapeError("add_bias: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(bias.shape()));
  }
  Buffer<T> v(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) v[r * d + c] += bias[c];
  auto out = make_result<T>(x.shape(), std::move(v), {&x, &bias});
  set_backward(out, [o = out.node().get(), xn = x.node().get(), bn = bias.node().get(), n, d] {
    if (wants_grad(xn))
      for (std::size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i];
    if (wants_grad(bn))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) bn->grad[c] += o->grad[r * d + c];
  });
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Buffer<T> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] > T(0) ? x[i] : T(0);
  auto out = make_result<T>(x.shape(), std::move(v), {&x});
  set_backward(out, [o = out.node().get(), xn = x.node().get()] {
    if (!wants_grad(xn)) return;
    for (std::size_t i = 0; i < o->grad.size(); ++i)
      if (xn->value[i] > T(0)) xn->grad[i] += o->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];

  Buffer<T> y(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, x[base + k * inner]);
      T total = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const T e = std::exp(x[base + k * inner] - mx);
        y[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < n; ++k) y[base + k * inner] /= total;
    }
  }
  auto out = make_result<T>(s, std::move(y), {&x});
  set_backward(out, [o = out.node().get(), xn = x.node().get(), outer, inner, n] {
    if (!wants_grad(xn)) return;
    const auto& yv = o->value;
    const auto& g = o->grad;
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = a * n * inner + in;
        T dot = 0;
        for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * yv[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t i = base + k * inner;
          xn->grad[i] += yv[i] * (g[i] - dot);
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "linear");
  require_rank(weight.shape(), 2, "linear weight");
  const std::size_t n = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: shape mismatch " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != outd) {
    throw ShapeError("linear: shape mismatch bias " + shape_str(bias.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  Buffer<T> y(n * outd);
  auto Y = mat(y.data(), n, outd);
  Y.noalias() = cmat(x.data(), n, in) * cmat(weight.data(), outd, in).transpose();
  if (has_bias) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < outd; ++c) y[r * outd + c] += bias[c];
  }
  auto out = make_result<T>(Shape{n, outd}, std::move(y), {&x, &weight, &bias});
  set_backward(out, [o = out.node().get(), xn = x.node().get(), wn = weight.node().get(),
                     bn = has_bias ? bias.node().get() : nullptr, n, in, outd] {
    auto dY = cmat(o->grad.data(), n, outd);
    if (wants_grad(xn)) {
      mat(xn->grad.data(), n, in).noalias() += dY * cmat(wn->value.data(), outd, in);
    }
    if (wants_grad(wn)) {
      mat(wn->grad.data(), outd, in).noalias() += dY.transpose() * cmat(xn->value.data(), n, in);
    }
    if (bn && wants_grad(bn)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < outd; ++c) bn->grad[c] += o->grad[r * outd + c];
    }
  });
  return out;
}

namespace {

// Normalizes `count` groups of `len` contiguous-or-strided elements. The
// `index(g, i)` callable maps to the flat position; `channel(g, i)` selects
// the affine parameter.
template <typename T, typename Index, typename Channel>
void norm_forward(std::size_t count, std::size_t len, const Buffer<T>& x,
                  const Tensor<T>& gamma, const Tensor<T>& beta, T eps, Index index,
                  Channel channel, Buffer<T>& y, Buffer<T>& xhat,
                  Buffer<T>& inv_std) {
  for (std::size_t g = 0; g < count; ++g) {
    T mean = 0;
    for (std::size_t i = 0; i < len; ++i) mean += x[index(g, i)];
    mean /= T(len);
    T var = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const T d = x[index(g, i)] - mean;
      var += d * d;
    }
    var /= T(len);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[g] = is;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t p = index(g, i);
      const T h = (x[p] - mean) * is;
      xhat[p] = h;
      const std::size_t c = channel(g, i);
      y[p] = gamma[c] * h + beta[c];
    }
  }
}

template <typename T, typename Index, typename Channel>
void norm_backward(std::size_t count, std::size_t len, const Buffer<T>& dy,
                   const Buffer<T>& xhat, const Buffer<T>& inv_std,
                   TensorNode<T>* xn, TensorNode<T>* gn, TensorNode<T>* bn, Index index,
                   Channel channel) {
  const bool dx = wants_grad(xn);
  const bool dg = wants_grad(gn);
  const bool db = wants_grad(bn);
  for (std::size_t g = 0; g < count; ++g) {
    T sum_dh = 0, sum_dh_h = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t p = index(g, i);
      const std::size_t c = channel(g, i);
      const T dh = dy[p] * gn->value[c];
      sum_dh += dh;
      sum_dh_h += dh * xhat[p];
      if (dg) gn->grad[c] += dy[p] * xhat[p];
      if (db) bn->grad[c] += dy[p];
    }
    if (!dx) continue;
    const T scale_factor = inv_std[g] / T(len);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t p = index(g, i);
      const T dh = dy[p] * gn->value[channel(g, i)];
      xn->grad[p] += scale_factor * (T(len) * dh - sum_dh - xhat[p] * sum_dh_h);
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_rank(x.shape(), 2, "layer_norm");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gamma.size() != d || beta.size() != d) {
    throw ShapeError("layer_norm: shape mismatch " + shape_str(x.shape()) + " vs affine " +
                     shape_str(gamma.shape()));
  }
  auto index = [d](std::size_t g, std::size_t i) { return g * d + i; };
  auto channel = [](std::size_t, std::size_t i) { return i; };
  Buffer<T> y(x.size()), xhat(x.size()), inv_std(n);
  norm_forward(n, d, x.node()->value, gamma, beta, eps, index, channel, y, xhat, inv_std);
  auto out = make_result<T>(x.shape(), std::move(y), {&x, &gamma, &beta});
  set_backward(out, [o = out.node().get(), xn = x.node().get(), gn = gamma.node().get(),
                     bn = beta.node().get(), xhat = std::move(xhat),
                     inv_std = std::move(inv_std), n, d, index, channel] {
    norm_backward(n, d, o->grad, xhat, inv_std, xn, gn, bn, index, channel);
  });
  return out;
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::size_t groups, T eps) {
  require_rank(x.shape(), 3, "group_norm");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  if (groups == 0 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (gamma.size() != c || beta.size() != c) {
    throw ShapeError("group_norm: shape mismatch " + shape_str(x.shape()) + " vs affine " +
                     shape_str(gamma.shape()));
  }
  const std::size_t per = c / groups;
  const std::size_t len = per * hw;
  // Channels of a group are contiguous in CHW layout.
  auto index = [len](std::size_t g, std::size_t i) { return g * len + i; };
  auto channel = [len, hw](std::size_t g, std::size_t i) { return (g * len + i) / hw; };
  Buffer<T> y(x.size()), xhat(x.size()), inv_std(groups);
  norm_forward(groups, len, x.node()->value, gamma, beta, eps, index, channel, y, xhat, inv_std);
  auto out = make_result<T>(x.shape(), std::move(y), {&x, &gamma, &beta});
  set_backward(out, [o = out.node().get(), xn = x.node().get(), gn = gamma.node().get(),
                     bn = beta.node().get(), xhat = std::move(xhat),
                     inv_std = std::move(inv_std), groups, len, index, channel] {
    norm_backward(groups, len, o->grad, xhat, inv_std, xn, gn, bn, index, channel);
  });
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  require_rank(x.shape(), 3, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t o = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c || weight.dim(3) != k) {
    throw ShapeError("conv2d: shape mismatch input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != o) {
    throw ShapeError("conv2d: shape mismatch bias " + shape_str(bias.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t ho = (h + 2 * padding - k) / stride + 1;
  const std::size_t wo = (w + 2 * padding - k) / stride + 1;
  const std::size_t ckk = c * k * k, p = ho * wo;

  // cols[(ci,ky,kx), (oy,ox)]
  Buffer<T> cols(ckk * p, T(0));
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols.data() + ((ci * k + ky) * k + kx) * p;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = long(oy * stride + ky) - long(padding);
          if (iy < 0 || iy >= long(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = long(ox * stride + kx) - long(padding);
            if (ix < 0 || ix >= long(w)) continue;
            row[oy * wo + ox] = x[(ci * h + std::size_t(iy)) * w + std::size_t(ix)];
          }
        }
      }

  Buffer<T> y(o * p);
  mat(y.data(), o, p).noalias() = cmat(weight.data(), o, ckk) * cmat(cols.data(), ckk, p);
  if (has_bias) {
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < p; ++i) y[oc * p + i] += bias[oc];
  }
  auto out = make_result<T>(Shape{o, ho, wo}, std::move(y), {&x, &weight, &bias});
  set_backward(out, [on = out.node().get(), xn = x.node().get(), wn = weight.node().get(),
                     bn = has_bias ? bias.node().get() : nullptr, cols = std::move(cols), c, h,
                     w, o, k, ho, wo, ckk, p, stride, padding] {
    auto dY = cmat(on->grad.data(), o, p);
    if (wants_grad(wn)) {
      mat(wn->grad.data(), o, ckk).noalias() += dY * cmat(cols.data(), ckk, p).transpose();
    }
    if (bn && wants_grad(bn)) {
      for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t i = 0; i < p; ++i) bn->grad[oc] += on->grad[oc * p + i];
    }
    if (wants_grad(xn)) {
      Buffer<T> dcols(ckk * p);
      mat(dcols.data(), ckk, p).noalias() = cmat(wn->value.data(), o, ckk).transpose() * dY;
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const T* row = dcols.data() + ((ci * k + ky) * k + kx) * p;
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const long iy = long(oy * stride + ky) - long(padding);
              if (iy < 0 || iy >= long(h)) continue;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const long ix = long(ox * stride + kx) - long(padding);
                if (ix < 0 || ix >= long(w)) continue;
                xn->grad[(ci * h + std::size_t(iy)) * w + std::size_t(ix)] += row[oy * wo + ox];
              }
            }
          }
    }
  });
  return out;
}

template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& feature, const Tensor<T>& points) {
  if (feature.rank() != 3 || feature.size() == 0) {
    throw ShapeError("degenerate feature: bilinear_sample needs a non-empty [C,H,W] map, got " +
                     shape_str(feature.shape()));
  }
  if (points.rank() != 2 || points.dim(1) != 2) {
    throw ShapeError("bilinear_sample: points must be [P,2], got " + shape_str(points.shape()));
  }
  const std::size_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  const std::size_t np = points.dim(0), hw = h * w;
  Buffer<T> y(c * np);
  for (std::size_t pi = 0; pi < np; ++pi) {
    const detail::BilinearTap<T> tap(points[2 * pi], points[2 * pi + 1], int(w), int(h));
    for (std::size_t ci = 0; ci < c; ++ci) {
      const T* plane = feature.data() + ci * hw;
      T corner[4];
      tap.corners([plane](int i) { return plane[i]; }, corner);
      y[ci * np + pi] = tap.interpolate(corner);
    }
  }
  auto out = make_result<T>(Shape{c, np}, std::move(y), {&feature, &points});
  set_backward(out, [o = out.node().get(), fn = feature.node().get(), pn = points.node().get(),
                     c, h, w, np, hw] {
    const bool df = wants_grad(fn);
    const bool dp = wants_grad(pn);
    for (std::size_t pi = 0; pi < np; ++pi) {
      const detail::BilinearTap<T> tap(pn->value[2 * pi], pn->value[2 * pi + 1], int(w), int(h));
      T gx = 0, gy = 0;
      for (std::size_t ci = 0; ci < c; ++ci) {
        const T g = o->grad[ci * np + pi];
        if (df) {
          T* plane = fn->grad.data() + ci * hw;
          for (int kk = 0; kk < 4; ++kk)
            if (tap.valid[kk]) plane[tap.index[kk]] += g * tap.w[kk];
        }
        if (dp) {
          const T* plane = fn->value.data() + ci * hw;
          T corner[4];
          tap.corners([plane](int i) { return plane[i]; }, corner);
          gx += g * tap.d_dx(corner);
          gy += g * tap.d_dy(corner);
        }
      }
      if (dp) {
        pn->grad[2 * pi] += gx * T(w);
        pn->grad[2 * pi + 1] += gy * T(h);
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "transpose");
  const std::size_t n = x.dim(0), m = x.dim(1);
  Buffer<T> y(x.size());
  mat(y.data(), m, n) = cmat(x.data(), n, m).transpose();
  auto out = make_result<T>(Shape{m, n}, std::move(y), {&x});
  set_backward(out, [o = out.node().get(), xn = x.node().get(), n, m] {
    if (!wants_grad(xn)) return;
    mat(xn->grad.data(), n, m) += cmat(o->grad.data(), m, n).transpose();
  });
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(shape));
  }
  Buffer<T> y(x.values().begin(), x.values().end());
  auto out = make_result<T>(std::move(shape), std::move(y), {&x});
  set_backward(out, [o = out.node().get(), xn = x.node().get()] {
    if (!wants_grad(xn)) return;
    for (std::size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw ShapeError("concat_rows: scalar input");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    Shape tail(p.shape().begin() + 1, p.shape().end());
    Shape ref(shape.begin() + 1, shape.end());
    if (p.rank() != shape.size() || tail != ref) {
      throw ShapeError("concat_rows: shape mismatch " + shape_str(shape) + " vs " +
                       shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  shape[0] = rows;
  Buffer<T> y;
  y.reserve(numel(shape));
  for (const auto& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());

  Tensor<T> out(shape, std::move(y));
  if (grad_enabled()) {
    for (const auto& p : parts) out.node()->requires_grad |= p.requires_grad();
    if (out.requires_grad())
      for (const auto& p : parts) out.node()->parents.push_back(p.node());
  }
  std::vector<TensorNode<T>*> nodes;
  for (const auto& p : parts) nodes.push_back(p.node().get());
  set_backward(out, [o = out.node().get(), nodes = std::move(nodes)] {
    std::size_t offset = 0;
    for (auto* n : nodes) {
      const std::size_t len = n->value.size();
      if (wants_grad(n))
        for (std::size_t i = 0; i < len; ++i) n->grad[i] += o->grad[offset + i];
      offset += len;
    }
  });
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank(x.shape(), 2, "slice_cols");
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (begin > end || end > m) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + shape_str(x.shape()));
  }
  const std::size_t k = end - begin;
  Buffer<T> y(n * k);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) y[r * k + c] = x[r * m + begin + c];
  auto out = make_result<T>(Shape{n, k}, std::move(y), {&x});
  set_backward(out, [o = out.node().get(), xn = x.node().get(), n, m, k, begin] {
    if (!wants_grad(xn)) return;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c) xn->grad[r * m + begin + c] += o->grad[r * k + c];
  });
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> index) {
  require_rank(x.shape(), 2, "gather_rows");
  const std::size_t l = x.dim(0), d = x.dim(1), n = index.size();
  Buffer<T> y(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= l) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                       shape_str(x.shape()));
    }
    std::copy_n(x.data() + index[i] * d, d, y.data() + i * d);
  }
  auto out = make_result<T>(Shape{n, d}, std::move(y), {&x});
  set_backward(out, [o = out.node().get(), xn = x.node().get(),
                     idx = std::vector<std::size_t>(index.begin(), index.end()), d] {
    if (!wants_grad(xn)) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) xn->grad[idx[i] * d + c] += o->grad[i * d + c];
  });
  return out;
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw ShapeError("mean_rows: no rows");
  Buffer<T> y(d, T(0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) y[c] += x[r * d + c];
  for (auto& v : y) v /= T(n);
  auto out = make_result<T>(Shape{d}, std::move(y), {&x});
  set_backward(out, [o = out.node().get(), xn = x.node().get(), n, d] {
    if (!wants_grad(xn)) return;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) xn->grad[r * d + c] += o->grad[c] / T(n);
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double total = 0;
  for (T v : x.values()) total += double(v);
  auto out = make_result<T>(Shape{1}, Buffer<T>{T(total)}, {&x});
  set_backward(out, [o = out.node().get(), xn = x.node().get()] {
    if (!wants_grad(xn)) return;
    for (auto& g : xn->grad) g += o->grad[0];
  });
  return out;
}

#define A2J_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);   \
  template Tensor<T> group_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                std::size_t, T);                                            \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                            std::size_t, std::size_t);                                      \
  template Tensor<T> bilinear_sample(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> transpose(const Tensor<T>&);                                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                      \
  template Tensor<T> concat_rows(std::span<const Tensor<T>>);                               \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);            \
  template Tensor<T> mean_rows(const Tensor<T>&);                                           \
  template Tensor<T> sum(const Tensor<T>&);

A2J_INSTANTIATE_OPS(float)
A2J_INSTANTIATE_OPS(double)

}  // namespace a2j

#include "a2j/attention.hpp"

#include <cmath>
#include <numbers>

#include "a2j/encoding.hpp"
#include "bilinear.hpp"
#include "eigen_util.hpp"

namespace a2j {

using detail::make_result;
using detail::set_backward;
using detail::wants_grad;

namespace {

struct DeformGeometry {
  std::size_t nq, d, heads, dh, nlevels, points, ntok;
  bool per_level_ref;
};

template <typename T>
DeformGeometry check_deform(const Tensor<T>& value, std::span<const LevelShape> levels,
                            const Tensor<T>& reference, const Tensor<T>& offsets,
                            const Tensor<T>& weights, std::size_t heads, std::size_t points) {
  if (value.rank() != 2) throw ShapeError("msdam: value must be [N_tok,d], got " + shape_str(value.shape()));
  DeformGeometry g{};
  g.ntok = value.dim(0);
  g.d = value.dim(1);
  g.heads = heads;
  g.points = points;
  g.nlevels = levels.size();
  if (heads == 0 || g.d % heads != 0) {
    throw ShapeError("msdam: d_model " + std::to_string(g.d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  g.dh = g.d / heads;
  for (const auto& l : levels) {
    if (l.start + l.height * l.width > g.ntok) {
      throw ShapeError("msdam: level geometry exceeds value tokens " + shape_str(value.shape()));
    }
  }
  const std::size_t per_query = heads * g.nlevels * points;
  if (offsets.rank() != 2 || offsets.dim(1) != per_query * 2) {
    throw ShapeError("msdam: offsets shape " + shape_str(offsets.shape()) + " vs expected [N_q," +
                     std::to_string(per_query * 2) + "]");
  }
  g.nq = offsets.dim(0);
  require_same_shape(weights.shape(), Shape{g.nq, per_query}, "msdam weights");
  if (reference.shape() == Shape{g.nq, 2}) {
    g.per_level_ref = false;
  } else if (reference.shape() == Shape{g.nq, g.nlevels, 2}) {
    g.per_level_ref = true;
  } else {
    throw ShapeError("msdam: reference shape " + shape_str(reference.shape()) +
                     " vs queries " + std::to_string(g.nq));
  }
  return g;
}

}  // namespace

template <typename T>
Tensor<T> ms_deform_attn_core(const Tensor<T>& value, std::span<const LevelShape> levels,
                              const Tensor<T>& reference, const Tensor<T>& offsets,
                              const Tensor<T>& weights, std::size_t heads, std::size_t points) {
  const DeformGeometry g = check_deform(value, levels, reference, offsets, weights, heads, points);
  const std::vector<LevelShape> lv(levels.begin(), levels.end());

  auto ref_index = [g](std::size_t q, std::size_t l) {
    return g.per_level_ref ? (q * g.nlevels + l) * 2 : q * 2;
  };

  Buffer<T> out(g.nq * g.d, T(0));
  const T* val = value.data();
  for (std::size_t q = 0; q < g.nq; ++q) {
    for (std::size_t m = 0; m < g.heads; ++m) {
      T* dst = out.data() + q * g.d + m * g.dh;
      for (std::size_t l = 0; l < g.nlevels; ++l) {
        const LevelShape& ls = lv[l];
        const std::size_t ri = ref_index(q, l);
        for (std::size_t k = 0; k < g.points; ++k) {
          const std::size_t s = (m * g.nlevels + l) * g.points + k;
          const T u = reference[ri] + offsets[q * 2 * (g.heads * g.nlevels * g.points) + 2 * s] / T(ls.width);
          const T v = reference[ri + 1] +
                      offsets[q * 2 * (g.heads * g.nlevels * g.points) + 2 * s + 1] / T(ls.height);
          const T a = weights[q * g.heads * g.nlevels * g.points + s];
          const detail::BilinearTap<T> tap(u, v, int(ls.width), int(ls.height));
          for (int c = 0; c < 4; ++c) {
            if (!tap.valid[c]) continue;
            const T coef = a * tap.w[c];
            const T* src = val + (ls.start + std::size_t(tap.index[c])) * g.d + m * g.dh;
            for (std::size_t j = 0; j < g.dh; ++j) dst[j] += coef * src[j];
          }
        }
      }
    }
  }

  auto result = make_result<T>(Shape{g.nq, g.d}, std::move(out),
                               {&value, &reference, &offsets, &weights});
  set_backward(result, [o = result.node().get(), vn = value.node().get(),
                        rn = reference.node().get(), on = offsets.node().get(),
                        wn = weights.node().get(), lv, g, ref_index] {
    const bool dv = wants_grad(vn);
    const bool dr = wants_grad(rn);
    const bool doff = wants_grad(on);
    const bool dw = wants_grad(wn);
    const std::size_t per_query = g.heads * g.nlevels * g.points;
    for (std::size_t q = 0; q < g.nq; ++q) {
      for (std::size_t m = 0; m < g.heads; ++m) {
        const T* gout = o->grad.data() + q * g.d + m * g.dh;
        for (std::size_t l = 0; l < g.nlevels; ++l) {
          const LevelShape& ls = lv[l];
          const std::size_t ri = ref_index(q, l);
          for (std::size_t k = 0; k < g.points; ++k) {
            const std::size_t s = (m * g.nlevels + l) * g.points + k;
            const std::size_t oi = q * 2 * per_query + 2 * s;
            const T u = rn->value[ri] + on->value[oi] / T(ls.width);
            const T v = rn->value[ri + 1] + on->value[oi + 1] / T(ls.height);
            const T a = wn->value[q * per_query + s];
            const detail::BilinearTap<T> tap(u, v, int(ls.width), int(ls.height));
            T dots[4] = {0, 0, 0, 0};
            for (int c = 0; c < 4; ++c) {
              if (!tap.valid[c]) continue;
              const std::size_t base = (ls.start + std::size_t(tap.index[c])) * g.d + m * g.dh;
              const T* src = vn->value.data() + base;
              T acc = 0;
              for (std::size_t j = 0; j < g.dh; ++j) acc += gout[j] * src[j];
              dots[c] = acc;
              if (dv) {
                const T coef = a * tap.w[c];
                T* dst = vn->grad.data() + base;
                for (std::size_t j = 0; j < g.dh; ++j) dst[j] += coef * gout[j];
              }
            }
            if (dw) wn->grad[q * per_query + s] += tap.interpolate(dots);
            // d(sample . g)/d(grid x); the offset is in level pixels, so the
            // grid-space derivative is also the offset derivative.
            const T gx = a * tap.d_dx(dots);
            const T gy = a * tap.d_dy(dots);
            if (doff) {
              on->grad[oi] += gx;
              on->grad[oi + 1] += gy;
            }
            if (dr) {
              rn->grad[ri] += gx * T(ls.width);
              rn->grad[ri + 1] += gy * T(ls.height);
            }
          }
        }
      }
    }
  });
  return result;
}

template <typename T>
Tensor<T> attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                         std::size_t heads) {
  using Strided = detail::StridedMapR<T>;
  using CStrided = detail::CStridedMapR<T>;
  using Mat = detail::MatR<T>;
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
      k.shape() != v.shape()) {
    throw ShapeError("attention: shape mismatch q " + shape_str(q.shape()) + " k " +
                     shape_str(k.shape()) + " v " + shape_str(v.shape()));
  }
  const std::size_t n = q.dim(0), mlen = k.dim(0), d = q.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const T scale_factor = T(1) / std::sqrt(T(dh));
  const auto N = Eigen::Index(n), M = Eigen::Index(mlen), DH = Eigen::Index(dh);
  const Eigen::OuterStride<> stride{Eigen::Index(d)};

  Buffer<T> out(n * d);
  Buffer<T> probs(heads * n * mlen);
  for (std::size_t h = 0; h < heads; ++h) {
    CStrided Q(q.data() + h * dh, N, DH, stride);
    CStrided K(k.data() + h * dh, M, DH, stride);
    CStrided V(v.data() + h * dh, M, DH, stride);
    detail::MapR<T> P(probs.data() + h * n * mlen, N, M);
    P.noalias() = (Q * K.transpose()) * scale_factor;
    for (Eigen::Index r = 0; r < N; ++r) {
      auto row = P.row(r);
      row = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
    Strided O(out.data() + h * dh, N, DH, stride);
    O.noalias() = P * V;
  }

  auto result = make_result<T>(Shape{n, d}, std::move(out), {&q, &k, &v});
  set_backward(result, [o = result.node().get(), qn = q.node().get(), kn = k.node().get(),
                        vn = v.node().get(), probs = std::move(probs), heads, n, mlen, d, dh,
                        scale_factor] {
    const auto N = Eigen::Index(n), M = Eigen::Index(mlen), DH = Eigen::Index(dh);
    const Eigen::OuterStride<> stride{Eigen::Index(d)};
    const bool dq = wants_grad(qn), dk = wants_grad(kn), dv = wants_grad(vn);
    Mat dS(N, M);
    for (std::size_t h = 0; h < heads; ++h) {
      detail::CMapR<T> P(probs.data() + h * n * mlen, N, M);
      CStrided dO(o->grad.data() + h * dh, N, DH, stride);
      CStrided V(vn->value.data() + h * dh, M, DH, stride);
      if (dv) {
        Strided dV(vn->grad.data() + h * dh, M, DH, stride);
        dV.noalias() += P.transpose() * dO;
      }
      if (!dq && !dk) continue;
      dS.noalias() = dO * V.transpose();
      for (Eigen::Index r = 0; r < N; ++r) {
        const T dot = dS.row(r).dot(P.row(r));
        dS.row(r) = (P.row(r).array() * (dS.row(r).array() - dot)).matrix();
      }
      dS *= scale_factor;
      if (dq) {
        CStrided K(kn->value.data() + h * dh, M, DH, stride);
        Strided dQ(qn->grad.data() + h * dh, N, DH, stride);
        dQ.noalias() += dS * K;
      }
      if (dk) {
        CStrided Q(qn->value.data() + h * dh, N, DH, stride);
        Strided dK(kn->grad.data() + h * dh, M, DH, stride);
        dK.noalias() += dS.transpose() * Q;
      }
    }
  });
  return result;
}

template <typename T>
MsDeformAttn<T>::MsDeformAttn(Rng& rng, const MsdamConfig& config) : config_(config) {
  const std::size_t d = config.d_model, m = config.heads, l = config.levels, k = config.points;
  if (m == 0 || d % m != 0) throw ConfigError("msdam: d_model must be divisible by heads");
  if (l == 0 || k == 0) throw ConfigError("msdam: levels and points must be positive");
  value_proj_ = Linear<T>(rng, d, d);
  sampling_offsets_ = Linear<T>(rng, d, m * l * k * 2);
  attention_weights_ = Linear<T>(rng, d, m * l * k);
  output_proj_ = Linear<T>(rng, d, d);

  // Offsets start at zero weight with a bias that fans the points of each
  // head out along a distinct direction, k+1 pixels for the k-th point.
  auto ow = sampling_offsets_.weight().mutable_values();
  std::fill(ow.begin(), ow.end(), T(0));
  auto ob = sampling_offsets_.bias().mutable_values();
  for (std::size_t h = 0; h < m; ++h) {
    const double theta = double(h) * 2.0 * std::numbers::pi / double(m);
    double cx = std::cos(theta), cy = std::sin(theta);
    const double norm = std::max(std::abs(cx), std::abs(cy));
    cx /= norm;
    cy /= norm;
    for (std::size_t lv = 0; lv < l; ++lv)
      for (std::size_t p = 0; p < k; ++p) {
        const std::size_t s = (h * l + lv) * k + p;
        ob[2 * s] = T(cx * double(p + 1));
        ob[2 * s + 1] = T(cy * double(p + 1));
      }
  }
  auto aw = attention_weights_.weight().mutable_values();
  std::fill(aw.begin(), aw.end(), T(0));
}

template <typename T>
Tensor<T> MsDeformAttn<T>::forward(const Tensor<T>& query, const Tensor<T>& reference,
                                   const Tensor<T>& input_flatten,
                                   std::span<const LevelShape> levels,
                                   MsdamTrace<T>* trace) const {
  if (levels.size() != config_.levels) {
    throw ShapeError("msdam: configured for " + std::to_string(config_.levels) +
                     " levels, got " + std::to_string(levels.size()));
  }
  const std::size_t nq = query.dim(0);
  const std::size_t per_head = config_.levels * config_.points;
  const Tensor<T> value = value_proj_.forward(input_flatten);
  const Tensor<T> offsets = sampling_offsets_.forward(query);
  const Tensor<T> logits = attention_weights_.forward(query);
  const Tensor<T> weights =
      reshape(softmax(reshape(logits, {nq * config_.heads, per_head}), 1),
              {nq, config_.heads * per_head});
  if (trace) {
    trace->offsets = offsets;
    trace->weights = weights;
  }
  const Tensor<T> sampled =
      ms_deform_attn_core(value, levels, reference, offsets, weights, config_.heads, config_.points);
  return output_proj_.forward(sampled);
}

template <typename T>
void MsDeformAttn<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  value_proj_.collect(out, prefix + ".value_proj");
  sampling_offsets_.collect(out, prefix + ".sampling_offsets");
  attention_weights_.collect(out, prefix + ".attention_weights");
  output_proj_.collect(out, prefix + ".output_proj");
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(Rng& rng, std::size_t d_model, std::size_t heads)
    : heads_(heads),
      q_proj_(rng, d_model, d_model),
      k_proj_(rng, d_model, d_model),
      v_proj_(rng, d_model, d_model),
      out_proj_(rng, d_model, d_model) {
  if (heads == 0 || d_model % heads != 0) throw ConfigError("attention: d_model must be divisible by heads");
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::forward(const Tensor<T>& q, const Tensor<T>& k,
                                         const Tensor<T>& v) const {
  return out_proj_.forward(
      attention_core(q_proj_.forward(q), k_proj_.forward(k), v_proj_.forward(v), heads_));
}

template <typename T>
void MultiHeadAttention<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  q_proj_.collect(out, prefix + ".q_proj");
  k_proj_.collect(out, prefix + ".k_proj");
  v_proj_.collect(out, prefix + ".v_proj");
  out_proj_.collect(out, prefix + ".out_proj");
}

template <typename T>
SpatialAttention<T>::SpatialAttention(Rng& rng, const MsdamConfig& config, bool deformable)
    : deformable_(deformable) {
  if (deformable) {
    deform_ = MsDeformAttn<T>(rng, config);
  } else {
    dense_ = MultiHeadAttention<T>(rng, config.d_model, config.heads);
  }
}

template <typename T>
Tensor<T> SpatialAttention<T>::forward(const Tensor<T>& query, const Tensor<T>& reference,
                                       const Tensor<T>& keys, const Tensor<T>& values,
                                       std::span<const LevelShape> levels) const {
  if (deformable_) return deform_.forward(query, reference, values, levels);
  return dense_.forward(query, keys, values);
}

template <typename T>
void SpatialAttention<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  if (deformable_) {
    deform_.collect(out, prefix + ".msdam");
  } else {
    dense_.collect(out, prefix + ".dense");
  }
}

template <typename T>
EncoderState<T> flatten_pyramid(const PyramidFeatures<T>& pyramid) {
  EncoderState<T> state;
  std::vector<Tensor<T>> rows;
  std::vector<double> coords;
  std::size_t start = 0;
  for (std::size_t l = 0; l < pyramid.levels.size(); ++l) {
    const Tensor<T>& f = pyramid.levels[l];
    if (f.rank() != 3 || f.dim(0) != pyramid.d_model) {
      throw ShapeError("flatten_pyramid: level " + std::to_string(l) + " has shape " +
                       shape_str(f.shape()));
    }
    const std::size_t h = f.dim(1), w = f.dim(2);
    rows.push_back(transpose(reshape(f, {pyramid.d_model, h * w})));
    state.levels.push_back({h, w, start});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        coords.push_back((double(x) + 0.5) / double(w));
        coords.push_back((double(y) + 0.5) / double(h));
        state.level_index.push_back(l);
      }
    start += h * w;
  }
  state.tokens = concat_rows<T>(rows);
  Buffer<T> ref(coords.begin(), coords.end());
  state.reference = Tensor<T>({start, 2}, std::move(ref));
  state.pos = pe_table<T>(coords, 2, pyramid.d_model);
  return state;
}

template <typename T>
EncoderLayer<T>::EncoderLayer(Rng& rng, const TransformerConfig& config)
    : pre_norm_(config.pre_norm),
      attn_(rng, {config.d_model, config.heads, kPyramidLevels, config.points}, config.msdam),
      norm1_(config.d_model),
      ffn_(rng, config.d_model, config.ffn_dim),
      norm2_(config.d_model) {}

template <typename T>
Tensor<T> EncoderLayer<T>::forward(const Tensor<T>& src, const EncoderState<T>& state) const {
  if (pre_norm_) {
    const Tensor<T> s = norm1_.forward(src);
    const Tensor<T> q = add(s, state.pos);
    const Tensor<T> x = add(src, attn_.forward(q, state.reference, q, s, state.levels));
    return add(x, ffn_.forward(norm2_.forward(x)));
  }
  const Tensor<T> q = add(src, state.pos);
  const Tensor<T> x = norm1_.forward(add(src, attn_.forward(q, state.reference, q, src, state.levels)));
  return norm2_.forward(add(x, ffn_.forward(x)));
}

template <typename T>
void EncoderLayer<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  attn_.collect(out, prefix + ".attn");
  norm1_.collect(out, prefix + ".norm1");
  ffn_.collect(out, prefix + ".ffn");
  norm2_.collect(out, prefix + ".norm2");
}

template <typename T>
Encoder<T>::Encoder(Rng& rng, const TransformerConfig& config) : config_(config) {
  Buffer<T> emb(kPyramidLevels * config.d_model);
  for (auto& e : emb) e = T(rng.normal());
  level_embed_ = Tensor<T>({kPyramidLevels, config.d_model}, std::move(emb), true);
  for (std::size_t i = 0; i < config.encoder_layers; ++i) layers_.emplace_back(rng, config);
}

template <typename T>
EncoderState<T> Encoder<T>::forward(const PyramidFeatures<T>& pyramid) const {
  EncoderState<T> state = flatten_pyramid(pyramid);
  if (state.levels.size() != kPyramidLevels) {
    throw ShapeError("encoder: expected " + std::to_string(kPyramidLevels) + " pyramid levels");
  }
  state.pos = add(state.pos, gather_rows(level_embed_, std::span<const std::size_t>(state.level_index)));
  Tensor<T> src = state.tokens;
  for (const auto& layer : layers_) src = layer.forward(src, state);
  state.tokens = src;
  return state;
}

template <typename T>
void Encoder<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".level_embed", level_embed_});
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(out, prefix + ".layer" + std::to_string(i));
}

template <typename T>
DecoderLayer<T>::DecoderLayer(Rng& rng, const TransformerConfig& config)
    : pre_norm_(config.pre_norm),
      self_attn_(rng, config.d_model, config.heads),
      norm1_(config.d_model),
      cross_attn_(rng, {config.d_model, config.heads, kPyramidLevels, config.points},
                  config.msdam),
      norm2_(config.d_model),
      ffn_(rng, config.d_model, config.ffn_dim),
      norm3_(config.d_model) {}

template <typename T>
Tensor<T> DecoderLayer<T>::forward(const Tensor<T>& embeddings, const Tensor<T>& query_pos,
                                   const Tensor<T>& anchor_ref,
                                   const EncoderState<T>& memory) const {
  const Tensor<T> keys =
      cross_attn_.deformable() ? memory.tokens : add(memory.tokens, memory.pos);
  if (pre_norm_) {
    const Tensor<T> s1 = norm1_.forward(embeddings);
    const Tensor<T> q1 = add(s1, query_pos);
    Tensor<T> d = add(embeddings, self_attn_.forward(q1, q1, s1));
    const Tensor<T> q2 = add(norm2_.forward(d), query_pos);
    d = add(d, cross_attn_.forward(q2, anchor_ref, keys, memory.tokens, memory.levels));
    return add(d, ffn_.forward(norm3_.forward(d)));
  }
  const Tensor<T> q1 = add(embeddings, query_pos);
  Tensor<T> d = norm1_.forward(add(embeddings, self_attn_.forward(q1, q1, embeddings)));
  const Tensor<T> q2 = add(d, query_pos);
  d = norm2_.forward(
      add(d, cross_attn_.forward(q2, anchor_ref, keys, memory.tokens, memory.levels)));
  return norm3_.forward(add(d, ffn_.forward(d)));
}

template <typename T>
void DecoderLayer<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  self_attn_.collect(out, prefix + ".self_attn");
  norm1_.collect(out, prefix + ".norm1");
  cross_attn_.collect(out, prefix + ".cross_attn");
  norm2_.collect(out, prefix + ".norm2");
  ffn_.collect(out, prefix + ".ffn");
  norm3_.collect(out, prefix + ".norm3");
}

template <typename T>
Decoder<T>::Decoder(Rng& rng, const TransformerConfig& config)
    : init_attn_(rng, {config.d_model, config.heads, kPyramidLevels, config.points},
                 config.msdam) {
  for (std::size_t i = 0; i < config.decoder_layers; ++i) layers_.emplace_back(rng, config);
}

template <typename T>
Tensor<T> Decoder<T>::initial_embeddings(const Tensor<T>& query_pos, const Tensor<T>& anchor_ref,
                                         const EncoderState<T>& memory) const {
  const Tensor<T> keys =
      init_attn_.deformable() ? memory.tokens : add(memory.tokens, memory.pos);
  return init_attn_.forward(query_pos, anchor_ref, keys, memory.tokens, memory.levels);
}

template <typename T>
Tensor<T> Decoder<T>::forward(const Tensor<T>& query_pos, const Tensor<T>& anchor_ref,
                              const EncoderState<T>& memory) const {
  Tensor<T> d = initial_embeddings(query_pos, anchor_ref, memory);
  for (const auto& layer : layers_) d = layer.forward(d, query_pos, anchor_ref, memory);
  return d;
}

template <typename T>
void Decoder<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  init_attn_.collect(out, prefix + ".init");
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(out, prefix + ".layer" + std::to_string(i));
}

#define A2J_INSTANTIATE_ATTENTION(T)                                                         \
  template Tensor<T> ms_deform_attn_core(const Tensor<T>&, std::span<const LevelShape>,      \
                                         const Tensor<T>&, const Tensor<T>&,                 \
                                         const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> attention_core(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                    std::size_t);                                            \
  template EncoderState<T> flatten_pyramid(const PyramidFeatures<T>&);                       \
  template class MsDeformAttn<T>;                                                            \
  template class MultiHeadAttention<T>;                                                      \
  template class SpatialAttention<T>;                                                        \
  template class EncoderLayer<T>;                                                            \
  template class Encoder<T>;                                                                 \
  template class DecoderLayer<T>;                                                            \
  template class Decoder<T>;

A2J_INSTANTIATE_ATTENTION(float)
A2J_INSTANTIATE_ATTENTION(double)

}  // namespace a2j

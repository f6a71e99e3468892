#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "a2j/attention.hpp"
#include "a2j/grad_check.hpp"
#include "oracles.hpp"
#include "property.hpp"

using namespace a2j;
using a2j::testing::for_all;
using a2j::testing::Gen;

namespace {

std::vector<double> to_vec(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

struct KernelCase {
  std::vector<LevelShape> levels;
  std::size_t tokens = 0, d = 0, heads = 0, points = 0, queries = 0;
  Tensor<double> value, reference, offsets, weights;
};

KernelCase random_case(Gen& g, bool requires_grad = false) {
  KernelCase c;
  c.heads = g.size(1, 2);
  c.d = c.heads * g.size(1, 3);
  c.points = g.size(1, 3);
  c.queries = g.size(1, 4);
  for (std::size_t l = 0, n = g.size(1, 3); l < n; ++l) {
    const std::size_t h = g.size(1, 4), w = g.size(1, 4);
    c.levels.push_back({h, w, c.tokens});
    c.tokens += h * w;
  }
  const std::size_t samples = c.heads * c.levels.size() * c.points;
  c.value = Tensor<double>({c.tokens, c.d}, g.values<double>(c.tokens * c.d, -1, 1), requires_grad);
  c.reference = Tensor<double>({c.queries, 2}, g.values<double>(c.queries * 2, 0.05, 0.95), requires_grad);
  c.offsets = Tensor<double>({c.queries, samples * 2}, g.values<double>(c.queries * samples * 2, -1.7, 1.7),
                             requires_grad);
  c.weights = Tensor<double>({c.queries, samples}, g.values<double>(c.queries * samples, 0, 1), requires_grad);
  return c;
}

std::vector<oracle::Level> oracle_levels(const std::vector<LevelShape>& ls) {
  std::vector<oracle::Level> out;
  for (const auto& l : ls) out.push_back({l.height, l.width, l.start});
  return out;
}

// Plain per-head softmax(q k^T / sqrt(dh)) v.
std::vector<double> dense_oracle(const std::vector<double>& q, const std::vector<double>& k,
                                 const std::vector<double>& v, std::size_t n, std::size_t m,
                                 std::size_t d, std::size_t heads) {
  const std::size_t dh = d / heads;
  std::vector<double> out(n * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(m);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < m; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        s[j] = dot / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (double& x : s) z += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t c = 0; c < dh; ++c) out[i * d + h * dh + c] += s[j] / z * v[j * d + h * dh + c];
    }
  return out;
}

PyramidFeatures<double> random_pyramid(Gen& g, std::size_t d, std::array<std::size_t, 4> sides) {
  PyramidFeatures<double> p;
  p.d_model = d;
  for (std::size_t s : sides) p.levels.emplace_back(Shape{d, s, s}, g.values<double>(d * s * s, -1, 1));
  return p;
}

}  // namespace

TEST(DeformableKernel, MatchesBruteForceOracle) {
  for_all(40, 3, [](Gen& g) {
    const auto c = random_case(g);
    const auto out = ms_deform_attn_core(c.value, std::span<const LevelShape>(c.levels), c.reference,
                                         c.offsets, c.weights, c.heads, c.points);
    const auto ref = oracle::deformable_attention(to_vec(c.value), c.d, oracle_levels(c.levels),
                                                  to_vec(c.reference), to_vec(c.offsets),
                                                  to_vec(c.weights), c.queries, c.heads, c.points);
    ASSERT_EQ(out.shape(), (Shape{c.queries, c.d}));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
  });
}

TEST(DeformableKernel, UniformWeightsOnTokenCentresAverageTheLevels) {
  // One 2x2 level and one 1x1 level; the reference sits on the centre of
  // token (1, 0) of the first level, which is also inside the single cell.
  const std::vector<LevelShape> levels{{2, 2, 0}, {1, 1, 4}};
  Gen g(4);
  const Tensor<double> value({5, 2}, g.values<double>(10, -1, 1));
  const Tensor<double> reference({1, 2}, std::vector<double>{0.75, 0.25});
  // Level-1 offsets point back to the 1x1 centre (0.5, 0.5).
  const Tensor<double> offsets({1, 4}, std::vector<double>{0, 0, -0.25, 0.25});
  const Tensor<double> weights({1, 2}, std::vector<double>{0.5, 0.5});
  const auto out = ms_deform_attn_core(value, std::span<const LevelShape>(levels), reference, offsets,
                                       weights, 1, 1);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(out[c], 0.5 * (value[1 * 2 + c] + value[4 * 2 + c]), 1e-12);
}

TEST(DeformableKernel, FarOutsideSamplesReadZero) {
  const std::vector<LevelShape> levels{{2, 2, 0}};
  const Tensor<double> value({4, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor<double> reference({1, 2}, std::vector<double>{0.5, 0.5});
  const Tensor<double> offsets({1, 2}, std::vector<double>{10, 10});
  const Tensor<double> weights({1, 1}, std::vector<double>{1});
  const auto out = ms_deform_attn_core(value, std::span<const LevelShape>(levels), reference, offsets,
                                       weights, 1, 1);
  EXPECT_EQ(out[0], 0.0);
}

TEST(DeformableKernel, GradCheckAllInputs) {
  Gen g(5);
  auto c = random_case(g, true);
  ParamList<double> params{{"value", c.value}, {"reference", c.reference},
                           {"offsets", c.offsets}, {"weights", c.weights}};
  const auto r = g.values<double>(c.queries * c.d, -1, 1);
  const Tensor<double> proj({c.queries, c.d}, r);
  auto objective = [&] {
    return sum(mul(ms_deform_attn_core(c.value, std::span<const LevelShape>(c.levels), c.reference,
                                       c.offsets, c.weights, c.heads, c.points),
                   proj));
  };
  EXPECT_LT(grad_check<double>(objective, params).max_rel_error(), 1e-6);
}

TEST(MsDeformAttn, WeightsSumToOnePerHead) {
  Rng rng(1);
  MsdamConfig cfg{8, 2, 2, 3};
  MsDeformAttn<double> attn(rng, cfg);
  // Give the weight logits some spread.
  Gen g(1);
  for (auto& w : attn.attention_weights().weight().mutable_values()) w = g.real(-1, 1);
  const std::vector<LevelShape> levels{{2, 2, 0}, {1, 1, 4}};
  const Tensor<double> query({3, 8}, g.values<double>(24, -1, 1));
  const Tensor<double> reference({3, 2}, g.values<double>(6, 0, 1));
  const Tensor<double> tokens({5, 8}, g.values<double>(40, -1, 1));
  MsdamTrace<double> trace;
  attn.forward(query, reference, tokens, std::span<const LevelShape>(levels), &trace);
  ASSERT_EQ(trace.weights.shape(), (Shape{3, 12}));
  ASSERT_EQ(trace.offsets.shape(), (Shape{3, 24}));
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t h = 0; h < 2; ++h) {
      double s = 0;
      for (std::size_t i = 0; i < 6; ++i) {
        const double w = trace.weights[q * 12 + h * 6 + i];
        EXPECT_GT(w, 0.0);
        s += w;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(MsDeformAttn, FreshModuleWeightsAreUniform) {
  Rng rng(2);
  MsDeformAttn<double> attn(rng, MsdamConfig{8, 2, 2, 2});
  Gen g(2);
  const std::vector<LevelShape> levels{{2, 2, 0}, {1, 1, 4}};
  MsdamTrace<double> trace;
  attn.forward(Tensor<double>({1, 8}, g.values<double>(8, -1, 1)), Tensor<double>({1, 2}, g.values<double>(2, 0, 1)),
               Tensor<double>({5, 8}, g.values<double>(40, -1, 1)), std::span<const LevelShape>(levels), &trace);
  for (std::size_t i = 0; i < trace.weights.size(); ++i) EXPECT_NEAR(trace.weights[i], 0.25, 1e-15);
}

TEST(MsDeformAttn, PermutingQueriesPermutesOutputs) {
  for_all(10, 6, [](Gen& g) {
    Rng rng(g.size(1, 1000));
    MsDeformAttn<double> attn(rng, MsdamConfig{4, 2, 2, 2});
    for (auto& w : attn.sampling_offsets().weight().mutable_values()) w = g.real(-1, 1);
    const std::vector<LevelShape> levels{{3, 3, 0}, {2, 2, 9}};
    const std::size_t n = g.size(2, 5);
    const auto qv = g.values<double>(n * 4, -1, 1), rv = g.values<double>(n * 2, 0, 1);
    const Tensor<double> tokens({13, 4}, g.values<double>(52, -1, 1));
    const auto out = attn.forward(Tensor<double>({n, 4}, qv), Tensor<double>({n, 2}, rv), tokens,
                                  std::span<const LevelShape>(levels));
    std::vector<double> qp(qv.size()), rp(rv.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(qv.begin() + (n - 1 - i) * 4, 4, qp.begin() + i * 4);
      std::copy_n(rv.begin() + (n - 1 - i) * 2, 2, rp.begin() + i * 2);
    }
    const auto outp = attn.forward(Tensor<double>({n, 4}, qp), Tensor<double>({n, 2}, rp), tokens,
                                   std::span<const LevelShape>(levels));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(outp[i * 4 + c], out[(n - 1 - i) * 4 + c]);
  });
}

TEST(MsDeformAttn, WrongLevelCountIsAShapeError) {
  Rng rng(3);
  MsDeformAttn<double> attn(rng, MsdamConfig{4, 2, 2, 2});
  const std::vector<LevelShape> levels{{2, 2, 0}};
  EXPECT_THROW(attn.forward(Tensor<double>::zeros({1, 4}), Tensor<double>::zeros({1, 2}),
                            Tensor<double>::zeros({4, 4}), std::span<const LevelShape>(levels)),
               ShapeError);
  EXPECT_THROW(MsDeformAttn<double>(rng, MsdamConfig{5, 2, 2, 2}), ConfigError);
}

TEST(DenseAttention, MatchesOracle) {
  for_all(20, 7, [](Gen& g) {
    const std::size_t heads = g.size(1, 3), d = heads * g.size(1, 3), n = g.size(1, 5), m = g.size(1, 5);
    const auto q = g.values<double>(n * d, -2, 2), k = g.values<double>(m * d, -2, 2),
               v = g.values<double>(m * d, -2, 2);
    const auto out = attention_core(Tensor<double>({n, d}, q), Tensor<double>({m, d}, k),
                                    Tensor<double>({m, d}, v), heads);
    const auto ref = dense_oracle(q, k, v, n, m, d, heads);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
  });
}

TEST(DenseAttention, SingleKeyGetsWeightOne) {
  Gen g(8);
  const auto v = g.values<double>(6, -1, 1);
  const auto out = attention_core(Tensor<double>({1, 6}, g.values<double>(6, -9, 9)),
                                  Tensor<double>({1, 6}, g.values<double>(6, -9, 9)),
                                  Tensor<double>({1, 6}, v), 2);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(out[i], v[i], 1e-15);
}

TEST(FlattenPyramid, TokenLayoutAndReferences) {
  Gen g(9);
  const auto p = random_pyramid(g, 4, {8, 4, 2, 1});
  const auto s = flatten_pyramid(p);
  ASSERT_EQ(s.tokens.shape(), (Shape{85, 4}));
  ASSERT_EQ(s.levels.size(), 4u);
  EXPECT_EQ(s.levels[1].start, 64u);
  EXPECT_EQ(s.levels[3].start, 84u);
  // Token (y=1, x=2) of level 0, channel 3.
  EXPECT_EQ(s.tokens[(1 * 8 + 2) * 4 + 3], p.levels[0][(3 * 8 + 1) * 8 + 2]);
  EXPECT_DOUBLE_EQ(s.reference[(1 * 8 + 2) * 2], 2.5 / 8);
  EXPECT_DOUBLE_EQ(s.reference[(1 * 8 + 2) * 2 + 1], 1.5 / 8);
  EXPECT_DOUBLE_EQ(s.reference[84 * 2], 0.5);
  EXPECT_EQ(s.level_index[70], 1u);
}

TEST(Decoder, ZeroCrossAttentionOutputMakesLayerIndependentOfMemory) {
  Rng rng(10);
  TransformerConfig cfg;
  cfg.d_model = 8;
  cfg.ffn_dim = 16;
  DecoderLayer<double> layer(rng, cfg);
  for (auto& w : layer.cross_attn().output_proj().weight().mutable_values()) w = 0;
  for (auto& w : layer.cross_attn().output_proj().bias().mutable_values()) w = 0;
  Gen g(10);
  const Tensor<double> emb({5, 8}, g.values<double>(40, -1, 1));
  const Tensor<double> pos({5, 8}, g.values<double>(40, -1, 1));
  const Tensor<double> ref({5, 2}, g.values<double>(10, 0, 1));
  Encoder<double> enc(rng, cfg);
  const auto m1 = enc.forward(random_pyramid(g, 8, {4, 2, 1, 1}));
  const auto m2 = enc.forward(random_pyramid(g, 8, {4, 2, 1, 1}));
  const auto a = layer.forward(emb, pos, ref, m1), b = layer.forward(emb, pos, ref, m2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Decoder, SingleAnchorSelfAttentionIsTheValuePath) {
  Rng rng(11);
  MultiHeadAttention<double> mha(rng, 4, 2);
  Gen g(11);
  const Tensor<double> x({1, 4}, g.values<double>(4, -1, 1));
  const auto out = mha.forward(x, x, x);
  const auto expect = mha.out_proj().forward(mha.v_proj().forward(x));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], expect[i], 1e-14);
}

TEST(Decoder, AnchorPermutationEquivariance) {
  Rng rng(12);
  TransformerConfig cfg;
  cfg.d_model = 8;
  cfg.ffn_dim = 16;
  Encoder<double> enc(rng, cfg);
  Decoder<double> dec(rng, cfg);
  Gen g(12);
  const auto mem = enc.forward(random_pyramid(g, 8, {4, 2, 1, 1}));
  const std::size_t n = 6;
  const auto pv = g.values<double>(n * 8, -1, 1), rv = g.values<double>(n * 2, 0.1, 0.9);
  const auto out = dec.forward(Tensor<double>({n, 8}, pv), Tensor<double>({n, 2}, rv), mem);
  std::vector<double> pp(pv.size()), rp(rv.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(pv.begin() + (n - 1 - i) * 8, 8, pp.begin() + i * 8);
    std::copy_n(rv.begin() + (n - 1 - i) * 2, 2, rp.begin() + i * 2);
  }
  const auto outp = dec.forward(Tensor<double>({n, 8}, pp), Tensor<double>({n, 2}, rp), mem);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(outp[i * 8 + c], out[(n - 1 - i) * 8 + c], 1e-12);
}

TEST(Encoder, GradCheckOnTinyPyramid) {
  Rng rng(13);
  TransformerConfig cfg;
  cfg.d_model = 4;
  cfg.ffn_dim = 8;
  cfg.encoder_layers = 1;
  Encoder<double> enc(rng, cfg);
  ParamList<double> params;
  enc.collect(params, "enc");
  Gen g(13);
  for (auto& p : params)
    for (auto& v : p.tensor.mutable_values()) v += g.real(-0.05, 0.05);
  const auto pyr = random_pyramid(g, 4, {4, 2, 1, 1});
  const Tensor<double> r({22, 4}, g.values<double>(88, -1, 1));
  auto objective = [&] { return sum(mul(enc.forward(pyr).tokens, r)); };
  GradCheckOptions o;
  o.max_elements_per_param = 3;
  EXPECT_LT(grad_check<double>(objective, params, o).max_rel_error(), 1e-5);
}

namespace {

using Vec = std::vector<double>;

Vec lin(const Vec& x, std::size_t n, const Vec& w, const Vec& b, std::size_t out) {
  const std::size_t in = x.size() / n;
  Vec y(n * out);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[r * in + i] * w[o * in + i];
      y[r * out + o] = acc;
    }
  return y;
}

Vec plus(Vec a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

struct Params {
  std::map<std::string, Vec> by_name;
  const Vec& operator[](const std::string& n) const { return by_name.at(n); }
};

// Straight-line post-norm decoder layer: self-attention, deformable
// cross-attention, feed-forward, each followed by residual add and norm.
Vec decoder_layer_oracle(const Params& p, const std::string& pre, const Vec& d_in, const Vec& pos,
                         const Vec& ref, const Vec& tokens, const std::vector<oracle::Level>& levels,
                         std::size_t n, std::size_t d, std::size_t heads, std::size_t points,
                         std::size_t ffn) {
  auto P = [&](const std::string& s) -> const Vec& { return p[pre + s]; };
  const std::size_t L = levels.size(), tok = tokens.size() / d;
  const Vec q1 = plus(d_in, pos);
  const Vec sa = lin(dense_oracle(lin(q1, n, P("self_attn.q_proj.weight"), P("self_attn.q_proj.bias"), d),
                                  lin(q1, n, P("self_attn.k_proj.weight"), P("self_attn.k_proj.bias"), d),
                                  lin(d_in, n, P("self_attn.v_proj.weight"), P("self_attn.v_proj.bias"), d),
                                  n, n, d, heads),
                     n, P("self_attn.out_proj.weight"), P("self_attn.out_proj.bias"), d);
  const Vec x1 = oracle::layer_norm(plus(d_in, sa), n, d, P("norm1.gamma"), P("norm1.beta"), 1e-5);

  const Vec q2 = plus(x1, pos);
  const std::string m = "cross_attn.msdam.";
  const Vec value = lin(tokens, tok, P(m + "value_proj.weight"), P(m + "value_proj.bias"), d);
  const std::size_t samples = heads * L * points;
  const Vec off = lin(q2, n, P(m + "sampling_offsets.weight"), P(m + "sampling_offsets.bias"), samples * 2);
  Vec w = lin(q2, n, P(m + "attention_weights.weight"), P(m + "attention_weights.bias"), samples);
  for (std::size_t r = 0; r < n * heads; ++r) {
    const std::size_t per = L * points;
    const auto col = oracle::softmax_columns(Vec(w.begin() + r * per, w.begin() + (r + 1) * per), per, 1);
    std::copy(col.begin(), col.end(), w.begin() + r * per);
  }
  const Vec ca = lin(oracle::deformable_attention(value, d, levels, ref, off, w, n, heads, points), n,
                     P(m + "output_proj.weight"), P(m + "output_proj.bias"), d);
  const Vec x2 = oracle::layer_norm(plus(x1, ca), n, d, P("norm2.gamma"), P("norm2.beta"), 1e-5);

  Vec h = lin(x2, n, P("ffn.fc1.weight"), P("ffn.fc1.bias"), ffn);
  for (double& v : h) v = std::max(v, 0.0);
  const Vec f = lin(h, n, P("ffn.fc2.weight"), P("ffn.fc2.bias"), d);
  return oracle::layer_norm(plus(x2, f), n, d, P("norm3.gamma"), P("norm3.beta"), 1e-5);
}

}  // namespace

TEST(Decoder, LayerMatchesStraightLineOracle) {
  for_all(5, 14, [](Gen& g) {
    TransformerConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.points = g.size(1, 2);
    cfg.ffn_dim = 12;
    Rng rng(g.size(0, 1000));
    DecoderLayer<double> layer(rng, cfg);
    ParamList<double> params;
    layer.collect(params, "layer");
    Params p;
    for (auto& prm : params) {
      auto vals = prm.tensor.mutable_values();
      for (auto& v : vals) v += g.real(-0.3, 0.3);
      p.by_name["layer." + prm.name.substr(6)] = Vec(vals.begin(), vals.end());
    }
    const auto pyr = random_pyramid(g, 8, {4, 2, 1, 1});
    const auto mem = flatten_pyramid(pyr);
    const std::size_t n = g.size(1, 6);
    const Vec d_in = g.values<double>(n * 8, -1, 1), pos = g.values<double>(n * 8, -1, 1),
              ref = g.values<double>(n * 2, 0, 1);
    const auto out = layer.forward(Tensor<double>({n, 8}, d_in), Tensor<double>({n, 8}, pos),
                                   Tensor<double>({n, 2}, ref), mem);
    std::vector<oracle::Level> levels;
    for (const auto& l : mem.levels) levels.push_back({l.height, l.width, l.start});
    const Vec tokens(mem.tokens.values().begin(), mem.tokens.values().end());
    const Vec ref_out = decoder_layer_oracle(p, "layer.", d_in, pos, ref, tokens, levels, n, 8, 2,
                                             cfg.points, 12);
    for (std::size_t i = 0; i < ref_out.size(); ++i) EXPECT_NEAR(out[i], ref_out[i], 1e-9);
  });
}

TEST(MsDeformAttn, ZeroedOffsetAndWeightBranchesAverageSamplesAtTheReference) {
  Rng rng(15);
  MsDeformAttn<double> attn(rng, MsdamConfig{4, 2, 2, 3});
  for (auto* l : {&attn.sampling_offsets(), &attn.attention_weights()}) {
    for (auto& v : l->weight().mutable_values()) v = 0;
    for (auto& v : l->bias().mutable_values()) v = 0;
  }
  Gen g(15);
  const std::vector<LevelShape> levels{{3, 3, 0}, {2, 2, 9}};
  const Vec tok = g.values<double>(13 * 4, -1, 1), ref = g.values<double>(4, 0, 1);
  const auto out = attn.forward(Tensor<double>({2, 4}, g.values<double>(8, -1, 1)), Tensor<double>({2, 2}, ref),
                                Tensor<double>({13, 4}, tok), std::span<const LevelShape>(levels));
  const auto value = attn.value_proj().forward(Tensor<double>({13, 4}, tok));
  // Uniform average over levels of the bilinear read at the reference.
  Vec avg(8, 0.0);
  for (std::size_t q = 0; q < 2; ++q)
    for (const auto& l : levels) {
      Vec map(4 * l.height * l.width);
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t t = 0; t < l.height * l.width; ++t) map[c * l.height * l.width + t] = value[(l.start + t) * 4 + c];
      for (std::size_t c = 0; c < 4; ++c)
        avg[q * 4 + c] += 0.5 * oracle::bilinear(map, 4, l.height, l.width, c, ref[q * 2], ref[q * 2 + 1]);
    }
  const auto expect = attn.output_proj().forward(Tensor<double>({2, 4}, avg));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out[i], expect[i], 1e-12);
}

TEST(MsDeformAttn, SingleLevelPointHeadIsAProjectedBilinearRead) {
  Rng rng(16);
  MsDeformAttn<double> attn(rng, MsdamConfig{2, 1, 1, 1});
  for (auto& v : attn.sampling_offsets().bias().mutable_values()) v = 0;
  for (auto& v : attn.sampling_offsets().weight().mutable_values()) v = 0;
  Gen g(16);
  const std::vector<LevelShape> levels{{3, 4, 0}};
  const Vec tok = g.values<double>(12 * 2, -1, 1), ref{0.3, 0.7};
  const auto out = attn.forward(Tensor<double>({1, 2}, g.values<double>(2, -1, 1)), Tensor<double>({1, 2}, ref),
                                Tensor<double>({12, 2}, tok), std::span<const LevelShape>(levels));
  const auto value = attn.value_proj().forward(Tensor<double>({12, 2}, tok));
  Vec map(2 * 12);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 12; ++t) map[c * 12 + t] = value[t * 2 + c];
  const Vec sample{oracle::bilinear(map, 2, 3, 4, 0, 0.3, 0.7), oracle::bilinear(map, 2, 3, 4, 1, 0.3, 0.7)};
  const auto expect = attn.output_proj().forward(Tensor<double>({1, 2}, sample));
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out[i], expect[i], 1e-12);
}

TEST(Encoder, ZeroLayersReturnsTheFlattenedInputAndLayersPreserveShape) {
  Gen g(17);
  const auto pyr = random_pyramid(g, 4, {4, 2, 1, 1});
  TransformerConfig cfg;
  cfg.d_model = 4;
  cfg.ffn_dim = 8;
  cfg.encoder_layers = 0;
  Rng rng(17);
  const Encoder<double> none(rng, cfg);
  const auto flat = flatten_pyramid(pyr);
  const auto e0 = none.forward(pyr);
  for (std::size_t i = 0; i < flat.tokens.size(); ++i) EXPECT_EQ(e0.tokens[i], flat.tokens[i]);
  cfg.encoder_layers = 3;
  const Encoder<double> three(rng, cfg);
  EXPECT_EQ(three.forward(pyr).tokens.shape(), flat.tokens.shape());
}

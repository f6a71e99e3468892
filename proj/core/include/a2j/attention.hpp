#pragma once

// Multi-scale deformable attention, dense multi-head attention, and the
// encoder/decoder stacks built from them.

#include <optional>
#include <span>
#include <vector>

#include "a2j/backbone.hpp"
#include "a2j/nn.hpp"

namespace a2j {

// Geometry of one flattened pyramid level inside the token array.
struct LevelShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t start = 0;  // first token index of the level
};

// Deformable sampling kernel.
//   value     [N_tok, d]            per-token features, heads split along d
//   reference [N_q, 2] or [N_q, L, 2] normalized (x, y), shared across
//                                   levels when rank 2
//   offsets   [N_q, M*L*K*2]        sampling offsets in pixels of each level
//   weights   [N_q, M*L*K]          attention weights (already normalized)
// out[q, m*dh + c] = sum_{l,k} w[q,m,l,k] *
//                    bilinear(value_l[:, m*dh + c], ref[q,l] + off[q,m,l,k] / (W_l, H_l))
template <typename T>
Tensor<T> ms_deform_attn_core(const Tensor<T>& value, std::span<const LevelShape> levels,
                              const Tensor<T>& reference, const Tensor<T>& offsets,
                              const Tensor<T>& weights, std::size_t heads, std::size_t points);

// Scaled dot-product attention per head: q [N,d], k [M,d], v [M,d] -> [N,d].
template <typename T>
Tensor<T> attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                         std::size_t heads);

struct MsdamConfig {
  std::size_t d_model = 64;
  std::size_t heads = 2;
  std::size_t levels = kPyramidLevels;
  std::size_t points = 2;
};

// Intermediate tensors of one MSDAM call, exposed for inspection.
template <typename T>
struct MsdamTrace {
  Tensor<T> offsets;  // [N_q, M*L*K*2]
  Tensor<T> weights;  // [N_q, M*L*K], softmax over (L x K) per head
};

template <typename T>
class MsDeformAttn {
 public:
  MsDeformAttn() = default;
  MsDeformAttn(Rng& rng, const MsdamConfig& config);

  Tensor<T> forward(const Tensor<T>& query, const Tensor<T>& reference,
                    const Tensor<T>& input_flatten, std::span<const LevelShape> levels,
                    MsdamTrace<T>* trace = nullptr) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;

  const MsdamConfig& config() const { return config_; }
  Linear<T>& value_proj() { return value_proj_; }
  Linear<T>& sampling_offsets() { return sampling_offsets_; }
  Linear<T>& attention_weights() { return attention_weights_; }
  Linear<T>& output_proj() { return output_proj_; }

 private:
  MsdamConfig config_;
  Linear<T> value_proj_;
  Linear<T> sampling_offsets_;
  Linear<T> attention_weights_;
  Linear<T> output_proj_;
};

template <typename T>
Tensor<T> msdam(const Tensor<T>& queries, const Tensor<T>& reference,
                const Tensor<T>& value_tokens, std::span<const LevelShape> levels,
                const MsDeformAttn<T>& module) {
  return module.forward(queries, reference, value_tokens, levels);
}

template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(Rng& rng, std::size_t d_model, std::size_t heads);

  Tensor<T> forward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;

  Linear<T>& q_proj() { return q_proj_; }
  Linear<T>& k_proj() { return k_proj_; }
  Linear<T>& v_proj() { return v_proj_; }
  Linear<T>& out_proj() { return out_proj_; }

 private:
  std::size_t heads_ = 1;
  Linear<T> q_proj_;
  Linear<T> k_proj_;
  Linear<T> v_proj_;
  Linear<T> out_proj_;
};

// Cross/self attention sublayer that is either deformable (sampling around
// reference points) or dense (attending to every key).
template <typename T>
class SpatialAttention {
 public:
  SpatialAttention() = default;
  SpatialAttention(Rng& rng, const MsdamConfig& config, bool deformable);

  // `keys` is only used by the dense variant.
  Tensor<T> forward(const Tensor<T>& query, const Tensor<T>& reference, const Tensor<T>& keys,
                    const Tensor<T>& values, std::span<const LevelShape> levels) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;

  bool deformable() const { return deformable_; }
  MsDeformAttn<T>& deform() { return deform_; }
  MultiHeadAttention<T>& dense() { return dense_; }
  Linear<T>& output_proj() { return deformable_ ? deform_.output_proj() : dense_.out_proj(); }

 private:
  bool deformable_ = true;
  MsDeformAttn<T> deform_;
  MultiHeadAttention<T> dense_;
};

struct TransformerConfig {
  std::size_t d_model = 64;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t heads = 2;
  std::size_t points = 2;
  std::size_t ffn_dim = 128;
  bool msdam = true;
  bool pre_norm = false;
};

template <typename T>
struct EncoderState {
  Tensor<T> tokens;                // [N_tok, d] level-major, row-major
  Tensor<T> pos;                   // [N_tok, d] P_xy plus level embedding
  Tensor<T> reference;             // [N_tok, 2] normalized token centres
  std::vector<LevelShape> levels;  // geometry per level
  std::vector<std::size_t> level_index;  // level of each token
};

// Flattens each [d,H,W] level to [H*W, d] rows and concatenates them.
template <typename T>
EncoderState<T> flatten_pyramid(const PyramidFeatures<T>& pyramid);

template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(Rng& rng, std::size_t d_model, std::size_t hidden)
      : fc1_(rng, d_model, hidden), fc2_(rng, hidden, d_model) {}

  Tensor<T> forward(const Tensor<T>& x) const { return fc2_.forward(relu(fc1_.forward(x))); }
  void collect(ParamList<T>& out, const std::string& prefix) const {
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
  }

 private:
  Linear<T> fc1_;
  Linear<T> fc2_;
};

template <typename T>
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(Rng& rng, const TransformerConfig& config);

  Tensor<T> forward(const Tensor<T>& src, const EncoderState<T>& state) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  bool pre_norm_ = false;
  SpatialAttention<T> attn_;
  LayerNorm<T> norm1_;
  FeedForward<T> ffn_;
  LayerNorm<T> norm2_;
};

// Feature enhancement stack: Q = F + P_xy, reference = each token's own
// location, V = F.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(Rng& rng, const TransformerConfig& config);

  EncoderState<T> forward(const PyramidFeatures<T>& pyramid) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;
  std::vector<EncoderLayer<T>>& layers() { return layers_; }

 private:
  TransformerConfig config_;
  Tensor<T> level_embed_;  // [L, d]
  std::vector<EncoderLayer<T>> layers_;
};

template <typename T>
EncoderState<T> encoder_forward(const PyramidFeatures<T>& pyramid, const Encoder<T>& encoder) {
  return encoder.forward(pyramid);
}

template <typename T>
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(Rng& rng, const TransformerConfig& config);

  // D [A,d], P_q [A,d], anchor_ref [A,2] normalized anchor (x, y).
  Tensor<T> forward(const Tensor<T>& embeddings, const Tensor<T>& query_pos,
                    const Tensor<T>& anchor_ref, const EncoderState<T>& memory) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;

  MultiHeadAttention<T>& self_attn() { return self_attn_; }
  SpatialAttention<T>& cross_attn() { return cross_attn_; }

 private:
  bool pre_norm_ = false;
  MultiHeadAttention<T> self_attn_;
  LayerNorm<T> norm1_;
  SpatialAttention<T> cross_attn_;
  LayerNorm<T> norm2_;
  FeedForward<T> ffn_;
  LayerNorm<T> norm3_;
};

template <typename T>
Tensor<T> decoder_layer(const Tensor<T>& embeddings, const Tensor<T>& query_pos,
                        const Tensor<T>& anchor_ref, const EncoderState<T>& memory,
                        const DecoderLayer<T>& layer) {
  return layer.forward(embeddings, query_pos, anchor_ref, memory);
}

// Anchor interaction stack. Initial embeddings are gathered from the encoder
// output at each anchor's reference point.
template <typename T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(Rng& rng, const TransformerConfig& config);

  Tensor<T> initial_embeddings(const Tensor<T>& query_pos, const Tensor<T>& anchor_ref,
                               const EncoderState<T>& memory) const;
  Tensor<T> forward(const Tensor<T>& query_pos, const Tensor<T>& anchor_ref,
                    const EncoderState<T>& memory) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;
  std::vector<DecoderLayer<T>>& layers() { return layers_; }

 private:
  SpatialAttention<T> init_attn_;
  std::vector<DecoderLayer<T>> layers_;
};

}  // namespace a2j

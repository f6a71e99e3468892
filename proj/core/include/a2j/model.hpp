#pragma once

// The assembled network: pyramid features, anchor refinement (transformer
// encoder/decoder or a plain conv trunk), and either anchor fusion or a
// direct regression head. Each component can be switched off independently
// for ablations.

#include <cstdint>

#include "a2j/a2j_head.hpp"
#include "a2j/attention.hpp"
#include "a2j/backbone.hpp"
#include "a2j/data_synth.hpp"
#include "a2j/encoding.hpp"

namespace a2j {

struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t d_model = 64;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t heads = 2;
  std::size_t points = 2;
  std::size_t ffn_dim = 128;
  std::size_t projection_depth = 1;
  std::size_t head_layers = 2;
  std::size_t joints_per_hand = kJointsPerHand;
  std::size_t hands = kHands;
  std::size_t anchors_per_side = 4;
  std::size_t anchor_depths = 3;
  double anchor_depth_range = 100.0;   // depth layers span +-this, mm
  double offset_scale_inplane = 0.0;   // 0: the anchor stride
  double offset_scale_depth = 100.0;
  bool transformer = true;
  bool a2j_fusion = true;
  bool learned_weights = true;
  bool msdam = true;
  bool pre_norm = false;

  std::size_t joint_count() const { return joints_per_hand * hands; }
  std::size_t anchor_stride() const { return anchors_per_side ? image_size / anchors_per_side : 0; }
  // Throws ConfigError naming the offending key and constraint.
  void validate() const;
  BackboneConfig backbone_config() const;
  TransformerConfig transformer_config() const;
  HeadConfig head_config() const;
};

template <typename T>
struct ModelOutput {
  // With fusion: the full bundle. Without: only `joints` is set.
  PredictionBundle<T> prediction;
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  ModelOutput<T> forward(const Tensor<T>& image) const;

  // Intermediate stages, exposed for gradient checks and inspection.
  PyramidFeatures<T> pyramid(const Tensor<T>& image) const { return backbone_.forward(image); }
  Tensor<T> anchor_embeddings(const PyramidFeatures<T>& pyramid) const;
  Tensor<T> query_pos() const { return query_encoder_.forward_rows(query_pe_); }

  const ModelConfig& config() const { return config_; }
  const AnchorSet& anchors() const { return anchors_; }
  // Every learnable tensor with a stable dotted name, in a fixed order.
  ParamList<T> parameters() const;

  Backbone<T>& backbone() { return backbone_; }
  Encoder<T>& encoder() { return encoder_; }
  Decoder<T>& decoder() { return decoder_; }
  A2JHead<T>& head() { return head_; }

 private:
  Tensor<T> conv_trunk(const PyramidFeatures<T>& pyramid) const;
  Tensor<T> direct_regression(const Tensor<T>& embeddings) const;

  ModelConfig config_;
  AnchorSet anchors_;
  Tensor<T> query_pe_;   // constant sinusoidal table of the anchors
  Tensor<T> anchor_ref_;  // constant [A, 2] normalized anchor (x, y)
  Backbone<T> backbone_;
  AnchorQueryEncoder<T> query_encoder_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
  std::vector<Conv2d<T>> trunk_convs_;
  std::vector<GroupNorm<T>> trunk_norms_;
  A2JHead<T> head_;
  Mlp<T> direct_head_;
};

// Joint predictions of a forward pass as plain coordinates.
template <typename T>
std::vector<JointCoord> to_joint_coords(const Tensor<T>& joints);

}  // namespace a2j

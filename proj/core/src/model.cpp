#include "a2j/model.hpp"

namespace a2j {

void ModelConfig::validate() const {
  auto positive = [](const char* key, std::size_t v) {
    if (v == 0) throw ConfigError(std::string(key) + " must be positive");
  };
  positive("image_size", image_size);
  positive("d_model", d_model);
  positive("heads", heads);
  positive("points", points);
  positive("ffn_dim", ffn_dim);
  positive("projection_depth", projection_depth);
  positive("head_layers", head_layers);
  positive("joints_per_hand", joints_per_hand);
  positive("hands", hands);
  positive("anchors_per_side", anchors_per_side);
  positive("anchor_depths", anchor_depths);
  if (d_model % 2 != 0) throw ConfigError("d_model must be even");
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (image_size % anchors_per_side != 0) {
    throw ConfigError("anchors_per_side must divide image_size");
  }
  if (!(anchor_depth_range > 0)) throw ConfigError("anchor_depth_range must be positive");
  if (offset_scale_inplane < 0) throw ConfigError("offset_scale_inplane must be non-negative");
  if (!(offset_scale_depth > 0)) throw ConfigError("offset_scale_depth must be positive");
}

BackboneConfig ModelConfig::backbone_config() const {
  BackboneConfig b;
  b.image_size = image_size;
  b.d_model = d_model;
  b.projection_depth = projection_depth;
  b.norm_groups = group_count(d_model, 8);
  return b;
}

TransformerConfig ModelConfig::transformer_config() const {
  TransformerConfig t;
  t.d_model = d_model;
  t.encoder_layers = encoder_layers;
  t.decoder_layers = decoder_layers;
  t.heads = heads;
  t.points = points;
  t.ffn_dim = ffn_dim;
  t.msdam = msdam;
  t.pre_norm = pre_norm;
  return t;
}

HeadConfig ModelConfig::head_config() const {
  HeadConfig h;
  h.d_model = d_model;
  h.joints = joint_count();
  h.layers = head_layers;
  h.offset_scale_inplane = offset_scale_inplane > 0 ? offset_scale_inplane : double(anchor_stride());
  h.offset_scale_depth = offset_scale_depth;
  h.learned_weights = learned_weights;
  return h;
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  Rng rng(seed);
  anchors_ = generate_anchor_grid(config.image_size, config.anchor_stride(),
                                  uniform_depth_values(config.anchor_depths, config.anchor_depth_range));
  const auto queries = anchor_queries(anchors_);
  query_pe_ = query_pe_rows<T>(queries, config.d_model);
  anchor_ref_ = anchor_reference<T>(anchors_);
  backbone_ = Backbone<T>(rng, config.backbone_config());
  query_encoder_ = AnchorQueryEncoder<T>(rng, config.d_model);
  if (config.transformer) {
    encoder_ = Encoder<T>(rng, config.transformer_config());
    decoder_ = Decoder<T>(rng, config.transformer_config());
  } else {
    const std::size_t groups = group_count(config.d_model, 8);
    for (int i = 0; i < 2; ++i) {
      trunk_convs_.emplace_back(rng, config.d_model, config.d_model, 3, 1, 1);
      trunk_norms_.emplace_back(config.d_model, groups);
    }
  }
  if (config.a2j_fusion) {
    head_ = A2JHead<T>(rng, config.head_config());
  } else {
    direct_head_ = Mlp<T>(rng, {config.d_model, config.d_model, config.joint_count() * 3});
  }
}

template <typename T>
Tensor<T> Model<T>::conv_trunk(const PyramidFeatures<T>& pyramid) const {
  // Plain conv refinement of the finest level, read out at each anchor.
  Tensor<T> x = pyramid.levels[0];
  for (std::size_t i = 0; i < trunk_convs_.size(); ++i)
    x = relu(trunk_norms_[i].forward(trunk_convs_[i].forward(x)));
  return transpose(bilinear_sample(x, anchor_ref_));
}

template <typename T>
Tensor<T> Model<T>::anchor_embeddings(const PyramidFeatures<T>& pyramid) const {
  const Tensor<T> pos = query_pos();
  if (!config_.transformer) return add(conv_trunk(pyramid), pos);
  const EncoderState<T> memory = encoder_.forward(pyramid);
  return decoder_.forward(pos, anchor_ref_, memory);
}

template <typename T>
Tensor<T> Model<T>::direct_regression(const Tensor<T>& embeddings) const {
  const std::size_t nj = config_.joint_count();
  const Tensor<T> pooled = reshape(mean_rows(embeddings), {1, config_.d_model});
  const Tensor<T> raw = direct_head_.forward(pooled);
  // Raw outputs are in units of half the image (in-plane, around the centre)
  // and of offset_scale_depth (depth).
  const T half = T(config_.image_size) / T(2);
  Buffer<T> s(nj * 3), b(nj * 3);
  for (std::size_t j = 0; j < nj; ++j) {
    s[j * 3] = s[j * 3 + 1] = half;
    s[j * 3 + 2] = T(config_.offset_scale_depth);
    b[j * 3] = b[j * 3 + 1] = half;
    b[j * 3 + 2] = T(0);
  }
  const Tensor<T> scaled = add(mul(raw, Tensor<T>({1, nj * 3}, std::move(s))),
                               Tensor<T>({1, nj * 3}, std::move(b)));
  return reshape(scaled, {nj, 3});
}

template <typename T>
ModelOutput<T> Model<T>::forward(const Tensor<T>& image) const {
  const Tensor<T> embeddings = anchor_embeddings(pyramid(image));
  ModelOutput<T> out;
  if (config_.a2j_fusion) {
    out.prediction = head_.forward(embeddings, anchors_);
  } else {
    out.prediction.joints = direct_regression(embeddings);
  }
  return out;
}

template <typename T>
ParamList<T> Model<T>::parameters() const {
  ParamList<T> p;
  backbone_.collect(p, "backbone");
  query_encoder_.collect(p, "query");
  if (config_.transformer) {
    encoder_.collect(p, "encoder");
    decoder_.collect(p, "decoder");
  } else {
    for (std::size_t i = 0; i < trunk_convs_.size(); ++i) {
      trunk_convs_[i].collect(p, "trunk.conv" + std::to_string(i));
      trunk_norms_[i].collect(p, "trunk.norm" + std::to_string(i));
    }
  }
  if (config_.a2j_fusion) {
    head_.collect(p, "head");
  } else {
    direct_head_.collect(p, "direct");
  }
  return p;
}

template <typename T>
std::vector<JointCoord> to_joint_coords(const Tensor<T>& joints) {
  std::vector<JointCoord> out(joints.dim(0));
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = {double(joints[j * 3]), double(joints[j * 3 + 1]), double(joints[j * 3 + 2]), true};
  return out;
}

template class Model<float>;
template class Model<double>;
template std::vector<JointCoord> to_joint_coords<float>(const Tensor<float>&);
template std::vector<JointCoord> to_joint_coords<double>(const Tensor<double>&);

}  // namespace a2j

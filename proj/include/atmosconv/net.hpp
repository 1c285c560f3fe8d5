// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "atmosconv/rng.hpp"
#include "atmosconv/tensor.hpp"

namespace atmosconv {

/// One named model parameter or buffer. `trainable` marks optimizer targets;
/// `decay` marks the subset that takes weight decay (conv/dense weights only).
/// Buffers (running statistics) are saved in checkpoints but never updated by
/// the optimizer.
struct Param {
  std::string name;
  Tensor value;
  bool trainable = true;
  bool decay = false;
};

struct ModelConfig {
  std::string architecture = "tiny_cnn";  // tiny_cnn | mini_resnet
  std::string conv_mode = "vanilla";      // vanilla | normalized
  std::string norm_layer = "none";        // none | batch | instance
  // auto: convs carry their own bias/scale-shift only when no normalization
  // layer follows them (the norm's beta takes over that role otherwise).
  std::string use_affine = "auto";        // auto | on | off
  int width = 16;
  int depth = 2;  // residual blocks per stage (mini_resnet only)
  int classes = 10;
  int in_channels = 3;
  std::uint64_t init_seed = 0;

  void validate() const;
  /// Resolved per-conv affine flag (bias for vanilla, scale/shift for
  /// normalized convs).
  bool conv_affine() const;
};

/// key=value serialization (one pair per line, '#' comments allowed).
std::string model_config_kv(const ModelConfig& config);
ModelConfig model_config_from_kv(const std::string& text);

/// Vanilla or filter-normalized 2-D convolution. The normalized variant keeps
/// raw weights and rebuilds the effective kernel functionally on every
/// forward, so gradients flow through the normalization and the kernel
/// dichotomy can be checked at any training step.
class ConvLayer {
 public:
  ConvLayer(std::string name, bool normalized, bool affine, int in_ch, int out_ch, int ksize,
            int stride, int pad);

  Tensor forward(const Tensor& x) const;
  void init(Xoshiro256pp& rng);
  void append_params(std::vector<Param>& out) const;
  /// Raw weight tensor [OC, IC, kH, kW] (the trainable one).
  const Tensor& raw_weights() const { return weight_; }
  /// Kernel actually convolved: normalize_rows(raw) in normalized mode, raw
  /// otherwise. Computed without taping.
  Tensor effective_kernel() const;
  int out_channels() const { return oc_; }
  int fan_in() const { return fan_in_; }
  const std::string& name() const { return name_; }
  bool normalized() const { return normalized_; }
  double eps() const { return eps_; }

 private:
  std::string name_;
  bool normalized_;
  bool affine_;
  int oc_, fan_in_, stride_, pad_;
  double eps_ = 1e-6;
  Tensor weight_;          // [OC, IC, kH, kW]
  Tensor bias_;            // vanilla + affine: [OC]
  Tensor scale_, shift_;   // normalized + affine: [OC] each
};

/// Optional post-conv normalization; `kind` selects none/batch/instance.
class NormUnit {
 public:
  NormUnit() = default;  // none
  NormUnit(std::string kind, std::string name, int channels);

  Tensor forward(const Tensor& x, bool training);
  void append_params(std::vector<Param>& out) const;
  bool present() const { return kind_ != "none"; }
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_ = "none";
  std::string name_;
  Tensor gamma_, beta_;
  Tensor run_mean_, run_var_;  // batch mode buffers
};

/// Fully connected head: logits = x [N,F] * weight [F,K] + bias [K].
class DenseLayer {
 public:
  DenseLayer(std::string name, int in_features, int out_features);
  Tensor forward(const Tensor& x) const;
  void init(Xoshiro256pp& rng);
  void append_params(std::vector<Param>& out) const;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  int in_, out_;
  Tensor weight_, bias_;
};

/// A small classifier assembled per ModelConfig.
///
/// tiny_cnn: six 3x3 convs at widths w,w,2w,2w,4w,4w with 2x2 max pooling
/// after each pair, then global average pooling and a linear head.
/// mini_resnet: a 3x3 stem at width w, three stages of `depth` residual
/// blocks at widths w,2w,4w (stride-2 projection entering stages 2 and 3),
/// then global average pooling and a linear head.
class Model {
 public:
  explicit Model(const ModelConfig& config);

  /// Logits [N, classes]. When conv_outputs is non-null it receives every
  /// conv layer's output (post bias/affine, pre activation) in conv_layers()
  /// order.
  Tensor forward(const Tensor& x, bool training, std::vector<Tensor>* conv_outputs = nullptr);

  /// Draws all weights from a fan-in-scaled uniform; the draw sequence
  /// depends only on the architecture shape, never on conv_mode, so paired
  /// vanilla/normalized models start from identical raw weights.
  void init_params(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  /// All parameters and buffers in canonical traversal order.
  std::vector<Param> parameters() const;
  std::vector<Param> trainable_params() const;
  std::int64_t num_params(bool trainable_only = true) const;

  /// Conv layers in forward order (residual projections included).
  std::vector<const ConvLayer*> conv_layers() const;

  /// JSON header (config + named shapes), '\n', then raw little-endian f64
  /// payload in header order.
  void save_checkpoint(const std::string& path) const;
  static Model load_checkpoint(const std::string& path);

 private:
  struct Block {
    std::unique_ptr<ConvLayer> c1, c2, proj;
    NormUnit n1, n2, proj_norm;
  };

  ModelConfig config_;
  // tiny_cnn state
  std::vector<std::unique_ptr<ConvLayer>> convs_;
  std::vector<NormUnit> norms_;
  // mini_resnet state
  std::unique_ptr<ConvLayer> stem_;
  NormUnit stem_norm_;
  std::vector<Block> blocks_;
  std::unique_ptr<DenseLayer> head_;

  // Canonical unit traversal shared by parameters(), init_params() and the
  // checkpoint code; Self deduces const-ness.
  template <typename Self, typename ConvFn, typename NormFn, typename DenseFn>
  static void visit_units(Self& self, ConvFn conv_fn, NormFn norm_fn, DenseFn dense_fn);
};

Model build_model(const ModelConfig& config);

}  // namespace atmosconv

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "shiftdet/model_config.hpp"
#include "shiftdet/param_store.hpp"
#include "shiftdet/tensor.hpp"

namespace shiftdet {

/// Activations kept from a forward pass for the backward pass.
template <typename T>
struct BackboneTape {
  struct Block {
    Tensor<T> input;
    Tensor<T> shifted;
    Tensor<T> branch_pre;  // after conv1 + affine, before relu
    Tensor<T> branch;      // after relu
    Tensor<T> sum;         // branch output + skip, before the final relu
  };
  Tensor<T> frames;
  Tensor<T> stem_pre;
  std::vector<Block> blocks;
};

/// Stride-2 stem plus residual stages with a temporal shift on the residual
/// branch input of every block.
template <typename T>
class Backbone {
 public:
  explicit Backbone(BackboneConfig cfg);

  const BackboneConfig& config() const noexcept { return cfg_; }

  /// Registers parameters under "backbone." with fan-in scaled normal init.
  void register_params(BasicParamStore<T>& store, std::mt19937_64& rng) const;

  /// frames [K,3,H,W] -> features [K,C_out,H/stride,W/stride].
  Tensor<T> forward(const BasicParamStore<T>& store, const Tensor<T>& frames, BackboneTape<T>* tape) const;

  /// Accumulates parameter gradients; returns the gradient w.r.t. the frames
  /// when `need_input_grad` is set, otherwise an empty tensor.
  Tensor<T> backward(BasicParamStore<T>& store, const BackboneTape<T>& tape, const Tensor<T>& grad_features,
                     bool need_input_grad = false) const;

  /// Spatial extent of the feature map for an input extent.
  std::int64_t output_extent(std::int64_t input_extent) const;

 private:
  struct BlockSpec {
    std::string prefix;
    int in_channels;
    int out_channels;
    int stride;
    bool projection;
  };

  BackboneConfig cfg_;
  std::vector<BlockSpec> blocks_;
};

/// Closed-form parameter count of the full detector (backbone, RPN head and
/// box head); equals the number of values in a checkpoint.
std::int64_t count_params(const ModelConfig& cfg);

/// Parameter count of a single conv layer with bias.
std::int64_t conv_param_count(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel);

}  // namespace shiftdet

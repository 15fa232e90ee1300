#pragma once

#include <string>
#include <vector>

#include "lpsn/ops.hpp"
#include "lpsn/params.hpp"

// Feature maps are [batch x channels x frames x height x width].

namespace lpsn {

/// Which gate a squeeze-and-excitation block applies. Off leaves the feature
/// map untouched (all gates equal to one).
enum class SeMode { Joint, GlobalOnly, LocalOnly, Off };

/// Stacking of the channel and temporal SE blocks inside a residual block.
enum class SeOrder { ChannelFirst, TemporalFirst, ChannelOnly, TemporalOnly };

std::string to_string(SeMode mode);
std::string to_string(SeOrder order);
SeMode parse_se_mode(const std::string& text);
SeOrder parse_se_order(const std::string& text);

// --- squeeze-and-excitation pieces -------------------------------------------

/// Mean over frames and space: [n,c,f,h,w] -> [n,c]
template <typename T>
Tensor<T> channel_squeeze(const Tensor<T>& features);

/// Bottleneck gate sigmoid(W1 relu(W2 p)) applied row-wise.
/// p [rows x c], w1 [c x c/r], w2 [c/r x c] -> [rows x c]
template <typename T>
Tensor<T> excitation(const Tensor<T>& p, const Tensor<T>& w1, const Tensor<T>& w2);

/// Spatial mean keeping frames: [n,c,f,h,w] -> [n,f,c]
template <typename T>
Tensor<T> temporal_preserving_pool(const Tensor<T>& features);

/// Excitation of every frame row with the block's shared weights: [n,f,c] -> [n,f,c]
template <typename T>
Tensor<T> per_frame_gates(const Tensor<T>& pooled, const Tensor<T>& w1, const Tensor<T>& w2);

/// Combines the global gate g [n,c] with the per-frame gates [n,f,c] -> [n,f,c].
template <typename T>
Tensor<T> joint_gate(const Tensor<T>& global, const Tensor<T>& local, SeMode mode);

/// Scales every (frame, channel) plane: features [n,c,f,h,w], gate [n,f,c].
template <typename T>
Tensor<T> channel_se_apply(const Tensor<T>& features, const Tensor<T>& gate);

/// Gate of the channel SE block, [n,f,c]. Undefined for SeMode::Off.
template <typename T>
Tensor<T> channel_se_gate(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2, SeMode mode);

template <typename T>
Tensor<T> channel_se(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2, SeMode mode);

/// Gate of the temporal SE block, [n,c,f]: a global frame gate from the
/// channel-spatial mean times per-channel frame gates from the spatial mean,
/// both excited with w1 [f x f/r], w2 [f/r x f]. Undefined for SeMode::Off.
template <typename T>
Tensor<T> temporal_se_gate(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2, SeMode mode);

template <typename T>
Tensor<T> temporal_se(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2, SeMode mode);

// --- backbone ----------------------------------------------------------------

struct SeConfig {
  std::size_t channel_ratio = 2;
  std::size_t temporal_ratio = 2;
  SeMode mode = SeMode::Joint;
  SeOrder order = SeOrder::ChannelFirst;
};

struct StemSpec {
  std::size_t channels = 16;
  Int3 kernel{3, 3, 3};
  Int3 stride{1, 1, 1};
  Int3 padding{1, 1, 1};
};

struct StageSpec {
  std::size_t width = 16;
  std::size_t blocks = 2;
  Int3 stride{1, 1, 1};  // applied by the first block of the stage
};

struct VisualConfig {
  Int3 input{8, 96, 96};
  StemSpec stem;
  std::vector<StageSpec> stages;
  SeConfig se;

  /// Stem 3x3x3/16, stages [16,32,64] x 2 blocks, spatial stride 2 between stages.
  static VisualConfig standard();
  /// Non-overlapping 8x8 in-plane stem and one block per stage, for desk-scale training.
  static VisualConfig compact();
  /// Minimal network for finite-difference checks on f=4, 16x16 inputs.
  static VisualConfig tiny();
  static VisualConfig preset(const std::string& name);

  /// Throws ConfigError for impossible geometry or indivisible SE ratios.
  void validate() const;
  std::size_t output_dim() const { return stages.empty() ? stem.channels : stages.back().width; }
};

template <typename T>
struct SeResBlockParams {
  Tensor<T> conv1, bias1, conv2, bias2;
  Tensor<T> shortcut;  // 1x1x1 projection; undefined for an identity shortcut
  Tensor<T> se_w1, se_w2;
  Tensor<T> tse_w1, tse_w2;
  Int3 stride{1, 1, 1};
};

/// Pre-activation residual block with SE gating on the residual branch:
///   h = relu(x); r = conv2(relu(conv1(h))); out = shortcut + SE(r)
/// where shortcut is x, or a strided 1x1x1 projection of h.
template <typename T>
Tensor<T> se_resblock_forward(const Tensor<T>& x, const SeResBlockParams<T>& block, const SeConfig& se);

template <typename T>
class VisualTower {
 public:
  VisualTower(const VisualConfig& config, ParameterSet<T>& params, ParamInit& init);

  /// volumes [n,1,f,h,w] -> [n, output_dim]
  Tensor<T> forward(const Tensor<T>& volumes) const;

  std::size_t output_dim() const { return config_.output_dim(); }
  const VisualConfig& config() const { return config_; }
  std::vector<SeResBlockParams<T>>& blocks() { return blocks_; }

 private:
  VisualConfig config_;
  Tensor<T> stem_kernel_, stem_bias_;
  std::vector<SeResBlockParams<T>> blocks_;
};

extern template class VisualTower<float>;
extern template class VisualTower<double>;

}  // namespace lpsn

#include "lpsn/visual.hpp"

#include "lpsn/error.hpp"

namespace lpsn {

std::string to_string(SeMode mode) {
  switch (mode) {
    case SeMode::Joint: return "joint";
    case SeMode::GlobalOnly: return "global";
    case SeMode::LocalOnly: return "local";
    case SeMode::Off: return "off";
  }
  return "?";
}

std::string to_string(SeOrder order) {
  switch (order) {
    case SeOrder::ChannelFirst: return "channel-first";
    case SeOrder::TemporalFirst: return "temporal-first";
    case SeOrder::ChannelOnly: return "channel-only";
    case SeOrder::TemporalOnly: return "temporal-only";
  }
  return "?";
}

SeMode parse_se_mode(const std::string& text) {
  for (SeMode m : {SeMode::Joint, SeMode::GlobalOnly, SeMode::LocalOnly, SeMode::Off}) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown SE mode '" + text + "' (joint, global, local, off)");
}

SeOrder parse_se_order(const std::string& text) {
  for (SeOrder o : {SeOrder::ChannelFirst, SeOrder::TemporalFirst, SeOrder::ChannelOnly, SeOrder::TemporalOnly}) {
    if (to_string(o) == text) return o;
  }
  throw ConfigError("unknown SE order '" + text + "' (channel-first, temporal-first, channel-only, temporal-only)");
}

namespace {

template <typename T>
void require_rank5(const Tensor<T>& x, const char* op) {
  if (x.rank() != 5) throw DimensionError(std::string(op) + " expects [n,c,f,h,w], got " + shape_string(x.shape()));
}

}  // namespace

template <typename T>
Tensor<T> channel_squeeze(const Tensor<T>& features) {
  require_rank5(features, "channel_squeeze");
  return mean_over(features, {2, 3, 4});
}

template <typename T>
Tensor<T> excitation(const Tensor<T>& p, const Tensor<T>& w1, const Tensor<T>& w2) {
  if (p.rank() != 2 || w1.rank() != 2 || w2.rank() != 2 || w2.dim(1) != p.dim(1) || w1.dim(1) != w2.dim(0) ||
      w1.dim(0) != p.dim(1)) {
    throw DimensionError("excitation: descriptor " + shape_string(p.shape()) + " with W1 " + shape_string(w1.shape()) +
                         " and W2 " + shape_string(w2.shape()));
  }
  return sigmoid(matmul(relu(matmul(p, transpose(w2))), transpose(w1)));
}

template <typename T>
Tensor<T> temporal_preserving_pool(const Tensor<T>& features) {
  require_rank5(features, "temporal_preserving_pool");
  return permute(mean_over(features, {3, 4}), {0, 2, 1});
}

template <typename T>
Tensor<T> per_frame_gates(const Tensor<T>& pooled, const Tensor<T>& w1, const Tensor<T>& w2) {
  if (pooled.rank() != 3) throw DimensionError("per_frame_gates expects [n,f,c], got " + shape_string(pooled.shape()));
  const std::size_t n = pooled.dim(0), f = pooled.dim(1), c = pooled.dim(2);
  return reshape(excitation(reshape(pooled, {n * f, c}), w1, w2), {n, f, c});
}

template <typename T>
Tensor<T> joint_gate(const Tensor<T>& global, const Tensor<T>& local, SeMode mode) {
  if (global.rank() != 2 || local.rank() != 3 || global.dim(0) != local.dim(0) || global.dim(1) != local.dim(2)) {
    throw DimensionError("joint_gate: global " + shape_string(global.shape()) + " and local " +
                         shape_string(local.shape()));
  }
  const std::size_t n = local.dim(0), f = local.dim(1), c = local.dim(2);
  Tensor<T> g = reshape(global, {n, 1, c});
  switch (mode) {
    case SeMode::Joint: return mul(local, g);
    case SeMode::GlobalOnly: return mul(Tensor<T>::full({n, f, c}, T(1)), g);
    case SeMode::LocalOnly: return local;
    case SeMode::Off: return Tensor<T>::full({n, f, c}, T(1));
  }
  return local;
}

template <typename T>
Tensor<T> channel_se_apply(const Tensor<T>& features, const Tensor<T>& gate) {
  require_rank5(features, "channel_se_apply");
  const std::size_t n = features.dim(0), c = features.dim(1), f = features.dim(2);
  if (gate.shape() != Shape{n, f, c}) {
    throw DimensionError("channel_se_apply: gate " + shape_string(gate.shape()) + " for features " +
                         shape_string(features.shape()));
  }
  return mul(features, reshape(permute(gate, {0, 2, 1}), {n, c, f, 1, 1}));
}

template <typename T>
Tensor<T> channel_se_gate(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2, SeMode mode) {
  if (mode == SeMode::Off) return {};
  Tensor<T> g = excitation(channel_squeeze(features), w1, w2);
  if (mode == SeMode::GlobalOnly) {
    const std::size_t f = features.dim(2);
    return joint_gate(g, Tensor<T>::full({features.dim(0), f, features.dim(1)}, T(1)), mode);
  }
  return joint_gate(g, per_frame_gates(temporal_preserving_pool(features), w1, w2), mode);
}

template <typename T>
Tensor<T> channel_se(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2, SeMode mode) {
  if (mode == SeMode::Off) return features;
  return channel_se_apply(features, channel_se_gate(features, w1, w2, mode));
}

template <typename T>
Tensor<T> temporal_se_gate(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2, SeMode mode) {
  require_rank5(features, "temporal_se");
  if (mode == SeMode::Off) return {};
  const std::size_t n = features.dim(0), c = features.dim(1), f = features.dim(2);
  Tensor<T> global = reshape(excitation(mean_over(features, {1, 3, 4}), w1, w2), {n, 1, f});
  if (mode == SeMode::GlobalOnly) return mul(Tensor<T>::full({n, c, f}, T(1)), global);
  Tensor<T> local = reshape(excitation(reshape(mean_over(features, {3, 4}), {n * c, f}), w1, w2), {n, c, f});
  return mode == SeMode::LocalOnly ? local : mul(local, global);
}

template <typename T>
Tensor<T> temporal_se(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2, SeMode mode) {
  if (mode == SeMode::Off) return features;
  Tensor<T> gate = temporal_se_gate(features, w1, w2, mode);
  const std::size_t n = features.dim(0), c = features.dim(1), f = features.dim(2);
  return mul(features, reshape(gate, {n, c, f, 1, 1}));
}

namespace {

template <typename T>
Tensor<T> conv_bias(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, Int3 stride, Int3 padding) {
  return add(conv3d(x, kernel, stride, padding), reshape(bias, {bias.numel(), 1, 1, 1}));
}

template <typename T>
Tensor<T> apply_se(const Tensor<T>& x, const SeResBlockParams<T>& b, const SeConfig& se) {
  auto channel = [&](const Tensor<T>& t) { return channel_se(t, b.se_w1, b.se_w2, se.mode); };
  auto temporal = [&](const Tensor<T>& t) { return temporal_se(t, b.tse_w1, b.tse_w2, se.mode); };
  switch (se.order) {
    case SeOrder::ChannelFirst: return temporal(channel(x));
    case SeOrder::TemporalFirst: return channel(temporal(x));
    case SeOrder::ChannelOnly: return channel(x);
    case SeOrder::TemporalOnly: return temporal(x);
  }
  return x;
}

constexpr Int3 kUnit{1, 1, 1};
constexpr Int3 kSame{1, 1, 1};
constexpr Int3 kNoPad{0, 0, 0};

}  // namespace

template <typename T>
Tensor<T> se_resblock_forward(const Tensor<T>& x, const SeResBlockParams<T>& b, const SeConfig& se) {
  require_rank5(x, "se_resblock_forward");
  Tensor<T> h = relu(x);
  Tensor<T> r = conv_bias(h, b.conv1, b.bias1, b.stride, kSame);
  r = conv_bias(relu(r), b.conv2, b.bias2, kUnit, kSame);
  Tensor<T> gated = apply_se(r, b, se);
  Tensor<T> shortcut = b.shortcut.defined() ? conv3d(h, b.shortcut, b.stride, kNoPad) : x;
  if (shortcut.shape() != gated.shape()) {
    throw ConfigError("residual branch " + shape_string(gated.shape()) + " does not match shortcut " +
                      shape_string(shortcut.shape()));
  }
  return add(shortcut, gated);
}

VisualConfig VisualConfig::standard() {
  VisualConfig c;
  c.stem = {16, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
  c.stages = {{16, 2, {1, 1, 1}}, {32, 2, {1, 2, 2}}, {64, 2, {1, 2, 2}}};
  return c;
}

VisualConfig VisualConfig::compact() {
  VisualConfig c;
  c.stem = {8, {3, 8, 8}, {1, 8, 8}, {1, 0, 0}};
  c.stages = {{8, 1, {1, 1, 1}}, {16, 1, {1, 2, 2}}, {32, 1, {1, 2, 2}}};
  return c;
}

VisualConfig VisualConfig::tiny() {
  VisualConfig c;
  c.input = {4, 16, 16};
  c.stem = {4, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}};
  c.stages = {{4, 1, {1, 1, 1}}, {8, 1, {1, 2, 2}}};
  return c;
}

VisualConfig VisualConfig::preset(const std::string& name) {
  if (name == "standard") return standard();
  if (name == "compact") return compact();
  if (name == "tiny") return tiny();
  throw ConfigError("unknown backbone preset '" + name + "' (standard, compact, tiny)");
}

namespace {

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0 || in + 2 * pad < k) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

Int3 conv_out(Int3 in, Int3 kernel, Int3 stride, Int3 pad) {
  return {conv_extent(in[0], kernel[0], stride[0], pad[0]), conv_extent(in[1], kernel[1], stride[1], pad[1]),
          conv_extent(in[2], kernel[2], stride[2], pad[2])};
}

bool positive(Int3 d) { return d[0] > 0 && d[1] > 0 && d[2] > 0; }

std::string dims_string(Int3 d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

}  // namespace

void VisualConfig::validate() const {
  if (!positive(input)) throw ConfigError("visual input dims must be positive, got " + dims_string(input));
  if (stem.channels == 0) throw ConfigError("stem needs at least one channel");
  if (se.channel_ratio == 0 || se.temporal_ratio == 0) throw ConfigError("SE reduction ratios must be >= 1");
  Int3 dims = conv_out(input, stem.kernel, stem.stride, stem.padding);
  if (!positive(dims)) throw ConfigError("stem reduces input " + dims_string(input) + " to nothing");
  const bool channel_used = se.mode != SeMode::Off && se.order != SeOrder::TemporalOnly;
  const bool temporal_used = se.mode != SeMode::Off && se.order != SeOrder::ChannelOnly;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageSpec& st = stages[s];
    if (st.width == 0 || st.blocks == 0) throw ConfigError("stage " + std::to_string(s) + " is empty");
    dims = conv_out(dims, {3, 3, 3}, st.stride, {1, 1, 1});
    if (!positive(dims)) throw ConfigError("stage " + std::to_string(s) + " downsamples below one voxel");
    if (channel_used && st.width % se.channel_ratio != 0) {
      throw ConfigError("stage width " + std::to_string(st.width) + " is not divisible by SE ratio " +
                        std::to_string(se.channel_ratio));
    }
    if (temporal_used && dims[0] % se.temporal_ratio != 0) {
      throw ConfigError("frame count " + std::to_string(dims[0]) + " is not divisible by temporal SE ratio " +
                        std::to_string(se.temporal_ratio));
    }
  }
}

template <typename T>
VisualTower<T>::VisualTower(const VisualConfig& config, ParameterSet<T>& params, ParamInit& init) : config_(config) {
  config.validate();
  const StemSpec& st = config.stem;
  const std::size_t stem_fan = st.kernel[0] * st.kernel[1] * st.kernel[2];
  stem_kernel_ = params.add("visual.stem.kernel",
                            init.fan_in<T>({st.channels, 1, st.kernel[0], st.kernel[1], st.kernel[2]}, stem_fan));
  stem_bias_ = params.add("visual.stem.bias", Tensor<T>::zeros({st.channels}));

  Int3 dims = conv_out(config.input, st.kernel, st.stride, st.padding);
  std::size_t channels = st.channels;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const StageSpec& stage = config.stages[s];
    for (std::size_t k = 0; k < stage.blocks; ++k) {
      const std::string base = "visual.stage" + std::to_string(s) + ".block" + std::to_string(k) + ".";
      const std::size_t out = stage.width;
      SeResBlockParams<T> b;
      b.stride = k == 0 ? stage.stride : kUnit;
      dims = conv_out(dims, {3, 3, 3}, b.stride, {1, 1, 1});
      b.conv1 = params.add(base + "conv1.kernel", init.fan_in<T>({out, channels, 3, 3, 3}, channels * 27));
      b.bias1 = params.add(base + "conv1.bias", Tensor<T>::zeros({out}));
      b.conv2 = params.add(base + "conv2.kernel", init.fan_in<T>({out, out, 3, 3, 3}, out * 27));
      b.bias2 = params.add(base + "conv2.bias", Tensor<T>::zeros({out}));
      if (out != channels || b.stride != kUnit) {
        b.shortcut = params.add(base + "shortcut.kernel", init.fan_in<T>({out, channels, 1, 1, 1}, channels));
      }
      const std::size_t cr = std::max<std::size_t>(1, out / config.se.channel_ratio);
      b.se_w1 = params.add(base + "channel_se.w1", init.fan_in<T>({out, cr}, cr));
      b.se_w2 = params.add(base + "channel_se.w2", init.fan_in<T>({cr, out}, out));
      const std::size_t f = dims[0];
      const std::size_t fr = std::max<std::size_t>(1, f / config.se.temporal_ratio);
      b.tse_w1 = params.add(base + "temporal_se.w1", init.fan_in<T>({f, fr}, fr));
      b.tse_w2 = params.add(base + "temporal_se.w2", init.fan_in<T>({fr, f}, f));
      blocks_.push_back(std::move(b));
      channels = out;
    }
  }
}

template <typename T>
Tensor<T> VisualTower<T>::forward(const Tensor<T>& volumes) const {
  const Int3& in = config_.input;
  if (volumes.rank() != 5 || volumes.dim(1) != 1 || volumes.dim(2) != in[0] || volumes.dim(3) != in[1] ||
      volumes.dim(4) != in[2]) {
    throw ConfigError("visual tower expects [n,1," + dims_string(in) + "] volumes, got " +
                      shape_string(volumes.shape()));
  }
  Tensor<T> x = conv_bias(volumes, stem_kernel_, stem_bias_, config_.stem.stride, config_.stem.padding);
  for (const auto& b : blocks_) x = se_resblock_forward(x, b, config_.se);
  return mean_over(relu(x), {2, 3, 4});
}

#define LPSN_INSTANTIATE_VISUAL(T)                                                                        \
  template Tensor<T> channel_squeeze(const Tensor<T>&);                                                   \
  template Tensor<T> excitation(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> temporal_preserving_pool(const Tensor<T>&);                                          \
  template Tensor<T> per_frame_gates(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> joint_gate(const Tensor<T>&, const Tensor<T>&, SeMode);                              \
  template Tensor<T> channel_se_apply(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> channel_se_gate(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, SeMode);       \
  template Tensor<T> channel_se(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, SeMode);            \
  template Tensor<T> temporal_se_gate(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, SeMode);      \
  template Tensor<T> temporal_se(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, SeMode);           \
  template Tensor<T> se_resblock_forward(const Tensor<T>&, const SeResBlockParams<T>&, const SeConfig&);  \
  template class VisualTower<T>;

LPSN_INSTANTIATE_VISUAL(float)
LPSN_INSTANTIATE_VISUAL(double)

}  // namespace lpsn

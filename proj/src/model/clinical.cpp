#include "lpsn/clinical.hpp"

#include <cmath>

#include "lpsn/error.hpp"
#include "lpsn/ops.hpp"

namespace lpsn {

std::string to_string(TextualEncoder encoder) {
  return encoder == TextualEncoder::Mlp ? "mlp" : "transformer";
}

TextualEncoder parse_textual_encoder(const std::string& text) {
  if (text == "transformer") return TextualEncoder::LiteTransformer;
  if (text == "mlp") return TextualEncoder::Mlp;
  throw ConfigError("unknown textual encoder '" + text + "' (transformer, mlp)");
}

std::size_t ClinicalVocabulary::add(const std::string& field, const std::string& value) {
  auto key = std::make_pair(field, value);
  auto it = lookup_.find(key);
  if (it != lookup_.end()) return it->second;
  const std::size_t idx = items_.size();
  items_.push_back(key);
  lookup_.emplace(std::move(key), idx);
  return idx;
}

std::size_t ClinicalVocabulary::index(const std::string& field, const std::string& value) const {
  auto it = lookup_.find({field, value});
  if (it == lookup_.end()) throw VocabularyError("unknown clinical item " + field + "=" + value);
  return it->second;
}

bool ClinicalVocabulary::contains(const std::string& field, const std::string& value) const {
  return lookup_.count({field, value}) != 0;
}

EncodedRecord encode_record(const ClinicalRecord& record, const std::vector<std::string>& fields,
                            const ClinicalVocabulary& vocab) {
  if (record.categorical.size() != fields.size()) {
    throw InputError("record " + record.id + " has " + std::to_string(record.categorical.size()) +
                     " categorical values, schema has " + std::to_string(fields.size()));
  }
  if (record.continuous.size() != vocab.continuous.size()) {
    throw InputError("record " + record.id + " has " + std::to_string(record.continuous.size()) +
                     " continuous values, vocabulary has " + std::to_string(vocab.continuous.size()));
  }
  EncodedRecord out;
  for (std::size_t i = 0; i < fields.size(); ++i) out.items.push_back(vocab.index(fields[i], record.categorical[i]));
  for (std::size_t i = 0; i < record.continuous.size(); ++i) {
    const ContinuousField& f = vocab.continuous[i];
    const double raw = record.continuous[i].value_or(f.mean);
    out.covariates.push_back((raw - f.mean) / f.std);
  }
  return out;
}

void LiteTransformerConfig::validate() const {
  if (heads == 0 || d == 0 || d % heads != 0) {
    throw ConfigError("transformer width " + std::to_string(d) + " is not divisible into " + std::to_string(heads) +
                      " heads");
  }
  if (layers == 0) throw ConfigError("transformer needs at least one layer");
  if (mlp_hidden == 0) throw ConfigError("transformer MLP width must be positive");
}

template <typename T>
Tensor<T> self_attention(const Tensor<T>& tokens, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                         Tensor<T>* weights) {
  if (tokens.rank() != 2 || wq.rank() != 2 || wq.shape() != wk.shape() || wq.shape() != wv.shape() ||
      wq.dim(0) != tokens.dim(1)) {
    throw DimensionError("self_attention: tokens " + shape_string(tokens.shape()) + " with projections " +
                         shape_string(wq.shape()) + ", " + shape_string(wk.shape()) + ", " + shape_string(wv.shape()));
  }
  const T inv_sqrt_h = T(1) / std::sqrt(static_cast<T>(wq.dim(1)));
  Tensor<T> q = matmul(tokens, wq);
  Tensor<T> k = matmul(tokens, wk);
  Tensor<T> v = matmul(tokens, wv);
  Tensor<T> s = softmax(scale(matmul(q, transpose(k)), inv_sqrt_h), 1);
  if (weights) *weights = s;
  return matmul(s, v);
}

template <typename T>
ClinicalTower<T>::ClinicalTower(const ClinicalConfig& config, ParameterSet<T>& params, ParamInit& init)
    : config_(config) {
  const std::size_t d = config.transformer.d;
  if (config.vocab_size == 0) throw ConfigError("clinical tower needs a non-empty vocabulary");
  if (config.item_tokens + config.covariates == 0) throw ConfigError("clinical tower needs at least one token");
  embedding_ = params.add("clinical.embedding", init.uniform<T>({config.vocab_size, d}, 1.0));
  for (std::size_t i = 0; i < config.covariates; ++i) {
    const std::string base = "clinical.covariate" + std::to_string(i);
    cov_weight_.push_back(params.add(base + ".weight", init.uniform<T>({1, d}, 1.0)));
    cov_bias_.push_back(params.add(base + ".bias", Tensor<T>::zeros({d})));
  }

  if (config.encoder == TextualEncoder::Mlp) {
    const std::size_t hidden = config.transformer.mlp_hidden;
    mlp_w1_ = params.add("clinical.mlp.w1", init.fan_in<T>({d, hidden}, d));
    mlp_b1_ = params.add("clinical.mlp.b1", Tensor<T>::zeros({hidden}));
    mlp_w2_ = params.add("clinical.mlp.w2", init.fan_in<T>({hidden, d}, hidden));
    mlp_b2_ = params.add("clinical.mlp.b2", Tensor<T>::zeros({d}));
    return;
  }

  config.transformer.validate();
  const std::size_t hidden = config.transformer.mlp_hidden;
  for (std::size_t k = 0; k < config.transformer.layers; ++k) {
    const std::string base = "clinical.layer" + std::to_string(k) + ".";
    TransformerLayer<T> L;
    L.ln1_gain = params.add(base + "ln1.gain", Tensor<T>::full({d}, T(1)), false);
    L.ln1_bias = params.add(base + "ln1.bias", Tensor<T>::zeros({d}), false);
    L.wq = params.add(base + "attn.wq", init.fan_in<T>({d, d}, d));
    L.wk = params.add(base + "attn.wk", init.fan_in<T>({d, d}, d));
    L.wv = params.add(base + "attn.wv", init.fan_in<T>({d, d}, d));
    L.wo = params.add(base + "attn.wo", Tensor<T>::zeros({d, d}));
    L.bo = params.add(base + "attn.bo", Tensor<T>::zeros({d}));
    L.ln2_gain = params.add(base + "ln2.gain", Tensor<T>::full({d}, T(1)), false);
    L.ln2_bias = params.add(base + "ln2.bias", Tensor<T>::zeros({d}), false);
    L.w1 = params.add(base + "mlp.w1", init.fan_in<T>({d, hidden}, d));
    L.b1 = params.add(base + "mlp.b1", Tensor<T>::zeros({hidden}));
    L.w2 = params.add(base + "mlp.w2", Tensor<T>::zeros({hidden, d}));
    L.b2 = params.add(base + "mlp.b2", Tensor<T>::zeros({d}));
    layers_.push_back(std::move(L));
  }
  final_gain_ = params.add("clinical.final_ln.gain", Tensor<T>::full({d}, T(1)), false);
  final_bias_ = params.add("clinical.final_ln.bias", Tensor<T>::zeros({d}), false);
}

template <typename T>
Tensor<T> ClinicalTower<T>::embed(const ClinicalInput& input) const {
  const std::size_t n = input.batch, d = config_.transformer.d;
  if (input.items.size() != n * config_.item_tokens || input.covariates.size() != n * config_.covariates) {
    throw DimensionError("clinical input of batch " + std::to_string(n) + " has " + std::to_string(input.items.size()) +
                         " items and " + std::to_string(input.covariates.size()) + " covariates");
  }
  for (std::size_t idx : input.items) {
    if (idx >= config_.vocab_size) throw VocabularyError("item index " + std::to_string(idx) + " outside vocabulary");
  }
  std::vector<Tensor<T>> parts;
  if (config_.item_tokens > 0) {
    parts.push_back(reshape(gather_rows(embedding_, input.items), {n, config_.item_tokens, d}));
  }
  for (std::size_t c = 0; c < config_.covariates; ++c) {
    std::vector<T> column(n);
    for (std::size_t i = 0; i < n; ++i) column[i] = static_cast<T>(input.covariates[i * config_.covariates + c]);
    Tensor<T> x = Tensor<T>::from_data({n, 1}, std::move(column));
    parts.push_back(reshape(add(matmul(x, cov_weight_[c]), cov_bias_[c]), {n, 1, d}));
  }
  return parts.size() == 1 ? parts.front() : concat(parts, 1);
}

template <typename T>
Tensor<T> ClinicalTower<T>::attention_block(const Tensor<T>& x, const TransformerLayer<T>& L,
                                            std::vector<Tensor<T>>* attention) const {
  const std::size_t n = x.dim(0), m = x.dim(1), d = config_.transformer.d;
  const std::size_t heads = config_.transformer.heads, h = config_.transformer.head_dim();
  Tensor<T> flat = reshape(layer_norm(x, L.ln1_gain, L.ln1_bias), {n * m, d});
  auto split_heads = [&](const Tensor<T>& w, std::vector<std::size_t> order) {
    return reshape(permute(reshape(matmul(flat, w), {n, m, heads, h}), order),
                   order[2] == 1 ? Shape{n * heads, m, h} : Shape{n * heads, h, m});
  };
  Tensor<T> q = split_heads(L.wq, {0, 2, 1, 3});
  Tensor<T> kt = split_heads(L.wk, {0, 2, 3, 1});
  Tensor<T> v = split_heads(L.wv, {0, 2, 1, 3});
  const T inv_sqrt_h = T(1) / std::sqrt(static_cast<T>(h));
  Tensor<T> s = softmax(scale(bmm(q, kt), inv_sqrt_h), 2);
  if (attention) attention->push_back(s);
  Tensor<T> heads_out = reshape(permute(reshape(bmm(s, v), {n, heads, m, h}), {0, 2, 1, 3}), {n * m, d});
  return reshape(add(matmul(heads_out, L.wo), L.bo), {n, m, d});
}

template <typename T>
Tensor<T> ClinicalTower<T>::encode(const Tensor<T>& tokens, std::vector<Tensor<T>>* attention) const {
  const std::size_t d = config_.transformer.d;
  if (tokens.rank() != 3 || tokens.dim(2) != d) {
    throw DimensionError("clinical tokens must be [batch x tokens x " + std::to_string(d) + "], got " +
                         shape_string(tokens.shape()));
  }
  const std::size_t n = tokens.dim(0), m = tokens.dim(1);
  if (config_.encoder == TextualEncoder::Mlp) {
    Tensor<T> pooled = mean_over(tokens, {1});
    Tensor<T> hidden = relu(add(matmul(pooled, mlp_w1_), mlp_b1_));
    return add(matmul(hidden, mlp_w2_), mlp_b2_);
  }
  Tensor<T> a = tokens;
  for (const auto& L : layers_) {
    a = add(attention_block(a, L, attention), a);
    Tensor<T> z = reshape(layer_norm(a, L.ln2_gain, L.ln2_bias), {n * m, d});
    Tensor<T> mlp = add(matmul(relu(add(matmul(z, L.w1), L.b1)), L.w2), L.b2);
    a = add(reshape(mlp, {n, m, d}), a);
  }
  return mean_over(layer_norm(a, final_gain_, final_bias_), {1});
}

template Tensor<float> self_attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                      const Tensor<float>&, Tensor<float>*);
template Tensor<double> self_attention(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, Tensor<double>*);
template class ClinicalTower<float>;
template class ClinicalTower<double>;

}  // namespace lpsn

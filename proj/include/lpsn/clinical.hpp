#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lpsn/params.hpp"
#include "lpsn/tensor.hpp"

namespace lpsn {

/// Normalization statistics of one continuous clinical field, fitted on the
/// training split. `mean` also serves as the imputation value.
struct ContinuousField {
  std::string name;
  double min = 0.0, max = 0.0, mean = 0.0, std = 1.0;

  bool operator==(const ContinuousField&) const = default;
};

/// Dense item index over every (field, value) pair of the categorical fields.
class ClinicalVocabulary {
 public:
  /// Registers an item if new; returns its index.
  std::size_t add(const std::string& field, const std::string& value);
  /// Throws VocabularyError naming the item if it was never registered.
  std::size_t index(const std::string& field, const std::string& value) const;
  bool contains(const std::string& field, const std::string& value) const;

  std::size_t size() const { return items_.size(); }
  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

  std::vector<ContinuousField> continuous;

  bool operator==(const ClinicalVocabulary& other) const {
    return items_ == other.items_ && continuous == other.continuous;
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
  std::map<std::pair<std::string, std::string>, std::size_t> lookup_;
};

struct ClinicalRecord {
  std::string id;
  std::vector<std::string> categorical;               // one value per schema field
  std::vector<std::optional<double>> continuous;      // e.g. age; may be missing
  double survival_days = 0.0;
  int event = 1;                                      // 1 = death observed, 0 = censored
};

/// Model-ready form of one record: vocabulary indices and normalized covariates.
struct EncodedRecord {
  std::vector<std::size_t> items;
  std::vector<double> covariates;
};

/// Missing covariates take the training mean, then every covariate is z-scored.
EncodedRecord encode_record(const ClinicalRecord& record, const std::vector<std::string>& fields,
                            const ClinicalVocabulary& vocab);

struct LiteTransformerConfig {
  std::size_t d = 48;
  std::size_t heads = 3;
  std::size_t layers = 5;
  std::size_t mlp_hidden = 192;

  std::size_t head_dim() const { return d / heads; }
  void validate() const;
};

enum class TextualEncoder { LiteTransformer, Mlp };
std::string to_string(TextualEncoder encoder);
TextualEncoder parse_textual_encoder(const std::string& text);

struct ClinicalConfig {
  std::size_t vocab_size = 0;
  std::size_t item_tokens = 0;  // categorical items per record
  std::size_t covariates = 1;   // continuous fields, one token each
  LiteTransformerConfig transformer;
  TextualEncoder encoder = TextualEncoder::LiteTransformer;
};

/// A batch of encoded records, row-major: items [batch x item_tokens],
/// covariates [batch x covariates].
struct ClinicalInput {
  std::size_t batch = 0;
  std::vector<std::size_t> items;
  std::vector<double> covariates;
};

/// Single-head scaled dot-product attention over a token matrix.
/// tokens [m x d], wq/wk/wv [d x h] -> [m x h]. `weights`, if given, receives
/// the [m x m] attention matrix.
template <typename T>
Tensor<T> self_attention(const Tensor<T>& tokens, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                         Tensor<T>* weights = nullptr);

template <typename T>
struct TransformerLayer {
  Tensor<T> ln1_gain, ln1_bias;
  // Query/key/value projections for all heads side by side: head i owns
  // columns [i*h, (i+1)*h).
  Tensor<T> wq, wk, wv;
  Tensor<T> wo, bo;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> w1, b1, w2, b2;
};

/// Clinical tower: item embedding, covariate tokens, then either the lite
/// transformer (pre-norm MSA + MLP blocks, final norm, mean over tokens) or a
/// plain MLP over the mean token.
template <typename T>
class ClinicalTower {
 public:
  ClinicalTower(const ClinicalConfig& config, ParameterSet<T>& params, ParamInit& init);

  /// [batch x tokens x d]
  Tensor<T> embed(const ClinicalInput& input) const;
  /// [batch x tokens x d] -> [batch x d]. `attention` collects every head's
  /// attention matrices ([batch*heads x tokens x tokens] per layer).
  Tensor<T> encode(const Tensor<T>& tokens, std::vector<Tensor<T>>* attention = nullptr) const;
  Tensor<T> forward(const ClinicalInput& input) const { return encode(embed(input)); }

  std::size_t output_dim() const { return config_.transformer.d; }
  const ClinicalConfig& config() const { return config_; }
  const Tensor<T>& embedding() const { return embedding_; }
  std::vector<TransformerLayer<T>>& layers() { return layers_; }

 private:
  Tensor<T> attention_block(const Tensor<T>& x, const TransformerLayer<T>& layer,
                            std::vector<Tensor<T>>* attention) const;

  ClinicalConfig config_;
  Tensor<T> embedding_;
  std::vector<Tensor<T>> cov_weight_, cov_bias_;
  std::vector<TransformerLayer<T>> layers_;
  Tensor<T> final_gain_, final_bias_;
  Tensor<T> mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

extern template class ClinicalTower<float>;
extern template class ClinicalTower<double>;

}  // namespace lpsn

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "lpsn/clinical.hpp"
#include "lpsn/error.hpp"
#include "lpsn/gradcheck.hpp"
#include "support/test_util.hpp"

using namespace lpsn;
using lpsn::testing::random_tensor;
using lpsn::testing::weighted_sum;

namespace {

ClinicalConfig small_config(std::size_t layers = 2, std::size_t items = 3) {
  ClinicalConfig c;
  c.vocab_size = 7;
  c.item_tokens = items;
  c.covariates = 1;
  c.transformer.d = 6;
  c.transformer.heads = 3;
  c.transformer.layers = layers;
  c.transformer.mlp_hidden = 8;
  return c;
}

void randomize(ParameterSet<double>& params, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& p : params.entries()) {
    for (double& v : p.tensor.values_mut()) v = dist(rng);
  }
}

ClinicalInput input_of(std::vector<std::vector<std::size_t>> items, std::vector<double> covariates) {
  ClinicalInput in;
  in.batch = items.size();
  for (auto& row : items) in.items.insert(in.items.end(), row.begin(), row.end());
  in.covariates = std::move(covariates);
  return in;
}

// Row-wise layer norm with unit gain and zero bias.
std::vector<double> plain_layer_norm(std::span<const double> row) {
  double mean = 0.0, var = 0.0;
  for (double v : row) mean += v;
  mean /= static_cast<double>(row.size());
  for (double v : row) var += (v - mean) * (v - mean);
  var /= static_cast<double>(row.size());
  std::vector<double> out;
  for (double v : row) out.push_back((v - mean) / std::sqrt(var + 1e-5));
  return out;
}

}  // namespace

TEST_CASE("vocabulary: dense indices, unknown items named") {
  ClinicalVocabulary vocab;
  CHECK(vocab.add("stage", "I") == 0);
  CHECK(vocab.add("stage", "II") == 1);
  CHECK(vocab.add("stage", "I") == 0);
  CHECK(vocab.add("gender", "male") == 2);
  CHECK(vocab.size() == 3);
  CHECK(vocab.index("gender", "male") == 2);
  try {
    (void)vocab.index("stage", "V");
    FAIL("expected VocabularyError");
  } catch (const VocabularyError& e) {
    CHECK(std::string(e.what()).find("stage=V") != std::string::npos);
  }
}

TEST_CASE("encode_record: items looked up, missing covariate imputed then z-scored") {
  ClinicalVocabulary vocab;
  vocab.add("stage", "I");
  vocab.add("stage", "II");
  vocab.continuous.push_back({"age", 40.0, 80.0, 60.0, 10.0});
  ClinicalRecord r{"p1", {"II"}, {std::optional<double>(75.0)}, 100.0, 1};
  auto e = encode_record(r, {"stage"}, vocab);
  CHECK(e.items == std::vector<std::size_t>{1});
  CHECK(e.covariates[0] == doctest::Approx(1.5));
  r.continuous[0] = std::nullopt;
  CHECK(encode_record(r, {"stage"}, vocab).covariates[0] == 0.0);
  r.categorical[0] = "III";
  CHECK_THROWS_AS(encode_record(r, {"stage"}, vocab), VocabularyError);
}

TEST_CASE("embed: identity embedding returns unit rows, covariate token is x*w + b") {
  ClinicalConfig c = small_config(1, 2);
  c.vocab_size = 6;
  ParameterSet<double> params;
  ParamInit init(1);
  ClinicalTower<double> tower(c, params, init);
  auto emb = params.get("clinical.embedding");
  auto values = emb.values_mut();
  std::fill(values.begin(), values.end(), 0.0);
  for (std::size_t i = 0; i < 6; ++i) values[i * 6 + i] = 1.0;

  auto tokens = tower.embed(input_of({{2, 5}}, {0.7}));
  REQUIRE(tokens.shape() == Shape{1, 3, 6});
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(tokens.at({0, 0, j}) == (j == 2 ? 1.0 : 0.0));
    CHECK(tokens.at({0, 1, j}) == (j == 5 ? 1.0 : 0.0));
  }
  const auto w = params.get("clinical.covariate0.weight");
  const auto b = params.get("clinical.covariate0.bias");
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(tokens.at({0, 2, j}) == doctest::Approx(0.7 * w.values()[j] + b.values()[j]).epsilon(1e-14));
  }
}

TEST_CASE("embed: shape is (items + covariates) x d for every batch row") {
  ClinicalConfig c = small_config(1, 4);
  ParameterSet<double> params;
  ParamInit init(2);
  ClinicalTower<double> tower(c, params, init);
  auto tokens = tower.embed(input_of({{0, 1, 2, 3}, {4, 5, 6, 0}}, {0.1, -0.2}));
  CHECK(tokens.shape() == Shape{2, 5, 6});
  CHECK_THROWS_AS(tower.embed(input_of({{0, 1, 2, 7}}, {0.0})), VocabularyError);
}

TEST_CASE("embed: gradient reaches exactly the looked-up rows") {
  std::mt19937_64 rng(3);
  ClinicalConfig c = small_config(1, 3);
  ParameterSet<double> params;
  ParamInit init(3);
  ClinicalTower<double> tower(c, params, init);
  const auto in = input_of({{1, 4, 4}}, {0.3});
  auto weights = random_tensor(rng, {1, 4, 6});
  auto emb = params.get("clinical.embedding");
  {
    Tape<double> tape;
    tape.backward(weighted_sum(tower.embed(in), weights));
  }
  for (std::size_t row = 0; row < 7; ++row) {
    double norm = 0.0;
    for (std::size_t j = 0; j < 6; ++j) norm += std::abs(emb.grad()[row * 6 + j]);
    if (row == 1 || row == 4) {
      CHECK(norm > 0.0);
    } else {
      CHECK(norm == 0.0);
    }
  }
  // row 4 is looked up twice, so its gradient is the sum of both token weights
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(emb.grad()[4 * 6 + j] == doctest::Approx(weights.at({0, 1, j}) + weights.at({0, 2, j})));
  }
  params.zero_grad();
  auto report = gradient_check({{"embedding", emb}}, [&] { return weighted_sum(tower.embed(in), weights); });
  CHECK(report.max_rel_error() <= 1e-4);
}

TEST_CASE("self_attention: single token returns v") {
  std::mt19937_64 rng(4);
  auto tokens = random_tensor(rng, {1, 4});
  auto wq = random_tensor(rng, {4, 2}), wk = random_tensor(rng, {4, 2}), wv = random_tensor(rng, {4, 2});
  Tensor<double> s;
  auto out = self_attention(tokens, wq, wk, wv, &s);
  auto v = matmul(tokens, wv);
  CHECK(s.values()[0] == 1.0);
  for (std::size_t j = 0; j < 2; ++j) CHECK(out.values()[j] == doctest::Approx(v.values()[j]).epsilon(1e-14));
}

TEST_CASE("self_attention: zero query weights give uniform attention over v") {
  std::mt19937_64 rng(5);
  auto tokens = random_tensor(rng, {5, 4});
  auto wq = Tensor<double>::zeros({4, 3});
  auto wk = random_tensor(rng, {4, 3}), wv = random_tensor(rng, {4, 3});
  auto out = self_attention(tokens, wq, wk, wv);
  auto v = matmul(tokens, wv);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 5; ++i) mean += v.at({i, j}) / 5.0;
    for (std::size_t i = 0; i < 5; ++i) CHECK(out.at({i, j}) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("self_attention: 2 tokens, d = h = 2, scalar-loop oracle") {
  auto c = Tensor<double>::from_data({2, 2}, {0.3, -1.2, 0.8, 0.5});
  auto wq = Tensor<double>::from_data({2, 2}, {0.5, -0.4, 1.1, 0.2});
  auto wk = Tensor<double>::from_data({2, 2}, {-0.7, 0.9, 0.3, 0.6});
  auto wv = Tensor<double>::from_data({2, 2}, {1.0, 0.25, -0.5, 2.0});
  auto out = self_attention(c, wq, wk, wv);

  double q[2][2], k[2][2], v[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      q[i][j] = k[i][j] = v[i][j] = 0.0;
      for (int t = 0; t < 2; ++t) {
        q[i][j] += c.at({std::size_t(i), std::size_t(t)}) * wq.at({std::size_t(t), std::size_t(j)});
        k[i][j] += c.at({std::size_t(i), std::size_t(t)}) * wk.at({std::size_t(t), std::size_t(j)});
        v[i][j] += c.at({std::size_t(i), std::size_t(t)}) * wv.at({std::size_t(t), std::size_t(j)});
      }
    }
  }
  for (int i = 0; i < 2; ++i) {
    double logits[2];
    for (int j = 0; j < 2; ++j) logits[j] = (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / std::sqrt(2.0);
    const double e0 = std::exp(logits[0]), e1 = std::exp(logits[1]);
    for (int col = 0; col < 2; ++col) {
      const double expected = (e0 * v[0][col] + e1 * v[1][col]) / (e0 + e1);
      CHECK(std::abs(out.at({std::size_t(i), std::size_t(col)}) - expected) <= 1e-6);
    }
  }
}

TEST_CASE("self_attention: mismatched projections raise DimensionError") {
  auto tokens = Tensor<double>::zeros({3, 4});
  CHECK_THROWS_AS(self_attention(tokens, Tensor<double>::zeros({4, 2}), Tensor<double>::zeros({4, 3}),
                                 Tensor<double>::zeros({4, 2})),
                  DimensionError);
  CHECK_THROWS_AS(self_attention(tokens, Tensor<double>::zeros({5, 2}), Tensor<double>::zeros({5, 2}),
                                 Tensor<double>::zeros({5, 2})),
                  DimensionError);
}

TEST_CASE("transformer: zeroed branch projections reduce to the mean row of LN(C)") {
  std::mt19937_64 rng(6);
  ClinicalConfig c = small_config(3);
  ParameterSet<double> params;
  ParamInit init(6);
  ClinicalTower<double> tower(c, params, init);
  randomize(params, rng);
  for (auto& L : tower.layers()) {
    for (double& v : L.wo.values_mut()) v = 0.0;
    for (double& v : L.bo.values_mut()) v = 0.0;
    for (double& v : L.w2.values_mut()) v = 0.0;
    for (double& v : L.b2.values_mut()) v = 0.0;
  }
  for (auto& p : params.entries()) {
    if (p.name == "clinical.final_ln.gain") std::fill(p.tensor.values_mut().begin(), p.tensor.values_mut().end(), 1.0);
    if (p.name == "clinical.final_ln.bias") std::fill(p.tensor.values_mut().begin(), p.tensor.values_mut().end(), 0.0);
  }
  auto tokens = random_tensor(rng, {2, 4, 6});
  auto t = tower.encode(tokens);
  REQUIRE(t.shape() == Shape{2, 6});
  for (std::size_t n = 0; n < 2; ++n) {
    std::vector<double> mean(6, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
      auto row = plain_layer_norm(tokens.values().subspan((n * 4 + i) * 6, 6));
      for (std::size_t j = 0; j < 6; ++j) mean[j] += row[j] / 4.0;
    }
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(t.at({n, j}) - mean[j]) <= 1e-9);
  }
}

TEST_CASE("transformer: one layer equals per-head attention concatenated and projected") {
  std::mt19937_64 rng(7);
  ClinicalConfig c = small_config(1);
  ParameterSet<double> params;
  ParamInit init(7);
  ClinicalTower<double> tower(c, params, init);
  randomize(params, rng);
  auto& L = tower.layers()[0];
  for (double& v : L.w2.values_mut()) v = 0.0;
  for (double& v : L.b2.values_mut()) v = 0.0;
  for (double& v : L.ln1_gain.values_mut()) v = 1.0;
  for (double& v : L.ln1_bias.values_mut()) v = 0.0;
  for (auto& p : params.entries()) {
    if (p.name == "clinical.final_ln.gain") std::fill(p.tensor.values_mut().begin(), p.tensor.values_mut().end(), 1.0);
    if (p.name == "clinical.final_ln.bias") std::fill(p.tensor.values_mut().begin(), p.tensor.values_mut().end(), 0.0);
  }
  const std::size_t m = 4, d = 6, h = 2;
  auto tokens = random_tensor(rng, {1, m, d});

  std::vector<double> normed;
  for (std::size_t i = 0; i < m; ++i) {
    auto row = plain_layer_norm(tokens.values().subspan(i * d, d));
    normed.insert(normed.end(), row.begin(), row.end());
  }
  auto ln = Tensor<double>::from_data({m, d}, normed);
  auto columns = [&](const Tensor<double>& w, std::size_t head) {
    std::vector<double> out;
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t j = 0; j < h; ++j) out.push_back(w.at({r, head * h + j}));
    }
    return Tensor<double>::from_data({d, h}, out);
  };
  std::vector<double> concat_heads(m * d);
  for (std::size_t head = 0; head < 3; ++head) {
    auto a = self_attention(ln, columns(L.wq, head), columns(L.wk, head), columns(L.wv, head));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < h; ++j) concat_heads[i * d + head * h + j] = a.at({i, j});
    }
  }
  auto msa = add(matmul(Tensor<double>::from_data({m, d}, concat_heads), L.wo), L.bo);
  std::vector<double> expected(d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> residual(d);
    for (std::size_t j = 0; j < d; ++j) residual[j] = msa.at({i, j}) + tokens.at({0, i, j});
    auto row = plain_layer_norm(residual);
    for (std::size_t j = 0; j < d; ++j) expected[j] += row[j] / static_cast<double>(m);
  }
  auto t = tower.encode(tokens);
  for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(t.at({0, j}) - expected[j]) <= 1e-9);
}

TEST_CASE("transformer: output invariant under token permutation, shape independent of m") {
  std::mt19937_64 rng(8);
  ClinicalConfig c = small_config(2);
  ParameterSet<double> params;
  ParamInit init(8);
  ClinicalTower<double> tower(c, params, init);
  randomize(params, rng);
  auto tokens = random_tensor(rng, {1, 5, 6});
  const std::vector<std::size_t> perm = {3, 0, 4, 2, 1};
  std::vector<double> shuffled;
  for (std::size_t i : perm) {
    auto row = tokens.values().subspan(i * 6, 6);
    shuffled.insert(shuffled.end(), row.begin(), row.end());
  }
  auto a = tower.encode(tokens);
  auto b = tower.encode(Tensor<double>::from_data({1, 5, 6}, shuffled));
  for (std::size_t j = 0; j < 6; ++j) CHECK(a.values()[j] == doctest::Approx(b.values()[j]).epsilon(1e-12));
  CHECK(tower.encode(random_tensor(rng, {1, 2, 6})).shape() == Shape{1, 6});
  CHECK(tower.encode(random_tensor(rng, {1, 9, 6})).shape() == Shape{1, 6});
}

TEST_CASE("transformer: every head's attention rows sum to one") {
  std::mt19937_64 rng(9);
  ClinicalConfig c = small_config(2);
  ParameterSet<double> params;
  ParamInit init(9);
  ClinicalTower<double> tower(c, params, init);
  randomize(params, rng, 2.0);
  std::vector<Tensor<double>> attention;
  (void)tower.encode(random_tensor(rng, {2, 4, 6}, -3.0, 3.0), &attention);
  REQUIRE(attention.size() == 2);
  for (const auto& s : attention) {
    REQUIRE(s.shape() == Shape{6, 4, 4});
    for (std::size_t r = 0; r < 6 * 4; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 4; ++j) total += s.values()[r * 4 + j];
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("clinical tower: finite-difference check over all parameters") {
  std::mt19937_64 rng(10);
  for (TextualEncoder encoder : {TextualEncoder::LiteTransformer, TextualEncoder::Mlp}) {
    ClinicalConfig c = small_config(2);
    c.encoder = encoder;
    ParameterSet<double> params;
    ParamInit init(10);
    ClinicalTower<double> tower(c, params, init);
    randomize(params, rng);
    const auto in = input_of({{0, 3, 6}, {2, 2, 5}}, {0.4, -1.1});
    auto weights = random_tensor(rng, {2, 6});
    NamedLeaves leaves;
    for (auto& p : params.entries()) leaves.emplace_back(p.name, p.tensor);
    auto report = gradient_check(leaves, [&] { return weighted_sum(tower.forward(in), weights); });
    INFO("encoder " << to_string(encoder));
    CHECK(report.max_rel_error() <= 1e-4);
  }
}

TEST_CASE("clinical config: heads must divide the width") {
  LiteTransformerConfig t;
  t.d = 50;
  t.heads = 3;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t.d = 48;
  t.layers = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  CHECK(parse_textual_encoder("mlp") == TextualEncoder::Mlp);
  CHECK_THROWS_AS(parse_textual_encoder("rnn"), ConfigError);
}

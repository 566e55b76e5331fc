// tests/test_analysis.cpp

// Copyright 2026  The comoe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <random>

#include "comoe/analysis.hpp"
#include "comoe/errors.hpp"
#include "oracles.hpp"

using namespace comoe;

namespace {

std::map<std::string, std::uint64_t> by_name(const FlopsReport& r) {
  std::map<std::string, std::uint64_t> m;
  for (const auto& l : r.per_layer) m[l.name] = l.flops;
  return m;
}

ModelConfig toy(Variant v) {
  ModelConfig c;
  c.variant = v;
  return c;
}

// Plain recursive Levenshtein distance; exponential, for short inputs only.
std::size_t slow_edit_distance(const std::vector<int>& a, std::size_t i, const std::vector<int>& b, std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t sub = slow_edit_distance(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1);
  const std::size_t del = slow_edit_distance(a, i + 1, b, j) + 1;
  const std::size_t ins = slow_edit_distance(a, i, b, j + 1) + 1;
  return std::min({sub, del, ins});
}

std::vector<int> random_seq(std::mt19937_64& rng, int vocab, int max_len) {
  std::uniform_int_distribution<int> len(0, max_len), tok(0, vocab - 1);
  std::vector<int> s(static_cast<std::size_t>(len(rng)));
  for (int& t : s) t = tok(rng);
  return s;
}

}  // namespace

TEST(CountFlops, FullScaleOrdering) {
  const auto base = count_flops(full_scale_config(Variant::baseline), 500).flops_total;
  const auto collab = count_flops(full_scale_config(Variant::collaborative), 500).flops_total;
  const auto dense = count_flops(full_scale_config(Variant::dense_moe), 500).flops_total;
  const auto bi = count_flops(full_scale_config(Variant::bi_encoder), 500).flops_total;
  EXPECT_LT(base, collab);
  EXPECT_LT(collab, dense);
  EXPECT_LT(dense, bi);
}

TEST(CountFlops, TotalIsSumOfLayers) {
  for (Variant v : {Variant::baseline, Variant::bi_encoder, Variant::switch_sparse, Variant::dense_moe,
                    Variant::collaborative}) {
    const auto r = count_flops(full_scale_config(v), 500);
    std::uint64_t s = 0;
    for (const auto& l : r.per_layer) s += l.flops;
    EXPECT_EQ(s, r.flops_total) << r.variant;
  }
}

TEST(CountFlops, SkippedExpertIdentity) {
  for (Variant v : {Variant::baseline, Variant::bi_encoder, Variant::switch_sparse, Variant::dense_moe,
                    Variant::collaborative}) {
    const auto r = count_flops(full_scale_config(v), 500);
    EXPECT_EQ(r.skipped_experts_flops, (r.total_experts - r.activated_experts) * r.per_expert_flops) << r.variant;
    const bool sparse = v == Variant::switch_sparse || v == Variant::collaborative;
    EXPECT_EQ(r.skipped_experts_flops > 0, sparse) << r.variant;
  }
  const auto c = count_flops(full_scale_config(Variant::collaborative), 500);
  EXPECT_EQ(c.total_experts, 6u * 4u);
  EXPECT_EQ(c.activated_experts, 6u * 3u);
}

TEST(CountFlops, CollaborativeDiffersFromBaselineOnlyAtMoePositions) {
  const auto base = count_flops(toy(Variant::baseline), 100);
  const auto collab = count_flops(toy(Variant::collaborative), 100);
  const auto b = by_name(base);
  std::int64_t delta = 0;
  for (const auto& l : collab.per_layer) {
    if (l.moe_position) {
      const auto dot = l.name.rfind(".moe");
      const std::string ffn = dot == std::string::npos ? "" : l.name.substr(0, dot) + ".ffn";
      delta += static_cast<std::int64_t>(l.flops) - (ffn.empty() ? 0 : static_cast<std::int64_t>(b.at(ffn)));
    } else {
      EXPECT_EQ(l.flops, b.at(l.name)) << l.name;
    }
  }
  EXPECT_EQ(static_cast<std::int64_t>(collab.flops_total), static_cast<std::int64_t>(base.flops_total) + delta);
}

TEST(CountFlops, DoublingFfnOnlyChangesFfnEntries) {
  ModelConfig c = toy(Variant::baseline);
  const auto a = count_flops(c, 120);
  c.d_ffn *= 2;
  const auto b = count_flops(c, 120);
  ASSERT_EQ(a.per_layer.size(), b.per_layer.size());
  for (std::size_t i = 0; i < a.per_layer.size(); ++i) {
    const bool ffn = a.per_layer[i].name.ends_with(".ffn");
    if (ffn) EXPECT_GT(b.per_layer[i].flops, a.per_layer[i].flops) << a.per_layer[i].name;
    else EXPECT_EQ(b.per_layer[i].flops, a.per_layer[i].flops) << a.per_layer[i].name;
  }
}

TEST(CountFlops, MonotoneInSizes) {
  for (Variant v : {Variant::baseline, Variant::bi_encoder, Variant::switch_sparse, Variant::dense_moe,
                    Variant::collaborative}) {
    const ModelConfig c = toy(v);
    const auto t0 = count_flops(c, 50).flops_total;
    EXPECT_LE(t0, count_flops(c, 51).flops_total);
    ModelConfig d = c;
    d.d_model += 4;
    EXPECT_LE(t0, count_flops(d, 50).flops_total);
    d = c;
    d.d_ffn += 1;
    EXPECT_LE(t0, count_flops(d, 50).flops_total);
    for (int g = 0; g < 3; ++g) {
      d = c;
      (g == 0 ? d.groups.cn : g == 1 ? d.groups.en : d.groups.cs) += 1;
      EXPECT_LE(t0, count_flops(d, 50).flops_total) << variant_name(v) << " group " << g;
    }
  }
}

TEST(CountFlops, CollaborativeBeatsDenseWhenAnExpertIsSkippable) {
  for (GroupSpec g : {GroupSpec{1, 1, 2}, GroupSpec{2, 2, 0}, GroupSpec{1, 2, 1}, GroupSpec{3, 1, 1}}) {
    ModelConfig c = full_scale_config(Variant::collaborative);
    c.groups = g;
    ModelConfig d = full_scale_config(Variant::dense_moe);
    d.groups = g;
    EXPECT_LT(count_flops(c, 500).flops_total, count_flops(d, 500).flops_total);
  }
}

TEST(CountFlops, ParamsMatchTheBuiltModel) {
  for (Variant v : {Variant::baseline, Variant::bi_encoder, Variant::switch_sparse, Variant::dense_moe,
                    Variant::collaborative}) {
    for (GroupSpec g : {GroupSpec{1, 1, 2}, GroupSpec{2, 2, 0}, GroupSpec{2, 1, 3}}) {
      ModelConfig c = toy(v);
      c.groups = g;
      EncoderModel<float> model(c);
      EXPECT_EQ(count_flops(c, 10).params, model.encoder_param_count()) << variant_name(v);
    }
  }
}

TEST(CountFlops, JsonCarriesTheLedger) {
  const auto j = count_flops(toy(Variant::collaborative), 10).to_json();
  EXPECT_EQ(j.at("variant"), "collaborative");
  EXPECT_TRUE(j.at("per_layer").is_array());
  EXPECT_TRUE(j.contains("skipped_experts_flops"));
}

TEST(GreedyCtcDecode, Examples) {
  // width 3: a = 0, b = 1, blank = 2. Argmax path (a, a, blank, b).
  const std::vector<float> lp = {0, -5, -5, 0, -5, -5, -5, -5, 0, -5, 0, -5};
  EXPECT_EQ(greedy_ctc_decode(lp, 4, 3), (std::vector<int>{0, 1}));
  const std::vector<float> blank = {-5, -5, 0, -5, -5, 0};
  EXPECT_TRUE(greedy_ctc_decode(blank, 2, 3).empty());
  // (a, blank, a) keeps both a's.
  const std::vector<float> sep = {0, -5, -5, -5, -5, 0, 0, -5, -5};
  EXPECT_EQ(greedy_ctc_decode(sep, 3, 3), (std::vector<int>{0, 0}));
}

TEST(GreedyCtcDecode, MatchesExhaustivePathOracle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> lp(12);
    std::vector<float> lpf(12);
    for (std::size_t i = 0; i < 12; ++i) lpf[i] = static_cast<float>(lp[i] = n(rng));
    // Compare on the float-rounded values so both see the same numbers.
    for (std::size_t i = 0; i < 12; ++i) lp[i] = lpf[i];
    const auto hyp = greedy_ctc_decode(lpf, 4, 3);
    EXPECT_EQ(hyp, oracle::best_path(lp, 4, 3));
    for (int t : hyp) EXPECT_NE(t, 2);
  }
}

TEST(GreedyCtcDecode, TensorOverload) {
  const auto t = Tensor<double>::from({2, 2}, {0.0, -1.0, -1.0, 0.0});
  EXPECT_EQ(greedy_ctc_decode(t), (std::vector<int>{0}));
}

TEST(TokenErrorRate, Examples) {
  const std::vector<int> ref{1, 2, 3};
  EXPECT_DOUBLE_EQ(token_error_rate(ref, ref), 0.0);
  EXPECT_DOUBLE_EQ(token_error_rate(std::vector<int>{}, ref), 1.0);
  EXPECT_DOUBLE_EQ(token_error_rate(std::vector<int>{1, 9, 3}, ref), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(token_error_rate(std::vector<int>{1, 2, 3, 4, 5, 6, 7}, ref), 4.0 / 3.0);
  EXPECT_THROW(token_error_rate(ref, std::vector<int>{}), ValidationError);
}

TEST(EditDistance, MatchesRecursiveOracleAndIsAMetric) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_seq(rng, 3, 6), b = random_seq(rng, 3, 6), c = random_seq(rng, 3, 6);
    const std::size_t ab = edit_distance(a, b);
    EXPECT_EQ(ab, slow_edit_distance(a, 0, b, 0));
    EXPECT_EQ(ab, edit_distance(b, a));
    EXPECT_EQ(edit_distance(a, a), 0u);
    EXPECT_LE(edit_distance(a, c), ab + edit_distance(b, c));
  }
}

namespace {

Corpus eval_corpus() {
  CorpusSpec s;
  s.train = {0, 0, 0};
  s.dev = {0, 0, 0};
  s.test = {100, 100, 100};
  s.seed = 31;
  return gen_corpus(s);
}

}  // namespace

TEST(Evaluate, OracleModelScoresZero) {
  const Corpus c = eval_corpus();
  const auto r = evaluate(std::span<const Utterance>(c.test), [](const Utterance& u) {
    Prediction p;
    p.hypothesis = u.tokens;
    std::array<double, 3> probs{0, 0, 0};
    probs[static_cast<int>(u.lid)] = 1.0;
    p.lid_probs = probs;
    return p;
  });
  for (const auto& cls : r.per_class) {
    EXPECT_EQ(cls.utterances, 100u);
    EXPECT_EQ(cls.error_rate, 0.0);
  }
  EXPECT_EQ(r.average, 0.0);
  EXPECT_EQ(r.lid_accuracy, 1.0);
}

TEST(Evaluate, AccountingAndWeightedAverage) {
  const Corpus c = eval_corpus();
  // Empty hypotheses: every class scores exactly 1.0; drop the first token of CN only.
  const auto r = evaluate(std::span<const Utterance>(c.test), [](const Utterance& u) {
    Prediction p;
    if (u.lid == Lid::CN) p.hypothesis.assign(u.tokens.begin() + 1, u.tokens.end());
    return p;
  });
  std::size_t total = 0, cn_ref = 0;
  for (const auto& cls : r.per_class) total += cls.utterances;
  for (const auto& u : c.test)
    if (u.lid == Lid::CN) cn_ref += u.tokens.size();
  EXPECT_EQ(total, c.test.size());
  EXPECT_EQ(r.utterances, c.test.size());
  EXPECT_EQ(r.per_class[0].edits, 100u);
  EXPECT_DOUBLE_EQ(r.per_class[0].error_rate, 100.0 / static_cast<double>(cn_ref));
  EXPECT_DOUBLE_EQ(r.per_class[1].error_rate, 1.0);
  EXPECT_DOUBLE_EQ(r.average, (r.per_class[0].error_rate + 2.0) / 3.0);
  EXPECT_FALSE(r.lid_accuracy.has_value());
}

TEST(Evaluate, EmptySplitThrows) {
  EXPECT_THROW(evaluate(std::span<const Utterance>(), [](const Utterance&) { return Prediction{}; }),
               ValidationError);
}

TEST(Evaluate, UntrainedRouterIsAtChance) {
  const Corpus c = eval_corpus();
  EncoderModel<float> model(ModelConfig{});
  const auto r = evaluate(model, std::span<const Utterance>(c.test));
  ASSERT_TRUE(r.lid_accuracy.has_value());
  EXPECT_NEAR(*r.lid_accuracy, 1.0 / 3.0, 0.1);
  EXPECT_EQ(evaluate(model, std::span<const Utterance>(c.test)), r);
  const std::string table = format_eval_table({{"fresh", r}});
  EXPECT_NE(table.find("fresh"), std::string::npos);
}

TEST(Evaluate, BaselineHasNoLidAccuracy) {
  const Corpus c = eval_corpus();
  ModelConfig cfg;
  cfg.variant = Variant::baseline;
  EncoderModel<float> model(cfg);
  EXPECT_FALSE(evaluate(model, std::span<const Utterance>(c.test).first(6)).lid_accuracy.has_value());
}

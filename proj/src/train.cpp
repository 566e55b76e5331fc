// src/train.cpp

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

#include "comoe/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "comoe/errors.hpp"

namespace comoe {

template <typename Real>
UtteranceLoss<Real> utterance_loss(const EncoderModel<Real>& model, const Utterance& utt,
                                   std::optional<double> forced_scale) {
  const ModelConfig& cfg = model.config();
  UtteranceLoss<Real> out;
  out.encoder = model.forward(utt);
  const std::span<const int> labels(utt.tokens);
  const Tensor<Real> l_ctc = ctc_loss(model.ctc_log_probs(out.encoder.states), labels);
  const Tensor<Real> l_att = attention_decoder_loss(out.encoder.states, labels, model.decoder());
  std::optional<Tensor<Real>> l_lid;
  if (out.encoder.lid_logits) l_lid = lid_loss(*out.encoder.lid_logits, utt.lid);
  out.loss = total_loss(l_att, l_ctc, l_lid, cfg.lambda_asr, cfg.lambda_lid, forced_scale);
  out.l_att = l_att;
  out.l_ctc = l_ctc;
  out.l_lid = l_lid;
  return out;
}

template UtteranceLoss<float> utterance_loss(const EncoderModel<float>&, const Utterance&, std::optional<double>);
template UtteranceLoss<double> utterance_loss(const EncoderModel<double>&, const Utterance&, std::optional<double>);
template UtteranceLoss<long double> utterance_loss(const EncoderModel<long double>&, const Utterance&,
                                                   std::optional<double>);

double batch_lid_scale(std::span<const LossBreakdown> items) {
  if (items.empty()) throw ValidationError("batch_lid_scale: empty batch");
  double asr = 0.0, lid = 0.0;
  for (const auto& b : items) {
    asr += b.lambda_asr * b.l_att + (1.0 - b.lambda_asr) * b.l_ctc;
    lid += b.l_lid;
  }
  return asr / std::max(lid, 1e-8 * static_cast<double>(items.size()));
}

ModelConfig tiny_grad_check_config() {
  ModelConfig c;
  c.variant = Variant::collaborative;
  c.num_shared_layers = 2;
  c.num_moe_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ffn = 16;
  c.d_feat = 4;
  c.vocab_size = 6;
  c.groups = {1, 1, 2};
  c.seed = 7;
  return c;
}

GradReport model_grad_check(const ModelConfig& cfg, const GradCheckOptions& options, bool corrupt) {
  cfg.validate();
  if (cfg.vocab_size < 2) throw ValidationError("vocab_size: gradient check needs at least 2 tokens");
  CorpusSpec spec;
  spec.vocab_size_cn = cfg.vocab_size / 2;
  spec.vocab_size_en = cfg.vocab_size - spec.vocab_size_cn;
  spec.d_feat = cfg.d_feat;
  spec.tokens_min = 2;
  spec.tokens_max = 4;
  spec.frames_per_token_min = 2;
  spec.frames_per_token_max = 3;
  spec.train = spec.dev = spec.test = {1, 1, 1};
  spec.seed = cfg.seed;
  const std::vector<Utterance> utts = gen_corpus(spec).train;

  EncoderModel<double> model(cfg);
  std::vector<std::optional<double>> scales;
  {
    NoGradGuard no_grad;
    for (const auto& u : utts) {
      const auto ul = utterance_loss(model, u);
      scales.push_back(ul.encoder.lid_logits ? std::optional<double>(ul.loss.breakdown.lid_scale) : std::nullopt);
    }
  }
  auto loss_fn = [&]() {
    Tensor<double> total;
    for (std::size_t i = 0; i < utts.size(); ++i) {
      const Tensor<double> l = utterance_loss(model, utts[i], scales[i]).loss.total;
      total = total.defined() ? add(total, l) : l;
    }
    return total;
  };
  std::function<void(ParamStore<double>&)> tamper;
  if (corrupt) {
    tamper = [](ParamStore<double>& params) {
      Tensor<double> t = params.get("ctc_head.bias");
      for (double& g : t.mutable_grad()) g = 1.1 * g + 1e-3;
    };
  }
  if (!options.extended_reference) return finite_diff_check(model.params(), loss_fn, options, tamper);
  EncoderModel<long double> reference(cfg);
  auto reference_loss = [&]() {
    Tensor<long double> total;
    for (std::size_t i = 0; i < utts.size(); ++i) {
      const Tensor<long double> l = utterance_loss(reference, utts[i], scales[i]).loss.total;
      total = total.defined() ? add(total, l) : l;
    }
    return total;
  };
  return finite_diff_check(model.params(), loss_fn, reference.params(), reference_loss, options, tamper);
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  model.validate();
  if (max_steps <= 0) throw ValidationError("max_steps must be > 0");
  if (warmup_steps < 0) throw ValidationError("warmup_steps must be >= 0");
  if (batch_size <= 0) throw ValidationError("batch_size must be > 0");
  if (!(adam.lr > 0.0) || !std::isfinite(adam.lr)) throw ValidationError("lr must be a positive finite number");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ValidationError("beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ValidationError("beta2 must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ValidationError("eps must be > 0");
  if (!(grad_clip >= 0.0)) throw ValidationError("grad_clip must be >= 0");
  if (checkpoint_every < 0) throw ValidationError("checkpoint_every must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"model", comoe::to_json(model)},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"warmup_steps", warmup_steps},
          {"max_steps", max_steps},
          {"batch_size", batch_size},
          {"grad_clip", grad_clip},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"checkpoint_path", checkpoint_path},
          {"corpus_path", corpus_path},
          {"log_path", log_path}};
}

TrainConfig parse_train_config(KeyValueFile& kv) {
  TrainConfig cfg;
  std::optional<int> d_feat, vocab;
  apply_model_keys(kv, cfg.model, &d_feat, &vocab);
  if (auto v = kv.take("lr")) cfg.adam.lr = parse_double_field("lr", *v);
  if (auto v = kv.take("beta1")) cfg.adam.beta1 = parse_double_field("beta1", *v);
  if (auto v = kv.take("beta2")) cfg.adam.beta2 = parse_double_field("beta2", *v);
  if (auto v = kv.take("eps")) cfg.adam.eps = parse_double_field("eps", *v);
  if (auto v = kv.take("warmup_steps")) cfg.warmup_steps = parse_int_field("warmup_steps", *v);
  if (auto v = kv.take("max_steps")) cfg.max_steps = parse_int_field("max_steps", *v);
  if (auto v = kv.take("batch_size")) cfg.batch_size = parse_int_field("batch_size", *v);
  if (auto v = kv.take("grad_clip")) cfg.grad_clip = parse_double_field("grad_clip", *v);
  if (auto v = kv.take("seed")) cfg.seed = parse_u64_field("seed", *v);
  if (auto v = kv.take("checkpoint_every")) cfg.checkpoint_every = parse_int_field("checkpoint_every", *v);
  if (auto v = kv.take("checkpoint_path")) cfg.checkpoint_path = *v;
  if (auto v = kv.take("corpus_path")) cfg.corpus_path = *v;
  if (auto v = kv.take("log_path")) cfg.log_path = *v;
  kv.expect_consumed();
  cfg.model.seed = cfg.seed;
  cfg.d_feat_from_corpus = !d_feat.has_value();
  cfg.vocab_from_corpus = !vocab.has_value();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  KeyValueFile kv = KeyValueFile::load(path);
  return parse_train_config(kv);
}

void check_corpus_compatibility(const ModelConfig& model, const CorpusSpec& corpus) {
  if (model.d_feat != corpus.d_feat) {
    throw ValidationError("d_feat mismatch: model expects " + std::to_string(model.d_feat) + ", corpus has " +
                          std::to_string(corpus.d_feat));
  }
  if (model.vocab_size != corpus.vocab_size()) {
    throw ValidationError("vocab_size mismatch: model has " + std::to_string(model.vocab_size) + ", corpus has " +
                          std::to_string(corpus.vocab_size()));
  }
}

double learning_rate(const TrainConfig& cfg, int step) {
  if (step < 1) return 0.0;
  const double s = step;
  if (cfg.warmup_steps == 0) return cfg.adam.lr / std::sqrt(s);
  const double w = cfg.warmup_steps;
  return cfg.adam.lr * std::min(s / w, std::sqrt(w / s));
}

nlohmann::json StepRecord::to_json() const {
  nlohmann::json j = {{"step", step},
                      {"lr", lr},
                      {"l_att", loss.l_att},
                      {"l_ctc", loss.l_ctc},
                      {"l_lid", loss.l_lid},
                      {"lid_scale", loss.lid_scale},
                      {"total", loss.total},
                      {"grad_norm", grad_norm}};
  if (!routing.empty()) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& rec : routing) {
      r.push_back({{"id", rec.id},
                   {"lid", std::string(lid_name(rec.label))},
                   {"selected", std::string(lid_name(rec.selected))},
                   {"p", rec.p}});
    }
    j["routing"] = std::move(r);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

std::string engine_state(const std::mt19937_64& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

std::mt19937_64 engine_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream ss(state);
  ss >> rng;
  if (!ss) throw ValidationError("checkpoint: corrupt RNG state");
  return rng;
}

// Shuffling stream, independent of parameter initialization.
std::mt19937_64 shuffle_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5348u};
  return std::mt19937_64(seq);
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, std::vector<Utterance> train_set)
    : cfg_(std::move(cfg)), data_(std::move(train_set)), shuffle_rng_(shuffle_engine(cfg_.seed)) {
  cfg_.model.seed = cfg_.seed;
  cfg_.validate();
  if (data_.size() < static_cast<std::size_t>(cfg_.batch_size)) {
    throw ValidationError("training set has " + std::to_string(data_.size()) + " utterances, fewer than batch_size " +
                          std::to_string(cfg_.batch_size));
  }
  for (const auto& u : data_) {
    if (u.d_feat != static_cast<std::size_t>(cfg_.model.d_feat)) throw ValidationError(u.id + ": d_feat mismatch");
  }
  model_ = std::make_unique<EncoderModel<float>>(cfg_.model);
  for (const auto& e : model_->params().entries()) {
    adam_m_.emplace_back(e.tensor.size(), 0.0f);
    adam_v_.emplace_back(e.tensor.size(), 0.0f);
  }
}

void Trainer::next_epoch() {
  epoch_rng_state_ = engine_state(shuffle_rng_);
  order_.resize(data_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = order_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(shuffle_rng_() % i);
    std::swap(order_[i - 1], order_[j]);
  }
  cursor_ = 0;
  ++epoch_;
}

StepRecord Trainer::step() {
  const auto batch = static_cast<std::size_t>(cfg_.batch_size);
  if (order_.empty() || cursor_ + batch > order_.size()) next_epoch();
  ++step_;
  StepRecord rec;
  rec.step = step_;
  rec.lr = learning_rate(cfg_, step_);

  auto& params = model_->params();
  params.zero_grad();
  const float inv_batch = 1.0f / static_cast<float>(batch);
  auto fail = [&](const Utterance& utt, const std::string& what) {
    return NumericalError("step " + std::to_string(step_) + ", utterance " + utt.id + ": " + what);
  };
  std::vector<UtteranceLoss<float>> losses(batch);
  std::vector<LossBreakdown> parts(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Utterance& utt = data_[order_[cursor_ + b]];
    try {
      losses[b] = utterance_loss(*model_, utt);
    } catch (const NumericalError& e) {
      throw fail(utt, e.what());
    }
    parts[b] = losses[b].loss.breakdown;
  }
  const bool has_lid = losses.front().l_lid.has_value();
  const std::optional<double> s = has_lid ? std::optional<double>(batch_lid_scale(parts)) : std::nullopt;
  const ModelConfig& mc = model_->config();
  for (std::size_t b = 0; b < batch; ++b) {
    const Utterance& utt = data_[order_[cursor_ + b]];
    UtteranceLoss<float>& ul = losses[b];
    try {
      ul.loss = total_loss(ul.l_att, ul.l_ctc, ul.l_lid, mc.lambda_asr, mc.lambda_lid, s);
    } catch (const NumericalError& e) {
      throw fail(utt, e.what());
    }
    if (!std::isfinite(ul.loss.breakdown.total)) throw fail(utt, "non-finite loss");
    backward(scale(ul.loss.total, inv_batch));
    const LossBreakdown& lb = ul.loss.breakdown;
    rec.loss.l_att += lb.l_att / static_cast<double>(batch);
    rec.loss.l_ctc += lb.l_ctc / static_cast<double>(batch);
    rec.loss.l_lid += lb.l_lid / static_cast<double>(batch);
    rec.loss.total += lb.total / static_cast<double>(batch);
    rec.loss.lid_scale = lb.lid_scale;
    rec.loss.lambda_asr = lb.lambda_asr;
    rec.loss.lambda_lid = lb.lambda_lid;
    if (ul.encoder.routing) {
      rec.routing.push_back({utt.id, utt.lid, ul.encoder.routing->selected, ul.encoder.routing->p});
    }
  }
  cursor_ += batch;

  double sq = 0.0;
  for (const auto& e : params.entries()) {
    for (float g : e.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  rec.grad_norm = std::sqrt(sq);
  if (!std::isfinite(rec.grad_norm)) {
    throw NumericalError("step " + std::to_string(step_) + ": non-finite gradient norm");
  }
  const double clip = (cfg_.grad_clip > 0.0 && rec.grad_norm > cfg_.grad_clip) ? cfg_.grad_clip / rec.grad_norm : 1.0;

  const double b1 = cfg_.adam.beta1;
  const double b2 = cfg_.adam.beta2;
  const double c1 = 1.0 - std::pow(b1, step_);
  const double c2 = 1.0 - std::pow(b2, step_);
  const auto& entries = params.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor<float> t = entries[p].tensor;
    auto data = t.mutable_data();
    const auto grad = t.grad();
    auto& m = adam_m_[p];
    auto& v = adam_v_[p];
    if (grad.empty()) continue;  // parameter not reached this step (e.g. unselected group)
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = static_cast<double>(grad[i]) * clip;
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * g * g);
      const double update = rec.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam.eps);
      data[i] = static_cast<float>(data[i] - update);
    }
  }
  params.zero_grad();
  return rec;
}

void Trainer::run(std::ostream* log, const std::function<void(const StepRecord&)>& on_step) {
  while (step_ < cfg_.max_steps) {
    const StepRecord rec = step();
    if (log) *log << rec.to_json().dump() << '\n';
    if (on_step) on_step(rec);
    if (!cfg_.checkpoint_path.empty() && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) {
      save(cfg_.checkpoint_path);
    }
  }
  if (log) log->flush();
  if (!cfg_.checkpoint_path.empty()) save(cfg_.checkpoint_path);
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.config = model_->config();
  ckpt.state = {{"step", step_},
                {"epoch", epoch_},
                {"cursor", cursor_},
                {"epoch_rng_state", epoch_rng_state_},
                {"rng_state", engine_state(shuffle_rng_)},
                {"optimizer",
                 {{"name", "adam"},
                  {"lr", cfg_.adam.lr},
                  {"beta1", cfg_.adam.beta1},
                  {"beta2", cfg_.adam.beta2},
                  {"eps", cfg_.adam.eps},
                  {"warmup_steps", cfg_.warmup_steps},
                  {"grad_clip", cfg_.grad_clip}}},
                {"batch_size", cfg_.batch_size},
                {"seed", cfg_.seed},
                {"train_size", data_.size()}};
  store_model_params(*model_, ckpt);
  const auto& entries = model_->params().entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    ckpt.tensors.push_back({"adam.m/" + entries[p].name, entries[p].tensor.shape(), adam_m_[p]});
    ckpt.tensors.push_back({"adam.v/" + entries[p].name, entries[p].tensor.shape(), adam_v_[p]});
  }
  return ckpt;
}

void Trainer::save(const std::filesystem::path& path) const { write_checkpoint(snapshot(), path); }

Trainer Trainer::resume(TrainConfig cfg, std::vector<Utterance> train_set, const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  cfg.model.seed = cfg.seed;
  if (!(ckpt.config == cfg.model)) {
    throw ValidationError("checkpoint " + path.string() + " was written for a different model config");
  }
  Trainer t(std::move(cfg), std::move(train_set));
  try {
    const auto& s = ckpt.state;
    if (s.at("batch_size").get<int>() != t.cfg_.batch_size || s.at("train_size").get<std::size_t>() != t.data_.size()) {
      throw ValidationError("checkpoint " + path.string() + ": batch size or training set size differs");
    }
    load_model_params(ckpt, *t.model_);
    const auto& entries = t.model_->params().entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      for (auto [prefix, dst] : {std::pair{"adam.m/", &t.adam_m_[p]}, std::pair{"adam.v/", &t.adam_v_[p]}}) {
        const std::string name = prefix + entries[p].name;
        const CheckpointTensor* ct = ckpt.find(name);
        if (!ct) throw ValidationError("checkpoint is missing tensor '" + name + "'");
        if (ct->shape != entries[p].tensor.shape() || ct->values.size() != dst->size())
          throw ValidationError("shape mismatch for tensor '" + name + "'");
        *dst = ct->values;
      }
    }
    t.step_ = s.at("step").get<int>();
    t.epoch_ = s.at("epoch").get<std::uint64_t>();
    t.cursor_ = s.at("cursor").get<std::size_t>();
    t.epoch_rng_state_ = s.at("epoch_rng_state").get<std::string>();
    if (t.epoch_ > 0) {
      // Replay the current epoch's shuffle from its saved starting state.
      t.shuffle_rng_ = engine_from_state(t.epoch_rng_state_);
      const std::uint64_t epoch = t.epoch_;
      const std::size_t cursor = t.cursor_;
      t.next_epoch();
      t.epoch_ = epoch;
      t.cursor_ = cursor;
    }
    if (engine_state(t.shuffle_rng_) != s.at("rng_state").get<std::string>()) {
      throw ValidationError("checkpoint " + path.string() + ": shuffling state is inconsistent");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path.string() + ": malformed trainer state: " + e.what());
  }
  return t;
}

}  // namespace comoe

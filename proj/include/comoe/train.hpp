// include/comoe/train.hpp

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

#pragma once

// Training loop: per-utterance joint loss, Adam with warmup + inverse-sqrt
// decay, seeded per-epoch shuffling, JSONL step logs and resumable
// checkpoints.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "comoe/checkpoint.hpp"
#include "comoe/config.hpp"
#include "comoe/gradcheck.hpp"
#include "comoe/losses.hpp"
#include "comoe/model.hpp"
#include "comoe/synth_data.hpp"
#include "json.hpp"

namespace comoe {

template <typename Real>
struct UtteranceLoss {
  TotalLoss<Real> loss;
  EncoderOutput<Real> encoder;
  Tensor<Real> l_att, l_ctc;
  std::optional<Tensor<Real>> l_lid;
};

// Encoder forward, CTC + attention-decoder losses and, for collaborative
// models, the LID loss, combined by total_loss.
template <typename Real>
UtteranceLoss<Real> utterance_loss(const EncoderModel<Real>& model, const Utterance& utt,
                                   std::optional<double> forced_scale = std::nullopt);

// Finite-difference check of the full joint loss of a double-precision model
// built from cfg, summed over one CN, one EN and one CS synthetic utterance.
// The LID scale is frozen at its unperturbed value. Central differences are
// taken on a long double copy of the model unless options say otherwise. With corrupt set, the
// analytic gradient of the CTC head bias is tampered with after backward.
// 2 shared + 2 MoE layers, d_model 8, groups (1,1,2): small enough for an
// exhaustive-ish double-precision check.
ModelConfig tiny_grad_check_config();

// LID scale shared by a whole batch: mean ASR loss over mean LID loss, both
// detached. Per-utterance ratios would divide each utterance's LID gradient
// by its own LID loss and starve the confidently misclassified ones.
double batch_lid_scale(std::span<const LossBreakdown> items);

GradReport model_grad_check(const ModelConfig& cfg, const GradCheckOptions& options = {}, bool corrupt = false);

struct AdamConfig {
  double lr = 3e-3;  // peak learning rate
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct TrainConfig {
  ModelConfig model;
  AdamConfig adam;
  int warmup_steps = 200;
  int max_steps = 2000;
  int batch_size = 16;
  // Global-norm gradient clipping; 0 disables.
  double grad_clip = 5.0;
  // Drives both parameter initialization (model.seed) and shuffling.
  std::uint64_t seed = 1;
  // Write a checkpoint every N steps (0: only at the end of run()).
  int checkpoint_every = 0;
  std::string checkpoint_path;
  std::string corpus_path;
  std::string log_path;
  // Set when the config file leaves d_feat / vocab_size to the corpus.
  bool d_feat_from_corpus = true;
  bool vocab_from_corpus = true;

  void validate() const;
  nlohmann::json to_json() const;
};

// Parses a key=value train config. Model keys are shared with ModelConfig;
// training keys: lr, beta1, beta2, eps, warmup_steps, max_steps, batch_size,
// grad_clip, seed, checkpoint_every, checkpoint_path, corpus_path, log_path.
// d_feat and vocab_size default to the corpus values; if given they must match.
TrainConfig parse_train_config(KeyValueFile& kv);
TrainConfig load_train_config(const std::filesystem::path& path);

// Fails with ValidationError when the model cannot consume the corpus.
void check_corpus_compatibility(const ModelConfig& model, const CorpusSpec& corpus);

// peak * min(step / warmup, sqrt(warmup / step)); peak / sqrt(step) without warmup.
double learning_rate(const TrainConfig& cfg, int step);

struct RoutingRecord {
  std::string id;
  Lid label = Lid::CN;
  Lid selected = Lid::CN;
  std::array<double, 3> p{};
};

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  LossBreakdown loss;  // mean over the batch
  double grad_norm = 0.0;
  std::vector<RoutingRecord> routing;  // collaborative runs only

  nlohmann::json to_json() const;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<Utterance> train_set);

  // Restores model, optimizer, step counter and shuffling state.
  static Trainer resume(TrainConfig cfg, std::vector<Utterance> train_set, const std::filesystem::path& checkpoint);

  // One optimizer step on the next batch. Throws NumericalError on a
  // non-finite loss or gradient, naming the step and utterance.
  StepRecord step();

  // Steps until max_steps, writing one JSON line per step to log (if set)
  // and checkpoints per checkpoint_every / at the end when checkpoint_path
  // is set.
  void run(std::ostream* log = nullptr, const std::function<void(const StepRecord&)>& on_step = {});

  Checkpoint snapshot() const;
  void save(const std::filesystem::path& path) const;

  int current_step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  EncoderModel<float>& model() { return *model_; }
  const EncoderModel<float>& model() const { return *model_; }

 private:
  void next_epoch();

  TrainConfig cfg_;
  std::vector<Utterance> data_;
  std::unique_ptr<EncoderModel<float>> model_;
  std::vector<std::vector<float>> adam_m_;
  std::vector<std::vector<float>> adam_v_;
  int step_ = 0;
  std::mt19937_64 shuffle_rng_;
  std::string epoch_rng_state_;  // shuffle_rng_ before the current epoch's shuffle
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace comoe

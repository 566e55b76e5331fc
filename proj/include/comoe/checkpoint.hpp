// include/comoe/checkpoint.hpp

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

// Single-file checkpoint container. Line 1 is a JSON manifest:
//   {"format":"comoe-checkpoint","version":1,"config":{...},"state":{...},
//    "tensors":[{"name","shape","offset"}],"payload_floats":N}
// followed by N little-endian IEEE-754 float32 values. Offsets count floats
// from the start of the payload.

#include <filesystem>
#include <string>
#include <vector>

#include "comoe/autodiff.hpp"
#include "comoe/config.hpp"
#include "json.hpp"

namespace comoe {

template <typename Real>
class EncoderModel;

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const CheckpointTensor&) const = default;
};

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  ModelConfig config;
  // Trainer state (step, optimizer hyperparameters, RNG state, epoch cursor).
  nlohmann::json state = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws ParseError on a malformed manifest, a version mismatch, or a
// payload whose length disagrees with the manifest.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Parameters of the model, stored as "param/<name>".
void store_model_params(const EncoderModel<float>& model, Checkpoint& ckpt);
// Copies "param/<name>" tensors into the model. Throws ValidationError naming
// the tensor on a missing entry or shape mismatch.
void load_model_params(const Checkpoint& ckpt, EncoderModel<float>& model);

}  // namespace comoe

// src/checkpoint.cpp

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

#include "comoe/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "comoe/errors.hpp"
#include "comoe/model.hpp"

namespace comoe {

namespace {

constexpr const char* kFormat = "comoe-checkpoint";
constexpr const char* kParamPrefix = "param/";

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json dir = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (shape_numel(t.shape) != t.values.size())
      throw ValidationError("write_checkpoint: tensor '" + t.name + "' has inconsistent shape");
    dir.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.values.size();
  }
  const nlohmann::json manifest = {{"format", kFormat},
                                   {"version", ckpt.format_version},
                                   {"config", to_json(ckpt.config)},
                                   {"state", ckpt.state},
                                   {"tensors", dir},
                                   {"payload_floats", offset}};

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write checkpoint " + path.string());
    out << manifest.dump() << '\n';
    std::vector<std::uint32_t> words;
    words.reserve(offset);
    for (const auto& t : ckpt.tensors) {
      for (float f : t.values) words.push_back(to_little_endian(std::bit_cast<std::uint32_t>(f)));
    }
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!out) throw ValidationError("short write to checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  const std::string file = path.string();
  std::string header;
  if (!std::getline(in, header)) throw ParseError(file, 1, "empty checkpoint");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file, 1, std::string("malformed manifest: ") + e.what());
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  try {
    if (manifest.at("format").get<std::string>() != kFormat) throw ParseError(file, 1, "not a checkpoint file");
    ckpt.format_version = manifest.at("version").get<int>();
    if (ckpt.format_version != kCheckpointFormatVersion) {
      throw ParseError(file, 1,
                       "unsupported checkpoint version " + std::to_string(ckpt.format_version) + " (expected " +
                           std::to_string(kCheckpointFormatVersion) + ")");
    }
    ckpt.config = model_config_from_json(manifest.at("config"));
    ckpt.state = manifest.at("state");
    const auto payload = manifest.at("payload_floats").get<std::size_t>();
    if (bytes.size() != payload * 4) {
      throw ParseError(file, 2,
                       "payload holds " + std::to_string(bytes.size()) + " bytes, manifest declares " +
                           std::to_string(payload) + " floats");
    }
    std::size_t expected_offset = 0;
    for (const auto& entry : manifest.at("tensors")) {
      CheckpointTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(t.shape);
      if (offset != expected_offset || offset + n > payload) {
        throw ParseError(file, 1, "tensor '" + t.name + "' lies outside the payload");
      }
      t.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t w;
        std::memcpy(&w, bytes.data() + (offset + i) * 4, 4);
        t.values[i] = std::bit_cast<float>(to_little_endian(w));
      }
      expected_offset = offset + n;
      ckpt.tensors.push_back(std::move(t));
    }
    if (expected_offset != payload) throw ParseError(file, 1, "tensor directory does not cover the payload");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file, 1, std::string("malformed manifest: ") + e.what());
  }
  return ckpt;
}

void store_model_params(const EncoderModel<float>& model, Checkpoint& ckpt) {
  ckpt.config = model.config();
  for (const auto& e : model.params().entries()) {
    const auto data = e.tensor.data();
    ckpt.tensors.push_back({kParamPrefix + e.name, e.tensor.shape(), std::vector<float>(data.begin(), data.end())});
  }
}

void load_model_params(const Checkpoint& ckpt, EncoderModel<float>& model) {
  for (const auto& e : model.params().entries()) {
    const std::string name = kParamPrefix + e.name;
    const CheckpointTensor* t = ckpt.find(name);
    if (!t) throw ValidationError("checkpoint is missing tensor '" + e.name + "'");
    if (t->shape != e.tensor.shape()) {
      throw ValidationError("shape mismatch for tensor '" + e.name + "': checkpoint " + shape_to_string(t->shape) +
                            ", model " + shape_to_string(e.tensor.shape()));
    }
  }
  for (const auto& e : model.params().entries()) {
    Tensor<float> dst = e.tensor;
    const auto& src = ckpt.find(kParamPrefix + e.name)->values;
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
}

}  // namespace comoe

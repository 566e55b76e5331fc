// tests/test_checkpoint.cpp

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

#include <cstring>
#include <fstream>

#include "comoe/checkpoint.hpp"
#include "comoe/errors.hpp"
#include "comoe/model.hpp"
#include "test_util.hpp"

using namespace comoe;

namespace {

Checkpoint model_checkpoint(const ModelConfig& cfg) {
  EncoderModel<float> model(cfg);
  Checkpoint ck;
  ck.config = cfg;
  ck.state = {{"step", 7}};
  store_model_params(model, ck);
  return ck;
}

void append_bytes(const std::filesystem::path& p, std::size_t n) {
  std::ofstream out(p, std::ios::binary | std::ios::app);
  for (std::size_t i = 0; i < n; ++i) out.put('\0');
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto dir = comoe::testing::scratch_dir("ckpt_rt");
  Checkpoint ck = model_checkpoint(ModelConfig{});
  // Values that a text format would mangle.
  ck.tensors.push_back({"extra", {4}, {1e-38f, -0.0f, 3.4e38f, 0.1f}});
  write_checkpoint(ck, dir / "a.ckpt");
  const Checkpoint back = read_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back, ck);
  const CheckpointTensor* extra = back.find("extra");
  ASSERT_NE(extra, nullptr);
  EXPECT_EQ(std::memcmp(extra->values.data(), ck.tensors.back().values.data(), 4 * sizeof(float)), 0);
  EXPECT_TRUE(std::signbit(extra->values[1]));
  EXPECT_EQ(back.find("missing"), nullptr);
}

TEST(Checkpoint, LoadedParamsReproduceTheModel) {
  const auto dir = comoe::testing::scratch_dir("ckpt_params");
  ModelConfig cfg;
  cfg.seed = 3;
  EncoderModel<float> src(cfg);
  Checkpoint ck;
  ck.config = cfg;
  store_model_params(src, ck);
  write_checkpoint(ck, dir / "m.ckpt");
  ModelConfig other = cfg;
  other.seed = 4;
  EncoderModel<float> dst(other);
  load_model_params(read_checkpoint(dir / "m.ckpt"), dst);
  const auto& a = src.params().entries();
  const auto& b = dst.params().entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(std::memcmp(a[i].tensor.data().data(), b[i].tensor.data().data(), a[i].tensor.size() * sizeof(float)),
              0)
        << a[i].name;
  }
}

TEST(Checkpoint, PayloadLengthMismatchIsRejected) {
  const auto dir = comoe::testing::scratch_dir("ckpt_len");
  write_checkpoint(model_checkpoint(ModelConfig{}), dir / "a.ckpt");
  std::filesystem::copy_file(dir / "a.ckpt", dir / "long.ckpt");
  append_bytes(dir / "long.ckpt", 4);
  EXPECT_THROW(read_checkpoint(dir / "long.ckpt"), ParseError);
  std::filesystem::copy_file(dir / "a.ckpt", dir / "short.ckpt");
  std::filesystem::resize_file(dir / "short.ckpt", std::filesystem::file_size(dir / "a.ckpt") - 6);
  EXPECT_THROW(read_checkpoint(dir / "short.ckpt"), ParseError);
}

TEST(Checkpoint, MalformedManifestIsRejected) {
  const auto dir = comoe::testing::scratch_dir("ckpt_bad");
  {
    std::ofstream out(dir / "junk.ckpt", std::ios::binary);
    out << "not json\n";
  }
  EXPECT_THROW(read_checkpoint(dir / "junk.ckpt"), ParseError);
  {
    std::ofstream out(dir / "v9.ckpt", std::ios::binary);
    out << R"({"format":"comoe-checkpoint","version":9,"config":{},"state":{},"tensors":[],"payload_floats":0})"
        << "\n";
  }
  EXPECT_THROW(read_checkpoint(dir / "v9.ckpt"), ParseError);
  EXPECT_THROW(read_checkpoint(dir / "absent.ckpt"), ValidationError);
}

TEST(Checkpoint, DifferentGroupSpecNamesTheTensor) {
  ModelConfig cfg;
  cfg.groups = {1, 1, 2};
  const Checkpoint ck = model_checkpoint(cfg);
  ModelConfig other = cfg;
  other.groups = {2, 2, 0};
  EncoderModel<float> model(other);
  try {
    load_model_params(ck, model);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(".moe."), std::string::npos) << what;
  }
  // A wider FFN keeps every name but changes shapes.
  ModelConfig wide = cfg;
  wide.d_ffn = 128;
  EncoderModel<float> wide_model(wide);
  try {
    load_model_params(ck, wide_model);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, FailedLoadLeavesModelUntouched) {
  ModelConfig cfg;
  Checkpoint ck = model_checkpoint(cfg);
  ck.tensors.pop_back();
  ModelConfig other = cfg;
  other.seed = 99;
  EncoderModel<float> model(other);
  const std::vector<float> before(model.params().entries().front().tensor.data().begin(),
                                  model.params().entries().front().tensor.data().end());
  EXPECT_THROW(load_model_params(ck, model), ValidationError);
  const auto after = model.params().entries().front().tensor.data();
  EXPECT_TRUE(std::equal(before.begin(), before.end(), after.begin()));
}

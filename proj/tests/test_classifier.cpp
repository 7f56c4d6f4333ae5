#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "voxmed/classifier.hpp"
#include "voxmed/error.hpp"

using namespace voxmed;
using namespace voxmed::testing;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

std::vector<float> random_embedding(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

}  // namespace

TEST(ArchSpec, DefaultStack) {
  const auto a = ArchSpec::defaults(768, 3);
  ASSERT_EQ(a.conv_layers.size(), 3u);
  EXPECT_EQ(a.conv_layers[0], (ConvLayerSpec{256, 3, false}));
  EXPECT_EQ(a.conv_layers[1], (ConvLayerSpec{128, 3, true}));
  EXPECT_EQ(a.conv_layers[2], (ConvLayerSpec{64, 3, true}));
  EXPECT_EQ(a.pool_size, 2u);
  EXPECT_DOUBLE_EQ(a.dropout_rate, 0.3);
  // 768 -> 766 -> 764 -> 382 -> 380 -> 190
  EXPECT_EQ(a.sequence_lengths(), (std::vector<std::size_t>{768, 766, 382, 190}));
  EXPECT_EQ(a.flat_size(), 64u * 190u);
}

TEST(ArchSpec, RejectsInvalidShapes) {
  auto a = ArchSpec::defaults(8, 3);
  EXPECT_EQ(code_of([&] { a.validate(); }), ErrorCode::InvalidArch);  // 8 -> 6 -> 4 -> 2 -> 0
  a = ArchSpec::defaults(768, 1);
  EXPECT_EQ(code_of([&] { a.validate(); }), ErrorCode::InvalidArch);
  a = ArchSpec::defaults(768, 3);
  a.dropout_rate = 1.0;
  EXPECT_EQ(code_of([&] { a.validate(); }), ErrorCode::InvalidArch);
  a = ArchSpec::defaults(768, 3);
  a.conv_layers.clear();
  EXPECT_EQ(code_of([&] { a.validate(); }), ErrorCode::InvalidArch);
}

TEST(InitParams, DefaultShapes) {
  const auto p = init_params(ArchSpec::defaults(768, 3), 1);
  EXPECT_EQ(p.conv_weight(0).dims, (std::vector<std::size_t>{256, 1, 3}));
  EXPECT_EQ(p.conv_weight(1).dims, (std::vector<std::size_t>{128, 256, 3}));
  EXPECT_EQ(p.dense_weight().dims, (std::vector<std::size_t>{3, 64 * 190}));
  EXPECT_EQ(p.dense_bias().dims, (std::vector<std::size_t>{3}));
}

TEST(InitParams, OutputUnitsFollowClassCount) {
  EXPECT_EQ(init_params(ArchSpec::defaults(64, 6), 0).dense_bias().data.size(), 6u);
}

TEST(InitParams, DeterministicHeUniformZeroBias) {
  const auto arch = toy_default_arch(16, 3);
  const auto a = init_params(arch, 42), b = init_params(arch, 42), c = init_params(arch, 43);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (std::size_t i = 0; i < arch.conv_layers.size(); ++i) {
    const auto& w = a.conv_weight(i);
    const double bound = std::sqrt(6.0 / static_cast<double>(w.dims[1] * w.dims[2]));
    for (const double v : w.data) ASSERT_LE(std::abs(v), bound);
    for (const double v : a.conv_bias(i).data) ASSERT_EQ(v, 0.0);
    for (const double v : w.data) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v)));
  }
}

TEST(Forward, ProbabilitiesAreADistribution) {
  const auto arch = toy_default_arch(16, 4);
  const auto p = init_params(arch, 5);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto out = forward(p, random_embedding(16, s));
    double sum = 0.0;
    for (const double v : out.probs) {
      ASSERT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
    EXPECT_EQ(out.label_index, argmax(out.probs));
  }
}

TEST(Forward, EvalModeIsDeterministicAndTrainModeNeedsSeed) {
  const auto p = init_params(toy_default_arch(16, 3), 5);
  const auto e = random_embedding(16, 1);
  EXPECT_EQ(forward(p, e).probs, forward(p, e).probs);
  ForwardOptions train;
  train.train_mode = true;
  EXPECT_EQ(code_of([&] { forward(p, e, train); }), ErrorCode::InvalidConfig);
  train.dropout_seed = 9;
  EXPECT_EQ(forward(p, e, train).probs, forward(p, e, train).probs);
}

TEST(Forward, DropoutOnlyInTrainMode) {
  auto arch = toy_default_arch(16, 3);
  const auto p = init_params(arch, 5);
  const auto e = random_embedding(16, 2);
  ForwardOptions train{true, 1};
  bool differs = false;
  for (std::uint64_t s = 0; s < 20 && !differs; ++s) {
    train.dropout_seed = s;
    differs = forward(p, e, train).probs != forward(p, e).probs;
  }
  EXPECT_TRUE(differs);

  arch.dropout_rate = 0.0;
  auto q = init_params(arch, 5);
  EXPECT_EQ(forward(q, e, ForwardOptions{true, 3}).probs, forward(q, e).probs);
}

TEST(Forward, WrongLength) {
  const auto p = init_params(toy_default_arch(16, 3), 5);
  EXPECT_EQ(code_of([&] { forward(p, random_embedding(15, 1)); }), ErrorCode::DimMismatch);
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{0.25, 0.5, 0.5, 0.25}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}), 0u);
}

TEST(PredictRecording, MeanOfChunkProbabilities) {
  const auto p = init_params(toy_default_arch(16, 3), 7);
  Embedding a, b;
  a.values = random_embedding(16, 1);
  b.values = random_embedding(16, 2);
  const auto pa = forward(p, a), pb = forward(p, b);
  const auto both = predict_recording(p, std::vector<Embedding>{a, b});
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(both.probs[k], (pa.probs[k] + pb.probs[k]) / 2, 1e-12);
  EXPECT_EQ(predict_recording(p, std::vector<Embedding>{a}).probs, pa.probs);
  EXPECT_EQ(code_of([&] { predict_recording(p, std::vector<Embedding>{}); }), ErrorCode::EmptyInput);
}

TEST(ModelFile, RoundTripIsBitExact) {
  const auto p = init_params(toy_default_arch(16, 5), 11);
  EXPECT_EQ(decode_params(encode_params(p)), p);
  TempDir dir;
  save_params(p, dir / "m.vxmd");
  const auto back = load_params(dir / "m.vxmd");
  EXPECT_EQ(back, p);
  const auto e = random_embedding(16, 3);
  EXPECT_EQ(forward(back, e).probs, forward(p, e).probs);
}

TEST(ModelFile, RejectsDamage) {
  const auto bytes = encode_params(init_params(toy_default_arch(16, 3), 1));
  auto bad_magic = bytes;
  bad_magic[0] = 'Q';
  EXPECT_EQ(code_of([&] { decode_params(bad_magic); }), ErrorCode::FormatError);
  auto future = bytes;
  future[4] = 2;
  EXPECT_EQ(code_of([&] { decode_params(future); }), ErrorCode::VersionMismatch);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(code_of([&] { decode_params(trailing); }), ErrorCode::FormatError);
  for (std::size_t cut = 0; cut < bytes.size(); cut += 7) {
    const Bytes head(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_EQ(code_of([&] { decode_params(head); }), ErrorCode::FormatError) << cut;
  }
}

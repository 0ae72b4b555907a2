#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dva/checkpoint.hpp"
#include "dva/image_io.hpp"
#include "test_support.hpp"

namespace dva {
namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t le32(const std::vector<unsigned char>& b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

TEST(Checkpoint, ByteLayout) {
  testing::TempDir dir("ckpt_layout");
  Checkpoint c;
  c.params.add("ab", Tensor<float>({2, 1}, {1.5f, -2.0f}));
  c.meta["k"] = "v";
  write_checkpoint(dir / "x.dva", c);
  const auto b = slurp(dir / "x.dva");

  ASSERT_GE(b.size(), 12u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "DVA3");
  EXPECT_EQ(le32(b, 4), 1u);
  EXPECT_EQ(le32(b, 8), 2u);  // "ab" plus meta.config
  std::size_t at = 12;
  EXPECT_EQ(b[at] | (b[at + 1] << 8), 2);
  EXPECT_EQ(std::string(b.begin() + at + 2, b.begin() + at + 4), "ab");
  at += 4;
  EXPECT_EQ(b[at], 2);  // rank
  EXPECT_EQ(le32(b, at + 1), 2u);
  EXPECT_EQ(le32(b, at + 5), 1u);
  at += 9;
  EXPECT_EQ(std::bit_cast<float>(le32(b, at)), 1.5f);
  EXPECT_EQ(std::bit_cast<float>(le32(b, at + 4)), -2.0f);
  at += 8;
  const std::string meta = "meta.config";
  EXPECT_EQ(b[at] | (b[at + 1] << 8), static_cast<int>(meta.size()));
  EXPECT_EQ(std::string(b.begin() + at + 2, b.begin() + at + 2 + meta.size()), meta);
  at += 2 + meta.size();
  EXPECT_EQ(b[at], 1);
  const std::uint32_t len = le32(b, at + 1);
  EXPECT_EQ(len, 4u);  // "k=v\n"
  at += 5;
  std::string text;
  for (std::uint32_t i = 0; i < len; ++i) {
    text.push_back(static_cast<char>(std::bit_cast<float>(le32(b, at + 4 * i))));
  }
  EXPECT_EQ(text, "k=v\n");
  EXPECT_EQ(at + 4 * len, b.size());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testing::TempDir dir("ckpt_roundtrip");
  const auto arch = ArchSpec::standard(ViewVariant::kDual);
  Checkpoint c;
  c.params = build_network<float>(arch, 3);
  c.params["fc.b"][0] = -0.0f;
  c.params["fc.b"][1] = 1e-40f;  // denormal
  AdamState<float> adam = AdamState<float>::for_params(c.params);
  Rng rng(1);
  for (auto& e : adam.m) {
    for (float& v : e.tensor.data()) v = static_cast<float>(rng.uniform(-1, 1));
  }
  adam.step = 17;
  c.adam = adam;
  c.meta["scenario"] = "basic";
  store_arch(arch, c.meta);

  write_checkpoint(dir / "a.dva", c);
  const auto r = read_checkpoint(dir / "a.dva");
  EXPECT_EQ(r.params, c.params);
  EXPECT_EQ(std::bit_cast<std::uint32_t>(r.params["fc.b"][0]), 0x80000000u);
  ASSERT_TRUE(r.adam);
  EXPECT_EQ(r.adam->m, c.adam->m);
  EXPECT_EQ(r.adam->v, c.adam->v);
  EXPECT_EQ(r.adam->step, 17u);
  EXPECT_EQ(r.meta, c.meta);
  EXPECT_EQ(r.arch().variant, ViewVariant::kDual);
  EXPECT_EQ(r.arch().fc_units, 256u);

  // Re-writing what was read reproduces the same bytes.
  write_checkpoint(dir / "b.dva", r);
  EXPECT_EQ(slurp(dir / "a.dva"), slurp(dir / "b.dva"));
}

TEST(Checkpoint, RejectsCorruptFiles) {
  testing::TempDir dir("ckpt_corrupt");
  Checkpoint c;
  c.params.add("w", Tensor<float>({3}, 1.0f));
  write_checkpoint(dir / "ok.dva", c);
  auto bytes = slurp(dir / "ok.dva");

  auto dump = [&](const std::string& name, const std::vector<unsigned char>& data) {
    std::ofstream os(dir / name, std::ios::binary);
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    return dir / name;
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(read_checkpoint(dump("magic.dva", bad_magic)), std::runtime_error);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(read_checkpoint(dump("version.dva", bad_version)), std::runtime_error);
  const std::vector<unsigned char> truncated(bytes.begin(), bytes.begin() + bytes.size() - 3);
  EXPECT_THROW(read_checkpoint(dump("trunc.dva", truncated)), std::runtime_error);
  EXPECT_THROW(read_checkpoint(dir / "missing.dva"), std::runtime_error);
}

TEST(Metadata, TextRoundTrip) {
  Metadata m{{"a", "1"}, {"b", "x y"}, {"empty", ""}};
  EXPECT_EQ(parse_metadata(metadata_text(m)), m);
  EXPECT_THROW(metadata_text({{"a=b", "1"}}), std::invalid_argument);
  EXPECT_THROW(parse_metadata("novalue\n"), std::runtime_error);
}

TEST(ImageIo, PgmRoundTrip) {
  testing::TempDir dir("pgm");
  Tensor<float> img({3, 5});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i) / 14.0f;
  const auto gray = to_gray_image(img);
  write_pgm(dir / "x.pgm", gray);
  const auto back = read_pgm(dir / "x.pgm");
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.pixels, gray.pixels);
  EXPECT_EQ(gray.pixels.front(), 0);
  EXPECT_EQ(gray.pixels.back(), 255);
  const auto raw = slurp(dir / "x.pgm");
  EXPECT_EQ(std::string(raw.begin(), raw.begin() + 2), "P5");
}

TEST(ImageIo, NormalizationConventions) {
  const auto zero = normalized_gray_image(Tensor<float>({4, 4}));
  for (auto p : zero.pixels) EXPECT_EQ(p, 0);
  Tensor<float> one({4, 4});
  one.at(1, 2) = 3e-7f;
  const auto n = normalized_gray_image(one);
  for (std::size_t i = 0; i < n.pixels.size(); ++i) EXPECT_EQ(n.pixels[i], i == 6 ? 255 : 0);
  EXPECT_THROW(to_gray_image(Tensor<float>({2, 2, 2})), ShapeError);
}

}  // namespace
}  // namespace dva

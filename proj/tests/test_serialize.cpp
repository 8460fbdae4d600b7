#include <doctest.h>

#include <filesystem>

#include "stc/checkpoint.hpp"
#include "stc/serialize.hpp"

using namespace stc;

TEST_SUITE_BEGIN("serialize");

TEST_CASE("tensor record: layout and round trip") {
  Rng rng(51);
  std::vector<double> v(2 * 3 * 4);
  for (auto& x : v) x = rng.uniform(-5, 5);
  Tensor t(Shape{2, 3, 4}, v);
  io::ByteWriter w;
  io::write_tensor(w, t);
  const auto& bytes = w.buffer();
  // magic + rank byte + 3 dim words + payload
  REQUIRE(bytes.size() == 4 + 1 + 3 * 4 + 24 * 8);
  CHECK(bytes[0] == 'S');
  CHECK(bytes[3] == 'T');
  CHECK(bytes[4] == 3);
  CHECK(bytes[5] == 2);  // little-endian u32 dims
  CHECK(bytes[9] == 3);
  CHECK(bytes[13] == 4);

  io::ByteReader r(bytes);
  Tensor back = io::read_tensor(r);
  CHECK(back.shape() == t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);
  CHECK(r.done());
}

TEST_CASE("tensor record: 5-D and 1-D extremes") {
  Tensor t5(Shape{2, 1, 3, 1, 2}, 1.25);
  io::ByteWriter w;
  io::write_tensor(w, t5);
  io::ByteReader r(w.buffer());
  CHECK(io::read_tensor(r).shape() == t5.shape());
}

TEST_CASE("tensor record errors: magic, truncation") {
  Tensor t(Shape{2, 2}, 1.0);
  io::ByteWriter w;
  io::write_tensor(w, t);
  auto bytes = w.buffer();

  auto bad = bytes;
  bad[2] = 'X';
  io::ByteReader r1(bad);
  CHECK_THROWS_AS(io::read_tensor(r1), io::FormatError);

  std::vector<uint8_t> cut(bytes.begin(), bytes.end() - 9);
  io::ByteReader r2(cut);
  try {
    io::read_tensor(r2);
    FAIL("expected Truncated");
  } catch (const io::FormatError& e) {
    CHECK(e.kind() == io::FormatError::Kind::Truncated);
  }
}

TEST_CASE("named tensor record round trip") {
  Tensor t(Shape{3}, std::vector<double>{1, 2, 3});
  io::ByteWriter w;
  io::write_named_tensor(w, "spatial.res1.0.conv2.weight", t);
  io::ByteReader r(w.buffer());
  auto [name, back] = io::read_named_tensor(r);
  CHECK(name == "spatial.res1.0.conv2.weight");
  CHECK(back[2] == 3.0);
}

TEST_CASE("checkpoint: encode/decode/encode is byte-identical") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::B, 52);
  // Perturb some running stats so buffers carry non-default data.
  model.spatial.bn1.running_mean[0] = 0.37;
  model.cls_bn.running_var[1] = 2.5;
  std::vector<uint8_t> bytes = checkpoint_encode(model, 12);

  int epoch = -1;
  STCNetModel loaded = checkpoint_decode(bytes, &epoch);
  CHECK(epoch == 12);
  CHECK(loaded.variant == FusionVariant::B);
  CHECK(loaded.config.input_resolution == model.config.input_resolution);
  CHECK(loaded.spatial.bn1.running_mean[0] == 0.37);
  CHECK(checkpoint_encode(loaded, 12) == bytes);

  auto pa = model.parameters();
  auto pb = loaded.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    for (int64_t j = 0; j < pa[i].tensor.numel(); ++j)
      CHECK(pa[i].tensor[j] == pb[i].tensor[j]);
}

TEST_CASE("checkpoint rejects corrupted containers distinctly") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 53);
  std::vector<uint8_t> bytes = checkpoint_encode(model, 1);

  auto bad_magic = bytes;
  bad_magic[0] = 'Z';
  try {
    checkpoint_decode(bad_magic);
    FAIL("expected BadMagic");
  } catch (const io::FormatError& e) {
    CHECK(e.kind() == io::FormatError::Kind::BadMagic);
  }

  std::vector<uint8_t> cut(bytes.begin(), bytes.begin() + bytes.size() - 100);
  CHECK_THROWS_AS(checkpoint_decode(cut), io::FormatError);

  auto trailing = bytes;
  trailing.push_back(7);
  CHECK_THROWS_AS(checkpoint_decode(trailing), io::FormatError);
}

TEST_CASE("checkpoint file round trip via the filesystem") {
  auto dir = std::filesystem::temp_directory_path() / "stc_ckpt_test";
  std::filesystem::create_directories(dir);
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 54);
  save_checkpoint(model, 3, dir / "m.stcw");
  save_checkpoint(model, 3, dir / "m2.stcw");
  CHECK(io::read_file(dir / "m.stcw") == io::read_file(dir / "m2.stcw"));
  STCNetModel loaded = load_checkpoint(dir / "m.stcw");
  CHECK(loaded.seed == 54);
  std::filesystem::remove_all(dir);
}

TEST_SUITE_END();

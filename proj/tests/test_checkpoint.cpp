// SPDX-License-Identifier: Apache-2.0
#include "b2t/checkpoint.hpp"
#include "b2t/io.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace b2t;
using b2t::testing::TempDir;

namespace {

struct Params {
  Matrix a = Matrix::Zero(2, 3);
  Matrix b = Matrix::Zero(1, 4);
  ParamRefs refs() { return {{"enc.a", &a}, {"enc.b", &b}}; }
};

Params filled(std::uint64_t seed) {
  Params p;
  Rng rng(seed);
  fill_uniform(p.a, 1.0, rng);
  fill_uniform(p.b, 1.0, rng);
  return p;
}

}  // namespace

TEST_CASE("f64 tensor directories round-trip bit-exactly") {
  TempDir dir;
  Params p = filled(1);
  save_tensor_dir(dir / "ck", p.refs(), TensorDtype::f64, {{"epoch", 3}}, {{"tok/merges.txt", "a b\n"}});
  const TensorDir back = load_tensor_dir(dir / "ck");
  CHECK(back.dtype == TensorDtype::f64);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].first == "enc.a");
  CHECK(*back.find("enc.a") == p.a);
  CHECK(*back.find("enc.b") == p.b);
  CHECK(back.find("nope") == nullptr);
  CHECK(back.meta["epoch"] == 3);
  CHECK(back.files.at("tok/merges.txt") == "a b\n");

  Params q;
  load_params_into(back, q.refs(), false);
  CHECK(q.a == p.a);
  CHECK(q.b == p.b);
}

TEST_CASE("f32 storage equals rounding to float") {
  TempDir dir;
  Params p = filled(2);
  save_tensor_dir(dir / "ck", p.refs(), TensorDtype::f32, {});
  const TensorDir back = load_tensor_dir(dir / "ck");
  Matrix rounded = p.a;
  round_to_f32(rounded);
  for (Eigen::Index i = 0; i < rounded.size(); ++i) {
    CHECK(rounded.data()[i] == static_cast<double>(static_cast<float>(p.a.data()[i])));
  }
  CHECK(*back.find("enc.a") == rounded);
  CHECK(std::filesystem::file_size(dir / "ck" / "tensors" / "enc.a.bin") == 6 * 4);
}

TEST_CASE("saving replaces an existing directory atomically") {
  TempDir dir;
  Params p = filled(3);
  save_tensor_dir(dir / "ck", p.refs(), TensorDtype::f64, {{"v", 1}});
  p.a(0, 0) = 42.0;
  save_tensor_dir(dir / "ck", p.refs(), TensorDtype::f64, {{"v", 2}});
  const TensorDir back = load_tensor_dir(dir / "ck");
  CHECK(back.meta["v"] == 2);
  CHECK((*back.find("enc.a"))(0, 0) == 42.0);
  CHECK_FALSE(std::filesystem::exists(dir / "ck.tmp"));
  CHECK_FALSE(std::filesystem::exists(dir / "ck.old"));
}

TEST_CASE("a corrupted byte is caught and names its group") {
  TempDir dir;
  Params p = filled(4);
  save_tensor_dir(dir / "ck", p.refs(), TensorDtype::f64, {});
  const auto file = dir / "ck" / "tensors" / "enc.b.bin";
  std::string bytes = io::read_file(file);
  bytes[5] = static_cast<char>(bytes[5] ^ 0x01);
  io::write_file_atomic(file, bytes);
  CHECK_THROWS_WITH_AS(load_tensor_dir(dir / "ck"), "hash mismatch in group enc.b", CheckpointError);
}

TEST_CASE("a corrupted auxiliary file is caught") {
  TempDir dir;
  Params p = filled(5);
  save_tensor_dir(dir / "ck", p.refs(), TensorDtype::f64, {}, {{"notes.txt", "hello"}});
  io::write_file_atomic(dir / "ck" / "notes.txt", "hellp");
  CHECK_THROWS_WITH_AS(load_tensor_dir(dir / "ck"), "hash mismatch in file notes.txt", CheckpointError);
}

TEST_CASE("loading into a different model lists every problem") {
  TempDir dir;
  Params p = filled(6);
  save_tensor_dir(dir / "ck", p.refs(), TensorDtype::f64, {});
  const TensorDir stored = load_tensor_dir(dir / "ck");

  Matrix wide = Matrix::Zero(2, 5);
  Matrix extra = Matrix::Zero(1, 1);
  const ParamRefs other{{"enc.a", &wide}, {"dec.c", &extra}};
  try {
    load_params_into(stored, other, false);
    FAIL("expected a CheckpointError");
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("shape mismatch: enc.a expected 2x5, found 2x3") != std::string::npos);
    CHECK(msg.find("missing: dec.c") != std::string::npos);
    CHECK(msg.find("unexpected: enc.b") != std::string::npos);
  }
  CHECK(wide == Matrix::Zero(2, 5));

  Matrix only_a = Matrix::Zero(2, 3);
  CHECK_THROWS_AS(load_params_into(stored, {{"enc.a", &only_a}}, false), CheckpointError);
  load_params_into(stored, {{"enc.a", &only_a}}, true);
  CHECK(only_a == p.a);
}

TEST_CASE("missing or foreign directories are not checkpoints") {
  TempDir dir;
  CHECK_THROWS_AS(load_tensor_dir(dir / "none"), CheckpointError);
  io::write_file_atomic(dir / "manifest.json", "{\"format\": \"other\"}");
  CHECK_THROWS_AS(load_tensor_dir(dir.path()), CheckpointError);
  Matrix m = Matrix::Zero(1, 1);
  CHECK_THROWS_AS(save_tensor_dir(dir / "dup", ParamRefs{{"x", &m}, {"x", &m}}, TensorDtype::f64, {}),
                  CheckpointError);
  CHECK(parse_dtype("f32") == TensorDtype::f32);
  CHECK_THROWS_AS(parse_dtype("bf16"), std::invalid_argument);
}

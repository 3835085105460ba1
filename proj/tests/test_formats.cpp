#include <doctest.h>

#include <random>

#include "voxsync/binary_io.hpp"
#include "voxsync/config.hpp"
#include "voxsync/error.hpp"
#include "voxsync/formats.hpp"

using namespace voxsync;

namespace {

FeatureGrid random_grid(std::uint64_t seed, int channels) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<Vec3> pts, cols;
  for (int i = 0; i < 60; ++i) {
    pts.push_back(Vec3(u(rng), u(rng), u(rng)));
    cols.push_back(Vec3::Constant(0.5));
  }
  FeatureGrid g = FeatureGrid::from_sampled(voxelize_points(pts, cols, 10), channels);
  for (auto& v : g.features()) v = u(rng);
  for (auto& v : g.kp_logits()) v = u(rng);
  return g;
}

template <typename Decode>
void check_rejects_corruption(const std::vector<std::uint8_t>& bytes, Decode&& decode) {
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xFF;
  CHECK_THROWS_AS(decode(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 99;
  CHECK_THROWS_AS(decode(bad_version), FormatError);
  for (std::size_t cut : {std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(decode(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + cut)), FormatError);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode(trailing), FormatError);
}

}  // namespace

TEST_CASE("byte reader and writer") {
  ByteWriter w;
  w.magic("ABCD");
  w.u8(7);
  w.u32(0xDEADBEEF);
  w.u64(1ULL << 40);
  w.i32(-5);
  w.f32(1.5f);
  w.f64(-2.25);
  w.string("héllo");
  const auto bytes = w.bytes();
  CHECK(bytes[5] == 0xEF);  // little-endian low byte first
  ByteReader r(bytes, "test");
  CHECK(r.u32() == 0x44434241u);
  CHECK(r.u8() == 7);
  CHECK(r.u32() == 0xDEADBEEF);
  CHECK(r.u64() == (1ULL << 40));
  CHECK(r.i32() == -5);
  CHECK(r.f32() == 1.5f);
  CHECK(r.f64() == -2.25);
  CHECK(r.string() == "héllo");
  CHECK(r.done());
  CHECK_NOTHROW(r.finish());
  CHECK_THROWS_AS(r.u8(), FormatError);

  ByteWriter c;
  c.u32(1000000);
  ByteReader rc(c.bytes(), "count");
  CHECK_THROWS_AS(rc.count(4), FormatError);
}

TEST_CASE("grid format round-trips byte-identically") {
  const FeatureGrid g = random_grid(70, 5);
  const auto bytes = encode_grid(g);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CDGF");
  const FeatureGrid d = decode_grid(bytes);
  CHECK(encode_grid(d) == bytes);
  REQUIRE(d.size() == g.size());
  CHECK(d.channels() == 5);
  CHECK(d.resolution() == g.resolution());
  for (std::size_t i = 0; i < g.features().size(); ++i) {
    CHECK(d.features()[i] == static_cast<double>(static_cast<float>(g.features()[i])));
  }
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(d.lattice().site(i) == g.lattice().site(i));
  check_rejects_corruption(bytes, [](const auto& b) { return decode_grid(b); });
}

TEST_CASE("model format round-trips exactly") {
  const ModelParams p = ModelParams::initialize(6, 12, 71, 0.05);
  const auto bytes = encode_model(p);
  const ModelParams d = decode_model(bytes);
  CHECK(encode_model(d) == bytes);
  const auto heads_p = p.heads();
  const auto heads_d = d.heads();
  for (std::size_t h = 0; h < heads_p.size(); ++h) {
    const auto a = heads_p[h]->params();
    const auto b = heads_d[h]->params();
    REQUIRE(a.size() == b.size());
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  check_rejects_corruption(bytes, [](const auto& b) { return decode_model(b); });
}

TEST_CASE("index format round-trips byte-identically") {
  std::mt19937_64 rng(72);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<SceneIndexEntry> index;
  for (int s = 0; s < 3; ++s) {
    SceneIndexEntry e;
    e.id = "scene_000" + std::to_string(s);
    e.global = VecX(4);
    for (int c = 0; c < 4; ++c) e.global[c] = n(rng);
    for (int k = 0; k < s + 1; ++k) {
      VecX d(4);
      for (int c = 0; c < 4; ++c) d[c] = n(rng);
      e.keypoints.push_back({Vec3(n(rng), n(rng), n(rng)), 0.5, d});
    }
    index.push_back(e);
  }
  const auto bytes = encode_index(index);
  const auto d = decode_index(bytes);
  CHECK(encode_index(d) == bytes);
  REQUIRE(d.size() == 3);
  CHECK(d[2].id == "scene_0002");
  CHECK(d[2].keypoints.size() == 3);
  check_rejects_corruption(bytes, [](const auto& b) { return decode_index(b); });
}

TEST_CASE("corpus format round-trips byte-identically") {
  const Corpus c = generate_corpus(73, 6, 0.5);
  const auto bytes = encode_corpus(c);
  const Corpus d = decode_corpus(bytes);
  CHECK(encode_corpus(d) == bytes);
  REQUIRE(d.scenes.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(d.scenes[i].duplicate_of == c.scenes[i].duplicate_of);
    CHECK(d.scenes[i].planted_transform.has_value() == c.scenes[i].planted_transform.has_value());
    CHECK(d.scenes[i].build().blobs.size() == c.scenes[i].build().blobs.size());
  }
  check_rejects_corruption(bytes, [](const auto& b) { return decode_corpus(b); });
}

TEST_CASE("feature map format round-trips byte-identically") {
  FeatureMapFile m;
  m.camera = Camera::look_at(Vec3(0, -3, 1), Vec3::Zero(), Vec3::UnitZ(), 5, 4, 45.0);
  m.teacher = FeatureImage(5, 4, 3);
  for (std::size_t i = 0; i < m.teacher.data.size(); ++i) m.teacher.data[i] = 0.25 * static_cast<double>(i);
  m.valid = PixelMask(20, 1);
  m.valid[3] = 0;
  const auto bytes = encode_feature_map(m);
  const FeatureMapFile d = decode_feature_map(bytes);
  CHECK(encode_feature_map(d) == bytes);
  CHECK(d.valid == m.valid);
  CHECK(d.camera.rotation == m.camera.rotation);
  CHECK(d.teacher.data == m.teacher.data);
  check_rejects_corruption(bytes, [](const auto& b) { return decode_feature_map(b); });
}

TEST_CASE("config defaults and strict parsing") {
  const Config c = load_config("", {});
  CHECK(c.retrieval.theta == 0.75);
  CHECK(c.train.weights.lambda_2d3d == 1.0);
  CHECK(c.train.weights.lambda_fid == 1.0);
  CHECK(c.train.weights.lambda_p == 0.1);
  CHECK(c.train.optim_2d.learning_rate == 3.3e-4);
  CHECK(c.directions == 6);
  CHECK_NOTHROW(c.validate());

  const Config back = Config::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  const Config o = load_config("", {"training.steps.c=123", "retrieval.theta=0.5", "grid.directions=14"});
  CHECK(o.train.plan.steps_c == 123);
  CHECK(o.retrieval.theta == 0.5);
  CHECK(o.directions == 14);

  CHECK_THROWS_AS(load_config("", {"corpus.corpus_scenes=5"}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"grid.resolution=\"big\""}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"grid.directions=7"}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"corpus.duplicate_fraction=1.5"}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"novalue"}), ConfigError);

  nlohmann::json doc = nlohmann::json::object();
  apply_override(doc, "a.b=3");
  apply_override(doc, "a.c=hello");
  CHECK(doc["a"]["b"] == 3);
  CHECK(doc["a"]["c"] == "hello");
}

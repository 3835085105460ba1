#include <doctest.h>

#include <filesystem>
#include <unistd.h>

#include "voxsync/binary_io.hpp"
#include "voxsync/pipeline.hpp"

using namespace voxsync;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kTiny{
    "corpus.scenes=4",          "corpus.duplicate_fraction=0.5", "corpus.views=3",
    "corpus.width=16",          "corpus.height=16",              "grid.resolution=12",
    "model.feature_dim=4",      "model.hidden_dim=8",            "training.steps.a=3",
    "training.steps.b=3",       "training.steps.c=6",            "training.steps.d=6",
    "training.batch_rays=32",   "training.samples_per_ray=16",   "training.teacher_samples=24",
    "training.eval_samples=24", "retrieval.ransac_iterations=50"};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("voxsync_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) { return read_file(p.string()); }

struct Run {
  nlohmann::json eval;
  std::vector<std::uint8_t> corpus, model, index, grid0, log;
};

Run full_run(const fs::path& dir, const Config& cfg) {
  cmd_gen_corpus(cfg, dir / "c.cdcp");
  cmd_train(dir / "c.cdcp", cfg, dir / "tr");
  cmd_build_index(dir / "tr" / "grids", dir / "tr" / "model.cdmp", cfg, dir / "idx.cdix");
  Run r;
  r.eval = cmd_eval(dir / "c.cdcp", dir / "idx.cdix", dir / "tr" / "model.cdmp", EvalProtocol::kBoth, cfg);
  r.corpus = bytes_of(dir / "c.cdcp");
  r.model = bytes_of(dir / "tr" / "model.cdmp");
  r.index = bytes_of(dir / "idx.cdix");
  r.grid0 = bytes_of(dir / "tr" / "grids" / "scene_0000.cdgf");
  r.log = bytes_of(dir / "tr" / "train_log.csv");
  return r;
}

}  // namespace

TEST_CASE("sha256 known answers") {
  const std::string abc = "abc";
  CHECK(sha256_hex({abc.begin(), abc.end()}) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("end-to-end runs are byte-reproducible") {
  const Config cfg = load_config("", kTiny);
  const Run a = full_run(scratch("a"), cfg);
  const Run b = full_run(scratch("b"), cfg);
  CHECK(a.corpus == b.corpus);
  CHECK(a.model == b.model);
  CHECK(a.index == b.index);
  CHECK(a.grid0 == b.grid0);
  CHECK(a.log == b.log);
  CHECK(a.eval.dump() == b.eval.dump());

  CHECK(a.eval.at("theta") == 0.75);
  for (const char* k : {"kp", "kp_count", "global", "ren5"}) {
    const double v = a.eval.at("top1").at(k);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(a.eval.at("ap75").contains("kp"));
  CHECK(a.eval.at("ap75").contains("global"));
  CHECK(a.eval.at("n_queries") == 4);
  CHECK(a.eval.at("config").at("retrieval").at("theta") == 0.75);

  const fs::path dir = fs::temp_directory_path() / ("voxsync_test_" + std::to_string(::getpid())) / "a";
  const nlohmann::json q = cmd_query(dir / "idx.cdix", dir / "tr" / "model.cdmp",
                                     {dir / "c.cdcp", "scene_0001", std::nullopt, 0, std::nullopt},
                                     RetrievalMode::kKp, cfg);
  CHECK(q.at("ranking").size() == 4);

  // Exported view queries answer like the scene view they came from.
  cmd_export_view({dir / "c.cdcp", "scene_0001", std::nullopt, 0, std::nullopt}, cfg, dir / "v.cdfm");
  const nlohmann::json qf = cmd_query(dir / "idx.cdix", dir / "tr" / "model.cdmp",
                                      {std::nullopt, "", std::nullopt, std::nullopt, dir / "v.cdfm"},
                                      RetrievalMode::kKp, cfg);
  // Features are stored in f32, so compare the order rather than the scores.
  REQUIRE(qf.at("ranking").size() == q.at("ranking").size());
  for (std::size_t i = 0; i < q.at("ranking").size(); ++i) {
    CHECK(qf.at("ranking")[i].at("id") == q.at("ranking")[i].at("id"));
  }
}

TEST_CASE("tampered artifacts raise DigestError") {
  const Config cfg = load_config("", kTiny);
  const fs::path dir = scratch("tamper");
  cmd_gen_corpus(cfg, dir / "c.cdcp");
  CHECK(fs::exists(sidecar_path(dir / "c.cdcp")));
  CHECK_NOTHROW(read_verified(dir / "c.cdcp"));
  auto bytes = bytes_of(dir / "c.cdcp");
  bytes[bytes.size() / 2] ^= 1;
  write_file((dir / "c.cdcp").string(), bytes);
  CHECK_THROWS_AS(read_verified(dir / "c.cdcp"), DigestError);
  CHECK_THROWS_AS(cmd_train(dir / "c.cdcp", cfg, dir / "tr"), DigestError);

  // A manifest covering several files checks every one of them.
  RunManifest m;
  m.config = cfg.to_json();
  write_text_file((dir / "x.txt").string(), "x");
  m.digests["x.txt"] = sha256_hex({'x'});
  write_manifest(dir / "manifest.json", m);
  CHECK(read_manifest(dir / "manifest.json").digests.size() == 1);
  write_text_file((dir / "x.txt").string(), "y");
  CHECK_THROWS_AS(read_manifest(dir / "manifest.json"), DigestError);
}

TEST_CASE("error reports") {
  const nlohmann::json e = error_json(ErrorCode::kDigest, "bad");
  CHECK(e.at("error").at("code") == 4);
  CHECK(e.at("error").at("message") == "bad");
  CHECK(e.at("error").at("kind").get<std::string>().size() > 0);
  CHECK_THROWS_AS(parse_eval_protocol("nope"), InputError);
  for (EvalProtocol p : {EvalProtocol::kRetrieval, EvalProtocol::kDup, EvalProtocol::kBoth}) {
    CHECK(parse_eval_protocol(eval_protocol_name(p)) == p);
  }
  const Config cfg = load_config("", kTiny);
  CHECK_THROWS_AS(cmd_train(scratch("missing") / "none.cdcp", cfg, scratch("missing") / "out"), IoError);
}

TEST_CASE("duplicate benchmark pairs are balanced") {
  const Corpus c = generate_corpus(80, 40, 0.5);
  const auto pairs = duplicate_benchmark_pairs(c, 300, 1);
  int pos = 0, neg = 0;
  for (const auto& p : pairs) {
    REQUIRE(p.label);
    (*p.label ? pos : neg) += 1;
    const auto eq = equivalent_scenes(c, p.a);
    const bool linked = std::find(eq.begin(), eq.end(), p.b) != eq.end();
    CHECK(linked == *p.label);
  }
  CHECK(pos == 20);
  CHECK(neg == 20);
  CHECK(duplicate_benchmark_pairs(c, 10, 1).size() == 10);
}

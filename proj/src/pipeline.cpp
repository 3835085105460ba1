#include "voxsync/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <chrono>
#include <random>
#include <set>

#include <openssl/evp.h>

#include "voxsync/binary_io.hpp"
#include "voxsync/gradcheck.hpp"
#include "voxsync/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace voxsync {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9E3779B97F4A7C15ULL);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Salts separating the random streams a run draws from.
constexpr std::uint64_t kSaltQueryCamera = 0x51;
constexpr std::uint64_t kSaltQueryNoise = 0x52;
constexpr std::uint64_t kSaltModelInit = 0x53;
constexpr std::uint64_t kSaltTraining = 0x54;
constexpr std::uint64_t kSaltDupPairs = 0x55;
constexpr std::uint64_t kSaltRen5Noise = 0x56;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::optional<std::string> manifest_digest_for(const fs::path& manifest, const fs::path& artifact) {
  const json j = json::parse(read_file(manifest.string()));
  const fs::path rel = fs::relative(fs::absolute(artifact), fs::absolute(manifest).parent_path());
  const auto& digests = j.at("digests");
  auto it = digests.find(rel.generic_string());
  if (it == digests.end()) return std::nullopt;
  return it->get<std::string>();
}

Corpus load_corpus(const fs::path& path) { return decode_corpus(read_verified(path)); }

std::size_t scene_index(const Corpus& corpus, const std::string& id) {
  for (std::size_t i = 0; i < corpus.scenes.size(); ++i) {
    if (scene_id(i) == id) return i;
  }
  throw InputError("unknown scene id: " + id);
}

std::size_t index_position(const std::vector<SceneIndexEntry>& index, const std::string& id) {
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i].id == id) return i;
  }
  throw InputError("scene not in index: " + id);
}

json ranking_json(const std::vector<RankedScene>& ranking) {
  json out = json::array();
  for (const auto& r : ranking) {
    out.push_back({{"id", r.id},
                   {"score", r.score},
                   {"mean_cosine", r.mean_cosine},
                   {"matches", r.matches},
                   {"inliers", r.inliers},
                   {"degenerate", r.degenerate}});
  }
  return out;
}

}  // namespace

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

json RunManifest::to_json() const {
  return {{"tool_version", tool_version}, {"config", config}, {"digests", digests}, {"phase_seconds", phase_seconds}};
}

void write_manifest(const fs::path& path, const RunManifest& manifest) {
  write_text_file(path.string(), dump(manifest.to_json()));
}

RunManifest read_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path.string()));
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  RunManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config = j.at("config");
    m.digests = j.at("digests").get<std::map<std::string, std::string>>();
    m.phase_seconds = j.at("phase_seconds").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  for (const auto& [rel, digest] : m.digests) {
    const std::string actual = sha256_hex(read_file((base / rel).string()));
    if (actual != digest) throw DigestError("digest mismatch for " + (base / rel).string());
  }
  return m;
}

fs::path sidecar_path(const fs::path& artifact) { return fs::path(artifact.string() + ".manifest.json"); }

std::vector<std::uint8_t> read_verified(const fs::path& artifact) {
  std::vector<std::uint8_t> bytes = read_file(artifact.string());
  std::vector<fs::path> candidates{sidecar_path(artifact)};
  fs::path dir = fs::absolute(artifact).parent_path();
  for (int up = 0; up < 2 && !dir.empty(); ++up, dir = dir.parent_path()) candidates.push_back(dir / "manifest.json");
  for (const auto& m : candidates) {
    if (!fs::exists(m)) continue;
    std::optional<std::string> expected;
    try {
      expected = manifest_digest_for(m, artifact);
    } catch (const json::exception& e) {
      throw FormatError("manifest " + m.string() + ": " + e.what());
    }
    if (!expected) continue;
    if (sha256_hex(bytes) != *expected) throw DigestError("digest mismatch for " + artifact.string());
    break;
  }
  return bytes;
}

void write_with_manifest(const fs::path& artifact, const std::vector<std::uint8_t>& bytes, const Config& config,
                         const std::map<std::string, double>& phases) {
  write_file(artifact.string(), bytes);
  RunManifest m;
  m.config = config.to_json();
  m.digests[artifact.filename().generic_string()] = sha256_hex(bytes);
  m.phase_seconds = phases;
  write_manifest(sidecar_path(artifact), m);
}

std::vector<Camera> query_cameras(const Corpus& corpus, std::size_t scene, const CameraRig& rig, int count) {
  CameraRig r = rig;
  r.views = count;
  const CorpusScene& cs = corpus.scenes.at(scene);
  return generate_cameras(mix(mix(corpus.seed, scene), kSaltQueryCamera), r, cs.duplicate_of.has_value());
}

std::vector<std::size_t> equivalent_scenes(const Corpus& corpus, std::size_t scene) {
  auto root = [&](std::size_t i) -> std::size_t {
    const auto& d = corpus.scenes.at(i).duplicate_of;
    return d ? *d : i;
  };
  const std::size_t r = root(scene);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.scenes.size(); ++i) {
    if (root(i) == r) out.push_back(i);
  }
  return out;
}

FeatureGrid sample_scene_grid(const OracleScene& scene, const Config& config) {
  const SampledGrid s =
      sample_grid(as_radiance_field(scene), config.resolution, direction_set(config.directions), config.theta);
  if (s.occupancy.empty()) throw InputError("scene has no voxel above the opacity threshold");
  return FeatureGrid::from_sampled(s, config.feature_dim());
}

ViewQuery render_view_query(const OracleScene& scene, const Camera& camera, const ModelParams& params,
                            const Config& config, std::uint64_t noise_seed) {
  ViewQuery q;
  q.map.camera = camera;
  q.map.teacher =
      render_teacher_feature_map(scene, camera, config.train.noise, noise_seed, config.train.teacher_samples);
  q.map.valid = oracle_hit_mask(scene, camera, config.train.teacher_samples);
  q.student = student2d_forward(params, q.map.teacher);
  return q;
}

ImageQuery image_query_from(const FeatureMapFile& map, const ModelParams& params, const RetrievalConfig& config) {
  if (map.teacher.channels != params.feature_dim()) throw InputError("feature map channels differ from the model");
  const Student2dOutput s = student2d_forward(params, map.teacher);
  return make_image_query(s.features, s.keypoints, map.valid, map.camera, config);
}

std::vector<DupPair> duplicate_benchmark_pairs(const Corpus& corpus, int max_pairs, std::uint64_t seed) {
  const std::size_t n = corpus.scenes.size();
  std::set<std::pair<std::size_t, std::size_t>> positive;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : equivalent_scenes(corpus, i)) {
      if (j > i) positive.insert({i, j});
    }
  }
  std::vector<DupPair> pairs;
  for (const auto& [a, b] : positive) pairs.push_back({a, b, true});
  const std::size_t half = static_cast<std::size_t>(std::max(0, max_pairs)) / 2;
  if (pairs.size() > half) pairs.resize(half);
  const std::size_t want = pairs.size();
  const std::size_t available = n * (n - 1) / 2 - positive.size();
  std::mt19937_64 rng(mix(seed, kSaltDupPairs));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::set<std::pair<std::size_t, std::size_t>> negative;
  while (negative.size() < std::min(want, available)) {
    std::size_t a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (positive.count({a, b})) continue;
    if (negative.insert({a, b}).second) pairs.push_back({a, b, false});
  }
  return pairs;
}

EvalProtocol parse_eval_protocol(const std::string& s) {
  if (s == "retrieval") return EvalProtocol::kRetrieval;
  if (s == "dup") return EvalProtocol::kDup;
  if (s == "both") return EvalProtocol::kBoth;
  throw InputError("protocol must be retrieval, dup or both, got " + s);
}

const char* eval_protocol_name(EvalProtocol p) {
  switch (p) {
    case EvalProtocol::kRetrieval: return "retrieval";
    case EvalProtocol::kDup: return "dup";
    case EvalProtocol::kBoth: return "both";
  }
  return "?";
}

json cmd_gen_corpus(const Config& config, const fs::path& out) {
  Stopwatch clock;
  const Corpus corpus =
      generate_corpus(config.seed, config.corpus_scenes, config.duplicate_fraction, config.scene, config.rig);
  write_with_manifest(out, encode_corpus(corpus), config, {{"gen_corpus", clock.seconds()}});
  return {{"command", "gen-corpus"},
          {"scenes", corpus.scenes.size()},
          {"duplicates", corpus.duplicate_count()},
          {"out", out.string()}};
}

json cmd_sample_grid(const fs::path& corpus_path, const std::string& scene, const Config& config, const fs::path& out) {
  Stopwatch clock;
  const Corpus corpus = load_corpus(corpus_path);
  const std::size_t i = scene_index(corpus, scene);
  const FeatureGrid grid = sample_scene_grid(corpus.scenes[i].build(), config);
  write_with_manifest(out, encode_grid(grid), config, {{"sample_grid", clock.seconds()}});
  return {{"command", "sample-grid"}, {"scene", scene}, {"occupied", grid.size()}, {"out", out.string()}};
}

json cmd_train(const fs::path& corpus_path, const Config& config, const fs::path& out_dir) {
  const Corpus corpus = load_corpus(corpus_path);
  RunManifest manifest;
  manifest.config = config.to_json();

  Stopwatch sampling;
  std::vector<TrainingScene> scenes;
  for (const auto& cs : corpus.scenes) {
    OracleScene scene = cs.build();
    FeatureGrid grid = sample_scene_grid(scene, config);
    scenes.push_back({std::move(scene), cs.cameras, std::move(grid)});
  }
  manifest.phase_seconds["sample_grids"] = sampling.seconds();

  Stopwatch training;
  ModelParams init =
      ModelParams::initialize(config.feature_dim(), config.hidden_dim, mix(config.seed, kSaltModelInit),
                              config.init_noise);
  CorpusTrainResult result = train_corpus(std::move(scenes), std::move(init), config.train,
                                          mix(config.seed, kSaltTraining));
  manifest.phase_seconds["train"] = training.seconds();

  Stopwatch writing;
  fs::create_directories(out_dir / "grids");
  auto put = [&](const std::string& rel, const std::vector<std::uint8_t>& bytes) {
    write_file((out_dir / rel).string(), bytes);
    manifest.digests[rel] = sha256_hex(bytes);
  };
  for (std::size_t i = 0; i < result.grids.size(); ++i) put("grids/" + scene_id(i) + ".cdgf", encode_grid(result.grids[i]));
  put("model.cdmp", encode_model(result.params));
  const std::string csv = result.log.to_csv();
  put("train_log.csv", std::vector<std::uint8_t>(csv.begin(), csv.end()));
  manifest.phase_seconds["write"] = writing.seconds();
  write_manifest(out_dir / "manifest.json", manifest);

  json losses = json::object();
  for (Stage s : {Stage::kA, Stage::kB, Stage::kC, Stage::kD}) {
    const auto rows = result.log.stage_rows(s);
    if (!rows.empty()) losses[stage_name(s)] = rows.back().loss_total;
  }
  return {{"command", "train"},
          {"scenes", result.grids.size()},
          {"final_loss", losses},
          {"out", out_dir.string()}};
}

json cmd_build_index(const fs::path& grids_dir, const fs::path& model_path, const Config& config, const fs::path& out) {
  Stopwatch clock;
  const ModelParams params = decode_model(read_verified(model_path));
  std::vector<fs::path> files;
  if (!fs::is_directory(grids_dir)) throw IoError("not a directory: " + grids_dir.string());
  for (const auto& e : fs::directory_iterator(grids_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".cdgf") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError("no .cdgf grids in " + grids_dir.string());
  std::vector<SceneIndexEntry> index;
  for (const auto& f : files) {
    FeatureGrid grid = decode_grid(read_verified(f));
    if (grid.channels() != params.feature_dim()) throw InputError(f.string() + ": channels differ from the model");
    det3d_logits_to_grid(params, grid);
    index.push_back(build_index_entry(f.stem().string(), grid, config.retrieval));
  }
  write_with_manifest(out, encode_index(index), config, {{"build_index", clock.seconds()}});
  return {{"command", "build-index"}, {"entries", index.size()}, {"out", out.string()}};
}

namespace {

FeatureMapFile resolve_query_map(const QuerySpec& q, const Config& config) {
  if (q.feature_map) {
    if (q.corpus || q.view || q.held_out) throw InputError("give either a feature map or a scene view, not both");
    return decode_feature_map(read_verified(*q.feature_map));
  }
  if (!q.corpus || q.scene.empty()) throw InputError("a scene query needs a corpus and a scene id");
  if (q.view.has_value() == q.held_out.has_value()) throw InputError("give exactly one of view or held-out view");
  const Corpus corpus = load_corpus(*q.corpus);
  const std::size_t si = scene_index(corpus, q.scene);
  const CorpusScene& cs = corpus.scenes[si];
  Camera cam;
  if (q.view) {
    if (*q.view < 0 || *q.view >= static_cast<int>(cs.cameras.size())) throw InputError("view index out of range");
    cam = cs.cameras[*q.view];
  } else {
    if (*q.held_out < 0) throw InputError("held-out view index must be >= 0");
    cam = query_cameras(corpus, si, config.rig, *q.held_out + 1).back();
  }
  const OracleScene scene = cs.build();
  FeatureMapFile map;
  map.camera = cam;
  map.teacher = render_teacher_feature_map(scene, cam, config.train.noise, mix(mix(corpus.seed, si), kSaltQueryNoise),
                                           config.train.teacher_samples);
  map.valid = oracle_hit_mask(scene, cam, config.train.teacher_samples);
  return map;
}

json query_report(const QueryResult& r, const Config& config) {
  return {{"mode", retrieval_mode_name(r.mode)},
          {"theta", config.retrieval.theta},
          {"fell_back_to_global", r.fell_back_to_global},
          {"warning", r.warning},
          {"ranking", ranking_json(r.ranking)}};
}

}  // namespace

json cmd_query(const fs::path& index_path, const fs::path& model_path, const QuerySpec& query, RetrievalMode mode,
               const Config& config) {
  const auto index = decode_index(read_verified(index_path));
  if (index.empty()) throw InputError("index is empty");
  const ModelParams params = decode_model(read_verified(model_path));
  const FeatureMapFile map = resolve_query_map(query, config);
  const ImageQuery q = image_query_from(map, params, config.retrieval);
  json out = query_report(query_image(index, q, mode, config.retrieval), config);
  out["command"] = "query";
  out["query_keypoints"] = q.keypoints.size();
  out["config"] = config.to_json();
  return out;
}

json cmd_export_view(const QuerySpec& query, const Config& config, const fs::path& out) {
  const FeatureMapFile map = resolve_query_map(query, config);
  write_with_manifest(out, encode_feature_map(map), config);
  int valid = 0;
  for (auto v : map.valid) valid += v != 0;
  return {{"command", "export-view"}, {"valid_pixels", valid}, {"out", out.string()}};
}

json cmd_dup_detect(const fs::path& index_path, const fs::path& pairs_path, RetrievalMode mode, const Config& config) {
  const auto index = decode_index(read_verified(index_path));
  json pj;
  try {
    pj = json::parse(read_file(pairs_path.string()));
  } catch (const json::exception& e) {
    throw FormatError("pairs file: " + std::string(e.what()));
  }
  if (!pj.is_array()) throw FormatError("pairs file must hold a JSON array");
  std::vector<DupPair> pairs;
  try {
    for (const auto& p : pj) {
      DupPair d{index_position(index, p.at("a").get<std::string>()), index_position(index, p.at("b").get<std::string>()),
                std::nullopt};
      if (p.contains("label")) d.label = p.at("label").get<bool>();
      pairs.push_back(d);
    }
  } catch (const json::exception& e) {
    throw FormatError("pairs file: " + std::string(e.what()));
  }
  const DupResult r = dup_detect(index, pairs, mode, config.retrieval);
  json verdicts = json::array();
  for (const auto& v : r.verdicts) {
    json e = {{"a", index[v.a].id}, {"b", index[v.b].id}, {"duplicate", v.duplicate}, {"score", v.score}};
    if (v.label) e["label"] = *v.label;
    verdicts.push_back(e);
  }
  return {{"command", "dup-detect"},
          {"mode", retrieval_mode_name(r.mode)},
          {"theta", config.retrieval.theta},
          {"min_inlier_fraction", config.retrieval.dup_min_inlier_fraction},
          {"verdicts", verdicts},
          {"ap75", r.ap75 ? json(*r.ap75) : json(nullptr)},
          {"n_pairs", pairs.size()}};
}

json cmd_eval(const fs::path& corpus_path, const fs::path& index_path, const fs::path& model_path,
              EvalProtocol protocol, const Config& config, EvalMetrics* metrics_out) {
  const Corpus corpus = load_corpus(corpus_path);
  const auto index = decode_index(read_verified(index_path));
  const ModelParams params = decode_model(read_verified(model_path));
  if (index.size() != corpus.scenes.size()) throw InputError("index and corpus sizes differ");
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i].id != scene_id(i)) throw InputError("index entry " + std::to_string(i) + " is not " + scene_id(i));
  }
  const RetrievalConfig& rc = config.retrieval;
  EvalMetrics m;
  json out = {{"command", "eval"}, {"mode", eval_protocol_name(protocol)}, {"theta", rc.theta}};

  if (protocol != EvalProtocol::kDup) {
    std::vector<OracleScene> scenes;
    for (const auto& cs : corpus.scenes) scenes.push_back(cs.build());

    // Ren5: per-view image embeddings of each scene's five training views.
    std::vector<Ren5Entry> ren5;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const CorpusScene& cs = corpus.scenes[i];
      std::size_t v = 0;
      const ImageEmbedding embed = [&](const Camera& cam) {
        const ViewQuery q = render_view_query(scenes[i], cam, params, config, mix(mix(corpus.seed, i * 16 + v++), kSaltRen5Noise));
        return image_global_descriptor(q.student.features, q.map.valid);
      };
      const std::size_t k = std::min<std::size_t>(5, cs.cameras.size());
      ren5.push_back(ren5_entry(scene_id(i), std::span<const Camera>(cs.cameras.data(), k), embed));
    }

    int hit_kp = 0, hit_count = 0, hit_global = 0, hit_ren5 = 0;
    json per_query = json::array();
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const Camera cam = query_cameras(corpus, i, config.rig, 1).front();
      const ViewQuery vq = render_view_query(scenes[i], cam, params, config, mix(mix(corpus.seed, i), kSaltQueryNoise));
      const ImageQuery q = make_image_query(vq.student.features, vq.student.keypoints, vq.map.valid, cam, rc);
      const auto correct = equivalent_scenes(corpus, i);
      auto is_correct = [&](const std::vector<RankedScene>& ranking) {
        return !ranking.empty() &&
               std::find(correct.begin(), correct.end(), ranking.front().entry) != correct.end();
      };
      const QueryResult kp = query_image(index, q, RetrievalMode::kKp, rc);
      const QueryResult kc = query_image(index, q, RetrievalMode::kKpCount, rc);
      const QueryResult gl = query_image(index, q, RetrievalMode::kGlobal, rc);
      const auto rn = ren5_rank(ren5, q.global);
      hit_kp += is_correct(kp.ranking);
      hit_count += is_correct(kc.ranking);
      hit_global += is_correct(gl.ranking);
      hit_ren5 += is_correct(rn);
      per_query.push_back({{"scene", scene_id(i)},
                           {"kp", kp.ranking.front().id},
                           {"kp_count", kc.ranking.front().id},
                           {"global", gl.ranking.front().id},
                           {"ren5", rn.front().id},
                           {"query_keypoints", q.keypoints.size()}});
    }
    m.n_queries = static_cast<int>(scenes.size());
    m.top1_kp = static_cast<double>(hit_kp) / m.n_queries;
    m.top1_kp_count = static_cast<double>(hit_count) / m.n_queries;
    m.top1_global = static_cast<double>(hit_global) / m.n_queries;
    m.top1_ren5 = static_cast<double>(hit_ren5) / m.n_queries;
    out["top1"] = {
        {"kp", m.top1_kp}, {"kp_count", m.top1_kp_count}, {"global", m.top1_global}, {"ren5", m.top1_ren5}};
    out["queries"] = per_query;
  }

  if (protocol != EvalProtocol::kRetrieval) {
    const auto pairs = duplicate_benchmark_pairs(corpus, config.dup_pairs, config.seed);
    m.n_pairs = static_cast<int>(pairs.size());
    const DupResult kp = dup_detect(index, pairs, RetrievalMode::kKp, rc);
    const DupResult gl = dup_detect(index, pairs, RetrievalMode::kGlobal, rc);
    m.ap75_kp = kp.ap75.value_or(0.0);
    m.ap75_global = gl.ap75.value_or(0.0);
    out["ap75"] = {{"kp", m.ap75_kp}, {"global", m.ap75_global}};
    json details = json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      details.push_back({{"a", index[pairs[i].a].id},
                         {"b", index[pairs[i].b].id},
                         {"label", *pairs[i].label},
                         {"kp_score", kp.verdicts[i].score},
                         {"global_score", gl.verdicts[i].score}});
    }
    out["pairs"] = details;
    // Accuracy of kp verdicts as the minimum inlier fraction varies.
    json sweep = json::object();
    for (int t = 1; t <= 9; ++t) {
      const double f = 0.1 * t;
      int right = 0;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double sc = kp.verdicts[i].score;
        right += ((sc > 0.0 && sc >= f) == *pairs[i].label) ? 1 : 0;
      }
      char key[8];
      std::snprintf(key, sizeof key, "%.1f", f);
      sweep[key] = pairs.empty() ? 0.0 : static_cast<double>(right) / static_cast<double>(pairs.size());
    }
    out["ap75_kp_by_min_inlier_fraction"] = sweep;
  }
  out["n_queries"] = m.n_queries;
  out["n_pairs"] = m.n_pairs;
  out["config"] = config.to_json();
  if (metrics_out) *metrics_out = m;
  return out;
}

json cmd_grad_check(const Config& config) {
  const auto components =
      config.gradcheck_components.empty() ? grad_check_components() : config.gradcheck_components;
  const GradCheckReport r = grad_check(components, config.seed, config.gradcheck_h, config.gradcheck_tolerance,
                                       config.gradcheck_composed_tolerance);
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"component", e.component},
                       {"max_rel_error", e.max_rel_error},
                       {"checked", e.checked},
                       {"excluded", e.excluded},
                       {"tolerance", e.tolerance},
                       {"passed", e.passed}});
  }
  return {{"command", "grad-check"},
          {"h", r.h},
          {"seed", r.seed},
          {"all_passed", r.all_passed()},
          {"entries", entries},
          {"config", config.to_json()}};
}

json error_json(ErrorCode code, const std::string& message) {
  return {{"error", {{"code", static_cast<int>(code)}, {"kind", error_code_name(code)}, {"message", message}}}};
}

}  // namespace voxsync

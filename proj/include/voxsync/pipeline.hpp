#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxsync/config.hpp"
#include "voxsync/error.hpp"
#include "voxsync/formats.hpp"
#include "voxsync/retrieval.hpp"

namespace voxsync {

inline constexpr const char* kToolVersion = "voxsync 0.1.0";

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

/// Provenance record written next to every artifact. Wall-clock timings make
/// it the one output that is not byte-reproducible.
struct RunManifest {
  nlohmann::json config;
  /// Artifact path relative to the manifest's directory -> SHA-256 hex.
  std::map<std::string, std::string> digests;
  std::string tool_version = kToolVersion;
  std::map<std::string, double> phase_seconds;

  nlohmann::json to_json() const;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
/// Parses the manifest and recomputes every listed digest; DigestError on mismatch.
RunManifest read_manifest(const std::filesystem::path& path);

/// "<file>.manifest.json" for single-file artifacts.
std::filesystem::path sidecar_path(const std::filesystem::path& artifact);

/// Reads an artifact, checking it against the sidecar manifest or a
/// manifest.json in one of its two parent directories when one lists it.
std::vector<std::uint8_t> read_verified(const std::filesystem::path& artifact);

/// Writes bytes and a sidecar manifest covering them.
void write_with_manifest(const std::filesystem::path& artifact, const std::vector<std::uint8_t>& bytes,
                         const Config& config, const std::map<std::string, double>& phases = {});

/// Held-out query cameras of a corpus scene: same band as its training views,
/// drawn from a separate seed.
std::vector<Camera> query_cameras(const Corpus& corpus, std::size_t scene, const CameraRig& rig, int count);

/// Scene indices counted as correct answers for a query of `scene`: the scene
/// and every scene linked to it by duplication.
std::vector<std::size_t> equivalent_scenes(const Corpus& corpus, std::size_t scene);

/// Occupancy-sparsified lattice of a corpus scene with zero features.
FeatureGrid sample_scene_grid(const OracleScene& scene, const Config& config);

/// Student outputs for a teacher render of `scene` at `camera`.
struct ViewQuery {
  FeatureMapFile map;
  Student2dOutput student;
};

ViewQuery render_view_query(const OracleScene& scene, const Camera& camera, const ModelParams& params,
                            const Config& config, std::uint64_t noise_seed);
ImageQuery image_query_from(const FeatureMapFile& map, const ModelParams& params, const RetrievalConfig& config);

/// Balanced duplicate benchmark: every labeled duplicate pair plus as many
/// sampled non-duplicate pairs, capped at `max_pairs` in total.
std::vector<DupPair> duplicate_benchmark_pairs(const Corpus& corpus, int max_pairs, std::uint64_t seed);

struct EvalMetrics {
  double top1_kp = 0.0;
  double top1_kp_count = 0.0;
  double top1_global = 0.0;
  double top1_ren5 = 0.0;
  double ap75_kp = 0.0;
  double ap75_global = 0.0;
  int n_queries = 0;
  int n_pairs = 0;
};

enum class EvalProtocol { kRetrieval, kDup, kBoth };
EvalProtocol parse_eval_protocol(const std::string& s);
const char* eval_protocol_name(EvalProtocol p);

// Commands. Each returns the JSON it reports and writes its artifacts.
nlohmann::json cmd_gen_corpus(const Config& config, const std::filesystem::path& out);
nlohmann::json cmd_sample_grid(const std::filesystem::path& corpus, const std::string& scene,
                               const Config& config, const std::filesystem::path& out);
nlohmann::json cmd_train(const std::filesystem::path& corpus, const Config& config,
                         const std::filesystem::path& out_dir);
nlohmann::json cmd_build_index(const std::filesystem::path& grids_dir, const std::filesystem::path& model,
                               const Config& config, const std::filesystem::path& out);

/// Query source: a corpus scene viewed by one of its training or held-out
/// cameras, or an external feature map file.
struct QuerySpec {
  std::optional<std::filesystem::path> corpus;
  std::string scene;
  std::optional<int> view;
  std::optional<int> held_out;
  std::optional<std::filesystem::path> feature_map;
};

nlohmann::json cmd_query(const std::filesystem::path& index, const std::filesystem::path& model,
                         const QuerySpec& query, RetrievalMode mode, const Config& config);
/// Writes a CDFM teacher feature map for a corpus scene view.
nlohmann::json cmd_export_view(const QuerySpec& query, const Config& config, const std::filesystem::path& out);
/// `pairs` is a JSON array of {"a": id, "b": id, "label": bool (optional)}.
nlohmann::json cmd_dup_detect(const std::filesystem::path& index, const std::filesystem::path& pairs,
                              RetrievalMode mode, const Config& config);
nlohmann::json cmd_eval(const std::filesystem::path& corpus, const std::filesystem::path& index,
                        const std::filesystem::path& model, EvalProtocol protocol, const Config& config,
                        EvalMetrics* metrics = nullptr);
nlohmann::json cmd_grad_check(const Config& config);

/// {"error": {"code", "kind", "message"}} for a failure.
nlohmann::json error_json(ErrorCode code, const std::string& message);

}  // namespace voxsync

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxsync/geometry.hpp"
#include "voxsync/grid.hpp"
#include "voxsync/losses.hpp"
#include "voxsync/model.hpp"
#include "voxsync/optim.hpp"
#include "voxsync/oracle.hpp"
#include "voxsync/render.hpp"

namespace voxsync {

/// Parameter blocks touched by training.
enum class ParamBlock { kStudent2d, kFidHead, kDet2d, kDet3d, kGridFeatures };

/// Four-stage bootstrap: A fits the 2D student to the teacher, B fits the 2D
/// detector to the keypoint teacher, C distills into the 3D branch with the 2D
/// heads frozen, D trains everything jointly.
struct StagePlan {
  int steps_a = 50;
  int steps_b = 300;
  int steps_c = 600;
  int steps_d = 600;

  void validate() const;
  int steps(Stage stage) const;
  int total() const { return steps_a + steps_b + steps_c + steps_d; }
  static bool trains(Stage stage, ParamBlock block);
};

struct TrainConfig {
  int samples_per_ray = kTrainSamples;
  int batch_rays = 256;
  int teacher_samples = 64;
  /// Optimizer for the MLP heads (decoupled decay on their parameters).
  AdamWConfig optim_2d;
  /// Optimizer for per-voxel grid features (no decay).
  AdamWConfig optim_3d;
  LossWeights weights;
  StagePlan plan;
  TeacherNoise noise;
  double divergence_limit = 1e6;
  /// Stage C fans scenes out over threads; det3d updates are averaged per
  /// round. Stage D always runs sequentially.
  bool parallel_scenes = false;

  TrainConfig();
  void validate() const;
};

/// Frozen teacher outputs for every training view of a scene.
struct SceneViews {
  std::vector<Camera> cameras;
  std::vector<FeatureImage> teacher;
  std::vector<ProbImage> heatmaps;
};

SceneViews prepare_views(const OracleScene& scene, std::span<const Camera> cameras, const TeacherNoise& noise,
                         std::uint64_t seed, int samples);

struct LogRow {
  Stage stage = Stage::kA;
  int step = 0;
  double loss_total = 0.0;
  double loss_2d3d = 0.0;
  double loss_fid = 0.0;
  double loss_p = 0.0;
};

struct TrainLog {
  std::vector<LogRow> rows;

  /// CSV with header stage,step,loss_total,loss_2d3d,loss_fid,loss_p.
  std::string to_csv() const;
  std::vector<LogRow> stage_rows(Stage stage) const;
};

/// Moment state for every shared head.
struct ModelOptimState {
  OptimState student2d, fid_head, det2d, det3d;
};

/// Per-scene trainable state.
struct SceneTrainState {
  FeatureGrid grid;
  OptimState grid_optim;
  SceneViews views;
};

/// Mutable training session over one or more scenes sharing one ModelParams.
class Trainer {
 public:
  Trainer(ModelParams params, TrainConfig config, std::uint64_t seed);

  void add_scene(FeatureGrid grid, SceneViews views);

  /// One optimization step of `stage` on a fresh ray batch from `scene`.
  /// Returns the logged loss values for that batch.
  LogRow step(Stage stage, std::size_t scene, int stage_step);

  /// Runs stages in order: A and B cycle through scenes one step each; C and D
  /// give every scene one step per round. Each logged row averages a round.
  TrainLog run();
  /// Runs a single stage from step 0.
  TrainLog run_stage(Stage stage);

  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  std::size_t scene_count() const { return scenes_.size(); }
  const SceneTrainState& scene(std::size_t i) const { return scenes_[i]; }
  SceneTrainState& scene(std::size_t i) { return scenes_[i]; }
  const TrainConfig& config() const { return config_; }

 private:
  LogRow step_impl(Stage stage, std::size_t scene, int stage_step, std::uint64_t batch_id,
                   std::vector<double>* det3d_grad);
  LogRow parallel_round(int stage_step);

  ModelParams params_;
  TrainConfig config_;
  ModelOptimState optim_;
  std::vector<SceneTrainState> scenes_;
  std::uint64_t seed_;
  std::uint64_t batch_counter_ = 0;
};

struct SceneTrainResult {
  FeatureGrid grid;
  ModelParams params;
  TrainLog log;
};

/// Full bootstrap on one scene.
SceneTrainResult train_scene(const OracleScene& scene, std::span<const Camera> cameras, FeatureGrid grid,
                             ModelParams params, const TrainConfig& config, std::uint64_t seed);

struct CorpusTrainResult {
  std::vector<FeatureGrid> grids;
  ModelParams params;
  TrainLog log;
};

struct TrainingScene {
  OracleScene scene;
  std::vector<Camera> cameras;
  FeatureGrid grid;
};

/// Per-scene grids with 2D heads shared across the corpus. Failures are
/// rethrown with the offending scene index.
CorpusTrainResult train_corpus(std::vector<TrainingScene> scenes, ModelParams params, const TrainConfig& config,
                               std::uint64_t seed);

/// Full-image losses over every view of a scene (no ray sampling).
LossParts evaluate_scene(const FeatureGrid& grid, const ModelParams& params, const SceneViews& views,
                         int samples);

/// FNV-1a digest of a parameter block, used by freeze audits.
std::uint64_t checksum(std::span<const double> values);
std::uint64_t checksum(const ModelParams& params, bool include_3d);

}  // namespace voxsync

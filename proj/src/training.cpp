#include "voxsync/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>
#include <cstring>
#include <random>
#include <sstream>

#include "voxsync/error.hpp"

namespace voxsync {

void StagePlan::validate() const {
  if (steps_a < 0 || steps_b < 0 || steps_c < 0 || steps_d < 0) throw InputError("stage step counts must be >= 0");
}

int StagePlan::steps(Stage stage) const {
  switch (stage) {
    case Stage::kA: return steps_a;
    case Stage::kB: return steps_b;
    case Stage::kC: return steps_c;
    case Stage::kD: return steps_d;
  }
  return 0;
}

bool StagePlan::trains(Stage stage, ParamBlock block) {
  switch (stage) {
    case Stage::kA: return block == ParamBlock::kStudent2d || block == ParamBlock::kFidHead;
    case Stage::kB: return block == ParamBlock::kDet2d;
    case Stage::kC: return block == ParamBlock::kDet3d || block == ParamBlock::kGridFeatures;
    case Stage::kD: return true;
  }
  return false;
}

TrainConfig::TrainConfig() {
  optim_3d.learning_rate = 1e-2;
  optim_3d.weight_decay_start = 0.0;
  optim_3d.weight_decay_end = 0.0;
}

void TrainConfig::validate() const {
  if (samples_per_ray < 1 || teacher_samples < 1) throw InputError("sample counts must be >= 1");
  if (batch_rays < 1) throw InputError("batch_rays must be >= 1");
  optim_2d.validate();
  optim_3d.validate();
  weights.validate();
  plan.validate();
  if (!(noise.iid_sigma >= 0.0) || !(noise.view_bias_sigma >= 0.0)) throw InputError("noise levels must be >= 0");
  if (!(divergence_limit > 0.0)) throw InputError("divergence limit must be positive");
}

SceneViews prepare_views(const OracleScene& scene, std::span<const Camera> cameras, const TeacherNoise& noise,
                         std::uint64_t seed, int samples) {
  SceneViews v;
  v.cameras.assign(cameras.begin(), cameras.end());
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    v.teacher.push_back(render_teacher_feature_map(scene, cameras[i], noise, seed + 0x9E3779B97F4A7C15ULL * (i + 1),
                                                   samples));
    v.heatmaps.push_back(teacher_keypoint_heatmap(scene, cameras[i]));
  }
  return v;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "stage,step,loss_total,loss_2d3d,loss_fid,loss_p\n";
  os.precision(9);
  for (const auto& r : rows) {
    os << stage_name(r.stage) << ',' << r.step << ',' << r.loss_total << ',' << r.loss_2d3d << ',' << r.loss_fid
       << ',' << r.loss_p << '\n';
  }
  return os.str();
}

std::vector<LogRow> TrainLog::stage_rows(Stage stage) const {
  std::vector<LogRow> out;
  for (const auto& r : rows) {
    if (r.stage == stage) out.push_back(r);
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

FeatureImage row_image(const RowMatrix& m) {
  FeatureImage img(static_cast<int>(m.rows()), 1, static_cast<int>(m.cols()));
  Eigen::Map<RowMatrix>(img.data.data(), m.rows(), m.cols()) = m;
  return img;
}

ProbImage row_prob(const RowMatrix& m) {
  ProbImage img(static_cast<int>(m.rows()), 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) img.data[i] = m(i, 0);
  return img;
}

RowMatrix image_rows(const FeatureImage& img) {
  return Eigen::Map<const RowMatrix>(img.data.data(), img.pixel_count(), img.channels);
}

RowMatrix prob_rows(const ProbImage& img) {
  return Eigen::Map<const RowMatrix>(img.data.data(), img.pixel_count(), 1);
}

void check_finite_loss(double v, double limit, const char* what) {
  if (!std::isfinite(v) || v > limit) {
    throw NumericError(std::string("training diverged: ") + what + " = " + std::to_string(v));
  }
}

}  // namespace

Trainer::Trainer(ModelParams params, TrainConfig config, std::uint64_t seed)
    : params_(std::move(params)), config_(std::move(config)), seed_(seed) {
  config_.validate();
}

void Trainer::add_scene(FeatureGrid grid, SceneViews views) {
  if (grid.channels() != params_.feature_dim()) throw InputError("grid channels differ from model feature dim");
  if (views.cameras.empty()) throw InputError("a training scene needs at least one view");
  SceneTrainState s{std::move(grid), OptimState(), std::move(views)};
  s.grid_optim = OptimState(s.grid.features().size());
  scenes_.push_back(std::move(s));
}

LogRow Trainer::step(Stage stage, std::size_t si, int stage_step) {
  return step_impl(stage, si, stage_step, batch_counter_++, nullptr);
}

LogRow Trainer::step_impl(Stage stage, std::size_t si, int stage_step, std::uint64_t batch_id,
                          std::vector<double>* det3d_grad) {
  if (si >= scenes_.size()) throw InputError("scene index out of range");
  SceneTrainState& sc = scenes_[si];
  const int batch = config_.batch_rays;
  const int channels = params_.feature_dim();

  std::mt19937_64 rng(splitmix64(seed_ ^ splitmix64(batch_id)));
  std::uniform_int_distribution<int> pick_view(0, static_cast<int>(sc.views.cameras.size()) - 1);

  struct RaySample {
    int view, x, y;
  };
  std::vector<RaySample> rays(batch);
  RowMatrix teacher(batch, channels);
  RowMatrix heat(batch, 1);
  for (int b = 0; b < batch; ++b) {
    const int v = pick_view(rng);
    const Camera& cam = sc.views.cameras[v];
    std::uniform_int_distribution<int> px(0, cam.width - 1), py(0, cam.height - 1);
    rays[b] = {v, px(rng), py(rng)};
    const auto t = sc.views.teacher[v].pixel(rays[b].x, rays[b].y);
    for (int c = 0; c < channels; ++c) teacher(b, c) = t[c];
    heat(b, 0) = sc.views.heatmaps[v].at(rays[b].x, rays[b].y);
  }

  const MlpCache student = params_.student2d.forward(teacher);
  const RowMatrix& f2d = student.output;
  const RowMatrix& hidden = student.inputs[1];
  LogRow row{stage, stage_step};
  const double inv_b = 1.0 / batch;

  if (stage == Stage::kA) {
    const MlpCache fid = params_.fid_head.forward(hidden);
    const RowMatrix d_student = f2d - teacher;
    const RowMatrix d_fid = fid.output - teacher;
    row.loss_2d3d = 0.0;
    row.loss_fid = d_fid.squaredNorm() * inv_b;
    row.loss_total = d_student.squaredNorm() * inv_b + row.loss_fid;
    check_finite_loss(row.loss_total, config_.divergence_limit, "stage A loss");
    const MlpGradients gf = params_.fid_head.backward(fid, 2.0 * inv_b * d_fid);
    const LayerInjection inj{0, gf.input};
    const MlpGradients gs = params_.student2d.backward(student, 2.0 * inv_b * d_student, {&inj, 1});
    optimizer_step(config_.optim_2d, optim_.student2d, params_.student2d.mutable_params(), gs.params, true,
                   "student2d");
    optimizer_step(config_.optim_2d, optim_.fid_head, params_.fid_head.mutable_params(), gf.params, true, "fid_head");
    return row;
  }

  const MlpCache det2d = params_.det2d.forward(f2d);
  if (stage == Stage::kB) {
    const RowMatrix d = det2d.output - heat;
    row.loss_total = d.squaredNorm() * inv_b;
    check_finite_loss(row.loss_total, config_.divergence_limit, "stage B loss");
    const MlpGradients g = params_.det2d.backward(det2d, 2.0 * inv_b * d);
    optimizer_step(config_.optim_2d, optim_.det2d, params_.det2d.mutable_params(), g.params, true, "det2d");
    return row;
  }

  // Stages C and D: render the 3D branch along every sampled ray.
  FeatureGrid& grid = sc.grid;
  const MlpCache det3d = params_.det3d.forward(grid_feature_matrix(grid));
  {
    auto logits = grid.kp_logits();
    for (std::size_t i = 0; i < grid.size(); ++i) logits[i] = det3d.output(static_cast<Eigen::Index>(i), 0);
  }
  std::vector<RayTrace> traces(batch);
  RowMatrix f3d = RowMatrix::Zero(batch, channels);
  RowMatrix p3d = RowMatrix::Zero(batch, 1);
  PixelMask valid(batch, 0);
  for (int b = 0; b < batch; ++b) {
    const Camera& cam = sc.views.cameras[rays[b].view];
    traces[b] = trace_grid_pixel(grid, cam, pixel_center(rays[b].x, rays[b].y), config_.samples_per_ray);
    if (!traces[b].valid()) continue;
    valid[b] = 1;
    f3d.row(b) = render_trace_features(grid, traces[b]).transpose();
    p3d(b, 0) = render_trace_keypoint(grid, traces[b]);
  }
  const MlpCache fid = params_.fid_head.forward(hidden);

  const PairLoss l2d3d = loss_2d3d(row_image(f2d), row_image(f3d), valid);
  const PairLoss lfid = loss_fid(row_image(fid.output), row_image(teacher));
  const ProbPairLoss lp = loss_p(row_prob(det2d.output), row_prob(p3d), valid);
  const LossParts parts{l2d3d.value, lfid.value, lp.value};
  const TotalLoss total = total_loss(parts, config_.weights, stage, stage_step, config_.plan.steps(stage));
  row.loss_total = total.value;
  row.loss_2d3d = parts.loss_2d3d;
  row.loss_fid = parts.loss_fid;
  row.loss_p = parts.loss_p;
  check_finite_loss(row.loss_total, config_.divergence_limit, "total loss");
  const StageLambdas& lam = total.lambdas;

  // 3D branch: grid features directly, P^s through det3d.
  std::vector<double> grid_grad(grid.features().size(), 0.0);
  std::vector<double> prob_grad(grid.size(), 0.0);
  std::vector<double> up(channels);
  for (int b = 0; b < batch; ++b) {
    if (!valid[b]) continue;
    const auto g = l2d3d.grad_b.pixel(b);
    for (int c = 0; c < channels; ++c) up[c] = lam.lambda_2d3d * g[c];
    scatter_feature_gradient(grid, traces[b], up, grid_grad);
    if (lam.lambda_p != 0.0) scatter_keypoint_gradient(traces[b], lam.lambda_p * lp.grad_b.data[b], prob_grad);
  }
  RowMatrix d_logits(static_cast<Eigen::Index>(grid.size()), 1);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    d_logits(static_cast<Eigen::Index>(i), 0) = grid.kp_logits()[i] > 0.0 ? prob_grad[i] : 0.0;
  }
  const MlpGradients g3 = params_.det3d.backward(det3d, d_logits);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (int c = 0; c < channels; ++c) grid_grad[i * channels + c] += g3.input(static_cast<Eigen::Index>(i), c);
  }

  // 2D branch, stage D only.
  if (StagePlan::trains(stage, ParamBlock::kStudent2d)) {
    const MlpGradients gd = params_.det2d.backward(det2d, lam.lambda_p * prob_rows(lp.grad_a));
    const MlpGradients gf = params_.fid_head.backward(fid, lam.lambda_fid * image_rows(lfid.grad_a));
    const RowMatrix d_f2d = lam.lambda_2d3d * image_rows(l2d3d.grad_a) + gd.input;
    const LayerInjection inj{0, gf.input};
    const MlpGradients gs = params_.student2d.backward(student, d_f2d, {&inj, 1});
    optimizer_step(config_.optim_2d, optim_.student2d, params_.student2d.mutable_params(), gs.params, true,
                   "student2d");
    optimizer_step(config_.optim_2d, optim_.fid_head, params_.fid_head.mutable_params(), gf.params, true, "fid_head");
    optimizer_step(config_.optim_2d, optim_.det2d, params_.det2d.mutable_params(), gd.params, true, "det2d");
  }
  optimizer_step(config_.optim_3d, sc.grid_optim, grid.features(), grid_grad, false, "grid features");
  if (det3d_grad) {
    *det3d_grad = g3.params;
  } else {
    optimizer_step(config_.optim_2d, optim_.det3d, params_.det3d.mutable_params(), g3.params, true, "det3d");
  }
  return row;
}

TrainLog Trainer::run_stage(Stage stage) {
  TrainLog log;
  const int steps = config_.plan.steps(stage);
  const std::size_t n = scenes_.size();
  if (n == 0) throw InputError("trainer has no scenes");
  for (int s = 0; s < steps; ++s) {
    if (stage == Stage::kA || stage == Stage::kB) {
      const std::size_t si = static_cast<std::size_t>(s) % n;
      try {
        log.rows.push_back(step(stage, si, s));
      } catch (const Error& e) {
        throw Error(e.code(), "scene " + std::to_string(si) + ": " + e.what());
      }
      continue;
    }
    LogRow mean{stage, s};
    if (stage == Stage::kC && config_.parallel_scenes && n > 1) {
      log.rows.push_back(parallel_round(s));
      continue;
    }
    for (std::size_t si = 0; si < n; ++si) {
      LogRow r;
      try {
        r = step(stage, si, s);
      } catch (const Error& e) {
        throw Error(e.code(), "scene " + std::to_string(si) + ": " + e.what());
      }
      mean.loss_total += r.loss_total / n;
      mean.loss_2d3d += r.loss_2d3d / n;
      mean.loss_fid += r.loss_fid / n;
      mean.loss_p += r.loss_p / n;
    }
    log.rows.push_back(mean);
  }
  for (auto& sc : scenes_) det3d_logits_to_grid(params_, sc.grid);
  return log;
}

LogRow Trainer::parallel_round(int stage_step) {
  // Grids are independent; the shared det3d sees one averaged update per round,
  // applied in scene order, so the result does not depend on scheduling.
  const std::size_t n = scenes_.size();
  const std::uint64_t base = batch_counter_;
  batch_counter_ += n;
  std::vector<LogRow> rows(n);
  std::vector<std::vector<double>> grads(n);
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t si = next++; si < n; si = next++) {
      try {
        rows[si] = step_impl(Stage::kC, si, stage_step, base + si, &grads[si]);
      } catch (...) {
        errors[si] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (std::size_t si = 0; si < n; ++si) {
    if (!errors[si]) continue;
    try {
      std::rethrow_exception(errors[si]);
    } catch (const Error& e) {
      throw Error(e.code(), "scene " + std::to_string(si) + ": " + e.what());
    }
  }
  std::vector<double> mean_grad(params_.det3d.parameter_count(), 0.0);
  LogRow mean{Stage::kC, stage_step};
  for (std::size_t si = 0; si < n; ++si) {
    for (std::size_t k = 0; k < mean_grad.size(); ++k) mean_grad[k] += grads[si][k] / n;
    mean.loss_total += rows[si].loss_total / n;
    mean.loss_2d3d += rows[si].loss_2d3d / n;
    mean.loss_fid += rows[si].loss_fid / n;
    mean.loss_p += rows[si].loss_p / n;
  }
  optimizer_step(config_.optim_2d, optim_.det3d, params_.det3d.mutable_params(), mean_grad, true, "det3d");
  return mean;
}

TrainLog Trainer::run() {
  TrainLog log;
  for (Stage s : {Stage::kA, Stage::kB, Stage::kC, Stage::kD}) {
    auto part = run_stage(s);
    log.rows.insert(log.rows.end(), part.rows.begin(), part.rows.end());
  }
  return log;
}

namespace {

TrainConfig with_schedule(TrainConfig config) {
  // Weight-decay schedules span the full bootstrap.
  config.optim_2d.total_steps = std::max(1, config.plan.total());
  config.optim_3d.total_steps = std::max(1, config.plan.total());
  return config;
}

}  // namespace

SceneTrainResult train_scene(const OracleScene& scene, std::span<const Camera> cameras, FeatureGrid grid,
                             ModelParams params, const TrainConfig& config, std::uint64_t seed) {
  std::vector<TrainingScene> one;
  one.push_back({scene, std::vector<Camera>(cameras.begin(), cameras.end()), std::move(grid)});
  CorpusTrainResult r = train_corpus(std::move(one), std::move(params), config, seed);
  return {std::move(r.grids.front()), std::move(r.params), std::move(r.log)};
}

CorpusTrainResult train_corpus(std::vector<TrainingScene> scenes, ModelParams params, const TrainConfig& config,
                               std::uint64_t seed) {
  if (scenes.empty()) throw InputError("corpus is empty");
  Trainer trainer(std::move(params), with_schedule(config), seed);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    try {
      SceneViews views = prepare_views(scenes[i].scene, scenes[i].cameras, config.noise,
                                       splitmix64(seed ^ splitmix64(i + 1)), config.teacher_samples);
      trainer.add_scene(std::move(scenes[i].grid), std::move(views));
    } catch (const Error& e) {
      throw Error(e.code(), "scene " + std::to_string(i) + ": " + e.what());
    }
  }
  TrainLog log = trainer.run();
  CorpusTrainResult out;
  for (std::size_t i = 0; i < trainer.scene_count(); ++i) out.grids.push_back(trainer.scene(i).grid);
  out.params = trainer.params();
  out.log = std::move(log);
  return out;
}

LossParts evaluate_scene(const FeatureGrid& grid, const ModelParams& params, const SceneViews& views, int samples) {
  FeatureGrid g = grid;
  det3d_logits_to_grid(params, g);
  double sum_2d3d = 0.0, sum_fid = 0.0, sum_p = 0.0;
  long valid_count = 0, all_count = 0;
  for (std::size_t v = 0; v < views.cameras.size(); ++v) {
    const Student2dOutput s = student2d_forward(params, views.teacher[v]);
    const RenderedFeatures f3d = render_feature_map(g, views.cameras[v], samples);
    const RenderedProbabilities p3d = render_keypoint_map(g, views.cameras[v], samples);
    const PairLoss a = loss_2d3d(s.features, f3d.image, f3d.valid);
    const PairLoss b = loss_fid(s.fidelity, views.teacher[v]);
    const ProbPairLoss c = loss_p(s.keypoints, p3d.image, p3d.valid);
    sum_2d3d += a.value * a.count;
    sum_p += c.value * c.count;
    sum_fid += b.value * b.count;
    valid_count += a.count;
    all_count += b.count;
  }
  LossParts out;
  if (valid_count > 0) {
    out.loss_2d3d = sum_2d3d / valid_count;
    out.loss_p = sum_p / valid_count;
  }
  if (all_count > 0) out.loss_fid = sum_fid / all_count;
  return out;
}

std::uint64_t checksum(std::span<const double> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t checksum(const ModelParams& params, bool include_3d) {
  std::uint64_t h = checksum(params.student2d.params());
  h = h * 31 + checksum(params.fid_head.params());
  h = h * 31 + checksum(params.det2d.params());
  if (include_3d) h = h * 31 + checksum(params.det3d.params());
  return h;
}

}  // namespace voxsync

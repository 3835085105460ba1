#include "voxsync/config.hpp"

#include <algorithm>
#include <fstream>

#include "voxsync/error.hpp"
#include "voxsync/gradcheck.hpp"

namespace voxsync {

using nlohmann::json;

namespace {

json optimizer_json(const AdamWConfig& o) {
  return {{"learning_rate", o.learning_rate},        {"beta1", o.beta1},
          {"beta2", o.beta2},                        {"epsilon", o.epsilon},
          {"weight_decay_start", o.weight_decay_start}, {"weight_decay_end", o.weight_decay_end},
          {"warmup_steps", o.warmup_steps}};
}

void read_optimizer(const json& j, AdamWConfig& o) {
  o.learning_rate = j.at("learning_rate");
  o.beta1 = j.at("beta1");
  o.beta2 = j.at("beta2");
  o.epsilon = j.at("epsilon");
  o.weight_decay_start = j.at("weight_decay_start");
  o.weight_decay_end = j.at("weight_decay_end");
  o.warmup_steps = j.at("warmup_steps");
}

const char* kind(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

// Every key of `user` must exist in `layout` with a compatible type.
void check_layout(const json& user, const json& layout, const std::string& path) {
  if (!user.is_object()) throw ConfigError((path.empty() ? "config" : path) + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!layout.contains(it.key())) throw ConfigError("unknown config key: " + key);
    const json& want = layout.at(it.key());
    const json& got = it.value();
    bool ok = false;
    if (want.is_object()) {
      check_layout(got, want, key);
      ok = true;
    } else if (want.is_boolean()) {
      ok = got.is_boolean();
    } else if (want.is_number_unsigned()) {
      ok = got.is_number_unsigned() || (got.is_number_integer() && got.get<std::int64_t>() >= 0);
    } else if (want.is_number_integer()) {
      ok = got.is_number_integer();
    } else if (want.is_number()) {
      ok = got.is_number();
    } else if (want.is_string()) {
      ok = got.is_string();
    } else if (want.is_array()) {
      ok = got.is_array() && std::all_of(got.begin(), got.end(), [](const json& e) { return e.is_string(); });
    }
    if (!ok) throw ConfigError("config key " + key + " has wrong type (" + kind(got) + ", expected " + kind(want) + ")");
  }
}

}  // namespace

json Config::to_json() const {
  const auto& t = train;
  const auto& r = retrieval;
  return {
      {"seed", seed},
      {"corpus",
       {{"scenes", corpus_scenes},
        {"duplicate_fraction", duplicate_fraction},
        {"min_blobs", scene.min_blobs},
        {"max_blobs", scene.max_blobs},
        {"min_radius", scene.min_radius},
        {"max_radius", scene.max_radius},
        {"min_density", scene.min_density},
        {"max_density", scene.max_density},
        {"placement_radius", scene.placement_radius},
        {"palette_size", scene.palette_size},
        {"palette_jitter", scene.palette_jitter},
        {"palette_seed", scene.palette_seed},
        {"views", rig.views},
        {"width", rig.width},
        {"height", rig.height},
        {"camera_distance", rig.distance},
        {"hfov_deg", rig.hfov_deg},
        {"min_elevation_deg", rig.min_elevation_deg},
        {"max_elevation_deg", rig.max_elevation_deg}}},
      {"grid", {{"resolution", resolution}, {"theta", theta}, {"directions", directions}}},
      {"model", {{"feature_dim", scene.feature_dim}, {"hidden_dim", hidden_dim}, {"init_noise", init_noise}}},
      {"training",
       {{"samples_per_ray", t.samples_per_ray},
        {"teacher_samples", t.teacher_samples},
        {"eval_samples", eval_samples},
        {"batch_rays", t.batch_rays},
        {"steps", {{"a", t.plan.steps_a}, {"b", t.plan.steps_b}, {"c", t.plan.steps_c}, {"d", t.plan.steps_d}}},
        {"warmup_fraction", t.weights.warmup_fraction},
        {"lambda_2d3d", t.weights.lambda_2d3d},
        {"lambda_fid", t.weights.lambda_fid},
        {"lambda_p", t.weights.lambda_p},
        {"divergence_limit", t.divergence_limit},
        {"parallel_scenes", t.parallel_scenes},
        {"teacher_noise", {{"iid_sigma", t.noise.iid_sigma}, {"view_bias_sigma", t.noise.view_bias_sigma}}},
        {"optimizer_2d", optimizer_json(t.optim_2d)},
        {"optimizer_3d", optimizer_json(t.optim_3d)}}},
      {"retrieval",
       {{"theta", r.theta},
        {"k2d", r.k2d},
        {"k3d", r.k3d},
        {"nms_2d_px", r.nms_2d_px},
        {"nms_3d_voxels", r.nms_3d_voxels},
        {"score_floor_2d", r.score_floor_2d},
        {"score_floor_3d", r.score_floor_3d},
        {"ransac_iterations", r.ransac_iterations},
        {"pnp_tol_px", r.pnp_tol_px},
        {"rigid_tol", r.rigid_tol},
        {"dup_min_inlier_fraction", r.dup_min_inlier_fraction},
        {"dup_pairs", dup_pairs}}},
      {"gradcheck",
       {{"h", gradcheck_h},
        {"tolerance", gradcheck_tolerance},
        {"composed_tolerance", gradcheck_composed_tolerance},
        {"components", gradcheck_components}}},
  };
}

Config Config::from_json(const json& user) {
  Config c;
  json j = c.to_json();
  check_layout(user, j, "");
  j.merge_patch(user);
  try {
    c.seed = j.at("seed");
    const json& co = j.at("corpus");
    c.corpus_scenes = co.at("scenes");
    c.duplicate_fraction = co.at("duplicate_fraction");
    c.scene.min_blobs = co.at("min_blobs");
    c.scene.max_blobs = co.at("max_blobs");
    c.scene.min_radius = co.at("min_radius");
    c.scene.max_radius = co.at("max_radius");
    c.scene.min_density = co.at("min_density");
    c.scene.max_density = co.at("max_density");
    c.scene.placement_radius = co.at("placement_radius");
    c.scene.palette_size = co.at("palette_size");
    c.scene.palette_jitter = co.at("palette_jitter");
    c.scene.palette_seed = co.at("palette_seed");
    c.rig.views = co.at("views");
    c.rig.width = co.at("width");
    c.rig.height = co.at("height");
    c.rig.distance = co.at("camera_distance");
    c.rig.hfov_deg = co.at("hfov_deg");
    c.rig.min_elevation_deg = co.at("min_elevation_deg");
    c.rig.max_elevation_deg = co.at("max_elevation_deg");

    const json& g = j.at("grid");
    c.resolution = g.at("resolution");
    c.theta = g.at("theta");
    c.directions = g.at("directions");

    const json& m = j.at("model");
    c.scene.feature_dim = m.at("feature_dim");
    c.hidden_dim = m.at("hidden_dim");
    c.init_noise = m.at("init_noise");

    const json& t = j.at("training");
    c.train.samples_per_ray = t.at("samples_per_ray");
    c.train.teacher_samples = t.at("teacher_samples");
    c.eval_samples = t.at("eval_samples");
    c.train.batch_rays = t.at("batch_rays");
    c.train.plan.steps_a = t.at("steps").at("a");
    c.train.plan.steps_b = t.at("steps").at("b");
    c.train.plan.steps_c = t.at("steps").at("c");
    c.train.plan.steps_d = t.at("steps").at("d");
    c.train.weights.warmup_fraction = t.at("warmup_fraction");
    c.train.weights.lambda_2d3d = t.at("lambda_2d3d");
    c.train.weights.lambda_fid = t.at("lambda_fid");
    c.train.weights.lambda_p = t.at("lambda_p");
    c.train.divergence_limit = t.at("divergence_limit");
    c.train.parallel_scenes = t.at("parallel_scenes");
    c.train.noise.iid_sigma = t.at("teacher_noise").at("iid_sigma");
    c.train.noise.view_bias_sigma = t.at("teacher_noise").at("view_bias_sigma");
    read_optimizer(t.at("optimizer_2d"), c.train.optim_2d);
    read_optimizer(t.at("optimizer_3d"), c.train.optim_3d);

    const json& r = j.at("retrieval");
    c.retrieval.theta = r.at("theta");
    c.retrieval.k2d = r.at("k2d");
    c.retrieval.k3d = r.at("k3d");
    c.retrieval.nms_2d_px = r.at("nms_2d_px");
    c.retrieval.nms_3d_voxels = r.at("nms_3d_voxels");
    c.retrieval.score_floor_2d = r.at("score_floor_2d");
    c.retrieval.score_floor_3d = r.at("score_floor_3d");
    c.retrieval.ransac_iterations = r.at("ransac_iterations");
    c.retrieval.pnp_tol_px = r.at("pnp_tol_px");
    c.retrieval.rigid_tol = r.at("rigid_tol");
    c.retrieval.dup_min_inlier_fraction = r.at("dup_min_inlier_fraction");
    c.dup_pairs = r.at("dup_pairs");

    const json& gc = j.at("gradcheck");
    c.gradcheck_h = gc.at("h");
    c.gradcheck_tolerance = gc.at("tolerance");
    c.gradcheck_composed_tolerance = gc.at("composed_tolerance");
    c.gradcheck_components = gc.at("components").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.retrieval.seed = c.seed;
  c.validate();
  return c;
}

void Config::validate() const {
  try {
    scene.validate();
    rig.validate();
    train.validate();
    retrieval.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  if (corpus_scenes < 1) throw ConfigError("corpus.scenes must be at least 1");
  if (!(duplicate_fraction >= 0.0 && duplicate_fraction < 1.0)) {
    throw ConfigError("corpus.duplicate_fraction must lie in [0, 1)");
  }
  if (resolution < 2) throw ConfigError("grid.resolution must be at least 2");
  if (!(theta >= 0.0 && theta < 1.0)) throw ConfigError("grid.theta must lie in [0, 1)");
  if (directions != 6 && directions != 14 && directions != 26) throw ConfigError("grid.directions must be 6, 14 or 26");
  if (hidden_dim < 1) throw ConfigError("model.hidden_dim must be at least 1");
  if (!(init_noise >= 0.0)) throw ConfigError("model.init_noise must be non-negative");
  if (eval_samples < 1) throw ConfigError("training.eval_samples must be at least 1");
  if (dup_pairs < 0) throw ConfigError("retrieval.dup_pairs must be non-negative");
  if (!(gradcheck_h > 0.0) || !(gradcheck_tolerance > 0.0) || !(gradcheck_composed_tolerance > 0.0)) {
    throw ConfigError("gradcheck step and tolerances must be positive");
  }
  const auto known = grad_check_components();
  for (const auto& name : gradcheck_components) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigError("unknown gradcheck component: " + name);
    }
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty key in override: " + assignment);
    if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config " + path + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return Config::from_json(doc);
}

}  // namespace voxsync

#include "voxsync/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "voxsync/error.hpp"

namespace voxsync {

void RetrievalConfig::validate() const {
  if (!(theta > -1.0 && theta <= 1.0)) throw ConfigError("retrieval theta must lie in (-1, 1]");
  if (k2d < 1 || k3d < 1) throw ConfigError("keypoint counts must be at least 1");
  if (!(nms_2d_px >= 0.0) || !(nms_3d_voxels >= 0.0)) throw ConfigError("NMS radii must be non-negative");
  if (!(score_floor_2d >= 0.0) || !(score_floor_3d >= 0.0)) throw ConfigError("score floors must be non-negative");
  if (ransac_iterations < 1) throw ConfigError("ransac_iterations must be at least 1");
  if (!(pnp_tol_px > 0.0) || !(rigid_tol > 0.0)) throw ConfigError("RANSAC tolerances must be positive");
  if (!(dup_min_inlier_fraction >= 0.0 && dup_min_inlier_fraction <= 1.0)) {
    throw ConfigError("dup_min_inlier_fraction must lie in [0, 1]");
  }
}

SceneIndexEntry build_index_entry(const std::string& id, const FeatureGrid& grid, const RetrievalConfig& config) {
  SceneIndexEntry e;
  e.id = id;
  VecX mean = VecX::Zero(grid.channels());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto f = grid.feature(i);
    mean += Eigen::Map<const VecX>(f.data(), grid.channels());
  }
  e.global = normalized(mean);
  e.keypoints = select_keypoints3d(grid, config.k3d, config.nms_3d_voxels, config.score_floor_3d);
  return e;
}

VecX image_global_descriptor(const FeatureImage& f2d, const PixelMask& valid) {
  if (valid.size() != static_cast<std::size_t>(f2d.pixel_count())) throw InputError("mask size does not match image");
  VecX mean = VecX::Zero(f2d.channels);
  for (int p = 0; p < f2d.pixel_count(); ++p) {
    if (!valid[p]) continue;
    const auto px = f2d.pixel(p);
    mean += Eigen::Map<const VecX>(px.data(), f2d.channels);
  }
  return normalized(mean);
}

ImageQuery make_image_query(const FeatureImage& f2d, const ProbImage& p2d, const PixelMask& valid,
                            const Camera& camera, const RetrievalConfig& config) {
  ImageQuery q;
  q.keypoints = select_keypoints2d(p2d, f2d, config.k2d, config.nms_2d_px, config.score_floor_2d, &valid);
  q.global = image_global_descriptor(f2d, valid);
  q.camera = camera;
  return q;
}

const char* retrieval_mode_name(RetrievalMode m) {
  switch (m) {
    case RetrievalMode::kGlobal: return "global";
    case RetrievalMode::kKp: return "kp";
    case RetrievalMode::kKpCount: return "kp_count";
  }
  return "?";
}

RetrievalMode parse_retrieval_mode(const std::string& s) {
  if (s == "global") return RetrievalMode::kGlobal;
  if (s == "kp") return RetrievalMode::kKp;
  if (s == "kp_count") return RetrievalMode::kKpCount;
  throw InputError("unknown retrieval mode: " + s);
}

namespace {

void sort_ranking(std::vector<RankedScene>& r) {
  std::sort(r.begin(), r.end(), [](const RankedScene& a, const RankedScene& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.mean_cosine != b.mean_cosine) return a.mean_cosine > b.mean_cosine;
    return a.id < b.id;
  });
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RankedScene score_global(const SceneIndexEntry& e, std::size_t idx, const VecX& global) {
  RankedScene r;
  r.entry = idx;
  r.id = e.id;
  r.score = e.global.size() == global.size() ? e.global.dot(global) : 0.0;
  r.mean_cosine = r.score;
  return r;
}

RankedScene score_kp(const SceneIndexEntry& e, std::size_t idx, const ImageQuery& q, const RetrievalConfig& cfg,
                     bool verify) {
  RankedScene r;
  r.entry = idx;
  r.id = e.id;
  const MatchSet m = match_descriptors(std::span<const KeyPoint2D>(q.keypoints),
                                       std::span<const KeyPoint3D>(e.keypoints), cfg.theta);
  r.matches = static_cast<int>(m.matches.size());
  for (const auto& x : m.matches) r.mean_cosine += x.cosine;
  if (r.matches > 0) r.mean_cosine /= r.matches;
  r.score = r.matches;
  if (verify && r.matches >= 6) {
    std::vector<Vec3> pts;
    std::vector<Vec2> px;
    for (const auto& x : m.matches) {
      pts.push_back(e.keypoints[x.b].position);
      px.push_back(q.keypoints[x.a].pixel);
    }
    const PoseFit fit = ransac_pnp(pts, px, q.camera, cfg.ransac_iterations, cfg.pnp_tol_px, mix(cfg.seed, idx));
    if (fit.status == FitStatus::kOk) {
      r.inliers = fit.inlier_count;
      r.score = fit.inlier_count;
    } else {
      r.degenerate = fit.status == FitStatus::kDegenerate;
    }
  }
  return r;
}

}  // namespace

QueryResult query_image(std::span<const SceneIndexEntry> index, const ImageQuery& query, RetrievalMode mode,
                        const RetrievalConfig& config) {
  if (index.empty()) throw InputError("index is empty");
  QueryResult out;
  out.mode = mode;
  if (mode != RetrievalMode::kGlobal && query.keypoints.empty()) {
    out.fell_back_to_global = true;
    out.warning = "query has no keypoints; answered in global mode";
    mode = RetrievalMode::kGlobal;
  }
  for (std::size_t i = 0; i < index.size(); ++i) {
    out.ranking.push_back(mode == RetrievalMode::kGlobal ? score_global(index[i], i, query.global)
                                                         : score_kp(index[i], i, query, config,
                                                                    mode == RetrievalMode::kKp));
  }
  sort_ranking(out.ranking);
  return out;
}

Ren5Entry ren5_entry(const std::string& id, std::span<const Camera> views, const ImageEmbedding& embed) {
  Ren5Entry e;
  e.id = id;
  for (const auto& cam : views) e.views.push_back(normalized(embed(cam)));
  return e;
}

std::vector<RankedScene> ren5_rank(std::span<const Ren5Entry> index, const VecX& query_embedding) {
  const VecX q = normalized(query_embedding);
  std::vector<RankedScene> out;
  for (std::size_t i = 0; i < index.size(); ++i) {
    RankedScene r;
    r.entry = i;
    r.id = index[i].id;
    r.score = -1.0;
    for (const auto& v : index[i].views) r.score = std::max(r.score, v.size() == q.size() ? v.dot(q) : -1.0);
    r.mean_cosine = r.score;
    out.push_back(std::move(r));
  }
  sort_ranking(out);
  return out;
}

DupResult dup_detect(std::span<const SceneIndexEntry> index, std::span<const DupPair> pairs, RetrievalMode mode,
                     const RetrievalConfig& config) {
  if (mode == RetrievalMode::kKpCount) throw InputError("duplicate detection supports global and kp modes");
  DupResult out;
  out.mode = mode;
  int labeled = 0, correct = 0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const DupPair& pair = pairs[p];
    if (pair.a >= index.size() || pair.b >= index.size()) throw InputError("pair refers to a missing index entry");
    const SceneIndexEntry& a = index[pair.a];
    const SceneIndexEntry& b = index[pair.b];
    DupVerdict v{pair.a, pair.b, false, 0.0, pair.label};
    if (mode == RetrievalMode::kGlobal) {
      v.score = a.global.size() == b.global.size() ? a.global.dot(b.global) : 0.0;
      v.duplicate = v.score >= config.theta;
    } else {
      const MatchSet m = match_descriptors(std::span<const KeyPoint3D>(a.keypoints),
                                           std::span<const KeyPoint3D>(b.keypoints), config.theta);
      if (m.matches.size() >= 3) {
        std::vector<Vec3> src, dst;
        for (const auto& x : m.matches) {
          src.push_back(a.keypoints[x.a].position);
          dst.push_back(b.keypoints[x.b].position);
        }
        const RigidFit fit = ransac_rigid(src, dst, config.ransac_iterations, config.rigid_tol, mix(config.seed, p));
        // Any three matches fit exactly, so at least one inlier must come from outside the sample.
        if (fit.status == FitStatus::kOk && fit.inlier_count > 3) {
          v.score = static_cast<double>(fit.inlier_count) / static_cast<double>(m.matches.size());
        }
      }
      v.duplicate = v.score >= config.dup_min_inlier_fraction && v.score > 0.0;
    }
    if (v.label) {
      ++labeled;
      if (*v.label == v.duplicate) ++correct;
    }
    out.verdicts.push_back(v);
  }
  if (labeled > 0) out.ap75 = static_cast<double>(correct) / labeled;
  return out;
}

}  // namespace voxsync

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxsync/grid.hpp"
#include "voxsync/model.hpp"
#include "voxsync/oracle.hpp"
#include "voxsync/retrieval.hpp"

namespace voxsync {

inline constexpr std::uint32_t kCorpusVersion = 1;
inline constexpr std::uint32_t kGridVersion = 1;
inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::uint32_t kIndexVersion = 1;
inline constexpr std::uint32_t kFeatureMapVersion = 1;

// "CDCP": seed, scenes with spec, cameras, optional duplicate link and transform.
std::vector<std::uint8_t> encode_corpus(const Corpus& corpus);
Corpus decode_corpus(const std::vector<std::uint8_t>& bytes);

// "CDGF": R, C, N, sites, then f32 densities, features and keypoint logits.
// Values are stored in single precision.
std::vector<std::uint8_t> encode_grid(const FeatureGrid& grid);
FeatureGrid decode_grid(const std::vector<std::uint8_t>& bytes);

// "CDMP": per head its layer shapes and f64 parameters.
std::vector<std::uint8_t> encode_model(const ModelParams& params);
ModelParams decode_model(const std::vector<std::uint8_t>& bytes);

// "CDIX": per entry id, global descriptor and keypoints (position, score, descriptor) in f32.
std::vector<std::uint8_t> encode_index(const std::vector<SceneIndexEntry>& index);
std::vector<SceneIndexEntry> decode_index(const std::vector<std::uint8_t>& bytes);

/// Externally supplied query: a teacher feature map with its camera and pixel mask.
struct FeatureMapFile {
  Camera camera;
  FeatureImage teacher;
  PixelMask valid;
};

// "CDFM": C, camera (pose and intrinsics in f64, then W, H), u8 mask, f32 features.
std::vector<std::uint8_t> encode_feature_map(const FeatureMapFile& map);
FeatureMapFile decode_feature_map(const std::vector<std::uint8_t>& bytes);

}  // namespace voxsync

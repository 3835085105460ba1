#include "voxsync/formats.hpp"

#include "voxsync/binary_io.hpp"
#include "voxsync/error.hpp"

namespace voxsync {

namespace {

void put_camera(ByteWriter& w, const Camera& c) {
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) w.f64(c.rotation(r, k));
  for (int k = 0; k < 3; ++k) w.f64(c.translation[k]);
  w.f64(c.fx);
  w.f64(c.fy);
  w.f64(c.cx);
  w.f64(c.cy);
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.height));
}

Camera get_camera(ByteReader& r) {
  Camera c;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = r.f64();
  for (int k = 0; k < 3; ++k) c.translation[k] = r.f64();
  c.fx = r.f64();
  c.fy = r.f64();
  c.cx = r.f64();
  c.cy = r.f64();
  c.width = static_cast<int>(r.u32());
  c.height = static_cast<int>(r.u32());
  try {
    c.validate();
  } catch (const InputError& e) {
    throw FormatError(std::string("invalid camera: ") + e.what());
  }
  return c;
}

void put_spec(ByteWriter& w, const SceneSpec& s) {
  w.i32(s.min_blobs);
  w.i32(s.max_blobs);
  w.f64(s.min_radius);
  w.f64(s.max_radius);
  w.f64(s.min_density);
  w.f64(s.max_density);
  w.i32(s.feature_dim);
  w.f64(s.placement_radius);
  w.i32(s.palette_size);
  w.f64(s.palette_jitter);
  w.u64(s.palette_seed);
}

SceneSpec get_spec(ByteReader& r) {
  SceneSpec s;
  s.min_blobs = r.i32();
  s.max_blobs = r.i32();
  s.min_radius = r.f64();
  s.max_radius = r.f64();
  s.min_density = r.f64();
  s.max_density = r.f64();
  s.feature_dim = r.i32();
  s.placement_radius = r.f64();
  s.palette_size = r.i32();
  s.palette_jitter = r.f64();
  s.palette_seed = r.u64();
  try {
    s.validate();
  } catch (const InputError& e) {
    throw FormatError(std::string("invalid scene spec: ") + e.what());
  }
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_corpus(const Corpus& corpus) {
  ByteWriter w;
  w.magic("CDCP");
  w.u32(kCorpusVersion);
  w.u64(corpus.seed);
  w.u32(static_cast<std::uint32_t>(corpus.scenes.size()));
  for (const auto& s : corpus.scenes) {
    w.u64(s.seed);
    put_spec(w, s.spec);
    w.u32(static_cast<std::uint32_t>(s.cameras.size()));
    for (const auto& c : s.cameras) put_camera(w, c);
    w.u8(s.duplicate_of ? 1 : 0);
    if (s.duplicate_of) w.u32(*s.duplicate_of);
    w.u8(s.planted_transform ? 1 : 0);
    if (s.planted_transform) {
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) w.f64(s.planted_transform->rotation(r, k));
      for (int k = 0; k < 3; ++k) w.f64(s.planted_transform->translation[k]);
    }
  }
  return w.take();
}

Corpus decode_corpus(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "corpus");
  r.header("CDCP", kCorpusVersion);
  Corpus corpus;
  corpus.seed = r.u64();
  const std::size_t n = r.count(8);
  for (std::size_t i = 0; i < n; ++i) {
    CorpusScene s;
    s.seed = r.u64();
    s.spec = get_spec(r);
    const std::size_t nc = r.count(8);
    for (std::size_t c = 0; c < nc; ++c) s.cameras.push_back(get_camera(r));
    if (r.u8()) {
      s.duplicate_of = r.u32();
      if (*s.duplicate_of >= n) throw FormatError("corpus: duplicate link points past the scene list");
    }
    if (r.u8()) {
      RigidTransform t;
      for (int a = 0; a < 3; ++a)
        for (int k = 0; k < 3; ++k) t.rotation(a, k) = r.f64();
      for (int k = 0; k < 3; ++k) t.translation[k] = r.f64();
      s.planted_transform = t;
    }
    corpus.scenes.push_back(std::move(s));
  }
  r.finish();
  return corpus;
}

std::vector<std::uint8_t> encode_grid(const FeatureGrid& grid) {
  ByteWriter w;
  w.magic("CDGF");
  w.u32(kGridVersion);
  w.u32(static_cast<std::uint32_t>(grid.resolution()));
  w.u32(static_cast<std::uint32_t>(grid.channels()));
  w.u32(static_cast<std::uint32_t>(grid.size()));
  for (const auto& s : grid.lattice().sites()) {
    w.u32(s.x);
    w.u32(s.y);
    w.u32(s.z);
  }
  for (double d : grid.densities()) w.f32(static_cast<float>(d));
  for (double f : grid.features()) w.f32(static_cast<float>(f));
  for (double k : grid.kp_logits()) w.f32(static_cast<float>(k));
  return w.take();
}

FeatureGrid decode_grid(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "grid");
  r.header("CDGF", kGridVersion);
  const auto res = static_cast<int>(r.u32());
  const auto channels = static_cast<int>(r.u32());
  if (res < 2 || channels < 1) throw FormatError("grid: invalid resolution or channel count");
  const std::size_t n = r.count(12);
  std::vector<LatticeIndex> sites(n);
  for (auto& s : sites) {
    s.x = r.u32();
    s.y = r.u32();
    s.z = r.u32();
  }
  std::vector<double> dens(n);
  for (auto& d : dens) d = r.f32();
  FeatureGrid grid;
  try {
    SparseLattice lattice(res, sites);
    if (lattice.sites() != sites) throw FormatError("grid: sites are not in storage order");
    grid = FeatureGrid(std::move(lattice), channels, std::move(dens));
  } catch (const InputError& e) {
    throw FormatError(std::string("grid: ") + e.what());
  }
  for (auto& f : grid.features()) f = r.f32();
  for (auto& k : grid.kp_logits()) k = r.f32();
  r.finish();
  return grid;
}

std::vector<std::uint8_t> encode_model(const ModelParams& params) {
  ByteWriter w;
  w.magic("CDMP");
  w.u32(kModelVersion);
  const auto heads = params.heads();
  w.u32(static_cast<std::uint32_t>(heads.size()));
  for (const Mlp* m : heads) {
    w.u32(static_cast<std::uint32_t>(m->layers().size()));
    for (const auto& l : m->layers()) {
      w.u32(static_cast<std::uint32_t>(l.in));
      w.u32(static_cast<std::uint32_t>(l.out));
      w.u8(static_cast<std::uint8_t>(l.activation));
    }
    for (double v : m->params()) w.f64(v);
  }
  return w.take();
}

ModelParams decode_model(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "model");
  r.header("CDMP", kModelVersion);
  ModelParams p;
  auto heads = p.heads();
  if (r.u32() != heads.size()) throw FormatError("model: unexpected head count");
  for (Mlp* m : heads) {
    const std::size_t nl = r.count(9);
    std::vector<LayerShape> layers(nl);
    for (auto& l : layers) {
      l.in = static_cast<int>(r.u32());
      l.out = static_cast<int>(r.u32());
      const std::uint8_t a = r.u8();
      if (a > static_cast<std::uint8_t>(Activation::kSigmoid)) throw FormatError("model: unknown activation");
      l.activation = static_cast<Activation>(a);
    }
    try {
      *m = Mlp(std::move(layers));
    } catch (const InputError& e) {
      throw FormatError(std::string("model: ") + e.what());
    }
    for (auto& v : m->mutable_params()) v = r.f64();
  }
  r.finish();
  if (p.fid_head.input_dim() != p.hidden_dim() || p.det2d.input_dim() != p.feature_dim() ||
      p.det3d.input_dim() != p.feature_dim() || p.student2d.output_dim() != p.feature_dim()) {
    throw FormatError("model: head dimensions do not fit together");
  }
  return p;
}

std::vector<std::uint8_t> encode_index(const std::vector<SceneIndexEntry>& index) {
  ByteWriter w;
  w.magic("CDIX");
  w.u32(kIndexVersion);
  w.u32(static_cast<std::uint32_t>(index.size()));
  for (const auto& e : index) {
    w.string(e.id);
    w.u32(static_cast<std::uint32_t>(e.global.size()));
    for (double v : e.global) w.f32(static_cast<float>(v));
    w.u32(static_cast<std::uint32_t>(e.keypoints.size()));
    for (const auto& k : e.keypoints) {
      if (k.descriptor.size() != e.global.size()) throw InputError("keypoint descriptor size differs from C");
      for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(k.position[a]));
      w.f32(static_cast<float>(k.score));
      for (double v : k.descriptor) w.f32(static_cast<float>(v));
    }
  }
  return w.take();
}

std::vector<SceneIndexEntry> decode_index(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "index");
  r.header("CDIX", kIndexVersion);
  const std::size_t n = r.count(12);
  std::vector<SceneIndexEntry> index(n);
  for (auto& e : index) {
    e.id = r.string();
    const std::size_t c = r.count(4);
    e.global.resize(static_cast<Eigen::Index>(c));
    for (auto& v : e.global) v = r.f32();
    const std::size_t nk = r.count(4 * (4 + c));
    e.keypoints.resize(nk);
    for (auto& k : e.keypoints) {
      for (int a = 0; a < 3; ++a) k.position[a] = r.f32();
      k.score = r.f32();
      k.descriptor.resize(static_cast<Eigen::Index>(c));
      for (auto& v : k.descriptor) v = r.f32();
    }
  }
  r.finish();
  return index;
}

std::vector<std::uint8_t> encode_feature_map(const FeatureMapFile& map) {
  const FeatureImage& t = map.teacher;
  if (t.width != map.camera.width || t.height != map.camera.height) throw InputError("feature map size differs from camera");
  if (map.valid.size() != static_cast<std::size_t>(t.pixel_count())) throw InputError("mask size differs from image");
  ByteWriter w;
  w.magic("CDFM");
  w.u32(kFeatureMapVersion);
  w.u32(static_cast<std::uint32_t>(t.channels));
  put_camera(w, map.camera);
  for (auto m : map.valid) w.u8(m ? 1 : 0);
  for (double v : t.data) w.f32(static_cast<float>(v));
  return w.take();
}

FeatureMapFile decode_feature_map(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "feature map");
  r.header("CDFM", kFeatureMapVersion);
  FeatureMapFile m;
  const auto channels = static_cast<int>(r.u32());
  if (channels < 1) throw FormatError("feature map: channel count must be positive");
  m.camera = get_camera(r);
  m.teacher = FeatureImage(m.camera.width, m.camera.height, channels);
  m.valid.resize(static_cast<std::size_t>(m.teacher.pixel_count()));
  for (auto& v : m.valid) {
    v = r.u8();
    if (v > 1) throw FormatError("feature map: mask bytes must be 0 or 1");
  }
  for (auto& v : m.teacher.data) v = r.f32();
  r.finish();
  return m;
}

}  // namespace voxsync

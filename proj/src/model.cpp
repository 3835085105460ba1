#include "voxsync/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "voxsync/error.hpp"

namespace voxsync {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

Mlp::Mlp(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InputError("an Mlp needs at least one layer");
  std::size_t total = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    if (s.in <= 0 || s.out <= 0) throw InputError("Mlp layer dims must be positive");
    if (l > 0 && layers_[l - 1].out != s.in) {
      throw InputError("Mlp layer " + std::to_string(l) + " input does not match previous output");
    }
    offsets_.push_back(total);
    total += static_cast<std::size_t>(s.in) * s.out + s.out;
  }
  params_.assign(total, 0.0);
}

Eigen::Map<const RowMatrix> Mlp::weight(std::size_t l) const {
  return {params_.data() + offsets_[l], layers_[l].out, layers_[l].in};
}
Eigen::Map<RowMatrix> Mlp::weight(std::size_t l) {
  ++version_;
  return {params_.data() + offsets_[l], layers_[l].out, layers_[l].in};
}
Eigen::Map<const VecX> Mlp::bias(std::size_t l) const {
  return {params_.data() + offsets_[l] + static_cast<std::size_t>(layers_[l].out) * layers_[l].in, layers_[l].out};
}
Eigen::Map<VecX> Mlp::bias(std::size_t l) {
  ++version_;
  return {params_.data() + offsets_[l] + static_cast<std::size_t>(layers_[l].out) * layers_[l].in, layers_[l].out};
}

namespace {

void activate(Activation a, RowMatrix& m) {
  switch (a) {
    case Activation::kIdentity: break;
    case Activation::kRelu: m = m.cwiseMax(0.0); break;
    case Activation::kSigmoid: m = m.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }); break;
  }
}

}  // namespace

MlpCache Mlp::forward(const RowMatrix& x) const {
  if (x.cols() != input_dim()) {
    throw InputError("Mlp input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(input_dim()));
  }
  MlpCache cache;
  cache.version = version_;
  cache.owner = this;
  RowMatrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    cache.inputs.push_back(h);
    RowMatrix pre = h * weight(l).transpose();
    pre.rowwise() += bias(l).transpose();
    cache.preactivations.push_back(pre);
    activate(layers_[l].activation, pre);
    h = std::move(pre);
  }
  cache.output = std::move(h);
  return cache;
}

MlpGradients Mlp::backward(const MlpCache& cache, const RowMatrix& upstream,
                           std::span<const LayerInjection> injections) const {
  if (cache.owner != this || cache.version != version_ || cache.inputs.size() != layers_.size()) {
    throw ContractError("Mlp backward called with a stale or foreign forward cache");
  }
  if (upstream.rows() != cache.output.rows() || upstream.cols() != output_dim()) {
    throw InputError("Mlp upstream gradient shape mismatch");
  }
  MlpGradients g;
  g.params.assign(params_.size(), 0.0);
  RowMatrix delta = upstream;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    for (const auto& inj : injections) {
      if (inj.layer != li) continue;
      if (inj.gradient.rows() != delta.rows() || inj.gradient.cols() != delta.cols()) {
        throw InputError("Mlp injected gradient shape mismatch at layer " + std::to_string(li));
      }
      delta += inj.gradient;
    }
    const RowMatrix& pre = cache.preactivations[li];
    switch (layers_[li].activation) {
      case Activation::kIdentity: break;
      case Activation::kRelu: delta = delta.cwiseProduct(pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
        break;
      case Activation::kSigmoid:
        delta = delta.cwiseProduct(pre.unaryExpr([](double v) {
          const double s = 1.0 / (1.0 + std::exp(-v));
          return s * (1.0 - s);
        }));
        break;
    }
    const auto& s = layers_[li];
    Eigen::Map<RowMatrix> gw(g.params.data() + offsets_[li], s.out, s.in);
    Eigen::Map<VecX> gb(g.params.data() + offsets_[li] + static_cast<std::size_t>(s.out) * s.in, s.out);
    gw.noalias() = delta.transpose() * cache.inputs[li];
    gb = delta.colwise().sum().transpose();
    delta = delta * weight(li);
  }
  g.input = std::move(delta);
  return g;
}

std::pair<VecX, MlpCache> mlp_forward(const Mlp& mlp, std::span<const double> x) {
  RowMatrix in(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) in(0, static_cast<Eigen::Index>(i)) = x[i];
  MlpCache cache = mlp.forward(in);
  VecX out = cache.output.row(0).transpose();
  return {std::move(out), std::move(cache)};
}

MlpGradients mlp_backward(const Mlp& mlp, const MlpCache& cache, std::span<const double> upstream) {
  RowMatrix u(1, static_cast<Eigen::Index>(upstream.size()));
  for (std::size_t i = 0; i < upstream.size(); ++i) u(0, static_cast<Eigen::Index>(i)) = upstream[i];
  return mlp.backward(cache, u);
}

std::vector<std::uint8_t> relu_pattern(const MlpCache& cache, const Mlp& mlp) {
  std::vector<std::uint8_t> pattern;
  for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
    if (mlp.layers()[l].activation != Activation::kRelu) continue;
    const RowMatrix& pre = cache.preactivations[l];
    for (Eigen::Index i = 0; i < pre.size(); ++i) pattern.push_back(pre.data()[i] > 0.0 ? 1 : 0);
  }
  return pattern;
}

ModelParams ModelParams::initialize(int c, int h, std::uint64_t seed, double noise) {
  if (c < 1 || h < 1) throw InputError("feature and hidden dims must be positive");
  ModelParams p;
  p.student2d = Mlp({{c, h, Activation::kRelu}, {h, c, Activation::kIdentity}});
  p.fid_head = Mlp({{h, c, Activation::kIdentity}});
  p.det2d = Mlp({{c, h, Activation::kRelu}, {h, 1, Activation::kSigmoid}});
  p.det3d = Mlp({{c, h, Activation::kRelu}, {h, 1, Activation::kIdentity}});

  // relu([x; -x]) followed by [I, -I] reproduces x, so with h >= 2c the student
  // and fidelity head start as the identity map.
  {
    auto w1 = p.student2d.weight(0);
    auto w2 = p.student2d.weight(1);
    auto wf = p.fid_head.weight(0);
    for (int i = 0; i < c; ++i) {
      if (i < h) {
        w1(i, i) = 1.0;
        w2(i, i) = 1.0;
        wf(i, i) = 1.0;
      }
      if (c + i < h) {
        w1(c + i, i) = -1.0;
        w2(i, c + i) = -1.0;
        wf(i, c + i) = -1.0;
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Mlp* m : {&p.student2d, &p.fid_head}) {
    for (auto& v : m->mutable_params()) v += noise * normal(rng);
  }
  for (Mlp* m : {&p.det2d, &p.det3d}) {
    for (std::size_t l = 0; l < m->layers().size(); ++l) {
      auto w = m->weight(l);
      const double scale = 1.0 / std::sqrt(static_cast<double>(m->layers()[l].in));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * normal(rng);
    }
  }
  p.det2d.bias(1)[0] = -2.0;
  p.det2d.bias(0).setConstant(0.1);
  p.det3d.bias(0).setConstant(0.1);
  // Start the 3D detector active (output 0.1 at zero features) so its ReLU head passes gradient.
  p.det3d.bias(1)[0] = 0.1 - 0.1 * p.det3d.weight(1).sum();
  return p;
}

RowMatrix image_matrix(const FeatureImage& image) {
  return Eigen::Map<const RowMatrix>(image.data.data(), image.pixel_count(), image.channels);
}

RowMatrix grid_feature_matrix(const FeatureGrid& grid) {
  return Eigen::Map<const RowMatrix>(grid.features().data(), static_cast<Eigen::Index>(grid.size()),
                                     grid.channels());
}

Student2dOutput student2d_forward(const ModelParams& params, const FeatureImage& teacher) {
  if (teacher.channels != params.feature_dim()) {
    throw InputError("teacher map has " + std::to_string(teacher.channels) + " channels, model expects " +
                     std::to_string(params.feature_dim()));
  }
  const RowMatrix x = image_matrix(teacher);
  const MlpCache s = params.student2d.forward(x);
  const MlpCache f = params.fid_head.forward(s.inputs[1]);
  const MlpCache d = params.det2d.forward(s.output);

  const int w = teacher.width, h = teacher.height;
  Student2dOutput out{FeatureImage(w, h, params.feature_dim()), FeatureImage(w, h, params.hidden_dim()),
                      FeatureImage(w, h, params.fid_head.output_dim()), ProbImage(w, h)};
  Eigen::Map<RowMatrix>(out.features.data.data(), w * h, out.features.channels) = s.output;
  Eigen::Map<RowMatrix>(out.hidden.data.data(), w * h, out.hidden.channels) = s.inputs[1];
  Eigen::Map<RowMatrix>(out.fidelity.data.data(), w * h, out.fidelity.channels) = f.output;
  for (int i = 0; i < w * h; ++i) out.keypoints.data[i] = d.output(i, 0);
  return out;
}

void det3d_logits_to_grid(const ModelParams& params, FeatureGrid& grid) {
  if (grid.channels() != params.det3d.input_dim()) throw InputError("det3d input dim differs from grid channels");
  if (grid.empty()) return;
  const MlpCache c = params.det3d.forward(grid_feature_matrix(grid));
  auto logits = grid.kp_logits();
  for (std::size_t i = 0; i < grid.size(); ++i) logits[i] = c.output(static_cast<Eigen::Index>(i), 0);
}

}  // namespace voxsync

#include "ignd/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "ignd/errors.hpp"

namespace ignd {

LinearModel::LinearModel(Index input_dim) : input_dim_(input_dim) {
  if (input_dim < 1) throw DimensionMismatch("LinearModel: input_dim must be >= 1");
}

double LinearModel::predict(const Vector& w, const Vector& x) const {
  if (w.size() != input_dim_ || x.size() != input_dim_) {
    throw DimensionMismatch("LinearModel: weight/input size mismatch");
  }
  return w.dot(x);
}

GradEval LinearModel::eval(const Vector& w, const Vector& x, double target) const {
  GradEval ev;
  ev.value = predict(w, x);
  ev.gradient = x;
  ev.residual = target - ev.value;
  ev.grad_sq_norm = x.squaredNorm();
  return ev;
}

Index mlp_param_count(Index input_dim, const std::vector<LayerSpec>& layers) {
  Index count = 0;
  Index in = input_dim;
  for (const auto& l : layers) {
    count += in * l.width + l.width;
    in = l.width;
  }
  return count;
}

Mlp::Mlp(Index input_dim, std::vector<LayerSpec> layers)
    : input_dim_(input_dim), specs_(std::move(layers)) {
  if (input_dim_ < 1) throw DimensionMismatch("Mlp: input_dim must be >= 1");
  if (specs_.empty()) throw DimensionMismatch("Mlp: at least one layer required");
  const auto& last = specs_.back();
  if (last.width != 1 || last.activation != Activation::identity) {
    throw DimensionMismatch("Mlp: output layer must be width 1 with identity activation");
  }
  Index in = input_dim_;
  Index offset = 0;
  for (const auto& spec : specs_) {
    if (spec.width < 1) throw DimensionMismatch("Mlp: layer width must be >= 1");
    LayerLayout l;
    l.in = in;
    l.out = spec.width;
    l.weight_offset = offset;
    l.bias_offset = offset + in * spec.width;
    l.activation = spec.activation;
    offset = l.bias_offset + spec.width;
    layout_.push_back(l);
    in = spec.width;
  }
  param_count_ = offset;
}

Vector Mlp::init(Rng& rng) const {
  Vector w = Vector::Zero(param_count_);
  for (const auto& l : layout_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (Index k = 0; k < l.in * l.out; ++k) w[l.weight_offset + k] = rng.uniform(-limit, limit);
  }
  return w;
}

void Mlp::forward(const Vector& w, const Vector& x, Workspace& ws) const {
  if (x.size() != input_dim_) throw DimensionMismatch("Mlp: input dimension mismatch");
  if (w.size() != param_count_) throw DimensionMismatch("Mlp: weight dimension mismatch");
  const std::size_t n = layout_.size();
  ws.activations.resize(n + 1);
  ws.pre_activations.resize(n);
  ws.activations[0] = x;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = layout_[i];
    Eigen::Map<const RowMajorMatrix> W(w.data() + l.weight_offset, l.out, l.in);
    Eigen::Map<const Vector> b(w.data() + l.bias_offset, l.out);
    ws.pre_activations[i].noalias() = W * ws.activations[i];
    ws.pre_activations[i] += b;
    if (l.activation == Activation::relu) {
      ws.activations[i + 1] = ws.pre_activations[i].cwiseMax(0.0);
    } else {
      ws.activations[i + 1] = ws.pre_activations[i];
    }
  }
}

double Mlp::predict(const Vector& w, const Vector& x, Workspace& ws) const {
  forward(w, x, ws);
  return ws.activations.back()[0];
}

double Mlp::predict(const Vector& w, const Vector& x) const {
  Workspace ws;
  return predict(w, x, ws);
}

GradEval Mlp::eval(const Vector& w, const Vector& x, double target, Workspace& ws) const {
  forward(w, x, ws);
  GradEval ev;
  ev.value = ws.activations.back()[0];
  ev.residual = target - ev.value;
  ev.gradient.resize(param_count_);

  // d f / d (pre-activation of layer i); the output layer is identity.
  ws.delta = Vector::Ones(1);
  for (std::size_t i = layout_.size(); i-- > 0;) {
    const auto& l = layout_[i];
    Eigen::Map<RowMajorMatrix> gW(ev.gradient.data() + l.weight_offset, l.out, l.in);
    Eigen::Map<Vector> gb(ev.gradient.data() + l.bias_offset, l.out);
    gW.noalias() = ws.delta * ws.activations[i].transpose();
    gb = ws.delta;
    if (i == 0) break;
    Eigen::Map<const RowMajorMatrix> W(w.data() + l.weight_offset, l.out, l.in);
    ws.delta_next.noalias() = W.transpose() * ws.delta;
    if (layout_[i - 1].activation == Activation::relu) {
      // Subgradient 0 at the kink.
      const Vector& z = ws.pre_activations[i - 1];
      for (Index k = 0; k < z.size(); ++k) {
        if (!(z[k] > 0.0)) ws.delta_next[k] = 0.0;
      }
    }
    std::swap(ws.delta, ws.delta_next);
  }
  ev.grad_sq_norm = ev.gradient.squaredNorm();
  return ev;
}

GradEval Mlp::eval(const Vector& w, const Vector& x, double target) const {
  Workspace ws;
  return eval(w, x, target, ws);
}

std::vector<LayerParams> Mlp::unflatten(const Vector& w) const {
  if (w.size() != param_count_) throw DimensionMismatch("Mlp::unflatten: size mismatch");
  std::vector<LayerParams> out;
  out.reserve(layout_.size());
  for (const auto& l : layout_) {
    LayerParams p;
    p.weights = Eigen::Map<const RowMajorMatrix>(w.data() + l.weight_offset, l.out, l.in);
    p.bias = Eigen::Map<const Vector>(w.data() + l.bias_offset, l.out);
    out.push_back(std::move(p));
  }
  return out;
}

Vector Mlp::flatten(const std::vector<LayerParams>& params) const {
  if (params.size() != layout_.size()) throw DimensionMismatch("Mlp::flatten: layer count");
  Vector w(param_count_);
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const auto& l = layout_[i];
    if (params[i].weights.rows() != l.out || params[i].weights.cols() != l.in ||
        params[i].bias.size() != l.out) {
      throw DimensionMismatch("Mlp::flatten: layer shape mismatch");
    }
    Eigen::Map<RowMajorMatrix>(w.data() + l.weight_offset, l.out, l.in) = params[i].weights;
    Eigen::Map<Vector>(w.data() + l.bias_offset, l.out) = params[i].bias;
  }
  return w;
}

std::vector<LayerSpec> relu_network(const std::vector<Index>& hidden) {
  std::vector<LayerSpec> layers;
  for (Index width : hidden) layers.push_back({width, Activation::relu});
  layers.push_back({1, Activation::identity});
  return layers;
}

Index param_count(const Model& model) {
  return std::visit([](const auto& m) { return m.param_count(); }, model);
}

Index input_dim(const Model& model) {
  return std::visit([](const auto& m) { return m.input_dim(); }, model);
}

double predict(const Model& model, const Vector& w, const Vector& x) {
  return std::visit([&](const auto& m) { return m.predict(w, x); }, model);
}

GradEval eval_with_gradient(const Model& model, const Vector& w, const Vector& x, double target) {
  return std::visit([&](const auto& m) { return m.eval(w, x, target); }, model);
}

Vector initial_weights(const Model& model, Rng& rng) {
  if (const auto* mlp = std::get_if<Mlp>(&model)) return mlp->init(rng);
  return Vector::Zero(param_count(model));
}

Vector tabular_features(Index state, Index action, Index n_states, Index n_actions,
                        const std::optional<Vector>& scale) {
  if (state < 0 || state >= n_states || action < 0 || action >= n_actions) {
    throw IndexOutOfRange("tabular_features: state/action index out of range");
  }
  const Index m = n_states * n_actions;
  const Index hot = state * n_actions + action;
  Vector x = Vector::Zero(m);
  if (scale) {
    if (scale->size() != m) throw DimensionMismatch("tabular_features: scale length");
    if ((scale->array() == 0.0).any()) throw ZeroScale("tabular_features: zero scale entry");
    x[hot] = (*scale)[hot];
  } else {
    x[hot] = 1.0;
  }
  return x;
}

namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw ParseError(0, 0, "checkpoint truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

constexpr std::array<char, 4> kMagic = {'I', 'G', 'N', 'W'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Mlp& model, const Vector& w) {
  if (w.size() != model.param_count()) throw DimensionMismatch("save_checkpoint: weight size");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("save_checkpoint: cannot open " + path.string());
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, 1);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.layers().size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.input_dim()));
  for (const auto& l : model.layers()) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.width));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.activation));
  }
  put_le<std::uint64_t>(os, static_cast<std::uint64_t>(w.size()));
  for (Index i = 0; i < w.size(); ++i) put_le<double>(os, w[i]);
  if (!os) throw Error("save_checkpoint: write failed");
}

std::pair<Mlp, Vector> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load_checkpoint: cannot open " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw ParseError(0, 0, "checkpoint: bad magic");
  if (get_le<std::uint32_t>(is) != 1) throw ParseError(0, 4, "checkpoint: unsupported version");
  const auto n_layers = get_le<std::uint32_t>(is);
  const auto input = get_le<std::uint32_t>(is);
  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    l.width = get_le<std::uint32_t>(is);
    const auto act = get_le<std::uint32_t>(is);
    if (act > 1) throw ParseError(0, 0, "checkpoint: unknown activation code");
    l.activation = static_cast<Activation>(act);
    layers.push_back(l);
  }
  Mlp model(input, std::move(layers));
  const auto count = get_le<std::uint64_t>(is);
  if (count != static_cast<std::uint64_t>(model.param_count())) {
    throw ParseError(0, 0, "checkpoint: parameter count does not match layout");
  }
  Vector w(model.param_count());
  for (Index i = 0; i < w.size(); ++i) w[i] = get_le<double>(is);
  return {std::move(model), std::move(w)};
}

}  // namespace ignd

#pragma once

// Scalar-output function approximators with per-sample gradients.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "ignd/rng.hpp"
#include "ignd/types.hpp"

namespace ignd {

enum class Activation : std::uint32_t { relu = 0, identity = 1 };

struct LayerSpec {
  Index width = 1;
  Activation activation = Activation::identity;
};

/// One forward/backward evaluation at a single sample.
struct GradEval {
  double value = 0;         // f_w(x)
  Vector gradient;          // grad_w f_w(x)
  double residual = 0;      // target - value
  double grad_sq_norm = 0;  // |grad_w f_w(x)|^2
};

/// f_w(x) = w^T x, no bias. The tabular model is this over one-hot features.
class LinearModel {
 public:
  explicit LinearModel(Index input_dim);

  Index input_dim() const { return input_dim_; }
  Index param_count() const { return input_dim_; }

  double predict(const Vector& w, const Vector& x) const;
  GradEval eval(const Vector& w, const Vector& x, double target) const;

 private:
  Index input_dim_;
};

/// Offsets of each layer's weights and biases inside the flat parameter vector.
/// Per layer: the (out x in) weight matrix row-major, then the bias.
struct LayerLayout {
  Index in = 0;
  Index out = 0;
  Index weight_offset = 0;
  Index bias_offset = 0;
  Activation activation = Activation::identity;
};

struct LayerParams {
  RowMajorMatrix weights;
  Vector bias;
};

/// Feed-forward network with scalar output and exact reverse-mode gradients.
class Mlp {
 public:
  /// Scratch buffers for one evaluation; reuse across calls to avoid allocation.
  struct Workspace {
    std::vector<Vector> activations;
    std::vector<Vector> pre_activations;
    Vector delta;
    Vector delta_next;
  };

  /// `layers` must end with a width-1 identity layer.
  Mlp(Index input_dim, std::vector<LayerSpec> layers);

  Index input_dim() const { return input_dim_; }
  Index param_count() const { return param_count_; }
  const std::vector<LayerSpec>& layers() const { return specs_; }
  const std::vector<LayerLayout>& layout() const { return layout_; }

  /// Glorot-uniform weights, zero biases.
  Vector init(Rng& rng) const;

  double predict(const Vector& w, const Vector& x, Workspace& ws) const;
  double predict(const Vector& w, const Vector& x) const;
  GradEval eval(const Vector& w, const Vector& x, double target, Workspace& ws) const;
  GradEval eval(const Vector& w, const Vector& x, double target) const;

  std::vector<LayerParams> unflatten(const Vector& w) const;
  Vector flatten(const std::vector<LayerParams>& params) const;

 private:
  void forward(const Vector& w, const Vector& x, Workspace& ws) const;

  Index input_dim_;
  std::vector<LayerSpec> specs_;
  std::vector<LayerLayout> layout_;
  Index param_count_ = 0;
};

using Model = std::variant<LinearModel, Mlp>;

Index param_count(const Model& model);
Index input_dim(const Model& model);
double predict(const Model& model, const Vector& w, const Vector& x);
GradEval eval_with_gradient(const Model& model, const Vector& w, const Vector& x, double target);

/// Initial weights: Glorot for networks, zeros for the linear model.
Vector initial_weights(const Model& model, Rng& rng);

/// Builds [hidden..., 1] with ReLU hidden layers and identity output.
std::vector<LayerSpec> relu_network(const std::vector<Index>& hidden);

/// Parameter count for a layer stack: sum of in*out + out.
Index mlp_param_count(Index input_dim, const std::vector<LayerSpec>& layers);

/// One-hot (optionally scaled) encoding of a state-action pair at flat index
/// state * n_actions + action.
Vector tabular_features(Index state, Index action, Index n_states, Index n_actions,
                        const std::optional<Vector>& scale = std::nullopt);

/// Weight checkpoint, little-endian:
///   "IGNW" | u32 version=1 | u32 layer_count L | u32 input_dim
///   | L x (u32 width, u32 activation) | u64 param_count | param_count x f64
void save_checkpoint(const std::filesystem::path& path, const Mlp& model, const Vector& w);
std::pair<Mlp, Vector> load_checkpoint(const std::filesystem::path& path);

}  // namespace ignd

#pragma once

#include "contractgen/linalg.hpp"
#include "contractgen/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace contractgen::nn {

/// Hidden-layer nonlinearity. The default is smooth (C^infinity), which keeps
/// finite-difference gradient audits meaningful at tight tolerances.
enum class Activation { identity, relu, tanh, silu };

/// Parses "identity" | "relu" | "tanh" | "silu"; throws ConfigError otherwise.
Activation activation_from_name(const std::string& name);
const char* activation_name(Activation act);

struct Layer {
  Matrix w;                ///< out x in
  Matrix wt;               ///< in x out, cached transpose used by forward
  std::vector<double> b;   ///< out
};

/// Fully connected multilayer perceptron with a linear output layer.
///
/// Weights are stored row-major (out x in) together with a cached transpose
/// so both the forward pass and backprop run as axpy-style matmuls; every
/// parameter mutation must go through the provided methods (or call
/// sync_transposes) to keep the cache coherent.
struct DenseNet {
  std::vector<int> sizes;  ///< widths, input first, output last
  Activation hidden_act = Activation::silu;
  std::vector<Layer> layers;

  DenseNet() = default;
  /// Fan-in uniform init: w ~ U(-1/sqrt(in), 1/sqrt(in)), b = 0.
  DenseNet(std::vector<int> sizes_, Activation act, Rng& rng);

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  long long param_count() const;

  /// Flat parameter order: per layer, w row-major then b. All flat views
  /// (gradients, Adam moments, checkpoints) share this order.
  void copy_params_to(std::vector<double>& out) const;
  void set_params(const std::vector<double>& flat);
  void sync_transposes();
};

/// Intermediate activations of one forward pass, kept for backprop.
struct ForwardCache {
  std::vector<Matrix> pre;   ///< pre-activations per layer
  std::vector<Matrix> act;   ///< act[0] is the input, act[i+1] = f(pre[i])
};

/// y = net(x) for a batch (rows are samples). Pass a cache to enable
/// backward() on this evaluation.
void forward(const DenseNet& net, const Matrix& x, Matrix& y,
             ForwardCache* cache = nullptr);

struct NetGrads {
  std::vector<Matrix> dw;
  std::vector<std::vector<double>> db;

  void init_like(const DenseNet& net);
  void set_zero();
};

/// Backpropagates dy (gradient of a scalar loss wrt the forward output).
/// Parameter gradients are accumulated into *grads when non-null; the
/// gradient wrt the input batch is written to *dx when non-null. The
/// grads == nullptr path skips all parameter-gradient work, which is the hot
/// path when differentiating through a frozen critic.
void backward(const DenseNet& net, const ForwardCache& cache, const Matrix& dy,
              NetGrads* grads, Matrix* dx);

struct AdamParams {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;  ///< first/second moments, flat parameter order
  long long t = 0;

  void init_like(const DenseNet& net);
};

/// One bias-corrected Adam update; eps sits outside the square root.
void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state,
               const AdamParams& params);

/// target <- (1 - tau) * target + tau * online, transposes re-synced.
void soft_update(DenseNet& target, const DenseNet& online, double tau);

/// Named bundle of networks plus free vectors and string metadata, stored as
/// a line-oriented text file. Doubles are written with enough digits to
/// round-trip exactly.
struct Checkpoint {
  std::string algo;
  std::vector<std::pair<std::string, DenseNet>> nets;
  std::vector<std::pair<std::string, std::vector<double>>> vectors;
  std::vector<std::pair<std::string, std::string>> meta;

  const DenseNet* find_net(const std::string& name) const;
  const std::vector<double>* find_vector(const std::string& name) const;
  const std::string* find_meta(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
/// Throws DataError on missing files or malformed content.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace contractgen::nn

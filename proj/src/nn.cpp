#include "contractgen/nn.hpp"

#include "contractgen/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace contractgen::nn {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double activate(Activation act, double x) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::silu: return x * sigmoid(x);
  }
  return x;
}

// Derivative as a function of the pre-activation.
inline double activate_grad(Activation act, double x) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::silu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
  }
  return 1.0;
}

}  // namespace

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "silu") return Activation::silu;
  throw ConfigError("unknown activation '" + name +
                    "' (expected identity|relu|tanh|silu)");
}

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::silu: return "silu";
  }
  return "identity";
}

DenseNet::DenseNet(std::vector<int> sizes_, Activation act, Rng& rng)
    : sizes(std::move(sizes_)), hidden_act(act) {
  if (sizes.size() < 2) throw ConfigError("DenseNet: need at least input and output sizes");
  for (int s : sizes)
    if (s < 1) throw ConfigError("DenseNet: layer sizes must be positive");
  layers.resize(sizes.size() - 1);
  for (size_t i = 0; i < layers.size(); ++i) {
    const int in = sizes[i];
    const int out = sizes[i + 1];
    Layer& layer = layers[i];
    layer.w.resize(out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.w(r, c) = rng.uniform(-bound, bound);
    layer.b.assign(out, 0.0);
  }
  sync_transposes();
}

long long DenseNet::param_count() const {
  long long n = 0;
  for (const Layer& layer : layers)
    n += static_cast<long long>(layer.w.rows) * layer.w.cols + layer.b.size();
  return n;
}

void DenseNet::copy_params_to(std::vector<double>& out) const {
  out.clear();
  out.reserve(param_count());
  for (const Layer& layer : layers) {
    out.insert(out.end(), layer.w.data.begin(), layer.w.data.end());
    out.insert(out.end(), layer.b.begin(), layer.b.end());
  }
}

void DenseNet::set_params(const std::vector<double>& flat) {
  if (static_cast<long long>(flat.size()) != param_count())
    throw DataError("DenseNet::set_params: size mismatch");
  size_t pos = 0;
  for (Layer& layer : layers) {
    std::copy(flat.begin() + pos, flat.begin() + pos + layer.w.data.size(),
              layer.w.data.begin());
    pos += layer.w.data.size();
    std::copy(flat.begin() + pos, flat.begin() + pos + layer.b.size(), layer.b.begin());
    pos += layer.b.size();
  }
  sync_transposes();
}

void DenseNet::sync_transposes() {
  for (Layer& layer : layers) layer.wt = transposed(layer.w);
}

void forward(const DenseNet& net, const Matrix& x, Matrix& y, ForwardCache* cache) {
  assert(x.cols == net.input_dim());
  const size_t depth = net.layers.size();
  if (cache) {
    cache->pre.resize(depth);
    cache->act.resize(depth + 1);
    cache->act[0] = x;
  }
  Matrix cur = x;
  Matrix next;
  for (size_t i = 0; i < depth; ++i) {
    const Layer& layer = net.layers[i];
    matmul(cur, layer.wt, next);
    add_row_vector(next, layer.b);
    if (cache) cache->pre[i] = next;
    const bool last = i + 1 == depth;
    if (!last) {
      for (double& v : next.data) v = activate(net.hidden_act, v);
    }
    if (cache) cache->act[i + 1] = next;
    cur = std::move(next);
  }
  y = std::move(cur);
}

void NetGrads::init_like(const DenseNet& net) {
  dw.resize(net.layers.size());
  db.resize(net.layers.size());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    dw[i].resize(net.layers[i].w.rows, net.layers[i].w.cols);
    db[i].assign(net.layers[i].b.size(), 0.0);
  }
  set_zero();
}

void NetGrads::set_zero() {
  for (Matrix& m : dw) m.set_zero();
  for (auto& v : db) std::fill(v.begin(), v.end(), 0.0);
}

void backward(const DenseNet& net, const ForwardCache& cache, const Matrix& dy,
              NetGrads* grads, Matrix* dx) {
  const int depth = static_cast<int>(net.layers.size());
  assert(static_cast<int>(cache.pre.size()) == depth);
  Matrix dcur = dy;  // gradient wrt the current layer's output
  Matrix dprev, dwi;
  std::vector<double> dbias;
  for (int i = depth - 1; i >= 0; --i) {
    const Layer& layer = net.layers[i];
    // Output layer is linear; hidden layers apply the activation derivative
    // at the cached pre-activation.
    if (i != depth - 1) {
      const Matrix& pre = cache.pre[i];
      for (size_t k = 0; k < dcur.data.size(); ++k)
        dcur.data[k] *= activate_grad(net.hidden_act, pre.data[k]);
    }
    if (grads) {
      matmul_transposed_a(dcur, cache.act[i], dwi);
      for (size_t k = 0; k < dwi.data.size(); ++k) grads->dw[i].data[k] += dwi.data[k];
      colsum(dcur, dbias);
      for (size_t k = 0; k < dbias.size(); ++k) grads->db[i][k] += dbias[k];
    }
    const bool need_dx = dx != nullptr || i > 0;
    if (need_dx) {
      matmul(dcur, layer.w, dprev);
      dcur = std::move(dprev);
    }
  }
  if (dx) *dx = std::move(dcur);
}

void AdamState::init_like(const DenseNet& net) {
  m.assign(net.param_count(), 0.0);
  v.assign(net.param_count(), 0.0);
  t = 0;
}

void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state,
               const AdamParams& params) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(state.t));
  size_t pos = 0;
  auto update = [&](double* p, const double* g, size_t count) {
    for (size_t k = 0; k < count; ++k, ++pos) {
      state.m[pos] = params.beta1 * state.m[pos] + (1.0 - params.beta1) * g[k];
      state.v[pos] = params.beta2 * state.v[pos] + (1.0 - params.beta2) * g[k] * g[k];
      const double mhat = state.m[pos] / bc1;
      const double vhat = state.v[pos] / bc2;
      p[k] -= params.lr * mhat / (std::sqrt(vhat) + params.eps);
    }
  };
  for (size_t i = 0; i < net.layers.size(); ++i) {
    Layer& layer = net.layers[i];
    update(layer.w.data.data(), grads.dw[i].data.data(), layer.w.data.size());
    update(layer.b.data(), grads.db[i].data(), layer.b.size());
  }
  net.sync_transposes();
}

void soft_update(DenseNet& target, const DenseNet& online, double tau) {
  assert(target.sizes == online.sizes);
  for (size_t i = 0; i < target.layers.size(); ++i) {
    Layer& t = target.layers[i];
    const Layer& o = online.layers[i];
    for (size_t k = 0; k < t.w.data.size(); ++k)
      t.w.data[k] = (1.0 - tau) * t.w.data[k] + tau * o.w.data[k];
    for (size_t k = 0; k < t.b.size(); ++k)
      t.b[k] = (1.0 - tau) * t.b[k] + tau * o.b[k];
  }
  target.sync_transposes();
}

const DenseNet* Checkpoint::find_net(const std::string& name) const {
  for (const auto& [n, net] : nets)
    if (n == name) return &net;
  return nullptr;
}

const std::vector<double>* Checkpoint::find_vector(const std::string& name) const {
  for (const auto& [n, vec] : vectors)
    if (n == name) return &vec;
  return nullptr;
}

const std::string* Checkpoint::find_meta(const std::string& name) const {
  for (const auto& [n, value] : meta)
    if (n == name) return &value;
  return nullptr;
}

namespace {

constexpr const char* kMagic = "contractgen-checkpoint 1";

void write_double(std::FILE* f, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::fputs(buf, f);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot write checkpoint: " + path);
  std::fprintf(f, "%s\n", kMagic);
  std::fprintf(f, "algo %s\n", ckpt.algo.c_str());
  for (const auto& [key, value] : ckpt.meta)
    std::fprintf(f, "meta %s %s\n", key.c_str(), value.c_str());
  for (const auto& [name, vec] : ckpt.vectors) {
    std::fprintf(f, "vector %s %zu\n", name.c_str(), vec.size());
    for (size_t i = 0; i < vec.size(); ++i) {
      write_double(f, vec[i]);
      std::fputc(i + 1 == vec.size() ? '\n' : ' ', f);
    }
    if (vec.empty()) std::fputc('\n', f);
  }
  std::vector<double> flat;
  for (const auto& [name, net] : ckpt.nets) {
    std::fprintf(f, "net %s\n", name.c_str());
    std::fprintf(f, "sizes");
    for (int s : net.sizes) std::fprintf(f, " %d", s);
    std::fprintf(f, "\nact %s\n", activation_name(net.hidden_act));
    net.copy_params_to(flat);
    std::fprintf(f, "params %zu\n", flat.size());
    for (size_t i = 0; i < flat.size(); ++i) {
      write_double(f, flat[i]);
      std::fputc((i + 1) % 8 == 0 || i + 1 == flat.size() ? '\n' : ' ', f);
    }
  }
  std::fprintf(f, "end\n");
  if (std::fclose(f) != 0) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw DataError("not a checkpoint file: " + path);
  Checkpoint ckpt;
  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") {
      saw_end = true;
      break;
    } else if (tag == "algo") {
      ls >> ckpt.algo;
    } else if (tag == "meta") {
      std::string key, value;
      ls >> key;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.meta.emplace_back(key, value);
    } else if (tag == "vector") {
      std::string name;
      size_t count = 0;
      ls >> name >> count;
      std::vector<double> vec(count);
      for (size_t i = 0; i < count; ++i)
        if (!(in >> vec[i])) throw DataError("checkpoint vector truncated: " + path);
      std::getline(in, line);  // consume the trailing newline
      ckpt.vectors.emplace_back(name, std::move(vec));
    } else if (tag == "net") {
      std::string name;
      ls >> name;
      std::string sizes_line;
      if (!std::getline(in, sizes_line) || sizes_line.rfind("sizes", 0) != 0)
        throw DataError("checkpoint net missing sizes: " + path);
      std::istringstream ss(sizes_line.substr(5));
      std::vector<int> sizes;
      for (int s; ss >> s;) sizes.push_back(s);
      std::string act_line;
      if (!std::getline(in, act_line) || act_line.rfind("act ", 0) != 0)
        throw DataError("checkpoint net missing activation: " + path);
      const Activation act = activation_from_name(act_line.substr(4));
      std::string params_line;
      size_t count = 0;
      if (!std::getline(in, params_line) ||
          std::sscanf(params_line.c_str(), "params %zu", &count) != 1)
        throw DataError("checkpoint net missing params header: " + path);
      DenseNet net;
      net.sizes = sizes;
      net.hidden_act = act;
      net.layers.resize(sizes.size() - 1);
      for (size_t i = 0; i + 1 < sizes.size(); ++i) {
        net.layers[i].w.resize(sizes[i + 1], sizes[i]);
        net.layers[i].b.assign(sizes[i + 1], 0.0);
      }
      if (static_cast<long long>(count) != net.param_count())
        throw DataError("checkpoint net param count mismatch: " + path);
      std::vector<double> flat(count);
      for (size_t i = 0; i < count; ++i)
        if (!(in >> flat[i])) throw DataError("checkpoint net truncated: " + path);
      std::getline(in, line);
      net.set_params(flat);
      ckpt.nets.emplace_back(name, std::move(net));
    } else {
      throw DataError("checkpoint: unknown section '" + tag + "' in " + path);
    }
  }
  if (!saw_end) throw DataError("checkpoint missing end marker: " + path);
  return ckpt;
}

}  // namespace contractgen::nn

#include "vox/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "vox/error.hpp"

namespace vox::nn {

namespace {

constexpr char kMagic[8] = {'V', 'O', 'X', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_raw(std::ofstream& f, const T& x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& f) {
  T x{};
  f.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!f) throw CheckpointIncompatible("truncated checkpoint");
  return x;
}

void save_entries(const std::string& path, const std::vector<std::string>& order,
                  const std::map<std::string, Tensor>& map) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoFailure("cannot open " + path + " for writing");
  f.write(kMagic, sizeof(kMagic));
  write_raw(f, kFormatVersion);
  write_raw(f, static_cast<std::uint64_t>(order.size()));
  for (const auto& name : order) {
    const Tensor& t = map.at(name);
    write_raw(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw(f, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) write_raw(f, static_cast<std::uint64_t>(d));
    f.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  }
  if (!f) throw IoFailure("write failed: " + path);
}

void load_entries(const std::string& path, std::vector<std::string>& order,
                  std::map<std::string, Tensor>& map) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointIncompatible("cannot open checkpoint " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointIncompatible("bad checkpoint magic in " + path);
  const auto version = read_raw<std::uint32_t>(f);
  if (version != kFormatVersion)
    throw CheckpointIncompatible("unknown checkpoint version " + std::to_string(version));
  const auto count = read_raw<std::uint64_t>(f);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_raw<std::uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw CheckpointIncompatible("truncated checkpoint");
    const auto rank = read_raw<std::uint32_t>(f);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_raw<std::uint64_t>(f));
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.v.data()),
           static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!f) throw CheckpointIncompatible("truncated checkpoint");
    if (map.count(name)) throw CheckpointIncompatible("duplicate entry " + name);
    order.push_back(name);
    map.emplace(name, std::move(t));
  }
}

}  // namespace

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  if (map_.count(name)) throw ShapeMismatch("duplicate parameter name " + name);
  order_.push_back(name);
  return map_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw ShapeMismatch("no parameter named " + name);
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw ShapeMismatch("no parameter named " + name);
  return it->second;
}

void ParamSet::save(const std::string& path) const { save_entries(path, order_, map_); }

ParamSet ParamSet::load(const std::string& path) {
  ParamSet p;
  load_entries(path, p.order_, p.map_);
  return p;
}

void ParamSet::expect(const std::string& name, const std::vector<std::size_t>& shape) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw CheckpointIncompatible("missing parameter " + name);
  if (it->second.shape != shape)
    throw CheckpointIncompatible("parameter " + name + " has shape " +
                                 shape_str(it->second.shape) + ", expected " + shape_str(shape));
}

Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  for (auto& x : t.v) x = rng.uniform(-bound, bound);
  return t;
}

void AdamState::save(const std::string& path) const {
  std::vector<std::string> order;
  std::map<std::string, Tensor> map;
  map.emplace("__step", Tensor::scalar(static_cast<double>(step)));
  order.push_back("__step");
  for (const auto& [name, t] : m) {
    order.push_back("m." + name);
    map.emplace("m." + name, t);
  }
  for (const auto& [name, t] : v) {
    order.push_back("v." + name);
    map.emplace("v." + name, t);
  }
  save_entries(path, order, map);
}

AdamState AdamState::load(const std::string& path) {
  std::vector<std::string> order;
  std::map<std::string, Tensor> map;
  load_entries(path, order, map);
  AdamState s;
  auto it = map.find("__step");
  if (it == map.end()) throw CheckpointIncompatible("optimizer state missing step counter");
  s.step = static_cast<std::uint64_t>(it->second.v[0]);
  for (auto& [name, t] : map) {
    if (name.rfind("m.", 0) == 0) s.m.emplace(name.substr(2), std::move(t));
    else if (name.rfind("v.", 0) == 0) s.v.emplace(name.substr(2), std::move(t));
  }
  return s;
}

void adam_step(ParamSet& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& name : params.names()) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    Tensor& p = params.at(name);
    const Tensor& g = git->second;
    if (!p.same_shape(g))
      throw ShapeMismatch("gradient shape mismatch for " + name + ": " + shape_str(g.shape) +
                          " vs " + shape_str(p.shape));
    Tensor& m = state.m.emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = state.v.emplace(name, Tensor(p.shape)).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * g.v[i];
      v.v[i] = cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / c1;
      const double vhat = v.v[i] / c2;
      p.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    check_finite(p, "adam update of " + name);
  }
}

ad::Var Leaves::at(const std::string& name) const {
  auto it = m.find(name);
  if (it == m.end()) throw ShapeMismatch("no parameter leaf named " + name);
  return it->second;
}

Leaves make_leaves(ad::Tape& tape, const ParamSet& params) {
  Leaves l;
  for (const auto& name : params.names()) l.m.emplace(name, tape.leaf(params.at(name)));
  return l;
}

std::map<std::string, Tensor> collect_grads(const Leaves& leaves) {
  std::map<std::string, Tensor> g;
  for (const auto& [name, var] : leaves.m) g.emplace(name, var->grad);
  return g;
}

ad::Var affine(ad::Tape& t, const ad::Var& x, const ad::Var& w, const ad::Var& b) {
  return ad::add_rowwise(t, ad::matmul(t, x, w), b);
}

std::pair<ad::Var, ad::Var> lstm_cell(ad::Tape& t, const ad::Var& x, const ad::Var& h,
                                      const ad::Var& c, const ad::Var& w, const ad::Var& b) {
  const std::size_t H = h->val.cols();
  auto z = affine(t, ad::concat_cols(t, x, h), w, b);
  auto i = ad::sigmoid(t, ad::slice_cols(t, z, 0, H));
  auto f = ad::sigmoid(t, ad::slice_cols(t, z, H, H));
  auto g = ad::tanh_op(t, ad::slice_cols(t, z, 2 * H, H));
  auto o = ad::sigmoid(t, ad::slice_cols(t, z, 3 * H, H));
  auto c2 = ad::add(t, ad::mul(t, f, c), ad::mul(t, i, g));
  auto h2 = ad::mul(t, o, ad::tanh_op(t, c2));
  return {h2, c2};
}

// Fused into one tape node: the per-sample vocoder unroll makes the
// composed-primitive version allocation bound.
ad::Var gru_cell(ad::Tape& t, const ad::Var& x, const ad::Var& h, const ad::Var& wx,
                 const ad::Var& bx, const ad::Var& wh, const ad::Var& un) {
  const std::size_t B = x->val.rows(), I = x->val.cols(), H = h->val.cols();
  if (h->val.rows() != B || wx->val.rows() != I || wx->val.cols() != 3 * H ||
      bx->val.size() != 3 * H || wh->val.rows() != H || wh->val.cols() != 2 * H ||
      un->val.rows() != H || un->val.cols() != H)
    throw ShapeMismatch("gru_cell: inconsistent shapes");

  // gx = x wx + bx (B x 3H), gh = h wh (B x 2H)
  Tensor gx({B, 3 * H}), gh({B, 2 * H});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < 3 * H; ++c) gx.v[b * 3 * H + c] = bx->val.v[c];
    for (std::size_t k = 0; k < I; ++k) {
      const double xv = x->val.v[b * I + k];
      const double* wrow = &wx->val.v[k * 3 * H];
      double* grow = &gx.v[b * 3 * H];
      for (std::size_t c = 0; c < 3 * H; ++c) grow[c] += xv * wrow[c];
    }
    for (std::size_t k = 0; k < H; ++k) {
      const double hv = h->val.v[b * H + k];
      const double* wrow = &wh->val.v[k * 2 * H];
      double* grow = &gh.v[b * 2 * H];
      for (std::size_t c = 0; c < 2 * H; ++c) grow[c] += hv * wrow[c];
    }
  }

  Tensor z({B, H}), r({B, H}), n({B, H}), rh({B, H}), out({B, H});
  auto sig = [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                            : std::exp(v) / (1.0 + std::exp(v)); };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < H; ++c) {
      z.v[b * H + c] = sig(gx.v[b * 3 * H + c] + gh.v[b * 2 * H + c]);
      r.v[b * H + c] = sig(gx.v[b * 3 * H + H + c] + gh.v[b * 2 * H + H + c]);
      rh.v[b * H + c] = r.v[b * H + c] * h->val.v[b * H + c];
    }
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < H; ++c) n.v[b * H + c] = gx.v[b * 3 * H + 2 * H + c];
    for (std::size_t k = 0; k < H; ++k) {
      const double rv = rh.v[b * H + k];
      const double* urow = &un->val.v[k * H];
      double* nrow = &n.v[b * H];
      for (std::size_t c = 0; c < H; ++c) nrow[c] += rv * urow[c];
    }
  }
  for (std::size_t i = 0; i < B * H; ++i) {
    n.v[i] = std::tanh(n.v[i]);
    out.v[i] = n.v[i] + z.v[i] * (h->val.v[i] - n.v[i]);  // (1-z) n + z h
  }

  auto node = t.record(std::move(out), nullptr);
  node->back = [x, h, wx, bx, wh, un, node = node.get(), z = std::move(z), r = std::move(r),
                n = std::move(n), rh = std::move(rh), B, I, H] {
    Tensor dgx({B, 3 * H}), dgh({B, 2 * H}), drh({B, H});
    for (std::size_t b = 0; b < B; ++b) {
      // through out = n + z (h - n)
      for (std::size_t c = 0; c < H; ++c) {
        const std::size_t i = b * H + c;
        const double g = node->grad.v[i];
        const double dn = g * (1.0 - z.v[i]);
        const double dz = g * (h->val.v[i] - n.v[i]);
        h->grad.v[i] += g * z.v[i];
        const double da = dn * (1.0 - n.v[i] * n.v[i]);
        dgx.v[b * 3 * H + 2 * H + c] = da;
        dgh.v[b * 2 * H + c] = dz * z.v[i] * (1.0 - z.v[i]);  // pre-sigmoid z
      }
      // through a = gx3 + rh un
      for (std::size_t k = 0; k < H; ++k) {
        const double* da_row = &dgx.v[b * 3 * H + 2 * H];
        const double* urow = &un->val.v[k * H];
        double* ugrow = &un->grad.v[k * H];
        const double rhv = rh.v[b * H + k];
        double acc = 0.0;
        for (std::size_t c = 0; c < H; ++c) {
          acc += da_row[c] * urow[c];
          ugrow[c] += da_row[c] * rhv;
        }
        drh.v[b * H + k] = acc;
      }
      for (std::size_t c = 0; c < H; ++c) {
        const std::size_t i = b * H + c;
        const double dr = drh.v[i] * h->val.v[i];
        h->grad.v[i] += drh.v[i] * r.v[i];
        dgh.v[b * 2 * H + H + c] = dr * r.v[i] * (1.0 - r.v[i]);  // pre-sigmoid r
      }
      for (std::size_t c = 0; c < 2 * H; ++c)
        dgx.v[b * 3 * H + c] = dgh.v[b * 2 * H + c];  // z,r gates share gx/gh pre-activations
      // through gh = h wh
      for (std::size_t k = 0; k < H; ++k) {
        const double hv = h->val.v[b * H + k];
        const double* grow = &dgh.v[b * 2 * H];
        const double* wrow = &wh->val.v[k * 2 * H];
        double* wgrow = &wh->grad.v[k * 2 * H];
        double acc = 0.0;
        for (std::size_t c = 0; c < 2 * H; ++c) {
          acc += grow[c] * wrow[c];
          wgrow[c] += grow[c] * hv;
        }
        h->grad.v[b * H + k] += acc;
      }
      // through gx = x wx + bx
      for (std::size_t k = 0; k < I; ++k) {
        const double xv = x->val.v[b * I + k];
        const double* grow = &dgx.v[b * 3 * H];
        const double* wrow = &wx->val.v[k * 3 * H];
        double* wgrow = &wx->grad.v[k * 3 * H];
        double acc = 0.0;
        for (std::size_t c = 0; c < 3 * H; ++c) {
          acc += grow[c] * wrow[c];
          wgrow[c] += grow[c] * xv;
        }
        x->grad.v[b * I + k] += acc;
      }
      for (std::size_t c = 0; c < 3 * H; ++c) bx->grad.v[c] += dgx.v[b * 3 * H + c];
    }
  };
  return node;
}

ad::Var highway(ad::Tape& t, const ad::Var& x, const ad::Var& wh, const ad::Var& bh,
                const ad::Var& wt, const ad::Var& bt) {
  auto hp = ad::relu(t, affine(t, x, wh, bh));
  auto gate = ad::sigmoid(t, affine(t, x, wt, bt));
  // H*T + x*(1-T) = x + T*(H - x)
  return ad::add(t, x, ad::mul(t, gate, ad::sub(t, hp, x)));
}

std::vector<ad::Var> bidirectional_wrap(ad::Tape& t, const std::vector<ad::Var>& xs,
                                        const std::function<Cell()>& make_forward,
                                        const std::function<Cell()>& make_backward) {
  if (xs.empty()) throw EmptyInput("bidirectional_wrap: empty sequence");
  const std::size_t T = xs.size();
  Cell fwd = make_forward();
  Cell bwd = make_backward();
  std::vector<ad::Var> hf(T), hb(T);
  for (std::size_t i = 0; i < T; ++i) hf[i] = fwd(t, xs[i]);
  for (std::size_t i = 0; i < T; ++i) hb[T - 1 - i] = bwd(t, xs[T - 1 - i]);
  std::vector<ad::Var> out(T);
  for (std::size_t i = 0; i < T; ++i) out[i] = ad::concat_cols(t, hf[i], hb[i]);
  return out;
}

}  // namespace vox::nn

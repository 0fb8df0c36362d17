#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vox/autodiff.hpp"
#include "vox/rng.hpp"
#include "vox/tensor.hpp"

namespace vox::nn {

// Named, shaped tensor collection for one trainable module. Shapes are
// immutable once added; names are unique.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return map_.count(name) != 0; }
  const std::vector<std::string>& names() const { return order_; }

  // Versioned binary checkpoint: magic, format version, entry count, then
  // per entry name, rank, dims, little-endian doubles.
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

  // Throws CheckpointIncompatible unless `name` exists with exactly `shape`.
  void expect(const std::string& name, const std::vector<std::size_t>& shape) const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor> map_;
};

Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Tensor> m, v;
  std::uint64_t step = 0;

  void save(const std::string& path) const;
  static AdamState load(const std::string& path);
};

void adam_step(ParamSet& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

// Tape-side parameter handles for one forward/backward pass.
struct Leaves {
  std::map<std::string, ad::Var> m;
  ad::Var at(const std::string& name) const;
};
Leaves make_leaves(ad::Tape& tape, const ParamSet& params);
std::map<std::string, Tensor> collect_grads(const Leaves& leaves);

ad::Var affine(ad::Tape& t, const ad::Var& x, const ad::Var& w, const ad::Var& b);

// Gate layout i,f,g,o in a single (I+H) x 4H weight. Returns (h', c').
std::pair<ad::Var, ad::Var> lstm_cell(ad::Tape& t, const ad::Var& x, const ad::Var& h,
                                      const ad::Var& c, const ad::Var& w, const ad::Var& b);

// Reset-before-candidate GRU: wx is I x 3H (z,r,n), wh is H x 2H (z,r),
// un is H x H for the candidate path through r*h.
ad::Var gru_cell(ad::Tape& t, const ad::Var& x, const ad::Var& h, const ad::Var& wx,
                 const ad::Var& bx, const ad::Var& wh, const ad::Var& un);

ad::Var highway(ad::Tape& t, const ad::Var& x, const ad::Var& wh, const ad::Var& bh,
                const ad::Var& wt, const ad::Var& bt);

// A Cell consumes one timestep input and carries its own recurrent state.
using Cell = std::function<ad::Var(ad::Tape&, const ad::Var&)>;

// Runs one cell per direction over the sequence and concatenates the
// per-timestep outputs along columns.
std::vector<ad::Var> bidirectional_wrap(ad::Tape& t, const std::vector<ad::Var>& xs,
                                        const std::function<Cell()>& make_forward,
                                        const std::function<Cell()>& make_backward);

}  // namespace vox::nn

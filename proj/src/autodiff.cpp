#include "vox/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vox::ad {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeMismatch(msg);
}

void require_2d(const Var& a, const char* who) {
  require(a->val.rank() >= 1 && a->val.rank() <= 2, std::string(who) + ": rank must be 1 or 2");
}

}  // namespace

void Tape::backward(const Var& loss) {
  require(loss->val.size() == 1, "backward: loss must be scalar");
  loss->grad.v[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if ((*it)->back) (*it)->back();
}

Var add(Tape& t, const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), "add: shape mismatch " + shape_str(a->val.shape) + " vs " +
                                         shape_str(b->val.shape));
  Tensor out(a->val.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] + b->val.v[i];
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, b, n = n.get()] {
    for (std::size_t i = 0; i < n->grad.size(); ++i) {
      a->grad.v[i] += n->grad.v[i];
      b->grad.v[i] += n->grad.v[i];
    }
  };
  return n;
}

Var add_rowwise(Tape& t, const Var& a, const Var& rowv) {
  require_2d(a, "add_rowwise");
  require(rowv->val.size() == a->val.cols(), "add_rowwise: bias length must equal columns");
  const std::size_t R = a->val.rows(), C = a->val.cols();
  Tensor out(a->val.shape);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c)
      out.v[r * C + c] = a->val.v[r * C + c] + rowv->val.v[c];
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, rowv, n = n.get(), R, C] {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        a->grad.v[r * C + c] += n->grad.v[r * C + c];
        rowv->grad.v[c] += n->grad.v[r * C + c];
      }
  };
  return n;
}

Var sub(Tape& t, const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), "sub: shape mismatch");
  Tensor out(a->val.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] - b->val.v[i];
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, b, n = n.get()] {
    for (std::size_t i = 0; i < n->grad.size(); ++i) {
      a->grad.v[i] += n->grad.v[i];
      b->grad.v[i] -= n->grad.v[i];
    }
  };
  return n;
}

Var mul(Tape& t, const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), "mul: shape mismatch");
  Tensor out(a->val.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] * b->val.v[i];
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, b, n = n.get()] {
    for (std::size_t i = 0; i < n->grad.size(); ++i) {
      a->grad.v[i] += n->grad.v[i] * b->val.v[i];
      b->grad.v[i] += n->grad.v[i] * a->val.v[i];
    }
  };
  return n;
}

Var scale(Tape& t, const Var& a, double k) {
  Tensor out(a->val.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] * k;
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get(), k] {
    for (std::size_t i = 0; i < n->grad.size(); ++i) a->grad.v[i] += n->grad.v[i] * k;
  };
  return n;
}

Var matmul(Tape& t, const Var& a, const Var& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t R = a->val.rows(), K = a->val.cols(), K2 = b->val.rows(), C = b->val.cols();
  require(K == K2, "matmul: inner dims " + std::to_string(K) + " vs " + std::to_string(K2));
  Tensor out({R, C});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t k = 0; k < K; ++k) {
      const double av = a->val.v[r * K + k];
      if (av == 0.0) continue;
      const double* brow = &b->val.v[k * C];
      double* orow = &out.v[r * C];
      for (std::size_t c = 0; c < C; ++c) orow[c] += av * brow[c];
    }
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, b, n = n.get(), R, K, C] {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t k = 0; k < K; ++k) {
        const double av = a->val.v[r * K + k];
        const double* grow = &n->grad.v[r * C];
        const double* brow = &b->val.v[k * C];
        double* bgrow = &b->grad.v[k * C];
        double ag = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          ag += grow[c] * brow[c];
          bgrow[c] += grow[c] * av;
        }
        a->grad.v[r * K + k] += ag;
      }
  };
  return n;
}

Var transpose(Tape& t, const Var& a) {
  require_2d(a, "transpose");
  const std::size_t R = a->val.rows(), C = a->val.cols();
  Tensor out({C, R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out.v[c * R + r] = a->val.v[r * C + c];
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get(), R, C] {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) a->grad.v[r * C + c] += n->grad.v[c * R + r];
  };
  return n;
}

Var concat_cols(Tape& t, const Var& a, const Var& b) {
  require_2d(a, "concat_cols");
  require_2d(b, "concat_cols");
  const std::size_t R = a->val.rows(), Ca = a->val.cols(), Cb = b->val.cols();
  require(R == b->val.rows(), "concat_cols: row mismatch");
  Tensor out({R, Ca + Cb});
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < Ca; ++c) out.v[r * (Ca + Cb) + c] = a->val.v[r * Ca + c];
    for (std::size_t c = 0; c < Cb; ++c) out.v[r * (Ca + Cb) + Ca + c] = b->val.v[r * Cb + c];
  }
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, b, n = n.get(), R, Ca, Cb] {
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < Ca; ++c) a->grad.v[r * Ca + c] += n->grad.v[r * (Ca + Cb) + c];
      for (std::size_t c = 0; c < Cb; ++c)
        b->grad.v[r * Cb + c] += n->grad.v[r * (Ca + Cb) + Ca + c];
    }
  };
  return n;
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: empty input");
  const std::size_t C = parts[0]->val.cols();
  std::size_t R = 0;
  for (const auto& p : parts) {
    require(p->val.cols() == C, "concat_rows: column mismatch");
    R += p->val.rows();
  }
  Tensor out({R, C});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->val.v.begin(), p->val.v.end(), out.v.begin() + static_cast<long>(off));
    off += p->val.size();
  }
  auto n = t.record(std::move(out), nullptr);
  n->back = [parts, n = n.get()] {
    std::size_t off = 0;
    for (const auto& p : parts) {
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad.v[i] += n->grad.v[off + i];
      off += p->grad.size();
    }
  };
  return n;
}

Var slice_cols(Tape& t, const Var& a, std::size_t start, std::size_t len) {
  require_2d(a, "slice_cols");
  const std::size_t R = a->val.rows(), C = a->val.cols();
  require(start + len <= C, "slice_cols: out of range");
  Tensor out({R, len});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < len; ++c) out.v[r * len + c] = a->val.v[r * C + start + c];
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get(), R, C, start, len] {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < len; ++c) a->grad.v[r * C + start + c] += n->grad.v[r * len + c];
  };
  return n;
}

Var row(Tape& t, const Var& a, std::size_t r) {
  require_2d(a, "row");
  const std::size_t R = a->val.rows(), C = a->val.cols();
  require(r < R, "row: index out of range");
  Tensor out({1, C});
  std::copy(a->val.v.begin() + static_cast<long>(r * C),
            a->val.v.begin() + static_cast<long>((r + 1) * C), out.v.begin());
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get(), r, C] {
    for (std::size_t c = 0; c < C; ++c) a->grad.v[r * C + c] += n->grad.v[c];
  };
  return n;
}

Var reshape(Tape& t, const Var& a, std::vector<std::size_t> shape) {
  require(Tensor::numel(shape) == a->val.size(), "reshape: element count mismatch");
  Tensor out(std::move(shape));
  out.v = a->val.v;
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get()] {
    for (std::size_t i = 0; i < n->grad.size(); ++i) a->grad.v[i] += n->grad.v[i];
  };
  return n;
}

Var sigmoid(Tape& t, const Var& a) {
  Tensor out(a->val.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a->val.v[i];
    out.v[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get()] {
    for (std::size_t i = 0; i < n->grad.size(); ++i) {
      const double y = n->val.v[i];
      a->grad.v[i] += n->grad.v[i] * y * (1.0 - y);
    }
  };
  return n;
}

Var tanh_op(Tape& t, const Var& a) {
  Tensor out(a->val.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = std::tanh(a->val.v[i]);
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get()] {
    for (std::size_t i = 0; i < n->grad.size(); ++i) {
      const double y = n->val.v[i];
      a->grad.v[i] += n->grad.v[i] * (1.0 - y * y);
    }
  };
  return n;
}

Var relu(Tape& t, const Var& a) {
  Tensor out(a->val.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] > 0.0 ? a->val.v[i] : 0.0;
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get()] {
    for (std::size_t i = 0; i < n->grad.size(); ++i)
      if (a->val.v[i] > 0.0) a->grad.v[i] += n->grad.v[i];
  };
  return n;
}

Var softmax_rows(Tape& t, const Var& a) {
  require_2d(a, "softmax_rows");
  const std::size_t R = a->val.rows(), C = a->val.cols();
  require(C > 0, "softmax_rows: empty rows");
  Tensor out(a->val.shape);
  for (std::size_t r = 0; r < R; ++r) {
    double mx = a->val.v[r * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, a->val.v[r * C + c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      out.v[r * C + c] = std::exp(a->val.v[r * C + c] - mx);
      sum += out.v[r * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) out.v[r * C + c] /= sum;
  }
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get(), R, C] {
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += n->grad.v[r * C + c] * n->val.v[r * C + c];
      for (std::size_t c = 0; c < C; ++c)
        a->grad.v[r * C + c] += n->val.v[r * C + c] * (n->grad.v[r * C + c] - dot);
    }
  };
  return n;
}

Var dropout(Tape& t, const Var& a, double keep_prob, Rng& rng) {
  require(keep_prob > 0.0 && keep_prob <= 1.0, "dropout: keep_prob must be in (0,1]");
  auto mask = std::make_shared<std::vector<double>>(a->val.size());
  for (auto& m : *mask) m = rng.uniform() < keep_prob ? 1.0 / keep_prob : 0.0;
  Tensor out(a->val.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] * (*mask)[i];
  auto n = t.record(std::move(out), nullptr);
  n->back = [a, n = n.get(), mask] {
    for (std::size_t i = 0; i < n->grad.size(); ++i) a->grad.v[i] += n->grad.v[i] * (*mask)[i];
  };
  return n;
}

Var conv1d(Tape& t, const Var& x, const Var& w, const Var& b) {
  require_2d(x, "conv1d");
  require(w->val.rank() == 3, "conv1d: weight must be {width, in, out}");
  const std::size_t T = x->val.rows(), Cin = x->val.cols();
  const std::size_t K = w->val.shape[0], Win = w->val.shape[1], Cout = w->val.shape[2];
  require(Win == Cin, "conv1d: in-channel mismatch");
  require(b->val.size() == Cout, "conv1d: bias size mismatch");
  const long pl = static_cast<long>((K - 1) / 2);  // same padding, even widths pad more right

  Tensor out({T, Cout});
  for (std::size_t tt = 0; tt < T; ++tt)
    for (std::size_t o = 0; o < Cout; ++o) {
      double acc = b->val.v[o];
      for (std::size_t k = 0; k < K; ++k) {
        const long src = static_cast<long>(tt) + static_cast<long>(k) - pl;
        if (src < 0 || src >= static_cast<long>(T)) continue;
        for (std::size_t i = 0; i < Cin; ++i)
          acc += x->val.v[static_cast<std::size_t>(src) * Cin + i] *
                 w->val.v[(k * Cin + i) * Cout + o];
      }
      out.v[tt * Cout + o] = acc;
    }
  auto n = t.record(std::move(out), nullptr);
  n->back = [x, w, b, n = n.get(), T, Cin, K, Cout, pl] {
    for (std::size_t tt = 0; tt < T; ++tt)
      for (std::size_t o = 0; o < Cout; ++o) {
        const double g = n->grad.v[tt * Cout + o];
        if (g == 0.0) continue;
        b->grad.v[o] += g;
        for (std::size_t k = 0; k < K; ++k) {
          const long src = static_cast<long>(tt) + static_cast<long>(k) - pl;
          if (src < 0 || src >= static_cast<long>(T)) continue;
          for (std::size_t i = 0; i < Cin; ++i) {
            x->grad.v[static_cast<std::size_t>(src) * Cin + i] +=
                g * w->val.v[(k * Cin + i) * Cout + o];
            w->grad.v[(k * Cin + i) * Cout + o] +=
                g * x->val.v[static_cast<std::size_t>(src) * Cin + i];
          }
        }
      }
  };
  return n;
}

Var maxpool1d(Tape& t, const Var& x) {
  require_2d(x, "maxpool1d");
  const std::size_t T = x->val.rows(), C = x->val.cols();
  Tensor out({T, C});
  auto argmax = std::make_shared<std::vector<std::size_t>>(T * C);
  for (std::size_t tt = 0; tt < T; ++tt) {
    const std::size_t t2 = std::min(tt + 1, T - 1);
    for (std::size_t c = 0; c < C; ++c) {
      const double a = x->val.v[tt * C + c], bv = x->val.v[t2 * C + c];
      if (a >= bv) {
        out.v[tt * C + c] = a;
        (*argmax)[tt * C + c] = tt * C + c;
      } else {
        out.v[tt * C + c] = bv;
        (*argmax)[tt * C + c] = t2 * C + c;
      }
    }
  }
  auto n = t.record(std::move(out), nullptr);
  n->back = [x, n = n.get(), argmax] {
    for (std::size_t i = 0; i < n->grad.size(); ++i) x->grad.v[(*argmax)[i]] += n->grad.v[i];
  };
  return n;
}

Var embedding_lookup(Tape& t, const Var& table, const std::vector<int>& ids) {
  require_2d(table, "embedding_lookup");
  const std::size_t V = table->val.rows(), D = table->val.cols();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      throw TargetOutOfRange("embedding id " + std::to_string(id) + " outside vocabulary");
  Tensor out({ids.size(), D});
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy(table->val.v.begin() + static_cast<long>(ids[r] * D),
              table->val.v.begin() + static_cast<long>((ids[r] + 1) * D),
              out.v.begin() + static_cast<long>(r * D));
  auto n = t.record(std::move(out), nullptr);
  n->back = [table, n = n.get(), ids, D] {
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < D; ++c)
        table->grad.v[static_cast<std::size_t>(ids[r]) * D + c] += n->grad.v[r * D + c];
  };
  return n;
}

Var mean_over_time(Tape& t, const Var& x) {
  require_2d(x, "mean_over_time");
  const std::size_t T = x->val.rows(), C = x->val.cols();
  require(T > 0, "mean_over_time: empty input");
  Tensor out({1, C});
  for (std::size_t tt = 0; tt < T; ++tt)
    for (std::size_t c = 0; c < C; ++c) out.v[c] += x->val.v[tt * C + c];
  for (std::size_t c = 0; c < C; ++c) out.v[c] /= static_cast<double>(T);
  auto n = t.record(std::move(out), nullptr);
  n->back = [x, n = n.get(), T, C] {
    for (std::size_t tt = 0; tt < T; ++tt)
      for (std::size_t c = 0; c < C; ++c)
        x->grad.v[tt * C + c] += n->grad.v[c] / static_cast<double>(T);
  };
  return n;
}

Var l2_normalize_rows(Tape& t, const Var& x) {
  require_2d(x, "l2_normalize_rows");
  const std::size_t R = x->val.rows(), C = x->val.cols();
  auto norms = std::make_shared<std::vector<double>>(R);
  Tensor out(x->val.shape);
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += x->val.v[r * C + c] * x->val.v[r * C + c];
    const double nrm = std::max(std::sqrt(s), 1e-12);
    (*norms)[r] = nrm;
    for (std::size_t c = 0; c < C; ++c) out.v[r * C + c] = x->val.v[r * C + c] / nrm;
  }
  auto n = t.record(std::move(out), nullptr);
  n->back = [x, n = n.get(), norms, R, C] {
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += n->grad.v[r * C + c] * n->val.v[r * C + c];
      for (std::size_t c = 0; c < C; ++c)
        x->grad.v[r * C + c] += (n->grad.v[r * C + c] - dot * n->val.v[r * C + c]) / (*norms)[r];
    }
  };
  return n;
}

Var softmax_cross_entropy(Tape& t, const Var& logits, const std::vector<int>& targets) {
  require_2d(logits, "softmax_cross_entropy");
  const std::size_t R = logits->val.rows(), C = logits->val.cols();
  require(targets.size() == R, "softmax_cross_entropy: one target per row");
  for (int y : targets)
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw TargetOutOfRange("class target " + std::to_string(y) + " outside [0, " +
                             std::to_string(C) + ")");
  auto probs = std::make_shared<Tensor>(logits->val.shape);
  double loss = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    double mx = logits->val.v[r * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits->val.v[r * C + c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      probs->v[r * C + c] = std::exp(logits->val.v[r * C + c] - mx);
      sum += probs->v[r * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) probs->v[r * C + c] /= sum;
    loss += std::log(sum) + mx - logits->val.v[r * C + static_cast<std::size_t>(targets[r])];
  }
  loss /= static_cast<double>(R);
  auto n = t.record(Tensor::scalar(loss), nullptr);
  n->back = [logits, n = n.get(), probs, targets, R, C] {
    const double g = n->grad.v[0] / static_cast<double>(R);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        double p = probs->v[r * C + c];
        if (c == static_cast<std::size_t>(targets[r])) p -= 1.0;
        logits->grad.v[r * C + c] += g * p;
      }
  };
  return n;
}

Var bce_with_logits(Tape& t, const Var& logits, const Tensor& targets) {
  require(logits->val.size() == targets.size(), "bce_with_logits: size mismatch");
  const std::size_t N = logits->val.size();
  require(N > 0, "bce_with_logits: empty input");
  double loss = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double z = logits->val.v[i], y = targets.v[i];
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  loss /= static_cast<double>(N);
  auto tgt = std::make_shared<Tensor>(targets);
  auto n = t.record(Tensor::scalar(loss), nullptr);
  n->back = [logits, n = n.get(), tgt, N] {
    const double g = n->grad.v[0] / static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double z = logits->val.v[i];
      const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      logits->grad.v[i] += g * (s - tgt->v[i]);
    }
  };
  return n;
}

Var l1_loss(Tape& t, const Var& pred, const Tensor& target) {
  require(pred->val.same_shape(target), "l1_loss: shape mismatch");
  const std::size_t N = pred->val.size();
  require(N > 0, "l1_loss: empty input");
  double loss = 0.0;
  for (std::size_t i = 0; i < N; ++i) loss += std::abs(pred->val.v[i] - target.v[i]);
  loss /= static_cast<double>(N);
  auto tgt = std::make_shared<Tensor>(target);
  auto n = t.record(Tensor::scalar(loss), nullptr);
  n->back = [pred, n = n.get(), tgt, N] {
    const double g = n->grad.v[0] / static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double d = pred->val.v[i] - tgt->v[i];
      // subgradient at a tie is 0
      pred->grad.v[i] += g * (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0);
    }
  };
  return n;
}

Var masked_l1_loss(Tape& t, const Var& pred, const Tensor& target,
                   const std::vector<double>& frame_mask) {
  require(pred->val.same_shape(target), "masked_l1_loss: shape mismatch");
  const std::size_t T = pred->val.rows(), C = pred->val.cols();
  require(frame_mask.size() == T, "masked_l1_loss: mask length must equal frame count");
  double denom = 0.0;
  for (double m : frame_mask) denom += m;
  denom *= static_cast<double>(C);
  if (denom == 0.0) return t.record(Tensor::scalar(0.0), nullptr);  // empty mask convention

  double loss = 0.0;
  for (std::size_t tt = 0; tt < T; ++tt) {
    if (frame_mask[tt] == 0.0) continue;
    for (std::size_t c = 0; c < C; ++c)
      loss += frame_mask[tt] * std::abs(pred->val.v[tt * C + c] - target.v[tt * C + c]);
  }
  loss /= denom;
  auto tgt = std::make_shared<Tensor>(target);
  auto msk = std::make_shared<std::vector<double>>(frame_mask);
  auto n = t.record(Tensor::scalar(loss), nullptr);
  n->back = [pred, n = n.get(), tgt, msk, T, C, denom] {
    const double g = n->grad.v[0] / denom;
    for (std::size_t tt = 0; tt < T; ++tt) {
      if ((*msk)[tt] == 0.0) continue;
      for (std::size_t c = 0; c < C; ++c) {
        const double d = pred->val.v[tt * C + c] - tgt->v[tt * C + c];
        pred->grad.v[tt * C + c] += g * (*msk)[tt] * (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0);
      }
    }
  };
  return n;
}

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps) {
  // analytic gradients
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) leaves.push_back(tape.leaf(in));
    Var loss = f(tape, leaves);
    tape.backward(loss);
    for (const auto& l : leaves) analytic.push_back(l->grad);
  }

  auto eval = [&](const std::vector<Tensor>& ins) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(ins.size());
    for (const auto& in : ins) leaves.push_back(tape.leaf(in));
    return f(tape, leaves)->val.v[0];
  };

  double worst = 0.0;
  std::vector<Tensor> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = work[i].v[j];
      work[i].v[j] = orig + eps;
      const double up = eval(work);
      work[i].v[j] = orig - eps;
      const double dn = eval(work);
      work[i].v[j] = orig;
      const double numeric = (up - dn) / (2.0 * eps);
      const double a = analytic[i].v[j];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace vox::ad

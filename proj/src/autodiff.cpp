#include "sanas/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "sanas/params.hpp"

namespace sanas {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&, const Node&)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) { return push(std::move(value)); }

Var Tape::param(const std::string& name, const Tensor& value, bool trainable) {
  auto it = bound_params_.find(name);
  if (it != bound_params_.end()) return it->second;
  Var v = push(value);
  nodes_[v.id].param_name = name;
  nodes_[v.id].trainable = trainable;
  bound_params_.emplace(name, v);
  return v;
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  const auto ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, const Node& n) {
    Tensor& ga = t.grad_of(ia);
    Tensor& gb = t.grad_of(ib);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i];
      gb[i] += n.grad[i];
    }
  });
}

Var Tape::add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw ConfigError("add_n: empty operand list");
  if (xs.size() == 1) return xs[0];
  Tensor out = value(xs[0]);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Tensor& tk = value(xs[k]);
    check_same_shape(out, tk, "add_n");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tk[i];
  }
  std::vector<std::uint32_t> ids(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) ids[k] = xs[k].id;
  return push(std::move(out), [ids](Tape& t, const Node& n) {
    for (std::uint32_t id : ids) {
      Tensor& g = t.grad_of(id);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  const auto ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, const Node& n) {
    const Tensor& va = t.nodes_[ia].value;
    const Tensor& vb = t.nodes_[ib].value;
    Tensor& ga = t.grad_of(ia);
    Tensor& gb = t.grad_of(ib);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i] * vb[i];
      gb[i] += n.grad[i] * va[i];
    }
  });
}

Var Tape::affine(Var x, double alpha, double beta) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * out[i] + beta;
  const auto ix = x.id;
  return push(std::move(out), [ix, alpha](Tape& t, const Node& n) {
    Tensor& gx = t.grad_of(ix);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += alpha * n.grad[i];
  });
}

Var Tape::relu(Var x) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  const auto ix = x.id;
  return push(std::move(out), [ix](Tape& t, const Node& n) {
    const Tensor& vx = t.nodes_[ix].value;
    Tensor& gx = t.grad_of(ix);
    // Subgradient at 0 is 0.
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (vx[i] > 0.0) gx[i] += n.grad[i];
    }
  });
}

Var Tape::sigmoid(Var x) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(out[i]);
  const auto ix = x.id;
  return push(std::move(out), [ix](Tape& t, const Node& n) {
    Tensor& gx = t.grad_of(ix);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double y = n.value[i];
      gx[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

Var Tape::tanh(Var x) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  const auto ix = x.id;
  return push(std::move(out), [ix](Tape& t, const Node& n) {
    Tensor& gx = t.grad_of(ix);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double y = n.value[i];
      gx[i] += n.grad[i] * (1.0 - y * y);
    }
  });
}

Var Tape::flatten(Var x) {
  const Tensor& tx = value(x);
  Tensor out({tx.size()}, tx.vec());
  const auto ix = x.id;
  return push(std::move(out), [ix](Tape& t, const Node& n) {
    Tensor& gx = t.grad_of(ix);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i];
  });
}

Var Tape::sum(Var x) {
  const Tensor& tx = value(x);
  double s = 0.0;
  for (std::size_t i = 0; i < tx.size(); ++i) s += tx[i];
  const auto ix = x.id;
  return push(Tensor::scalar(s), [ix](Tape& t, const Node& n) {
    Tensor& gx = t.grad_of(ix);
    const double g = n.grad[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var Tape::matvec(Var W, Var x) {
  const Tensor& tw = value(W);
  const Tensor& tx = value(x);
  if (tw.rank() != 2 || tx.rank() != 1 || tw.shape()[1] != tx.shape()[0]) {
    throw ConfigError("matvec: shape mismatch " + shape_str(tw.shape()) + " vs " +
                      shape_str(tx.shape()));
  }
  const std::size_t m = tw.shape()[0], n = tw.shape()[1];
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = tw.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * tx[j];
    out[i] = acc;
  }
  const auto iw = W.id, ix = x.id;
  return push(std::move(out), [iw, ix, m, n](Tape& t, const Node& nd) {
    const Tensor& vw = t.nodes_[iw].value;
    const Tensor& vx = t.nodes_[ix].value;
    Tensor& gw = t.grad_of(iw);
    Tensor& gx = t.grad_of(ix);
    for (std::size_t i = 0; i < m; ++i) {
      const double g = nd.grad[i];
      const double* row = vw.data() + i * n;
      double* grow = gw.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        grow[j] += g * vx[j];
        gx[j] += g * row[j];
      }
    }
  });
}

Var Tape::linear(Var x, Var W, Var b) {
  const Tensor& tw = value(W);
  const Tensor& tx = value(x);
  const Tensor& tb = value(b);
  if (tw.rank() != 2 || tx.rank() != 1 || tb.rank() != 1 || tw.shape()[1] != tx.shape()[0] ||
      tw.shape()[0] != tb.shape()[0]) {
    throw ConfigError("linear: shape mismatch W=" + shape_str(tw.shape()) +
                      " x=" + shape_str(tx.shape()) + " b=" + shape_str(tb.shape()));
  }
  const std::size_t m = tw.shape()[0], n = tw.shape()[1];
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = tb[i];
    const double* row = tw.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * tx[j];
    out[i] = acc;
  }
  const auto iw = W.id, ix = x.id, ib = b.id;
  return push(std::move(out), [iw, ix, ib, m, n](Tape& t, const Node& nd) {
    const Tensor& vw = t.nodes_[iw].value;
    const Tensor& vx = t.nodes_[ix].value;
    Tensor& gw = t.grad_of(iw);
    Tensor& gx = t.grad_of(ix);
    Tensor& gb = t.grad_of(ib);
    for (std::size_t i = 0; i < m; ++i) {
      const double g = nd.grad[i];
      gb[i] += g;
      const double* row = vw.data() + i * n;
      double* grow = gw.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        grow[j] += g * vx[j];
        gx[j] += g * row[j];
      }
    }
  });
}

Var Tape::conv2d(Var x, Var K, Var b, std::size_t stride_f, std::size_t stride_t) {
  const Tensor& tx = value(x);
  const Tensor& tk = value(K);
  const Tensor& tb = value(b);
  if (tx.rank() != 3 || tk.rank() != 4 || tb.rank() != 1) {
    throw ConfigError("conv2d: expected x of rank 3, K of rank 4, b of rank 1; got x=" +
                      shape_str(tx.shape()) + " K=" + shape_str(tk.shape()) +
                      " b=" + shape_str(tb.shape()));
  }
  const std::size_t c_in = tx.shape()[0], f_in = tx.shape()[1], t_in = tx.shape()[2];
  const std::size_t c_out = tk.shape()[0], kf = tk.shape()[2], kt = tk.shape()[3];
  if (tk.shape()[1] != c_in || tb.shape()[0] != c_out) {
    throw ConfigError("conv2d: channel mismatch x=" + shape_str(tx.shape()) +
                      " K=" + shape_str(tk.shape()));
  }
  if (kf > f_in || kt > t_in) {
    throw ConfigError("conv2d: kernel " + shape_str({kf, kt}) + " larger than input " +
                      shape_str({f_in, t_in}));
  }
  if (stride_f == 0 || stride_t == 0) throw ConfigError("conv2d: zero stride");
  // Valid cross-correlation, no kernel flip.
  const std::size_t f_out = (f_in - kf) / stride_f + 1;
  const std::size_t t_out = (t_in - kt) / stride_t + 1;
  Tensor out({c_out, f_out, t_out});
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t fo = 0; fo < f_out; ++fo) {
      for (std::size_t to = 0; to < t_out; ++to) {
        double acc = tb[co];
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const double* xin = tx.data() + (ci * f_in + fo * stride_f) * t_in + to * stride_t;
          const double* krn = tk.data() + ((co * c_in + ci) * kf) * kt;
          for (std::size_t i = 0; i < kf; ++i) {
            const double* xr = xin + i * t_in;
            const double* kr = krn + i * kt;
            for (std::size_t j = 0; j < kt; ++j) acc += xr[j] * kr[j];
          }
        }
        out[(co * f_out + fo) * t_out + to] = acc;
      }
    }
  }
  const auto ix = x.id, ik = K.id, ib = b.id;
  return push(std::move(out), [=](Tape& t, const Node& nd) {
    const Tensor& vx = t.nodes_[ix].value;
    const Tensor& vk = t.nodes_[ik].value;
    Tensor& gx = t.grad_of(ix);
    Tensor& gk = t.grad_of(ik);
    Tensor& gb = t.grad_of(ib);
    for (std::size_t co = 0; co < c_out; ++co) {
      for (std::size_t fo = 0; fo < f_out; ++fo) {
        for (std::size_t to = 0; to < t_out; ++to) {
          const double g = nd.grad[(co * f_out + fo) * t_out + to];
          gb[co] += g;
          for (std::size_t ci = 0; ci < c_in; ++ci) {
            const std::size_t xbase = (ci * f_in + fo * stride_f) * t_in + to * stride_t;
            const std::size_t kbase = ((co * c_in + ci) * kf) * kt;
            for (std::size_t i = 0; i < kf; ++i) {
              for (std::size_t j = 0; j < kt; ++j) {
                gx[xbase + i * t_in + j] += g * vk[kbase + i * kt + j];
                gk[kbase + i * kt + j] += g * vx[xbase + i * t_in + j];
              }
            }
          }
        }
      }
    }
  });
}

Var Tape::softmax_xent(Var logits, std::size_t target) {
  const Tensor& tl = value(logits);
  if (tl.rank() != 1) {
    throw ConfigError("softmax_xent: logits must be rank 1, got " + shape_str(tl.shape()));
  }
  const std::size_t k = tl.shape()[0];
  if (target >= k) {
    throw InputError("softmax_xent: target " + std::to_string(target) + " out of range [0," +
                     std::to_string(k) + ")");
  }
  double mx = tl[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, tl[i]);
  double se = 0.0;
  for (std::size_t i = 0; i < k; ++i) se += std::exp(tl[i] - mx);
  const double lse = mx + std::log(se);
  const double loss = lse - tl[target];
  // Softmax cached for the backward pass.
  std::vector<double> p(k);
  for (std::size_t i = 0; i < k; ++i) p[i] = std::exp(tl[i] - mx) / se;
  const auto il = logits.id;
  return push(Tensor::scalar(loss), [il, target, p = std::move(p)](Tape& t, const Node& nd) {
    Tensor& gl = t.grad_of(il);
    const double g = nd.grad[0];
    for (std::size_t i = 0; i < gl.size(); ++i) {
      gl[i] += g * (p[i] - (i == target ? 1.0 : 0.0));
    }
  });
}

Var Tape::bernoulli_log_prob(Var gamma, const std::vector<std::uint8_t>& h) {
  const Tensor& tg = value(gamma);
  if (tg.size() != h.size()) {
    throw ConfigError("bernoulli_log_prob: gamma size " + std::to_string(tg.size()) +
                      " vs mask size " + std::to_string(h.size()));
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double g = std::clamp(tg[i], kProbEps, 1.0 - kProbEps);
    lp += h[i] ? std::log(g) : std::log(1.0 - g);
  }
  const auto ig = gamma.id;
  return push(Tensor::scalar(lp), [ig, h](Tape& t, const Node& nd) {
    const Tensor& vg = t.nodes_[ig].value;
    Tensor& gg = t.grad_of(ig);
    const double g = nd.grad[0];
    for (std::size_t i = 0; i < h.size(); ++i) {
      // Zero gradient where the clamp binds.
      if (vg[i] < kProbEps || vg[i] > 1.0 - kProbEps) continue;
      gg[i] += g * (h[i] ? 1.0 / vg[i] : -1.0 / (1.0 - vg[i]));
    }
  });
}

void Tape::backward(const std::vector<std::pair<Var, double>>& seeds) {
  for (auto& n : nodes_) {
    n.grad = Tensor(n.value.shape());
  }
  for (const auto& [v, w] : seeds) {
    if (!v.valid()) continue;
    Node& n = nodes_[v.id];
    if (n.value.size() != 1) {
      throw ConfigError("backward: seed on non-scalar node of shape " +
                        shape_str(n.value.shape()));
    }
    n.grad[0] += w;
  }
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this, nodes_[i]);
  }
}

void Tape::collect_param_grads(Gradients& out) const {
  for (const auto& n : nodes_) {
    if (!n.param_name.empty() && n.trainable && !n.grad.empty()) {
      out.accumulate(n.param_name, n.grad);
    }
  }
}

Var gru_cell(Tape& t, Var z_prev, Var u, const GruVars& g) {
  Var a = t.sigmoid(t.add(t.linear(u, g.w_update, g.b_update), t.matvec(g.u_update, z_prev)));
  Var r = t.sigmoid(t.add(t.linear(u, g.w_reset, g.b_reset), t.matvec(g.u_reset, z_prev)));
  Var c = t.tanh(t.add(t.linear(u, g.w_cand, g.b_cand), t.matvec(g.u_cand, t.mul(r, z_prev))));
  return t.add(t.mul(t.affine(a, -1.0, 1.0), c), t.mul(a, z_prev));
}

Tensor softmax(const Tensor& logits) {
  Tensor out = logits;
  double mx = out[0];
  for (std::size_t i = 1; i < out.size(); ++i) mx = std::max(mx, out[i]);
  double se = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(out[i] - mx);
    se += out[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= se;
  return out;
}

std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

}  // namespace sanas

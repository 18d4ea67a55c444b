#include "sanas/params.hpp"

#include <cmath>

namespace sanas {

Tensor& ParamStore::create(const std::string& name, std::vector<std::size_t> shape,
                           bool trainable) {
  if (has(name)) throw ConfigError("parameter already registered: " + name);
  Entry e;
  e.value = Tensor(shape);
  e.m = Tensor(shape);
  e.v = Tensor(shape);
  e.trainable = trainable;
  auto [it, ok] = entries_.emplace(name, std::move(e));
  (void)ok;
  order_.push_back(name);
  return it->second.value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }
bool ParamStore::trainable(const std::string& name) const { return entry(name).trainable; }
Tensor& ParamStore::adam_m(const std::string& name) { return entry(name).m; }
Tensor& ParamStore::adam_v(const std::string& name) { return entry(name).v; }

void Gradients::accumulate(const std::string& name, const Tensor& g) {
  auto it = by_name.find(name);
  if (it == by_name.end()) {
    by_name.emplace(name, g);
    return;
  }
  if (!it->second.same_shape(g)) {
    throw ConfigError("gradient shape mismatch for " + name + ": " +
                      shape_str(it->second.shape()) + " vs " + shape_str(g.shape()));
  }
  for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
}

void Gradients::accumulate(const Gradients& other) {
  for (const auto& [name, g] : other.by_name) accumulate(name, g);
}

void Gradients::scale(double s) {
  for (auto& [name, g] : by_name) {
    (void)name;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s;
  }
}

double Gradients::global_norm() const {
  double ss = 0.0;
  for (const auto& [name, g] : by_name) {
    (void)name;
    for (std::size_t i = 0; i < g.size(); ++i) ss += g[i] * g[i];
  }
  return std::sqrt(ss);
}

bool Gradients::finite() const {
  for (const auto& [name, g] : by_name) {
    (void)name;
    if (!g.finite()) return false;
  }
  return true;
}

void adam_step(ParamStore& store, Gradients& grads, const AdamConfig& cfg, std::int64_t t) {
  if (t < 1) throw ConfigError("adam_step: step index must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (const auto& name : store.names()) {
    if (!store.trainable(name)) continue;
    Tensor& p = store.value(name);
    Tensor& m = store.adam_m(name);
    Tensor& v = store.adam_v(name);
    auto it = grads.by_name.find(name);
    const Tensor* g = it == grads.by_name.end() ? nullptr : &it->second;
    if (g && !g->same_shape(p)) {
      throw ConfigError("adam_step: gradient shape mismatch for " + name);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;  // missing gradient == zero gradient
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
  grads.by_name.clear();
}

double grad_check(const std::function<double(const Tensor&)>& f, const Tensor& analytic_grad,
                  const Tensor& theta0, double h) {
  if (!analytic_grad.same_shape(theta0)) {
    throw ConfigError("grad_check: gradient shape " + shape_str(analytic_grad.shape()) +
                      " does not match theta " + shape_str(theta0.shape()));
  }
  double worst = 0.0;
  Tensor theta = theta0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + h;
    const double fp = f(theta);
    theta[i] = orig - h;
    const double fm = f(theta);
    theta[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = analytic_grad[i];
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    worst = std::max(worst, std::fabs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace sanas

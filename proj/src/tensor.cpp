#include "erl/tensor.hpp"

namespace erl {

uint64_t Rng::next_u64() {
  // splitmix64
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

float Rng::uniform(float lo, float hi) {
  float u = static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
  return lo + (hi - lo) * u;
}

float Rng::normal() {
  if (have_spare) {
    have_spare = false;
    return spare;
  }
  float u1 = 0.0f;
  while (u1 <= 1e-12f) u1 = uniform(0.0f, 1.0f);
  float u2 = uniform(0.0f, 1.0f);
  float r = std::sqrt(-2.0f * std::log(u1));
  float a = 2.0f * 3.14159265358979323846f * u2;
  spare = r * std::sin(a);
  have_spare = true;
  return r * std::cos(a);
}

int Rng::uniform_int(int n) {
  return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

Parameter& ParamStore::create(const std::string& name, Shape shape, bool trainable) {
  if (params_.count(name))
    throw TensorError("ParamStore: duplicate parameter name " + name);
  auto p = std::make_shared<Parameter>();
  p->name = name;
  p->shape = std::move(shape);
  int64_t n = numel(p->shape);
  p->value.assign(n, 0.0f);
  p->grad.assign(n, 0.0f);
  p->trainable = trainable;
  if (trainable) {
    p->adam_m.assign(n, 0.0f);
    p->adam_v.assign(n, 0.0f);
  }
  params_[name] = p;
  return *p;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("ParamStore: unknown parameter " + name);
  return *it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("ParamStore: unknown parameter " + name);
  return *it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) > 0;
}

void ParamStore::zero_grads() {
  for (auto& [_, p] : params_) {
    if (p->grad.size() != p->value.size()) p->grad.assign(p->value.size(), 0.0f);
    p->zero_grad();
  }
}

size_t ParamStore::total_values() const {
  size_t n = 0;
  for (const auto& [_, p] : params_) n += p->value.size();
  return n;
}

uint64_t ParamStore::hash(const std::string& prefix) const {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&h](const void* data, size_t len) {
    const unsigned char* b = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, p] : params_) {
    if (name.rfind(prefix, 0) != 0) continue;
    mix(name.data(), name.size());
    mix(p->value.data(), p->value.size() * sizeof(float));
  }
  return h;
}

void init_uniform(Parameter& p, Rng& rng, float s) {
  for (auto& v : p.value) v = rng.uniform(-s, s);
}

void init_linear(ParamStore& store, const std::string& prefix, int fan_in,
                 int fan_out, Rng& rng, bool zero) {
  Parameter& w = store.create(prefix + ".w", {fan_in, fan_out});
  store.create(prefix + ".b", {fan_out});  // biases start at zero
  if (!zero) init_uniform(w, rng, std::sqrt(6.0f / static_cast<float>(fan_in)));
}

}  // namespace erl

#include "ovvis/params.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ovvis/ovtf.hpp"
#include "ovvis/rng.hpp"

namespace ovvis {

namespace fs = std::filesystem;

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (params_.count(name)) throw ConfigError("duplicate parameter: " + name);
  t.set_requires_grad(true);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void ParamStore::save(const std::string& dir) const {
  fs::create_directories(dir);
  nlohmann::json manifest;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : params_) {
    const std::string file = name + ".ovtf";
    save_ovtf((fs::path(dir) / file).string(), t, OvtfDtype::kF64);
    tensors[name] = file;
  }
  manifest["tensors"] = tensors;
  std::ofstream os(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

void ParamStore::load(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw IoError("missing checkpoint manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(is);
  const auto& tensors = manifest.at("tensors");
  for (auto& [name, t] : params_) {
    if (!tensors.contains(name)) {
      throw ConfigError("checkpoint is missing parameter: " + name);
    }
    Tensor loaded = load_ovtf((fs::path(dir) / tensors.at(name).get<std::string>()).string());
    if (loaded.shape() != t.shape()) {
      throw ConfigError("checkpoint shape mismatch for " + name + ": expected " +
                        shape_str(t.shape()) + ", file has " + shape_str(loaded.shape()));
    }
    t.values() = loaded.values();
  }
  for (auto it = tensors.begin(); it != tensors.end(); ++it) {
    if (!params_.count(it.key())) {
      throw ConfigError("checkpoint has unknown parameter: " + it.key());
    }
  }
}

Tensor init_normal(const std::string& name, uint64_t seed,
                   std::vector<size_t> shape, double stddev) {
  Rng rng(mix_seed(seed, fnv1a(name)));
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal(0.0, stddev);
  return t;
}

Tensor init_xavier(const std::string& name, uint64_t seed,
                   std::vector<size_t> shape, size_t fan_in, size_t fan_out) {
  Rng rng(mix_seed(seed, fnv1a(name)));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-a, a);
  return t;
}

}  // namespace ovvis

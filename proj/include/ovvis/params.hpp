#pragma once
// Named parameter registry with checkpoint save/load. A checkpoint is a
// directory of OVTF files plus manifest.json mapping dotted tensor names to
// file paths. Iteration order is the sorted name order everywhere, which
// keeps training and serialization deterministic.

#include <map>
#include <string>

#include "ovvis/tensor.hpp"

namespace ovvis {

class ParamStore {
 public:
  // Registers a parameter; sets requires_grad and allocates its grad buffer.
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  size_t size() const { return params_.size(); }

  std::map<std::string, Tensor>& entries() { return params_; }
  const std::map<std::string, Tensor>& entries() const { return params_; }

  void zero_grads();

  // Writes <dir>/manifest.json plus one <name>.ovtf per parameter.
  void save(const std::string& dir) const;
  // Replaces values of already-registered parameters; shape mismatches and
  // missing/unknown names raise ConfigError.
  void load(const std::string& dir);

 private:
  std::map<std::string, Tensor> params_;
};

// Deterministic per-name initializers: each parameter draws from its own
// stream keyed by (seed, name), so adding or removing parameters does not
// shift any other parameter's values.
Tensor init_normal(const std::string& name, uint64_t seed,
                   std::vector<size_t> shape, double stddev);
Tensor init_xavier(const std::string& name, uint64_t seed,
                   std::vector<size_t> shape, size_t fan_in, size_t fan_out);

}  // namespace ovvis

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gspot/nn.hpp"
#include "gspot/tensor.hpp"

namespace gspot {

// Versioned named-tensor container ("GSCKPT01"). Tensors are kept sorted by
// name so serialization and hashing are canonical; writes go through a temp
// file + rename so a crash never leaves a truncated checkpoint behind.
class Checkpoint {
 public:
  void put(const std::string& name, const Tensor& t);
  const Tensor& get(const std::string& name) const;  // throws if absent
  bool has(const std::string& name) const;
  size_t size() const { return tensors_.size(); }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  uint64_t content_hash() const;  // FNV-1a over the canonical serialization

 private:
  std::map<std::string, Tensor> tensors_;
};

// FNV-1a over shape + raw values; used for freeze-discipline assertions.
uint64_t tensor_hash(const Tensor& t);

// Copy every registered parameter into / out of a checkpoint. Loading
// validates shapes and fails on missing names.
void store_params(Checkpoint& ckpt, const std::vector<nn::ParamRef>& params);
void load_params(const Checkpoint& ckpt, const std::vector<nn::ParamRef>& params);

// Combined hash of a parameter group, for freeze contracts in tests/training.
uint64_t params_hash(const std::vector<nn::ParamRef>& params);

}  // namespace gspot

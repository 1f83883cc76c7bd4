#include "gspot/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "gspot/config.hpp"  // fnv1a

namespace gspot {

namespace {

constexpr char kMagic[8] = {'G', 'S', 'C', 'K', 'P', 'T', '0', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is, const std::string& path) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw std::runtime_error("checkpoint: truncated file: " + path);
  return v;
}

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& t) { tensors_[name] = t; }

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end())
    throw std::runtime_error("checkpoint: no tensor named '" + name + "'");
  return it->second;
}

bool Checkpoint::has(const std::string& name) const { return tensors_.count(name) > 0; }

void Checkpoint::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + tmp);
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, static_cast<uint32_t>(tensors_.size()));
    for (const auto& [name, t] : tensors_) {
      write_u32(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(os, static_cast<uint32_t>(t.shape().size()));
      for (int d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.numel())));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("checkpoint: rename to " + path + " failed: " + ec.message());
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic (not a GSCKPT01 file): " + path);
  Checkpoint out;
  const uint32_t count = read_u32(is, path);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("checkpoint: truncated file: " + path);
    const uint32_t ndim = read_u32(is, path);
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(read_u32(is, path));
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.numel()))))
      throw std::runtime_error("checkpoint: truncated tensor '" + name + "' in " + path);
    out.tensors_[name] = std::move(t);
  }
  return out;
}

uint64_t Checkpoint::content_hash() const {
  uint64_t h = fnv1a(kMagic, sizeof(kMagic));
  for (const auto& [name, t] : tensors_) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.shape().data(), t.shape().size() * sizeof(int), h);
    h = fnv1a(t.data(), sizeof(double) * static_cast<size_t>(t.numel()), h);
  }
  return h;
}

uint64_t tensor_hash(const Tensor& t) {
  uint64_t h = fnv1a(t.shape().data(), t.shape().size() * sizeof(int));
  return fnv1a(t.data(), sizeof(double) * static_cast<size_t>(t.numel()), h);
}

void store_params(Checkpoint& ckpt, const std::vector<nn::ParamRef>& params) {
  for (const nn::ParamRef& p : params) ckpt.put(p.name, *p.value);
}

void load_params(const Checkpoint& ckpt, const std::vector<nn::ParamRef>& params) {
  for (const nn::ParamRef& p : params) {
    const Tensor& stored = ckpt.get(p.name);
    if (stored.shape() != p.value->shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + p.name + "': stored " +
                               stored.shape_str() + ", model " + p.value->shape_str());
    *p.value = stored;
  }
}

uint64_t params_hash(const std::vector<nn::ParamRef>& params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const nn::ParamRef& p : params) {
    h = fnv1a(p.name.data(), p.name.size(), h);
    h = fnv1a(p.value->data(), sizeof(double) * static_cast<size_t>(p.value->numel()), h);
  }
  return h;
}

}  // namespace gspot

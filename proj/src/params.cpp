#include "mast/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mast {

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ContractError("ParamSet: duplicate name " + name);
  entries_.push_back({name, std::move(t)});
  return entries_.back().tensor;
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

Tensor& ParamSet::get(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw ContractError("ParamSet: no parameter named " + name);
}

const Tensor& ParamSet::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw ContractError("ParamSet: no parameter named " + name);
}

std::int64_t ParamSet::total_elements() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParamSet::zero_all_grads() {
  for (auto& e : entries_) {
    e.tensor.grad_mut();
    e.tensor.zero_grad();
  }
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& e : entries_) {
    Tensor t = Tensor::from(e.tensor.dims(),
                            std::vector<double>(e.tensor.values().begin(), e.tensor.values().end()));
    t.set_requires_grad(e.tensor.requires_grad());
    out.add(e.name, std::move(t));
  }
  return out;
}

void ParamSet::copy_values_from(const ParamSet& src) {
  if (src.count() != count()) throw ContractError("ParamSet: layout mismatch in copy");
  for (std::size_t i = 0; i < count(); ++i) {
    if (src.entries_[i].name != entries_[i].name ||
        src.entries_[i].tensor.dims() != entries_[i].tensor.dims())
      throw ContractError("ParamSet: layout mismatch at " + entries_[i].name);
    auto dst = entries_[i].tensor.values();
    auto s = src.entries_[i].tensor.values();
    std::copy(s.begin(), s.end(), dst.begin());
  }
}

// ---------------------------------------------------------------------------
// Serialization. Multi-byte values are little-endian regardless of host.

namespace {

static_assert(sizeof(double) == 8);

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ParseError("container: truncated while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw ParseError("container: truncated while reading " + what);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

void save_params(const ParamSet& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("MAST", 4);
  put_u32(os, kContainerVersion);
  put_u32(os, static_cast<std::uint32_t>(params.count()));
  for (std::size_t i = 0; i < params.count(); ++i) {
    const std::string& name = params.name(i);
    const Tensor& t = params.tensor(i);
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) put_u32(os, static_cast<std::uint32_t>(t.dim(d)));
    for (double v : t.values()) put_f64(os, v);
  }
  if (!os) throw IoError("write failed: " + path);
}

void load_params(ParamSet& out, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MAST", 4) != 0)
    throw ParseError("container: bad magic in " + path);
  const std::uint32_t version = get_u32(is, "version");
  if (version != kContainerVersion)
    throw ParseError("container: unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw ParseError("container: truncated name");
    const std::uint32_t rank = get_u32(is, "rank");
    std::vector<int> dims;
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = get_u32(is, "dim");
      dims.push_back(static_cast<int>(dim));
      n *= dim;
    }
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = get_f64(is, "value");
    out.add(name, Tensor::from(std::move(dims), std::move(data)));
  }
}

}  // namespace mast

#include "pei/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "pei/errors.hpp"

namespace pei {

namespace {

constexpr char kMagic[8] = {'P', 'E', 'I', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint is truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const std::vector<NamedArray>& arrays) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    put_u32(out, static_cast<std::uint32_t>(a.dims.size()));
    std::size_t count = 1;
    for (auto d : a.dims) {
      put_u32(out, d);
      count *= d;
    }
    if (count != a.values.size()) throw std::invalid_argument("checkpoint array " + a.name + " has wrong size");
    for (float f : a.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<NamedArray> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error("not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<NamedArray> arrays;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray a;
    a.name.resize(r.u32());
    r.raw(a.name.data(), a.name.size());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw std::runtime_error("checkpoint rank too large");
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      a.dims.push_back(r.u32());
      n *= a.dims.back();
    }
    a.values.resize(n);
    for (auto& f : a.values) f = std::bit_cast<float>(r.u32());
    arrays.push_back(std::move(a));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes in checkpoint");
  return arrays;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = serialize_checkpoint(arrays);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

template <typename T>
std::vector<NamedArray> to_named_arrays(const std::vector<ad::Parameter<T>>& params) {
  std::vector<NamedArray> out;
  for (const auto& p : params) {
    NamedArray a;
    a.name = p.name;
    for (int i = 0; i < p.shape.rank; ++i) a.dims.push_back(static_cast<std::uint32_t>(p.shape[i]));
    a.values.assign(p.value.begin(), p.value.end());
    out.push_back(std::move(a));
  }
  return out;
}

template <typename T>
void assign_named_arrays(const std::vector<NamedArray>& arrays, std::vector<ad::Parameter<T>>& params) {
  if (arrays.size() != params.size()) {
    throw ConfigError("checkpoint has " + std::to_string(arrays.size()) + " arrays, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& a = arrays[k];
    auto& p = params[k];
    bool ok = a.name == p.name && static_cast<int>(a.dims.size()) == p.shape.rank;
    for (int i = 0; ok && i < p.shape.rank; ++i) ok = static_cast<int>(a.dims[i]) == p.shape[i];
    if (!ok) throw ConfigError("checkpoint array " + a.name + " does not match model parameter " + p.name);
    for (std::size_t i = 0; i < a.values.size(); ++i) p.value[i] = static_cast<T>(a.values[i]);
  }
}

template std::vector<NamedArray> to_named_arrays(const std::vector<ad::Parameter<float>>&);
template std::vector<NamedArray> to_named_arrays(const std::vector<ad::Parameter<double>>&);
template void assign_named_arrays(const std::vector<NamedArray>&, std::vector<ad::Parameter<float>>&);
template void assign_named_arrays(const std::vector<NamedArray>&, std::vector<ad::Parameter<double>>&);

}  // namespace pei

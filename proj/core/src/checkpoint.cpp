#include "a2j/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace a2j {

namespace {

constexpr char kMagic[4] = {'A', '2', 'J', 'C'};

template <typename U>
void put(std::ostream& out, U v) {
  using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
  const Bits b = std::bit_cast<Bits>(v);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = char((b >> (8 * i)) & 0xff);
  out.write(buf, sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::string& what) {
  using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("checkpoint truncated in " + what);
  Bits b = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) b |= Bits(buf[i]) << (8 * i);
  return std::bit_cast<U>(b);
}

std::string get_string(std::istream& in, std::uint64_t n, const std::string& what) {
  if (n > (1u << 24)) throw IoError("checkpoint: implausible length in " + what);
  std::string s(n, '\0');
  if (!in.read(s.data(), std::streamsize(n))) throw IoError("checkpoint truncated in " + what);
  return s;
}

CheckpointHeader read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(path.string() + ": not a checkpoint (bad magic)");
  }
  CheckpointHeader h;
  h.version = get<std::uint32_t>(in, "header");
  if (h.version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(h.version));
  }
  h.value_bytes = get<std::uint32_t>(in, "header");
  h.step = get<std::uint64_t>(in, "header");
  h.config_text = get_string(in, get<std::uint64_t>(in, "header"), "config");
  return h;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamList<T>& params,
                     const std::string& config_text, std::uint64_t step) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, sizeof(T));
  put<std::uint64_t>(out, step);
  put<std::uint64_t>(out, config_text.size());
  out.write(config_text.data(), std::streamsize(config_text.size()));
  put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put<std::uint32_t>(out, std::uint32_t(p.name.size()));
    out.write(p.name.data(), std::streamsize(p.name.size()));
    put<std::uint32_t>(out, std::uint32_t(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) put<std::uint64_t>(out, d);
    for (T v : p.tensor.values()) put<T>(out, v);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_header(in, path);
}

template <typename T>
CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParamList<T>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const CheckpointHeader h = read_header(in, path);
  if (h.value_bytes != sizeof(T)) {
    throw IoError(path.string() + ": stored " + std::to_string(h.value_bytes * 8) +
                  "-bit values, expected " + std::to_string(sizeof(T) * 8));
  }
  std::map<std::string, Param<T>*> by_name;
  for (auto& p : params) by_name[p.name] = &p;
  const auto count = get<std::uint64_t>(in, "parameter count");
  if (count != params.size()) {
    throw IoError(path.string() + ": " + std::to_string(count) + " parameters stored, model has " +
                  std::to_string(params.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_string(in, get<std::uint32_t>(in, "name"), "name");
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError(path.string() + ": unknown parameter " + name);
    const auto rank = get<std::uint32_t>(in, name);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in, name);
    Tensor<T>& t = it->second->tensor;
    if (shape != t.shape()) {
      throw IoError(path.string() + ": parameter " + name + " has shape " + shape_str(shape) +
                    ", model expects " + shape_str(t.shape()));
    }
    for (T& v : t.mutable_values()) v = get<T>(in, name);
  }
  return h;
}

template void save_checkpoint<float>(const std::filesystem::path&, const ParamList<float>&,
                                     const std::string&, std::uint64_t);
template void save_checkpoint<double>(const std::filesystem::path&, const ParamList<double>&,
                                      const std::string&, std::uint64_t);
template CheckpointHeader load_checkpoint<float>(const std::filesystem::path&, ParamList<float>&);
template CheckpointHeader load_checkpoint<double>(const std::filesystem::path&, ParamList<double>&);

}  // namespace a2j

#include "gazeprobe/gptw.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "gazeprobe/errors.hpp"

namespace gazeprobe::gptw {
namespace {

static_assert(std::endian::native == std::endian::little, "GPTW1 I/O assumes a little-endian host");

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    T v;
    if (!in_.read(reinterpret_cast<char*>(&v), sizeof(T))) {
      throw ModelError(std::string("GPTW1: truncated file while reading ") + what);
    }
    return v;
  }

  std::string get_string(std::size_t n, const char* what) {
    std::string s(n, '\0');
    if (n && !in_.read(s.data(), static_cast<std::streamsize>(n))) {
      throw ModelError(std::string("GPTW1: truncated file while reading ") + what);
    }
    return s;
  }

  void get_floats(std::vector<float>& buf, const std::string& name) {
    if (!in_.read(reinterpret_cast<char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      throw ModelError("GPTW1: truncated file while reading tensor " + name);
    }
  }

  bool done() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
};

std::vector<NamedTensor> read_stream(std::istream& stream) {
  Reader in(stream);
  const std::string magic = in.get_string(4, "magic");
  if (magic != std::string(kMagic, 4)) throw ModelError("GPTW1: bad magic \"" + magic + "\"");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion) throw ModelError("GPTW1: unsupported version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  std::vector<float> buf;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint16_t>("name length");
    std::string name = in.get_string(name_len, "tensor name");
    const auto ndim = in.get<std::uint8_t>("ndim");
    std::vector<std::size_t> shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = in.get<std::uint32_t>("dimension");
      if (d == 0) throw ModelError("GPTW1: tensor " + name + " has a zero dimension");
      numel *= d;
    }
    buf.resize(numel);
    in.get_floats(buf, name);
    std::vector<double> data(buf.begin(), buf.end());
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (!in.done()) throw ModelError("GPTW1: trailing bytes after last tensor");
  return out;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace

std::vector<NamedTensor> read_bytes(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_stream(in);
}

std::vector<NamedTensor> read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelError("cannot open weights file " + path.string());
  return read_stream(f);
}

std::string write_bytes(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw ModelError("GPTW1: name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put<float>(out, static_cast<float>(v));
  }
  return out;
}

void write(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const std::string bytes = write_bytes(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ModelError("cannot write weights file " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ModelError("short write to " + path.string());
}

}  // namespace gazeprobe::gptw

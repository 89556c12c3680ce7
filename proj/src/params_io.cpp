#include "vsseg/params_io.hpp"

#include <cstring>
#include <fstream>

#include "binio.hpp"
#include "vsseg/errors.hpp"

namespace vsseg {

namespace {

constexpr char kParamsMagic[4] = {'N', 'T', 'C', '0'};
constexpr std::uint32_t kParamsVersion = 1;

}  // namespace

void save_params(const ParamStore& ps, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open params file for writing: " + path);
  os.write(kParamsMagic, 4);
  binio::write_u32(os, kParamsVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(ps.tensors.size()));
  for (const auto& [name, tensor] : ps.tensors) {
    if (name.size() > 0xffff) throw IoError("tensor name too long: " + name);
    binio::write_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const unsigned char rank = static_cast<unsigned char>(tensor.rank());
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (int e : tensor.shape) binio::write_u32(os, static_cast<std::uint32_t>(e));
    for (double v : tensor.data) binio::write_f32(os, static_cast<float>(v));
  }
  if (!os) throw IoError("failed writing params file: " + path);
}

ParamStore load_params(const std::string& path) {
  binio::Reader r(path, "params");
  char magic[4];
  r.read_bytes(magic, 4);
  if (std::memcmp(magic, kParamsMagic, 4) != 0) {
    throw BadMagicError("bad magic in params file: " + path);
  }
  const std::uint32_t version = r.read_u32();
  if (version != kParamsVersion) {
    throw BadVersionError("params file version " + std::to_string(version) + " unsupported: " +
                          path);
  }
  const std::uint32_t count = r.read_u32();
  ParamStore ps;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint16_t name_len = r.read_u16();
    std::string name(name_len, '\0');
    if (name_len > 0) r.read_bytes(name.data(), name_len);
    unsigned char rank = 0;
    r.read_bytes(&rank, 1);
    Shape shape(rank);
    for (int a = 0; a < rank; ++a) shape[static_cast<std::size_t>(a)] = static_cast<int>(r.read_u32());
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = r.read_f32();
    if (ps.has(name)) throw DuplicateNameError("duplicate tensor name in params file: " + name);
    ps.add(name, std::move(t));
  }
  r.expect_eof();
  return ps;
}

}  // namespace vsseg

#include "ovvis/ovtf.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ovvis {

namespace {

constexpr char kMagic[4] = {'O', 'V', 'T', 'F'};
constexpr uint8_t kVersion = 1;

void put_u64_le(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

uint64_t get_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

static_assert(std::endian::native == std::endian::little,
              "OVTF I/O assumes a little-endian host");

}  // namespace

void save_ovtf(const std::string& path, const Tensor& t, OvtfDtype dtype) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  os.put(static_cast<char>(dtype));
  if (t.rank() > 255) throw IoError("OVTF rank limit exceeded");
  os.put(static_cast<char>(t.rank()));
  for (size_t d : t.shape()) put_u64_le(os, d);
  if (dtype == OvtfDtype::kF64) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  } else {
    std::vector<float> narrow(t.numel());
    for (size_t i = 0; i < t.numel(); ++i) narrow[i] = static_cast<float>(t.at(i));
    os.write(reinterpret_cast<const char*>(narrow.data()),
             static_cast<std::streamsize>(narrow.size() * sizeof(float)));
  }
  if (!os) throw IoError("write failed: " + path);
}

Tensor load_ovtf(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not an OVTF file: " + path);
  }
  const int version = is.get();
  if (version != kVersion) throw IoError("unsupported OVTF version in " + path);
  const int dtype = is.get();
  if (dtype != 1 && dtype != 2) throw IoError("unsupported OVTF dtype in " + path);
  const int rank = is.get();
  if (rank < 0) throw IoError("truncated OVTF header: " + path);
  std::vector<size_t> shape(static_cast<size_t>(rank));
  for (auto& d : shape) d = static_cast<size_t>(get_u64_le(is));
  if (!is) throw IoError("truncated OVTF header: " + path);
  Tensor t(shape);
  if (dtype == 2) {
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
  } else {
    std::vector<float> narrow(t.numel());
    is.read(reinterpret_cast<char*>(narrow.data()),
            static_cast<std::streamsize>(narrow.size() * sizeof(float)));
    for (size_t i = 0; i < t.numel(); ++i) t.at(i) = static_cast<double>(narrow[i]);
  }
  if (!is) throw IoError("truncated OVTF payload: " + path);
  return t;
}

OvtfDtype ovtf_dtype(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char header[6];
  is.read(header, 6);
  if (!is || std::memcmp(header, kMagic, 4) != 0) {
    throw IoError("not an OVTF file: " + path);
  }
  return static_cast<OvtfDtype>(header[5]);
}

}  // namespace ovvis

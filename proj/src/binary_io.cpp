#include "graspfs/binary_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <zlib.h>

#include "graspfs/errors.hpp"

namespace graspfs {

namespace io {

void Reader::fail(const std::string& why) const {
  throw FormatError(what_ + ": " + why + " at byte " + std::to_string(pos_));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string seal(const Writer& w) {
  Writer out;
  out.raw(w.bytes());
  out.u32(crc32(w.bytes()));
  return out.bytes();
}

std::string_view unseal(std::string_view bytes, const std::string& what) {
  if (bytes.size() < 4) throw FormatError(what + ": file too short");
  const auto body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4), what);
  if (tail.u32() != crc32(body)) throw FormatError(what + ": checksum mismatch (corrupt file)");
  return body;
}

}  // namespace io

}  // namespace graspfs

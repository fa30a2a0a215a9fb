#include "mimlab/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace mimlab {

namespace {

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw ArchiveError("archive truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  uint8_t u8() {
    need(1);
    return static_cast<unsigned char>(buf[pos++]);
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

constexpr size_t kAlign = 64;

size_t aligned(size_t off) { return (off + kAlign - 1) / kAlign * kAlign; }

struct EntryMeta {
  std::string name;
  std::vector<int64_t> shape;
  uint64_t offset = 0;
  uint64_t nbytes = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open archive: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

std::vector<EntryMeta> parse_table(const std::string& buf) {
  Reader r{buf};
  r.need(4);
  if (std::memcmp(buf.data(), kArchiveMagic, 4) != 0) throw ArchiveError("bad archive magic");
  r.pos = 4;
  const uint32_t version = r.u32();
  if (version != kArchiveVersion) throw ArchiveError("unsupported archive version");
  const uint64_t count = r.u64();
  std::vector<EntryMeta> entries;
  entries.reserve(count);
  std::string prev;
  for (uint64_t e = 0; e < count; ++e) {
    EntryMeta m;
    const uint32_t name_len = r.u32();
    m.name = r.bytes(name_len);
    if (e > 0 && !(prev < m.name)) throw ArchiveError("archive entries not sorted by name");
    prev = m.name;
    const uint8_t dtype = r.u8();
    if (dtype != 0) throw ArchiveError("unsupported dtype tag");
    const uint8_t rank = r.u8();
    int64_t numel = 1;
    for (uint8_t i = 0; i < rank; ++i) {
      const auto ext = static_cast<int64_t>(r.u64());
      if (ext <= 0) throw ArchiveError("non-positive extent");
      m.shape.push_back(ext);
      numel *= ext;
    }
    m.offset = r.u64();
    m.nbytes = r.u64();
    if (m.offset % kAlign != 0) throw ArchiveError("payload offset not 64-byte aligned");
    if (m.nbytes != static_cast<uint64_t>(numel) * 4) throw ArchiveError("payload size disagrees with shape");
    if (m.offset + m.nbytes > buf.size()) throw ArchiveError("payload out of bounds");
    entries.push_back(std::move(m));
  }
  return entries;
}

}  // namespace

void write_archive(const std::string& path, const ParamMap<float>& entries) {
  // pass 1: table size (ParamMap iterates in name order)
  size_t table_size = 4 + 4 + 8;
  for (const auto& [name, t] : entries)
    table_size += 4 + name.size() + 1 + 1 + 8 * t.shape.size() + 8 + 8;

  std::string buf;
  buf.reserve(table_size);
  buf.append(kArchiveMagic, 4);
  put_u32(buf, kArchiveVersion);
  put_u64(buf, entries.size());

  size_t offset = aligned(table_size);
  for (const auto& [name, t] : entries) {
    put_u32(buf, static_cast<uint32_t>(name.size()));
    buf.append(name);
    buf.push_back(0);  // dtype f32
    buf.push_back(static_cast<char>(t.shape.size()));
    for (int64_t e : t.shape) put_u64(buf, static_cast<uint64_t>(e));
    put_u64(buf, offset);
    const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * 4;
    put_u64(buf, nbytes);
    offset = aligned(offset + nbytes);
  }

  for (const auto& [name, t] : entries) {
    buf.resize(aligned(buf.size()), '\0');
    for (float v : t.data) {
      const auto bits = std::bit_cast<uint32_t>(v);
      for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot open archive for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ArchiveError("archive write failed: " + path);
}

ParamMap<float> read_archive(const std::string& path) {
  const std::string buf = read_file(path);
  ParamMap<float> out;
  for (const EntryMeta& m : parse_table(buf)) {
    Tensor t(m.shape);
    for (size_t i = 0; i < t.data.size(); ++i) {
      uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<uint32_t>(static_cast<unsigned char>(buf[m.offset + i * 4 + b])) << (8 * b);
      t.data[i] = std::bit_cast<float>(bits);
    }
    out.emplace(m.name, std::move(t));
  }
  return out;
}

std::vector<std::string> archive_entry_names(const std::string& path) {
  const std::string buf = read_file(path);
  std::vector<std::string> names;
  for (const EntryMeta& m : parse_table(buf)) names.push_back(m.name);
  return names;
}

}  // namespace mimlab

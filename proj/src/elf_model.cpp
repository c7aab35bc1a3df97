#include "rwscope/elf_model.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "rwscope/errors.hpp"

namespace rwscope::elf {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic{0x7f, 'E', 'L', 'F'};
constexpr std::uint8_t kClass64 = 2;
constexpr std::uint8_t kDataLsb = 1;
constexpr std::size_t kPhdrSize = 56;
constexpr std::size_t kShdrSize = 64;
constexpr std::uint16_t kShnXindex = 0xffff;
constexpr std::uint16_t kPnXnum = 0xffff;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T read(std::uint64_t offset) const {
    if (offset > bytes_.size() || bytes_.size() - offset < sizeof(T)) {
      throw MalformedElf("read past end of file", offset);
    }
    T value{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<T>(bytes_[offset + i]) << (8 * i));
    }
    return value;
  }

  std::uint64_t size() const { return bytes_.size(); }
  std::span<const std::uint8_t> bytes() const { return bytes_; }

 private:
  std::span<const std::uint8_t> bytes_;
};

struct RawSection {
  std::uint32_t name_offset;
  std::uint32_t type;
  std::uint64_t offset;
  std::uint64_t size;
  std::uint32_t link;
  std::uint32_t info;
};

RawSection read_section(const Reader& r, std::uint64_t base) {
  return RawSection{
      .name_offset = r.read<std::uint32_t>(base + 0),
      .type = r.read<std::uint32_t>(base + 4),
      .offset = r.read<std::uint64_t>(base + 24),
      .size = r.read<std::uint64_t>(base + 32),
      .link = r.read<std::uint32_t>(base + 40),
      .info = r.read<std::uint32_t>(base + 44),
  };
}

// Table of `count` entries of `entsize` bytes at `offset`; must lie in the file.
Extent checked_table(const Reader& r, std::uint64_t offset, std::uint64_t count,
                     std::uint64_t entsize, std::size_t min_entsize, const char* what) {
  if (count == 0) return {};
  if (entsize < min_entsize) {
    throw MalformedElf(std::string(what) + " entry size too small", offset);
  }
  if (offset > r.size() || count > (r.size() - offset) / entsize) {
    throw MalformedElf(std::string(what) + " table extends past end of file", offset);
  }
  return {offset, count * entsize};
}

std::string read_name(const Reader& r, const std::optional<Extent>& strtab, std::uint32_t off) {
  if (!strtab || off >= strtab->length) return {};
  const auto bytes = r.bytes().subspan(strtab->offset + off, strtab->length - off);
  const auto end = std::find(bytes.begin(), bytes.end(), std::uint8_t{0});
  return std::string(bytes.begin(), end);
}

}  // namespace

bool ElfSummary::has_section(std::string_view name) const {
  return std::any_of(sections.begin(), sections.end(),
                     [&](const SectionEntry& s) { return s.name == name; });
}

std::string_view to_string(ElfType type) {
  switch (type) {
    case ElfType::Exec: return "EXEC";
    case ElfType::Dyn: return "DYN";
    case ElfType::Rel: return "REL";
    case ElfType::Other: return "OTHER";
  }
  return "OTHER";
}

ElfSummary parse_elf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kElfHeaderSize) {
    throw MalformedElf("file shorter than the 64-byte ELF header", bytes.size());
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw MalformedElf("bad ELF magic", 0);
  }
  if (bytes[4] != kClass64) throw Unsupported("only 64-bit ELF is supported");
  if (bytes[5] != kDataLsb) throw Unsupported("only little-endian ELF is supported");

  const Reader r(bytes);
  ElfSummary out;
  out.file_size = bytes.size();
  out.type_code = r.read<std::uint16_t>(16);
  switch (out.type_code) {
    case 1: out.elf_type = ElfType::Rel; break;
    case 2: out.elf_type = ElfType::Exec; break;
    case 3: out.elf_type = ElfType::Dyn; break;
    default: out.elf_type = ElfType::Other; break;
  }
  out.machine = r.read<std::uint16_t>(18);

  const auto phoff = r.read<std::uint64_t>(32);
  const auto shoff = r.read<std::uint64_t>(40);
  const auto phentsize = r.read<std::uint16_t>(54);
  std::uint64_t phnum = r.read<std::uint16_t>(56);
  const auto shentsize = r.read<std::uint16_t>(58);
  std::uint64_t shnum = r.read<std::uint16_t>(60);
  std::uint64_t shstrndx = r.read<std::uint16_t>(62);

  // Extended numbering keeps the real counts in section header 0.
  if (shoff != 0 && (shnum == 0 || shstrndx == kShnXindex || phnum == kPnXnum)) {
    if (shentsize < kShdrSize) throw MalformedElf("section header entry size too small", shoff);
    const RawSection first = read_section(r, shoff);
    if (shnum == 0) shnum = first.size;
    if (shstrndx == kShnXindex) shstrndx = first.link;
    if (phnum == kPnXnum) phnum = first.info;
  }

  out.program_header_extent =
      checked_table(r, phoff, phnum, phentsize, kPhdrSize, "program header");
  out.section_header_extent =
      checked_table(r, shoff, shoff == 0 ? 0 : shnum, shentsize, kShdrSize, "section header");

  for (std::uint64_t i = 0; i < out.program_header_extent.length / std::max<std::uint64_t>(phentsize, 1); ++i) {
    if (r.read<std::uint32_t>(phoff + i * phentsize) == kPtInterp) out.has_interp = true;
  }

  std::vector<RawSection> raw;
  if (out.section_header_extent.length > 0) {
    raw.reserve(shnum);
    for (std::uint64_t i = 0; i < shnum; ++i) raw.push_back(read_section(r, shoff + i * shentsize));
  }

  std::optional<Extent> strtab;
  if (shstrndx < raw.size() && raw[shstrndx].type != kShtNobits &&
      raw[shstrndx].offset <= out.file_size) {
    const auto& s = raw[shstrndx];
    strtab = Extent{s.offset, std::min(s.size, out.file_size - s.offset)};
  }

  out.sections.reserve(raw.size());
  for (const RawSection& s : raw) {
    SectionEntry e;
    e.name = read_name(r, strtab, s.name_offset);
    e.sh_type = s.type;
    e.file_offset = s.offset;
    e.mem_size = s.size;
    if (s.type != kShtNobits && s.offset < out.file_size) {
      e.file_size_on_disk = std::min(s.size, out.file_size - s.offset);
    }
    if (e.name == ".interp") out.has_interp = true;
    out.sections.push_back(std::move(e));
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return data;
}

ElfSummary parse_elf_file(const std::filesystem::path& path) {
  const auto data = read_file(path);
  return parse_elf(data);
}

namespace {

// Disjoint half-open intervals already attributed to some bucket.
class ClaimSet {
 public:
  // Claims the unclaimed part of [begin, end) and returns its size.
  std::uint64_t claim(std::uint64_t begin, std::uint64_t end) {
    if (begin >= end) return 0;
    std::uint64_t fresh = 0;
    std::uint64_t cursor = begin;
    auto it = claimed_.upper_bound(begin);
    if (it != claimed_.begin()) {
      auto prev = std::prev(it);
      if (prev->second > cursor) cursor = std::min(prev->second, end);
    }
    while (cursor < end) {
      const std::uint64_t gap_end = (it != claimed_.end() && it->first < end) ? it->first : end;
      fresh += gap_end - cursor;
      if (it == claimed_.end() || it->first >= end) break;
      cursor = std::min(it->second, end);
      ++it;
    }
    insert(begin, end);
    return fresh;
  }

 private:
  void insert(std::uint64_t begin, std::uint64_t end) {
    auto it = claimed_.upper_bound(begin);
    if (it != claimed_.begin()) {
      auto prev = std::prev(it);
      if (prev->second >= begin) {
        begin = prev->first;
        end = std::max(end, prev->second);
        it = claimed_.erase(prev);
      }
    }
    while (it != claimed_.end() && it->first <= end) {
      end = std::max(end, it->second);
      it = claimed_.erase(it);
    }
    claimed_.emplace(begin, end);
  }

  std::map<std::uint64_t, std::uint64_t> claimed_;
};

std::uint64_t clamp_end(const Extent& e, std::uint64_t file_size) {
  if (e.offset >= file_size) return file_size;
  return e.offset + std::min(e.length, file_size - e.offset);
}

}  // namespace

std::uint64_t SizeProfile::total() const {
  return std::accumulate(buckets.begin(), buckets.end(), std::uint64_t{0},
                         [](std::uint64_t acc, const auto& kv) { return acc + kv.second; });
}

SizeProfile size_profile(const ElfSummary& summary, std::uint64_t file_size) {
  SizeProfile profile;
  ClaimSet claims;
  auto claim_extent = [&](const Extent& e) {
    return claims.claim(std::min(e.offset, file_size), clamp_end(e, file_size));
  };

  profile.buckets[kBucketElfHeader] = claim_extent({0, kElfHeaderSize});
  profile.buckets[kBucketProgramHeaders] = claim_extent(summary.program_header_extent);
  profile.buckets[kBucketSectionHeaders] = claim_extent(summary.section_header_extent);

  std::vector<std::size_t> order(summary.sections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return summary.sections[a].file_offset < summary.sections[b].file_offset;
  });
  for (const std::size_t idx : order) {
    const SectionEntry& s = summary.sections[idx];
    if (s.sh_type == kShtNull || s.sh_type == kShtNobits) continue;
    const std::string bucket = s.name.empty() ? "[section " + std::to_string(idx) + "]" : s.name;
    profile.buckets[bucket] += claim_extent({s.file_offset, s.file_size_on_disk});
  }

  const std::uint64_t claimed = profile.total();
  profile.buckets[kBucketUnmapped] = file_size - claimed;
  return profile;
}

std::map<std::string, std::optional<double>> size_delta(const SizeProfile& before,
                                                        const SizeProfile& after) {
  std::map<std::string, std::optional<double>> out;
  for (const auto& [name, b] : before.buckets) {
    const auto it = after.buckets.find(name);
    if (it == after.buckets.end() || b == 0) {
      out[name] = std::nullopt;
    } else {
      out[name] = static_cast<double>(it->second) / static_cast<double>(b) * 100.0;
    }
  }
  for (const auto& [name, a] : after.buckets) {
    out.try_emplace(name, std::nullopt);
  }
  return out;
}

}  // namespace rwscope::elf

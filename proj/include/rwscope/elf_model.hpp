#pragma once

// Minimal ELF64 little-endian reader and byte-attribution profiler.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rwscope::elf {

enum class ElfType { Exec, Dyn, Rel, Other };

inline constexpr std::uint32_t kShtNull = 0;
inline constexpr std::uint32_t kShtNobits = 8;
inline constexpr std::uint32_t kPtInterp = 3;
inline constexpr std::size_t kElfHeaderSize = 64;

struct Extent {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;

  bool operator==(const Extent&) const = default;
};

struct SectionEntry {
  std::string name;
  std::uint32_t sh_type = 0;
  std::uint64_t file_offset = 0;
  std::uint64_t file_size_on_disk = 0;  // 0 for NOBITS
  std::uint64_t mem_size = 0;

  bool operator==(const SectionEntry&) const = default;
};

struct ElfSummary {
  std::uint64_t file_size = 0;
  ElfType elf_type = ElfType::Other;
  std::uint16_t type_code = 0;  // raw e_type, meaningful for ElfType::Other
  std::uint16_t machine = 0;
  bool has_interp = false;
  std::vector<SectionEntry> sections;  // section-header-table order
  Extent program_header_extent;
  Extent section_header_extent;

  bool has_section(std::string_view name) const;
  bool operator==(const ElfSummary&) const = default;
};

/// Parse an in-memory ELF image.
///
/// Throws MalformedElf for bad magic, truncated headers, or header tables
/// that run past the end of the buffer, and Unsupported for 32-bit or
/// big-endian images. A missing or broken section-name string table
/// yields empty section names.
ElfSummary parse_elf(std::span<const std::uint8_t> bytes);

/// Reads the whole file and parses it. Throws IoError if unreadable.
ElfSummary parse_elf_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

std::string_view to_string(ElfType type);

inline constexpr const char* kBucketElfHeader = "[ELF Header]";
inline constexpr const char* kBucketProgramHeaders = "[ELF Program Headers]";
inline constexpr const char* kBucketSectionHeaders = "[ELF Section Headers]";
inline constexpr const char* kBucketUnmapped = "[Unmapped]";

struct SizeProfile {
  std::map<std::string, std::uint64_t> buckets;

  std::uint64_t total() const;
  bool operator==(const SizeProfile&) const = default;
};

// Attributes every byte in [0, file_size) to exactly one bucket. Claim order:
// ELF header, program headers, section headers, sections by ascending offset
// (then table order), and the remainder goes to "[Unmapped]".
SizeProfile size_profile(const ElfSummary& summary, std::uint64_t file_size);

// after/before * 100 per bucket; nullopt stands for NA.
std::map<std::string, std::optional<double>> size_delta(const SizeProfile& before,
                                                        const SizeProfile& after);

}  // namespace rwscope::elf

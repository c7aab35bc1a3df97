#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "rwscope/elf_model.hpp"
#include "rwscope/errors.hpp"
#include "support/elf_builder.hpp"
#include "support/fixtures.hpp"
#include "support/readelf_oracle.hpp"

using namespace rwscope;
using namespace rwscope::elf;

namespace {

std::vector<std::filesystem::path> all_binaries() {
  auto v = fixtures::hello_variants();
  v.push_back(fixtures::dir() / "exit7");
  for (const char* sys : {"/bin/ls", "/bin/sh", "/usr/bin/env"}) {
    if (std::filesystem::exists(sys)) v.emplace_back(sys);
  }
  return v;
}

std::uint64_t bucket(const SizeProfile& p, const std::string& name) {
  const auto it = p.buckets.find(name);
  return it == p.buckets.end() ? 0 : it->second;
}

}  // namespace

TEST_CASE("fixtures were built") { CHECK(fixtures::hello_variants().size() >= 4); }

TEST_CASE("readelf parity on local binaries") {
  for (const auto& path : all_binaries()) {
    CAPTURE(path);
    const auto s = parse_elf_file(path);
    const auto ref = oracle::readelf(path.string());
    CHECK(std::string(to_string(s.elf_type)) == ref.type);
    CHECK(s.has_interp == ref.has_interp);
    std::set<std::string> names;
    for (const auto& sec : s.sections) {
      if (!sec.name.empty()) names.insert(sec.name);
    }
    CHECK(names == ref.raw_sections);
    CHECK(s.file_size == std::filesystem::file_size(path));
  }
}

TEST_CASE("bucket sum equals file size") {
  for (const auto& path : all_binaries()) {
    CAPTURE(path);
    const auto bytes = read_file(path);
    const auto p = size_profile(parse_elf(bytes), bytes.size());
    CHECK(p.total() == bytes.size());
    CHECK(bucket(p, kBucketElfHeader) == 64);
    CHECK(p.buckets.count(kBucketUnmapped) == 1);
  }
}

TEST_CASE("trailing bytes only grow [Unmapped]") {
  for (const auto& path : all_binaries()) {
    CAPTURE(path);
    auto bytes = read_file(path);
    const auto before = size_profile(parse_elf(bytes), bytes.size());
    for (std::size_t n : {1u, 7u, 4096u}) {
      auto grown = bytes;
      grown.insert(grown.end(), n, 0xAB);
      const auto after = size_profile(parse_elf(grown), grown.size());
      for (const auto& [name, size] : before.buckets) {
        CAPTURE(name);
        if (name == kBucketUnmapped) {
          CHECK(bucket(after, name) == size + n);
        } else {
          CHECK(bucket(after, name) == size);
        }
      }
      CHECK(after.buckets.size() == before.buckets.size());
    }
  }
}

TEST_CASE("parse and profile are deterministic") {
  const auto bytes = read_file(fixtures::hello_variants().front());
  const auto a = parse_elf(bytes);
  const auto b = parse_elf(bytes);
  CHECK(a == b);
  CHECK(size_profile(a, bytes.size()) == size_profile(b, bytes.size()));
}

TEST_CASE("claim precedence on a synthetic image") {
  synth::Image img;
  img.body_size = 100;
  img.phnum = 1;
  // .a [0,40), .b [30,60) overlaps .a, .c is NOBITS, .d sits at the same offset as .b
  img.sections = {{".a", 1, 0, 40}, {".b", 1, 30, 30}, {".c", 8, 60, 500}, {".d", 1, 30, 10}};
  const auto bytes = synth::build(img);
  const auto s = parse_elf(bytes);
  REQUIRE(s.sections.size() == 6);
  const auto p = size_profile(s, bytes.size());

  CHECK(bucket(p, kBucketElfHeader) == 64);
  CHECK(bucket(p, kBucketProgramHeaders) == 56);
  CHECK(bucket(p, kBucketSectionHeaders) == 6 * 64);
  CHECK(bucket(p, ".a") == 40);
  CHECK(bucket(p, ".b") == 20);  // only [40,60) left
  CHECK(bucket(p, ".d") == 0);   // fully shadowed by .a
  CHECK(p.buckets.count(".c") == 0);
  const std::uint64_t strtab = 1 + 3 * 3 + 3 + 10;  // "\0.a\0.b\0.c\0.d\0.shstrtab\0"
  CHECK(bucket(p, ".shstrtab") == strtab);
  // body bytes [60,100) are unclaimed
  CHECK(bucket(p, kBucketUnmapped) == 40);
  CHECK(p.total() == bytes.size());
}

TEST_CASE("sections past end of file are clamped") {
  synth::Image img;
  img.body_size = 16;
  img.sections = {{".big", 1, 0, 1u << 20}};
  const auto bytes = synth::build(img);
  const auto p = size_profile(parse_elf(bytes), bytes.size());
  CHECK(p.total() == bytes.size());
}

TEST_CASE("ELF type and interpreter detection") {
  synth::Image img;
  img.e_type = 3;
  CHECK(parse_elf(synth::build(img)).elf_type == ElfType::Dyn);
  img.e_type = 1;
  CHECK(parse_elf(synth::build(img)).elf_type == ElfType::Rel);
  img.e_type = 4;
  const auto core = parse_elf(synth::build(img));
  CHECK(core.elf_type == ElfType::Other);
  CHECK(core.type_code == 4);

  img.e_type = 2;
  CHECK_FALSE(parse_elf(synth::build(img)).has_interp);
  img.interp_phdr = true;
  CHECK(parse_elf(synth::build(img)).has_interp);
  img.interp_phdr = false;
  img.sections = {{".interp", 1, 0, 8}};
  CHECK(parse_elf(synth::build(img)).has_interp);
}

TEST_CASE("malformed and unsupported inputs") {
  std::vector<std::uint8_t> text(200, 'x');
  CHECK_THROWS_AS(parse_elf(text), MalformedElf);
  CHECK_THROWS_AS(parse_elf(std::vector<std::uint8_t>{0x7f, 'E', 'L', 'F'}), MalformedElf);

  auto good = synth::build({});
  auto b32 = good;
  b32[4] = 1;
  CHECK_THROWS_AS(parse_elf(b32), Unsupported);
  auto be = good;
  be[5] = 2;
  CHECK_THROWS_AS(parse_elf(be), Unsupported);

  auto truncated = good;
  truncated.resize(truncated.size() - 10);  // section header table now runs past EOF
  CHECK_THROWS_AS(parse_elf(truncated), MalformedElf);

  CHECK_THROWS_AS(parse_elf_file("/nonexistent/rwscope/file"), IoError);
}

TEST_CASE("random corruption never escapes as anything but library errors") {
  const auto base = read_file(fixtures::hello_variants().front());
  std::mt19937_64 rng(42);
  for (int iter = 0; iter < 300; ++iter) {
    auto bytes = base;
    for (int k = 0; k < 8; ++k) {
      std::uniform_int_distribution<std::size_t> pos(0, 128);
      bytes[pos(rng)] = static_cast<std::uint8_t>(rng());
    }
    try {
      const auto s = parse_elf(bytes);
      CHECK(size_profile(s, bytes.size()).total() == bytes.size());
    } catch (const Error&) {
    }
  }
}

TEST_CASE("size_delta") {
  SizeProfile before{{{".text", 100}, {".data", 0}, {".old", 10}}};
  SizeProfile after{{{".text", 150}, {".data", 5}, {".new", 3}}};
  const auto d = size_delta(before, after);
  CHECK(d.at(".text").value() == doctest::Approx(150.0));
  CHECK_FALSE(d.at(".data").has_value());
  CHECK_FALSE(d.at(".old").has_value());
  CHECK_FALSE(d.at(".new").has_value());

  const auto same = size_delta(before, before);
  CHECK(same.at(".text").value() == doctest::Approx(100.0));
}

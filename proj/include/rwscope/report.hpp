#pragma once

// Aggregation of run records into success, comparative and size tables.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rwscope/elf_model.hpp"
#include "rwscope/harness.hpp"
#include "rwscope/percent.hpp"

namespace rwscope::report {

using harness::RunRecord;

// Conjunction of key=value equalities over program, compiler, flags,
// relocation (pie|nopie), symbols (present|stripped) and os.
using Predicate = std::vector<std::pair<std::string, std::string>>;

bool matches(const Predicate& p, const harness::VariantConfig& v);

// Named presets (full, pi_symbols, gcc, clang, icx, ollvm) or "k=v,k=v".
// Throws ConfigError for unknown names or keys.
Predicate parse_cohort(std::string_view spec);

struct Cohort {
  std::string name;
  Predicate predicate;
  std::size_t denominator = 0;
};

Cohort cohort_from_manifest(std::string_view spec, const std::vector<harness::ManifestEntry>& manifest);
// Denominator = distinct binary ids among matching records.
Cohort cohort_from_records(std::string_view spec, const std::vector<RunRecord>& records);

enum class Column { Ir, Exe, NullFunc, AflExe, AflFunc };
inline constexpr std::array<Column, 5> kColumns{Column::Ir, Column::Exe, Column::NullFunc, Column::AflExe,
                                                Column::AflFunc};
std::string_view to_string(Column c);

struct Cell {
  std::size_t count = 0;
  std::optional<double> percent;  // raw; nullopt when the denominator is 0
};

struct SuccessRow {
  std::string tool;
  std::array<std::optional<Cell>, 5> cells;  // nullopt = NA (tool emits no IR)
};

struct SuccessTable {
  Cohort cohort;
  std::vector<SuccessRow> rows;
};

/// Per tool: IR/EXE/NullFunc from NOP runs, AFL EXE/Func from AFL runs,
/// counted over distinct binaries in the cohort. An empty tool_order means
/// every tool present, sorted. Throws UnknownTool for tools with no records.
SuccessTable success_table(const std::vector<RunRecord>& records, const Cohort& cohort,
                           std::vector<std::string> tool_order = {});

enum class Metric { RuntimeS, MemKb, OutSizeBytes };
Metric parse_metric(std::string_view s);
std::string_view to_string(Metric m);

enum class Averaging { RatioOfMeans, MeanOfRatios };

struct SuccessFilter {
  dtree::Task task = dtree::Task::Nop;
  bool require_func = false;  // false: exe_ok, true: func_ok == yes

  bool accepts(const RunRecord& r) const;
};

struct ComparativeTable {
  std::vector<std::string> tools;
  std::vector<std::vector<std::optional<double>>> cells;  // [row][col], percent of row tool to column tool

  std::optional<double> at(std::string_view row, std::string_view col) const;
};

/// Over binaries both tools handled (per `filter`), the row tool's metric as
/// a percentage of the column tool's. NA when the intersection is empty or
/// either side averages 0.
ComparativeTable comparative_average(const std::vector<RunRecord>& records, Metric metric,
                                     const SuccessFilter& filter = {},
                                     Averaging averaging = Averaging::RatioOfMeans);

// Mean of rewritten/original size * 100 over each tool's successful NOP runs.
std::map<std::string, std::optional<double>> relative_size(
    const std::vector<RunRecord>& records, const std::map<std::string, std::uint64_t>& original_sizes);

struct ProfilePair {
  elf::SizeProfile before;
  elf::SizeProfile after;
};

// (bucket, tool) -> mean of per-binary size_delta, NA pairs skipped.
std::map<std::pair<std::string, std::string>, std::optional<double>> section_size_table(
    const std::map<std::string, std::vector<ProfilePair>>& pairs_by_tool);

// Rendering. `format` is csv, text or json.
std::string render(const SuccessTable& t, std::string_view format, Rounding rounding);
std::string render(const ComparativeTable& t, std::string_view format, Rounding rounding);
std::string render_tool_percentages(const std::map<std::string, std::optional<double>>& values,
                                    std::string_view value_name, std::string_view format, Rounding rounding);
std::string render_section_table(const std::map<std::pair<std::string, std::string>, std::optional<double>>& t,
                                 std::string_view format, Rounding rounding);

}  // namespace rwscope::report

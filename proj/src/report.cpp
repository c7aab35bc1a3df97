#include "rwscope/report.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rwscope/csv.hpp"
#include "rwscope/errors.hpp"

namespace rwscope::report {

using dtree::Task;
using harness::Check;

// ---------------------------------------------------------------------------
// Cohorts

namespace {

std::string field_value(const harness::VariantConfig& v, std::string_view key) {
  if (key == "program") return v.program;
  if (key == "compiler") return std::string(harness::to_string(v.compiler));
  if (key == "flags") return v.flags;
  if (key == "relocation") return std::string(harness::to_string(v.relocation));
  if (key == "symbols") return std::string(harness::to_string(v.symbols));
  if (key == "os") return v.os_tag;
  throw ConfigError("unknown cohort key '" + std::string(key) + "'");
}

}  // namespace

bool matches(const Predicate& p, const harness::VariantConfig& v) {
  return std::all_of(p.begin(), p.end(), [&](const auto& kv) { return field_value(v, kv.first) == kv.second; });
}

Predicate parse_cohort(std::string_view spec) {
  if (spec == "full") return {};
  if (spec == "pi_symbols") return {{"relocation", "pie"}, {"symbols", "present"}};
  if (spec == "gcc" || spec == "clang" || spec == "icx" || spec == "ollvm") return {{"compiler", std::string(spec)}};
  if (spec.find('=') == std::string_view::npos) throw ConfigError("unknown cohort '" + std::string(spec) + "'");

  Predicate p;
  for (const auto& term : csv::split_line(spec)) {
    const auto eq = term.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("cohort filter '" + term + "' is not key=value");
    std::string key = term.substr(0, eq);
    field_value(harness::VariantConfig{}, key);  // rejects unknown keys
    p.emplace_back(std::move(key), term.substr(eq + 1));
  }
  return p;
}

Cohort cohort_from_manifest(std::string_view spec, const std::vector<harness::ManifestEntry>& manifest) {
  Cohort c{std::string(spec), parse_cohort(spec), 0};
  c.denominator = static_cast<std::size_t>(std::count_if(
      manifest.begin(), manifest.end(), [&](const auto& e) { return matches(c.predicate, e.variant); }));
  return c;
}

Cohort cohort_from_records(std::string_view spec, const std::vector<RunRecord>& records) {
  Cohort c{std::string(spec), parse_cohort(spec), 0};
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (matches(c.predicate, r.variant)) ids.insert(r.binary_id);
  }
  c.denominator = ids.size();
  return c;
}

// ---------------------------------------------------------------------------
// Success table

std::string_view to_string(Column c) {
  switch (c) {
    case Column::Ir: return "IR";
    case Column::Exe: return "EXE";
    case Column::NullFunc: return "NullFunc";
    case Column::AflExe: return "AFL_EXE";
    case Column::AflFunc: return "AFL_Func";
  }
  return "?";
}

namespace {

std::vector<std::string> tools_in(const std::vector<RunRecord>& records) {
  std::set<std::string> tools;
  for (const auto& r : records) tools.insert(r.tool_name);
  return {tools.begin(), tools.end()};
}

bool column_passes(Column c, const RunRecord& r) {
  switch (c) {
    case Column::Ir: return r.task == Task::Nop && r.ir_ok == Check::Yes;
    case Column::Exe: return r.task == Task::Nop && r.exe_ok;
    case Column::NullFunc: return r.task == Task::Nop && r.func_ok == Check::Yes;
    case Column::AflExe: return r.task == Task::Afl && r.exe_ok;
    case Column::AflFunc: return r.task == Task::Afl && r.func_ok == Check::Yes;
  }
  return false;
}

}  // namespace

SuccessTable success_table(const std::vector<RunRecord>& records, const Cohort& cohort,
                           std::vector<std::string> tool_order) {
  const auto present = tools_in(records);
  if (tool_order.empty()) tool_order = present;
  for (const auto& t : tool_order) {
    if (!std::binary_search(present.begin(), present.end(), t)) throw UnknownTool("no records for tool '" + t + "'");
  }

  SuccessTable table{cohort, {}};
  for (const auto& tool : tool_order) {
    std::array<std::set<std::string>, 5> passed;
    bool any_nop = false;
    bool ir_tracked = false;
    for (const auto& r : records) {
      if (r.tool_name != tool || !matches(cohort.predicate, r.variant)) continue;
      if (r.task == Task::Nop) {
        any_nop = true;
        if (r.ir_ok != Check::NotApplicable) ir_tracked = true;
      }
      for (std::size_t c = 0; c < kColumns.size(); ++c) {
        if (column_passes(kColumns[c], r)) passed[c].insert(r.binary_id);
      }
    }
    SuccessRow row{tool, {}};
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      if (kColumns[c] == Column::Ir && any_nop && !ir_tracked) continue;  // NA
      Cell cell{passed[c].size(), std::nullopt};
      if (cohort.denominator > 0) {
        cell.percent = static_cast<double>(cell.count) / static_cast<double>(cohort.denominator) * 100.0;
      }
      row.cells[c] = cell;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Comparative averages

Metric parse_metric(std::string_view s) {
  if (s == "runtime_s") return Metric::RuntimeS;
  if (s == "mem_kb") return Metric::MemKb;
  if (s == "out_size_bytes") return Metric::OutSizeBytes;
  throw ConfigError("metric must be runtime_s, mem_kb or out_size_bytes");
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::RuntimeS: return "runtime_s";
    case Metric::MemKb: return "mem_kb";
    case Metric::OutSizeBytes: return "out_size_bytes";
  }
  return "?";
}

bool SuccessFilter::accepts(const RunRecord& r) const {
  return r.task == task && (require_func ? r.func_ok == Check::Yes : r.exe_ok);
}

std::optional<double> ComparativeTable::at(std::string_view row, std::string_view col) const {
  const auto ri = std::find(tools.begin(), tools.end(), row);
  const auto ci = std::find(tools.begin(), tools.end(), col);
  if (ri == tools.end() || ci == tools.end()) throw UnknownTool("tool not in comparative table");
  return cells[ri - tools.begin()][ci - tools.begin()];
}

namespace {

std::optional<double> metric_of(const RunRecord& r, Metric m) {
  switch (m) {
    case Metric::RuntimeS: return r.runtime_seconds;
    case Metric::MemKb: return static_cast<double>(r.memory_kbytes);
    case Metric::OutSizeBytes:
      if (!r.output_size_bytes) return std::nullopt;
      return static_cast<double>(*r.output_size_bytes);
  }
  return std::nullopt;
}

}  // namespace

ComparativeTable comparative_average(const std::vector<RunRecord>& records, Metric metric,
                                     const SuccessFilter& filter, Averaging averaging) {
  ComparativeTable t;
  t.tools = tools_in(records);
  std::vector<std::map<std::string, double>> values(t.tools.size());
  for (const auto& r : records) {
    if (!filter.accepts(r)) continue;
    const auto v = metric_of(r, metric);
    if (!v) continue;
    const auto idx = std::lower_bound(t.tools.begin(), t.tools.end(), r.tool_name) - t.tools.begin();
    values[idx][r.binary_id] = *v;
  }

  const std::size_t n = t.tools.size();
  t.cells.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double sum_a = 0, sum_b = 0, ratio_sum = 0;
      std::size_t shared = 0, ratio_n = 0;
      for (const auto& [id, va] : values[a]) {
        const auto it = values[b].find(id);
        if (it == values[b].end()) continue;
        ++shared;
        sum_a += va;
        sum_b += it->second;
        if (va > 0 && it->second > 0) {
          ratio_sum += va / it->second;
          ++ratio_n;
        }
      }
      if (shared == 0) continue;
      if (a == b) {
        t.cells[a][b] = 100.0;
      } else if (averaging == Averaging::RatioOfMeans) {
        if (sum_a > 0 && sum_b > 0) t.cells[a][b] = sum_a / sum_b * 100.0;
      } else if (ratio_n > 0) {
        t.cells[a][b] = ratio_sum / static_cast<double>(ratio_n) * 100.0;
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Sizes

std::map<std::string, std::optional<double>> relative_size(const std::vector<RunRecord>& records,
                                                           const std::map<std::string, std::uint64_t>& original_sizes) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    acc.try_emplace(r.tool_name, 0.0, 0);
    if (r.task != Task::Nop || !r.exe_ok || !r.output_size_bytes) continue;
    const auto it = original_sizes.find(r.binary_id);
    if (it == original_sizes.end() || it->second == 0) continue;
    auto& [sum, n] = acc[r.tool_name];
    sum += static_cast<double>(*r.output_size_bytes) / static_cast<double>(it->second) * 100.0;
    ++n;
  }
  std::map<std::string, std::optional<double>> out;
  for (const auto& [tool, sn] : acc) {
    out[tool] = sn.second ? std::optional(sn.first / static_cast<double>(sn.second)) : std::nullopt;
  }
  return out;
}

std::map<std::pair<std::string, std::string>, std::optional<double>> section_size_table(
    const std::map<std::string, std::vector<ProfilePair>>& pairs_by_tool) {
  std::map<std::pair<std::string, std::string>, std::optional<double>> out;
  for (const auto& [tool, pairs] : pairs_by_tool) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& p : pairs) {
      for (const auto& [bucket, delta] : elf::size_delta(p.before, p.after)) {
        auto& [sum, n] = acc[bucket];
        if (delta) {
          sum += *delta;
          ++n;
        }
      }
    }
    for (const auto& [bucket, sn] : acc) {
      out[{bucket, tool}] = sn.second ? std::optional(sn.first / static_cast<double>(sn.second)) : std::nullopt;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string text_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  const auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) out << "  ";
      const std::string pad(width[c] - r[c].size(), ' ');
      out << (c == 0 ? r[c] + pad : pad + r[c]);
    }
    out << '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return out.str();
}

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  csv::write_row(out, header);
  for (const auto& r : rows) csv::write_row(out, r);
  return out.str();
}

std::string tabular(std::string_view format, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
  return format == "csv" ? csv_table(header, rows) : text_table(header, rows);
}

std::string pct(const std::optional<double>& v, std::string_view format, Rounding rounding) {
  if (!v) return "NA";
  return format == "csv" ? format_fixed2(round2(*v, rounding)) : format_percent(*v, rounding);
}

nlohmann::ordered_json json_pct(const std::optional<double>& v, Rounding rounding) {
  if (!v) return nullptr;
  return {{"raw", *v}, {"rounded", round2(*v, rounding)}};
}

void require_format(std::string_view format) {
  if (format != "csv" && format != "text" && format != "json") {
    throw ConfigError("format must be csv, text or json");
  }
}

}  // namespace

std::string render(const SuccessTable& t, std::string_view format, Rounding rounding) {
  require_format(format);
  if (format == "json") {
    nlohmann::ordered_json j;
    j["cohort"] = t.cohort.name;
    j["denominator"] = t.cohort.denominator;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : t.rows) {
      nlohmann::ordered_json r;
      r["tool"] = row.tool;
      for (std::size_t c = 0; c < kColumns.size(); ++c) {
        const auto& cell = row.cells[c];
        r[std::string(to_string(kColumns[c]))] =
            cell ? nlohmann::ordered_json{{"count", cell->count}, {"percent", json_pct(cell->percent, rounding)}}
                 : nlohmann::ordered_json(nullptr);
      }
      j["rows"].push_back(std::move(r));
    }
    return j.dump(2) + "\n";
  }

  std::vector<std::string> header{"tool"};
  for (const auto c : kColumns) {
    header.emplace_back(to_string(c));
    header.push_back(std::string(to_string(c)) + "_pct");
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : t.rows) {
    std::vector<std::string> r{row.tool};
    for (const auto& cell : row.cells) {
      r.push_back(cell ? std::to_string(cell->count) : "NA");
      r.push_back(cell ? pct(cell->percent, format, rounding) : "NA");
    }
    rows.push_back(std::move(r));
  }
  std::string out = tabular(format, header, rows);
  if (format == "text") {
    out = "cohort " + t.cohort.name + " (" + std::to_string(t.cohort.denominator) + " binaries)\n" + out;
  }
  return out;
}

std::string render(const ComparativeTable& t, std::string_view format, Rounding rounding) {
  require_format(format);
  if (format == "json") {
    nlohmann::ordered_json j;
    j["tools"] = t.tools;
    j["cells"] = nlohmann::ordered_json::array();
    for (const auto& row : t.cells) {
      nlohmann::ordered_json r = nlohmann::ordered_json::array();
      for (const auto& v : row) r.push_back(json_pct(v, rounding));
      j["cells"].push_back(std::move(r));
    }
    return j.dump(2) + "\n";
  }
  std::vector<std::string> header{"tool"};
  header.insert(header.end(), t.tools.begin(), t.tools.end());
  std::vector<std::vector<std::string>> rows;
  for (std::size_t a = 0; a < t.tools.size(); ++a) {
    std::vector<std::string> r{t.tools[a]};
    for (const auto& v : t.cells[a]) r.push_back(pct(v, format, rounding));
    rows.push_back(std::move(r));
  }
  return tabular(format, header, rows);
}

std::string render_tool_percentages(const std::map<std::string, std::optional<double>>& values,
                                    std::string_view value_name, std::string_view format, Rounding rounding) {
  require_format(format);
  if (format == "json") {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [tool, v] : values) j[tool] = json_pct(v, rounding);
    return j.dump(2) + "\n";
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& [tool, v] : values) rows.push_back({tool, pct(v, format, rounding)});
  return tabular(format, {"tool", std::string(value_name)}, rows);
}

std::string render_section_table(const std::map<std::pair<std::string, std::string>, std::optional<double>>& t,
                                 std::string_view format, Rounding rounding) {
  require_format(format);
  std::set<std::string> sections, tools;
  for (const auto& [key, v] : t) {
    sections.insert(key.first);
    tools.insert(key.second);
  }
  const auto lookup = [&](const std::string& s, const std::string& tool) -> std::optional<double> {
    const auto it = t.find({s, tool});
    return it == t.end() ? std::nullopt : it->second;
  };
  if (format == "json") {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& s : sections) {
      for (const auto& tool : tools) j[s][tool] = json_pct(lookup(s, tool), rounding);
    }
    return j.dump(2) + "\n";
  }
  std::vector<std::string> header{"section"};
  header.insert(header.end(), tools.begin(), tools.end());
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : sections) {
    std::vector<std::string> r{s};
    for (const auto& tool : tools) r.push_back(pct(lookup(s, tool), format, rounding));
    rows.push_back(std::move(r));
  }
  return tabular(format, header, rows);
}

}  // namespace rwscope::report

#include "rwscope/harness.hpp"

#include <fnmatch.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "rwscope/csv.hpp"
#include "rwscope/errors.hpp"
#include "rwscope/process.hpp"

namespace fs = std::filesystem;

namespace rwscope::harness {

// ---------------------------------------------------------------------------
// Enumerations

std::string_view to_string(Compiler c) {
  switch (c) {
    case Compiler::Clang: return "clang";
    case Compiler::Gcc: return "gcc";
    case Compiler::Icx: return "icx";
    case Compiler::Ollvm: return "ollvm";
  }
  return "gcc";
}

std::string_view to_string(Relocation r) { return r == Relocation::PositionIndependent ? "pie" : "nopie"; }
std::string_view to_string(Symbols s) { return s == Symbols::Present ? "present" : "stripped"; }

Compiler parse_compiler(std::string_view s) {
  if (s == "clang") return Compiler::Clang;
  if (s == "gcc") return Compiler::Gcc;
  if (s == "icx") return Compiler::Icx;
  if (s == "ollvm") return Compiler::Ollvm;
  throw ConfigError("unknown compiler '" + std::string(s) + "'");
}

Relocation parse_relocation(std::string_view s) {
  if (s == "pie") return Relocation::PositionIndependent;
  if (s == "nopie") return Relocation::PositionDependent;
  throw ConfigError("relocation must be pie or nopie, got '" + std::string(s) + "'");
}

Symbols parse_symbols(std::string_view s) {
  if (s == "present") return Symbols::Present;
  if (s == "stripped") return Symbols::Stripped;
  throw ConfigError("symbols must be present or stripped, got '" + std::string(s) + "'");
}

std::string_view to_string(Check c) {
  switch (c) {
    case Check::Yes: return "yes";
    case Check::No: return "no";
    case Check::NotApplicable: return "na";
  }
  return "na";
}

Check parse_check(std::string_view s) {
  if (s == "yes") return Check::Yes;
  if (s == "no") return Check::No;
  if (s == "na") return Check::NotApplicable;
  throw std::invalid_argument("expected yes|no|na, got '" + std::string(s) + "'");
}

void VariantConfig::validate() const {
  static constexpr std::array<std::string_view, 3> kObfuscation{"fla", "sub", "bcf"};
  static constexpr std::array<std::string_view, 6> kOptimisation{"O0", "O1", "O2", "O3", "Os", "Ofast"};
  const auto in = [&](const auto& set) { return std::find(set.begin(), set.end(), flags) != set.end(); };
  if (compiler == Compiler::Ollvm ? !in(kObfuscation) : !in(kOptimisation)) {
    throw ConfigError("flags '" + flags + "' are not valid for compiler " + std::string(to_string(compiler)));
  }
}

// ---------------------------------------------------------------------------
// Manifest and adapter files

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json parse_json(std::string_view text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

std::string required_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ConfigError(where + ": field \"" + key + "\" must be a string");
  }
  return j[key].get<std::string>();
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) throw ConfigError(where + ": field \"" + key + "\" must be a string");
  return j[key].get<std::string>();
}

ToolAdapter adapter_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": adapter must be an object");
  ToolAdapter a;
  a.tool_name = required_string(j, "tool", where);
  if (j.contains("emits_ir")) {
    if (!j["emits_ir"].is_boolean()) throw ConfigError(where + ": emits_ir must be a boolean");
    a.emits_ir = j["emits_ir"].get<bool>();
  }
  a.nop_command = required_string(j, "nop_command", where);
  a.afl_command = optional_string(j, "afl_command", where);
  a.ir_artifact_glob = optional_string(j, "ir_artifact_glob", where);
  a.validate();
  return a;
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(std::string_view json_text) {
  const auto j = parse_json(json_text, "manifest");
  if (!j.is_array()) throw ConfigError("manifest must be a JSON array");
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    const std::string where = "manifest[" + std::to_string(i) + "]";
    if (!e.is_object()) throw ConfigError(where + ": entry must be an object");
    ManifestEntry m;
    m.id = required_string(e, "id", where);
    m.path = required_string(e, "path", where);
    m.variant.program = required_string(e, "program", where);
    m.variant.compiler = parse_compiler(required_string(e, "compiler", where));
    m.variant.flags = required_string(e, "flags", where);
    m.variant.relocation = parse_relocation(required_string(e, "relocation", where));
    m.variant.symbols = parse_symbols(required_string(e, "symbols", where));
    m.variant.os_tag = required_string(e, "os", where);
    if (e.contains("null_invocation") && !e["null_invocation"].is_null()) {
      const auto& inv = e["null_invocation"];
      if (!inv.is_array() || !std::all_of(inv.begin(), inv.end(), [](const auto& x) { return x.is_string(); })) {
        throw ConfigError(where + ": null_invocation must be an array of strings");
      }
      m.null_invocation = inv.get<std::vector<std::string>>();
    }
    m.variant.validate();
    if (std::any_of(out.begin(), out.end(), [&](const ManifestEntry& o) { return o.id == m.id; })) {
      throw ConfigError(where + ": duplicate id '" + m.id + "'");
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  auto entries = parse_manifest(slurp(path));
  // Relative binary paths are taken relative to the manifest's directory.
  for (auto& e : entries) {
    if (e.path.is_relative()) e.path = path.parent_path() / e.path;
  }
  return entries;
}

void ToolAdapter::validate() const {
  if (tool_name.empty()) throw ConfigError("adapter needs a tool name");
  const auto check = [&](const std::string& cmd, const char* which) {
    if (cmd.find("{input}") == std::string::npos || cmd.find("{output}") == std::string::npos) {
      throw ConfigError(tool_name + ": " + which + " must contain {input} and {output}");
    }
  };
  check(nop_command, "nop_command");
  if (afl_command) check(*afl_command, "afl_command");
  try {
    process::expand_command(nop_command, {});
    if (afl_command) process::expand_command(*afl_command, {});
  } catch (const std::invalid_argument& e) {
    throw ConfigError(tool_name + ": " + e.what());
  }
}

std::vector<ToolAdapter> parse_adapters(std::string_view json_text) {
  const auto j = parse_json(json_text, "adapters");
  std::vector<ToolAdapter> out;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(adapter_from_json(j[i], "adapters[" + std::to_string(i) + "]"));
  } else {
    out.push_back(adapter_from_json(j, "adapter"));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (out[i].tool_name == out[k].tool_name) throw ConfigError("duplicate adapter '" + out[i].tool_name + "'");
    }
  }
  return out;
}

std::vector<ToolAdapter> load_adapters(const fs::path& path) { return parse_adapters(slurp(path)); }

// ---------------------------------------------------------------------------
// Records

void RunRecord::validate() const {
  if (func_ok == Check::Yes && !exe_ok) throw std::logic_error(binary_id + "/" + tool_name + ": func passed without EXE");
  if (exe_ok && ir_ok == Check::No) throw std::logic_error(binary_id + "/" + tool_name + ": EXE without IR");
  if (!(runtime_seconds >= 0.0)) throw std::logic_error(binary_id + "/" + tool_name + ": negative runtime");
}

bool RunRecord::has_annotation(std::string_view a) const {
  return std::find(annotations.begin(), annotations.end(), a) != annotations.end();
}

namespace {

bool has_elf_magic(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) return false;
  return magic == std::array<char, 4>{0x7f, 'E', 'L', 'F'};
}

bool any_match(const fs::path& dir, const std::string& pattern) {
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    const std::string rel = fs::relative(it->path(), dir).string();
    if (fnmatch(pattern.c_str(), rel.c_str(), 0) == 0) return true;
  }
  return false;
}

bool is_executable(const fs::path& p) {
  std::error_code ec;
  return fs::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
}

Check missing_ir(const ToolAdapter& a) {
  return a.emits_ir && a.ir_artifact_glob ? Check::No : Check::NotApplicable;
}

}  // namespace

RunRecord run_task(const ToolAdapter& adapter, Task task, const fs::path& input, const fs::path& workdir,
                   double timeout_seconds) {
  adapter.validate();
  RunRecord rec;
  rec.tool_name = adapter.tool_name;
  rec.task = task;
  rec.ir_ok = missing_ir(adapter);

  std::error_code ec;
  fs::create_directories(workdir, ec);
  if (ec) throw WorkdirError("cannot create " + workdir.string() + ": " + ec.message());
  const fs::path dir = fs::absolute(workdir);
  const fs::path output = dir / kOutputName;
  fs::remove(output, ec);

  const std::optional<std::string>& command = task == Task::Nop ? std::optional(adapter.nop_command) : adapter.afl_command;
  if (!command) {
    rec.annotations.emplace_back(annotation::kNoAflSupport);
    return rec;
  }

  const auto argv = process::expand_command(
      *command, {{"input", fs::absolute(input).string()}, {"output", output.string()}, {"workdir", dir.string()}});
  const std::string stem = std::string(to_string(task)) + ".";
  const auto pr = process::run(argv, {.cwd = dir,
                                      .stdout_to = dir / (stem + "stdout"),
                                      .stderr_to = dir / (stem + "stderr"),
                                      .timeout_seconds = timeout_seconds});

  rec.runtime_seconds = pr.wall_seconds;
  rec.memory_kbytes = pr.max_rss_kb > 0 ? static_cast<std::uint64_t>(pr.max_rss_kb) : 0;
  if (rec.memory_kbytes == 0) rec.annotations.emplace_back(annotation::kMemoryUnavailable);
  if (pr.timed_out) rec.annotations.emplace_back(annotation::kTimedOut);

  if (adapter.emits_ir && adapter.ir_artifact_glob) {
    rec.ir_ok = any_match(dir, *adapter.ir_artifact_glob) ? Check::Yes : Check::No;
  }
  if (fs::is_regular_file(output, ec)) rec.output_size_bytes = fs::file_size(output, ec);
  rec.exe_ok = !pr.timed_out && has_elf_magic(output);
  if (rec.exe_ok && rec.ir_ok == Check::No) {
    rec.exe_ok = false;
    rec.annotations.emplace_back(annotation::kIrMissing);
  }
  return rec;
}

CheckResult null_function_test(const fs::path& original, const fs::path& rewritten,
                               const std::vector<std::string>& invocation, double timeout_seconds) {
  if (!is_executable(original) || !is_executable(rewritten)) return {Check::No, false};
  const auto run_one = [&](const fs::path& exe) {
    std::vector<std::string> argv{fs::absolute(exe).string()};
    argv.insert(argv.end(), invocation.begin(), invocation.end());
    return process::run(argv, {.cwd = fs::absolute(rewritten).parent_path(), .timeout_seconds = timeout_seconds});
  };
  process::ProcessResult reference, candidate;
  try {
    reference = run_one(original);
    candidate = run_one(rewritten);
  } catch (const SpawnError&) {
    return {Check::No, false};
  }
  const bool same = candidate.exited_normally() && reference.exited_normally() &&
                    *candidate.exit_code == *reference.exit_code;
  return {same ? Check::Yes : Check::No, candidate.timed_out};
}

CheckResult afl_function_test(const fs::path& rewritten, std::string_view driver_command, double timeout_seconds) {
  const auto argv = process::expand_command(driver_command, {{"target", fs::absolute(rewritten).string()}});
  const auto pr = process::run(argv, {.cwd = fs::absolute(rewritten).parent_path(), .timeout_seconds = timeout_seconds});
  const bool ok = pr.exited_normally() && *pr.exit_code == 0;
  return {ok ? Check::Yes : Check::No, pr.timed_out};
}

// ---------------------------------------------------------------------------
// CSV

void write_results_header(std::ostream& out) { out << kResultsHeader << '\n'; }

void write_result_row(std::ostream& out, const RunRecord& r) {
  char runtime[64];
  std::snprintf(runtime, sizeof runtime, "%.6f", r.runtime_seconds);
  csv::write_row(out, {r.binary_id, r.variant.program, std::string(to_string(r.variant.compiler)), r.variant.flags,
                       std::string(to_string(r.variant.relocation)), std::string(to_string(r.variant.symbols)),
                       r.variant.os_tag, r.tool_name, std::string(dtree::to_string(r.task)),
                       std::string(to_string(r.ir_ok)), r.exe_ok ? "1" : "0", std::string(to_string(r.func_ok)),
                       runtime, std::to_string(r.memory_kbytes),
                       r.output_size_bytes ? std::to_string(*r.output_size_bytes) : std::string()});
}

void write_results_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  write_results_header(out);
  for (const auto& r : records) write_result_row(out, r);
}

std::vector<RunRecord> read_results_csv(std::istream& in) {
  const auto rows = csv::read_all(in);
  if (rows.empty()) throw SchemaError("line 1", "missing header");
  if (csv::split_line(kResultsHeader) != rows.front()) {
    throw SchemaError("line 1", std::string("header must be: ") + kResultsHeader);
  }
  std::vector<RunRecord> out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    const std::string where = "line " + std::to_string(i + 1);
    if (f.size() != 15) throw SchemaError(where, "expected 15 fields");
    try {
      RunRecord r;
      r.binary_id = f[0];
      r.variant.program = f[1];
      r.variant.compiler = parse_compiler(f[2]);
      r.variant.flags = f[3];
      r.variant.relocation = parse_relocation(f[4]);
      r.variant.symbols = parse_symbols(f[5]);
      r.variant.os_tag = f[6];
      r.tool_name = f[7];
      r.task = dtree::parse_task(f[8]);
      r.ir_ok = parse_check(f[9]);
      if (f[10] != "0" && f[10] != "1") throw std::invalid_argument("exe must be 0 or 1");
      r.exe_ok = f[10] == "1";
      r.func_ok = parse_check(f[11]);
      r.runtime_seconds = std::stod(f[12]);
      r.memory_kbytes = std::stoull(f[13]);
      if (!f[14].empty()) r.output_size_bytes = std::stoull(f[14]);
      r.validate();
      out.push_back(std::move(r));
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      throw SchemaError(where, e.what());
    }
  }
  return out;
}

ResultsStore::ResultsStore(std::ostream& out) : out_(out) {
  write_results_header(out_);
  out_.flush();
}

void ResultsStore::append(const RunRecord& r) {
  std::lock_guard lock(mu_);
  write_result_row(out_, r);
  out_.flush();
}

// ---------------------------------------------------------------------------
// Campaign

namespace {

std::string path_safe(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                    c == '_' || c == '-';
    if (!ok) c = '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

RunRecord execute(const ManifestEntry& entry, const ToolAdapter& adapter, Task task, const CampaignOptions& opts) {
  RunRecord rec;
  const fs::path dir = run_directory(opts.workroot, entry.id, adapter.tool_name, task);
  std::error_code ec;
  if (!fs::is_regular_file(entry.path, ec)) {
    rec.tool_name = adapter.tool_name;
    rec.task = task;
    rec.ir_ok = missing_ir(adapter);
    rec.annotations.emplace_back(annotation::kIoError);
  } else {
    try {
      fs::remove_all(dir, ec);
      rec = run_task(adapter, task, entry.path, dir, opts.timeout_seconds);
    } catch (const SpawnError&) {
      rec = RunRecord{};
      rec.tool_name = adapter.tool_name;
      rec.task = task;
      rec.ir_ok = missing_ir(adapter);
      rec.annotations.emplace_back(annotation::kSpawnError);
    } catch (const WorkdirError&) {
      rec = RunRecord{};
      rec.tool_name = adapter.tool_name;
      rec.task = task;
      rec.ir_ok = missing_ir(adapter);
      rec.annotations.emplace_back(annotation::kWorkdirError);
    } catch (const Error&) {
      rec = RunRecord{};
      rec.tool_name = adapter.tool_name;
      rec.task = task;
      rec.ir_ok = missing_ir(adapter);
      rec.annotations.emplace_back(annotation::kIoError);
    }
  }
  rec.binary_id = entry.id;
  rec.variant = entry.variant;

  if (rec.exe_ok) {
    const fs::path output = fs::absolute(dir) / kOutputName;
    CheckResult func{Check::NotApplicable, false};
    if (task == Task::Nop) {
      func = null_function_test(entry.path, output, entry.null_invocation, opts.timeout_seconds);
    } else if (opts.afl_driver) {
      try {
        func = afl_function_test(output, *opts.afl_driver, opts.timeout_seconds);
      } catch (const SpawnError&) {
        func = {Check::No, false};
        rec.annotations.emplace_back(annotation::kSpawnError);
      }
    }
    rec.func_ok = func.value;
    if (func.timed_out) rec.annotations.emplace_back(annotation::kFuncTimedOut);
  }
  rec.validate();
  return rec;
}

}  // namespace

fs::path run_directory(const fs::path& workroot, std::string_view binary_id, std::string_view tool, Task task) {
  return workroot / path_safe(binary_id) / path_safe(tool) / std::string(dtree::to_string(task));
}

std::vector<RunRecord> run_campaign(const std::vector<ManifestEntry>& manifest, const std::vector<ToolAdapter>& adapters,
                                    const std::vector<Task>& tasks, const CampaignOptions& opts) {
  struct Job {
    std::size_t entry, adapter;
    Task task;
  };
  std::vector<Job> jobs;
  jobs.reserve(manifest.size() * adapters.size() * tasks.size());
  for (std::size_t e = 0; e < manifest.size(); ++e) {
    for (std::size_t a = 0; a < adapters.size(); ++a) {
      for (const Task t : tasks) jobs.push_back({e, a, t});
    }
  }

  std::vector<RunRecord> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex sink_mu;
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      results[i] = execute(manifest[job.entry], adapters[job.adapter], job.task, opts);
      if (opts.on_record) {
        std::lock_guard lock(sink_mu);
        opts.on_record(results[i]);
      }
    }
  };

  const std::size_t n_threads = std::clamp<std::size_t>(opts.parallelism, 1, std::max<std::size_t>(jobs.size(), 1));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

}  // namespace rwscope::harness

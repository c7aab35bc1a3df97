#pragma once

// Rewriting experiments: manifests, tool adapters, NOP/AFL tasks, IR/EXE
// checkpoints, functional tests and resource metering.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rwscope/dtree.hpp"

namespace rwscope::harness {

using dtree::Task;

enum class Compiler { Clang, Gcc, Icx, Ollvm };
enum class Relocation { PositionIndependent, PositionDependent };
enum class Symbols { Present, Stripped };

std::string_view to_string(Compiler c);
std::string_view to_string(Relocation r);  // "pie" / "nopie"
std::string_view to_string(Symbols s);
Compiler parse_compiler(std::string_view s);
Relocation parse_relocation(std::string_view s);
Symbols parse_symbols(std::string_view s);

struct VariantConfig {
  std::string program;
  Compiler compiler = Compiler::Gcc;
  std::string flags = "O2";
  Relocation relocation = Relocation::PositionIndependent;
  Symbols symbols = Symbols::Present;
  std::string os_tag;

  // ollvm takes fla/sub/bcf, every other compiler O0..Ofast. Throws ConfigError.
  void validate() const;
  bool operator==(const VariantConfig&) const = default;
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;
  VariantConfig variant;
  std::vector<std::string> null_invocation{"--help"};
};

std::vector<ManifestEntry> parse_manifest(std::string_view json_text);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

struct ToolAdapter {
  std::string tool_name;
  bool emits_ir = false;
  std::string nop_command;  // must contain {input} and {output}
  std::optional<std::string> afl_command;
  std::optional<std::string> ir_artifact_glob;  // relative to the run's working directory

  void validate() const;  // throws ConfigError
};

// Accepts one adapter object or an array of them.
std::vector<ToolAdapter> parse_adapters(std::string_view json_text);
std::vector<ToolAdapter> load_adapters(const std::filesystem::path& path);

// IR uses {Yes, No, NotApplicable}; functional tests use NotApplicable for "not run".
enum class Check { Yes, No, NotApplicable };
std::string_view to_string(Check c);  // yes / no / na
Check parse_check(std::string_view s);

namespace annotation {
inline constexpr const char* kNoAflSupport = "NoAflSupport";
inline constexpr const char* kTimedOut = "TimedOut";
inline constexpr const char* kIoError = "IoError";
inline constexpr const char* kSpawnError = "SpawnError";
inline constexpr const char* kWorkdirError = "WorkdirError";
inline constexpr const char* kIrMissing = "IrMissing";
inline constexpr const char* kMemoryUnavailable = "MemoryUnavailable";
inline constexpr const char* kFuncTimedOut = "FuncTimedOut";
}  // namespace annotation

struct RunRecord {
  std::string binary_id;
  VariantConfig variant;
  std::string tool_name;
  Task task = Task::Nop;
  Check ir_ok = Check::NotApplicable;
  bool exe_ok = false;
  Check func_ok = Check::NotApplicable;
  double runtime_seconds = 0.0;
  std::uint64_t memory_kbytes = 0;
  std::optional<std::uint64_t> output_size_bytes;
  std::vector<std::string> annotations;  // not serialised to the results CSV

  // func yes => exe, exe => ir in {yes, na}; non-negative runtime. Throws std::logic_error.
  void validate() const;
  bool has_annotation(std::string_view a) const;
};

struct CheckResult {
  Check value = Check::No;
  bool timed_out = false;
};

inline constexpr const char* kOutputName = "rewritten";

/// Runs one adapter on one input inside `workdir`.
///
/// The workdir is created if needed; the rewritten binary is expected at
/// workdir/rewritten. Throws SpawnError if the command cannot be started and
/// WorkdirError if the directory cannot be prepared. The returned record has
/// tool, task and checkpoint fields set; binary_id and variant are left for
/// the caller.
RunRecord run_task(const ToolAdapter& adapter, Task task, const std::filesystem::path& input,
                   const std::filesystem::path& workdir, double timeout_seconds);

// Runs both binaries with `invocation`; yes iff the rewritten one exits
// normally within the timeout with the same exit code as the original.
CheckResult null_function_test(const std::filesystem::path& original, const std::filesystem::path& rewritten,
                               const std::vector<std::string>& invocation, double timeout_seconds);

// Runs the driver template with {target} substituted; yes iff it exits 0 in time.
CheckResult afl_function_test(const std::filesystem::path& rewritten, std::string_view driver_command,
                              double timeout_seconds);

// Append-only CSV sink; the single serialisation point for concurrent runs.
class ResultsStore {
 public:
  explicit ResultsStore(std::ostream& out);
  void append(const RunRecord& r);

 private:
  std::mutex mu_;
  std::ostream& out_;
};

inline constexpr const char* kResultsHeader =
    "binary_id,program,compiler,flags,relocation,symbols,os,tool,task,ir,exe,func,runtime_s,mem_kb,out_size_bytes";

void write_results_header(std::ostream& out);
void write_result_row(std::ostream& out, const RunRecord& r);
void write_results_csv(std::ostream& out, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_results_csv(std::istream& in);

struct CampaignOptions {
  std::size_t parallelism = 1;
  double timeout_seconds = 600.0;
  std::optional<std::string> afl_driver;  // template with {target}
  std::filesystem::path workroot = "rwscope-work";
  std::function<void(const RunRecord&)> on_record;  // called serially as runs finish
};

// Directory holding one run's artefacts: workroot/<binary>/<tool>/<task>.
std::filesystem::path run_directory(const std::filesystem::path& workroot, std::string_view binary_id,
                                    std::string_view tool, Task task);

/// Executes binary x adapter x task. Records come back in that canonical
/// order whatever the parallelism; failures stay inside their own record.
std::vector<RunRecord> run_campaign(const std::vector<ManifestEntry>& manifest,
                                    const std::vector<ToolAdapter>& adapters, const std::vector<Task>& tasks,
                                    const CampaignOptions& opts);

}  // namespace rwscope::harness

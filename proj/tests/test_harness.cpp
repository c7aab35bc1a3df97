#include <doctest.h>

#include <csignal>
#include <chrono>
#include <set>
#include <sstream>
#include <tuple>

#include "rwscope/errors.hpp"
#include "rwscope/harness.hpp"
#include "rwscope/process.hpp"
#include "support/campaign.hpp"

using namespace rwscope;
using namespace rwscope::harness;
namespace fs = std::filesystem;

namespace {

ToolAdapter copier() {
  return parse_adapters(campaign::adapter("copier", "copy_tool.sh").dump()).front();
}

using RecordKey = std::tuple<std::string, std::string, std::string, std::string, bool, std::string,
                             std::optional<std::uint64_t>, std::vector<std::string>>;

std::multiset<RecordKey> untimed(const std::vector<RunRecord>& records) {
  std::multiset<RecordKey> out;
  for (const auto& r : records) {
    auto notes = r.annotations;
    std::erase(notes, std::string(annotation::kMemoryUnavailable));
    out.insert({r.binary_id, r.tool_name, std::string(dtree::to_string(r.task)), std::string(to_string(r.ir_ok)),
                r.exe_ok, std::string(to_string(r.func_ok)), r.output_size_bytes, notes});
  }
  return out;
}

void check_monotone(const RunRecord& r) {
  if (r.func_ok == Check::Yes) CHECK(r.exe_ok);
  if (r.exe_ok) CHECK(r.ir_ok != Check::No);
  CHECK(r.runtime_seconds >= 0);
}

}  // namespace

TEST_CASE("expand_command") {
  using process::expand_command;
  CHECK(expand_command("tool -i {input} -o {output}", {{"input", "/a b"}, {"output", "/o"}}) ==
        std::vector<std::string>{"tool", "-i", "/a b", "-o", "/o"});
  CHECK(expand_command("sh -c 'echo {x} > out'", {{"x", "1"}}) == std::vector<std::string>{"sh", "-c", "echo 1 > out"});
  CHECK(expand_command("a \"b c\"  --k={x}", {{"x", "v"}}) == std::vector<std::string>{"a", "b c", "--k=v"});
  CHECK(expand_command("keep {unknown}", {}) == std::vector<std::string>{"keep", "{unknown}"});
  CHECK_THROWS_AS(expand_command("bad 'quote", {}), std::invalid_argument);
}

TEST_CASE("process::run reports exit, signal, timeout and memory") {
  auto r = process::run({"sh", "-c", "exit 5"});
  REQUIRE(r.exit_code.has_value());
  CHECK(*r.exit_code == 5);
  CHECK(r.exited_normally());
  CHECK(r.max_rss_kb > 0);

  r = process::run({"sh", "-c", "kill -SEGV $$"});
  CHECK_FALSE(r.exit_code.has_value());
  CHECK(r.term_signal == SIGSEGV);

  const auto t0 = std::chrono::steady_clock::now();
  r = process::run({"sh", "-c", "sleep 20 & sleep 20; wait"}, {.timeout_seconds = 0.3});
  const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(r.timed_out);
  CHECK_FALSE(r.exited_normally());
  CHECK(took < 5.0);

  campaign::TempDir tmp("proc");
  r = process::run({"sh", "-c", "pwd; echo err >&2"},
                   {.cwd = tmp.path, .stdout_to = tmp.path / "o.txt", .stderr_to = tmp.path / "e.txt"});
  std::string out, err;
  std::getline(std::ifstream(tmp.path / "o.txt"), out);
  std::getline(std::ifstream(tmp.path / "e.txt"), err);
  CHECK(fs::equivalent(out, tmp.path));
  CHECK(err == "err");

  CHECK_THROWS_AS(process::run({"/nonexistent/rwscope-tool"}), SpawnError);
  CHECK_THROWS_AS(process::run({}), SpawnError);
}

TEST_CASE("manifest parsing") {
  auto j = campaign::two_binary_manifest();
  j[0]["null_invocation"] = {"-v"};
  const auto m = parse_manifest(j.dump());
  REQUIRE(m.size() == 2);
  CHECK(m[0].id == "gcc-pie");
  CHECK(m[0].null_invocation == std::vector<std::string>{"-v"});
  CHECK(m[1].null_invocation == std::vector<std::string>{"--help"});
  CHECK(m[1].variant.relocation == Relocation::PositionDependent);
  CHECK(m[1].variant.symbols == Symbols::Stripped);

  auto dup = j;
  dup[1]["id"] = "gcc-pie";
  CHECK_THROWS_AS(parse_manifest(dup.dump()), ConfigError);
  auto bad = j;
  bad[0]["relocation"] = "pic";
  CHECK_THROWS_AS(parse_manifest(bad.dump()), ConfigError);
  bad = j;
  bad[0]["compiler"] = "ollvm";  // ollvm takes obfuscation passes, not O-levels
  CHECK_THROWS_AS(parse_manifest(bad.dump()), ConfigError);
  bad[0]["flags"] = "fla";
  CHECK_NOTHROW(parse_manifest(bad.dump()));
  bad = j;
  bad[0].erase("os");
  CHECK_THROWS_AS(parse_manifest(bad.dump()), ConfigError);
  CHECK_THROWS_AS(parse_manifest("{"), ConfigError);

  campaign::TempDir tmp("manifest");
  fs::create_directories(tmp.path / "sub");
  campaign::write(tmp.path / "sub" / "m.json",
                  nlohmann::json::array({campaign::entry("rel", "bins/x", "gcc", "pie", "present")}));
  CHECK(load_manifest(tmp.path / "sub" / "m.json")[0].path == tmp.path / "sub" / "bins/x");
  CHECK_THROWS_AS(load_manifest(tmp.path / "missing.json"), IoError);
}

TEST_CASE("adapter parsing") {
  const auto two = parse_adapters(campaign::two_adapters().dump());
  REQUIRE(two.size() == 2);
  CHECK(two[0].tool_name == "copier");
  CHECK(two[0].afl_command.has_value());
  CHECK(parse_adapters(campaign::adapter("solo", "copy_tool.sh", false).dump()).front().afl_command == std::nullopt);

  auto j = campaign::adapter("x", "copy_tool.sh");
  j["nop_command"] = "tool {input}";
  CHECK_THROWS_AS(parse_adapters(j.dump()), ConfigError);
  j["nop_command"] = "tool '{input} {output}";
  CHECK_THROWS_AS(parse_adapters(j.dump()), ConfigError);
  CHECK_THROWS_AS(parse_adapters(nlohmann::json::array({campaign::adapter("d", "copy_tool.sh"),
                                                        campaign::adapter("d", "fail_tool.sh")})
                                     .dump()),
                  ConfigError);
}

TEST_CASE("run_task checkpoints") {
  campaign::TempDir tmp("task");
  const auto input = fixtures::dir() / "hello_gcc_pie";

  auto r = run_task(copier(), Task::Nop, input, tmp.path / "copy", 30);
  CHECK(r.exe_ok);
  CHECK(r.ir_ok == Check::NotApplicable);
  CHECK(r.output_size_bytes == fs::file_size(input));
  CHECK(fs::exists(tmp.path / "copy" / "NOP.stdout"));
  CHECK(r.memory_kbytes > 0);

  const auto breaker = parse_adapters(campaign::adapter("breaker", "fail_tool.sh").dump()).front();
  r = run_task(breaker, Task::Nop, input, tmp.path / "fail", 30);
  CHECK_FALSE(r.exe_ok);
  CHECK_FALSE(r.output_size_bytes.has_value());
  std::string line;
  std::getline(std::ifstream(tmp.path / "fail" / "NOP.stderr"), line);
  CHECK(line.find("cannot rewrite") != std::string::npos);

  ToolAdapter ir{"irtool", true, campaign::stub_cmd("ir_tool.sh", "{input} {output} {workdir}"), std::nullopt,
                 "*.ll"};
  r = run_task(ir, Task::Nop, input, tmp.path / "ir", 30);
  CHECK(r.ir_ok == Check::Yes);
  CHECK(r.exe_ok);

  ToolAdapter ir_missing{"irtool", true, campaign::stub_cmd("copy_tool.sh", "{input} {output}"), std::nullopt,
                         "*.ll"};
  r = run_task(ir_missing, Task::Nop, input, tmp.path / "irm", 30);
  CHECK(r.ir_ok == Check::No);
  CHECK_FALSE(r.exe_ok);
  CHECK(r.has_annotation(annotation::kIrMissing));

  r = run_task(copier(), Task::Afl, input, tmp.path / "afl", 30);
  CHECK(r.exe_ok);
  auto no_afl = copier();
  no_afl.afl_command.reset();
  r = run_task(no_afl, Task::Afl, input, tmp.path / "noafl", 30);
  CHECK_FALSE(r.exe_ok);
  CHECK(r.has_annotation(annotation::kNoAflSupport));

  const auto sleeper = parse_adapters(campaign::adapter("sleeper", "sleep_tool.sh").dump()).front();
  const auto t0 = std::chrono::steady_clock::now();
  r = run_task(sleeper, Task::Nop, input, tmp.path / "sleep", 0.3);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 5.0);
  CHECK(r.has_annotation(annotation::kTimedOut));
  CHECK_FALSE(r.exe_ok);

  ToolAdapter missing{"ghost", false, "/nonexistent/tool {input} {output}", std::nullopt, std::nullopt};
  CHECK_THROWS_AS(run_task(missing, Task::Nop, input, tmp.path / "ghost", 5), SpawnError);
}

TEST_CASE("null function test is differential") {
  campaign::TempDir tmp("null");
  const auto original = fixtures::dir() / "hello_gcc_pie";
  const auto copy = tmp.path / "copy";
  fs::copy_file(original, copy);
  CHECK(null_function_test(original, copy, {"--help"}, 10).value == Check::Yes);
  CHECK(null_function_test(original, copy, {}, 10).value == Check::Yes);  // both exit 3

  CHECK(null_function_test(original, fixtures::dir() / "exit7", {"--help"}, 10).value == Check::No);

  const auto plain = tmp.path / "plain";
  fs::copy_file(original, plain);
  fs::permissions(plain, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                  fs::perm_options::remove);
  CHECK(null_function_test(original, plain, {"--help"}, 10).value == Check::No);
}

TEST_CASE("afl function test runs the driver") {
  const auto target = fixtures::dir() / "hello_gcc_pie";
  CHECK(afl_function_test(target, campaign::stub_cmd("driver_ok.sh", "{target}"), 10).value == Check::Yes);
  CHECK(afl_function_test(target, campaign::stub_cmd("driver_fail.sh", "{target}"), 10).value == Check::No);
}

TEST_CASE("campaign results do not depend on parallelism") {
  const auto manifest = parse_manifest(campaign::two_binary_manifest().dump());
  const auto adapters = parse_adapters(campaign::two_adapters().dump());
  const std::vector<Task> tasks{Task::Nop, Task::Afl};

  campaign::TempDir tmp("campaign");
  std::vector<std::vector<RunRecord>> runs;
  for (std::size_t par : {1u, 4u}) {
    std::size_t seen = 0;
    CampaignOptions opts{.parallelism = par,
                         .timeout_seconds = 30,
                         .afl_driver = campaign::stub_cmd("driver_ok.sh", "{target}"),
                         .workroot = tmp.path / ("p" + std::to_string(par)),
                         .on_record = [&](const RunRecord&) { ++seen; }};
    runs.push_back(run_campaign(manifest, adapters, tasks, opts));
    CHECK(seen == 8);
  }
  REQUIRE(runs[0].size() == 8);
  CHECK(untimed(runs[0]) == untimed(runs[1]));
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(runs[0][i].binary_id == runs[1][i].binary_id);
    CHECK(runs[0][i].tool_name == runs[1][i].tool_name);
    CHECK(runs[0][i].task == runs[1][i].task);
  }
  for (const auto& r : runs[1]) {
    CAPTURE(r.binary_id);
    CAPTURE(r.tool_name);
    check_monotone(r);
    if (r.tool_name == "copier") {
      CHECK(r.exe_ok);
      CHECK(r.func_ok == Check::Yes);
    } else {
      CHECK_FALSE(r.exe_ok);
      CHECK(r.func_ok == Check::NotApplicable);
    }
  }
  CHECK(runs[0][0].binary_id == "gcc-pie");
  CHECK(runs[0][0].tool_name == "copier");
  CHECK(runs[0][0].task == Task::Nop);
  CHECK(runs[0][1].task == Task::Afl);
}

TEST_CASE("AFL functional test is not run without a driver") {
  const auto manifest = parse_manifest(campaign::two_binary_manifest().dump());
  campaign::TempDir tmp("nodriver");
  const auto records = run_campaign(manifest, {copier()}, {Task::Afl}, {.workroot = tmp.path});
  REQUIRE(records.size() == 2);
  for (const auto& r : records) {
    CHECK(r.exe_ok);
    CHECK(r.func_ok == Check::NotApplicable);
  }
}

TEST_CASE("a missing input only affects its own records") {
  auto j = campaign::two_binary_manifest();
  j.push_back(campaign::entry("ghost", "/nonexistent/binary", "gcc", "pie", "present"));
  const auto manifest = parse_manifest(j.dump());
  campaign::TempDir tmp("missing");
  const auto records = run_campaign(manifest, {copier()}, {Task::Nop}, {.parallelism = 3, .workroot = tmp.path});
  REQUIRE(records.size() == 3);
  CHECK(records[0].exe_ok);
  CHECK(records[1].exe_ok);
  CHECK(records[2].binary_id == "ghost");
  CHECK_FALSE(records[2].exe_ok);
  CHECK(records[2].has_annotation(annotation::kIoError));
}

TEST_CASE("results csv round trip") {
  RunRecord a;
  a.binary_id = "b,1";
  a.variant = {"prog", Compiler::Clang, "O3", Relocation::PositionDependent, Symbols::Stripped, "ubuntu"};
  a.tool_name = "t";
  a.task = Task::Afl;
  a.ir_ok = Check::Yes;
  a.exe_ok = true;
  a.func_ok = Check::No;
  a.runtime_seconds = 1.25;
  a.memory_kbytes = 2048;
  a.output_size_bytes = 777;
  RunRecord b = a;
  b.binary_id = "b2";
  b.exe_ok = false;
  b.func_ok = Check::NotApplicable;
  b.output_size_bytes.reset();

  std::stringstream ss;
  write_results_csv(ss, {a, b});
  CHECK(ss.str().rfind(std::string(kResultsHeader) + "\n", 0) == 0);
  const auto back = read_results_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].binary_id == "b,1");
  CHECK(back[0].variant == a.variant);
  CHECK(back[0].func_ok == Check::No);
  CHECK(back[0].runtime_seconds == doctest::Approx(1.25));
  CHECK(back[0].output_size_bytes == 777u);
  CHECK_FALSE(back[1].output_size_bytes.has_value());

  std::istringstream bad_header("binary_id,tool\n");
  CHECK_THROWS_AS(read_results_csv(bad_header), SchemaError);
  std::istringstream broken(std::string(kResultsHeader) + "\nx,p,gcc,O2,pie,present,l,t,NOP,na,0,yes,1,1,\n");
  CHECK_THROWS_AS(read_results_csv(broken), SchemaError);  // func yes without exe
}

TEST_CASE("record validation") {
  RunRecord r;
  r.func_ok = Check::Yes;
  CHECK_THROWS_AS(r.validate(), std::logic_error);
  r.exe_ok = true;
  CHECK_NOTHROW(r.validate());
  r.ir_ok = Check::No;
  CHECK_THROWS_AS(r.validate(), std::logic_error);
}

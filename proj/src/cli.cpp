#include "rwscope/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "rwscope/csv.hpp"
#include "rwscope/dtree.hpp"
#include "rwscope/elf_model.hpp"
#include "rwscope/errors.hpp"
#include "rwscope/features.hpp"
#include "rwscope/harness.hpp"
#include "rwscope/report.hpp"
#include "rwscope/scope.hpp"

namespace fs = std::filesystem;

namespace rwscope::cli {
namespace {

// Raised for conditions the exit-code contract calls "bad input".
class BadInput : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::string format;
  std::string rounding = "truncate";
  std::uint64_t seed = 0;

  // scope / features / size
  std::string path;
  std::string path2;
  std::string models_dir;

  // run
  std::string manifest;
  std::string adapters;
  std::vector<std::string> tasks{"NOP", "AFL"};
  std::size_t parallelism = 1;
  double timeout_s = 600.0;
  std::string afl_driver;
  std::string workdir = "rwscope-work";
  std::string out_path;

  // train
  std::string results;
  std::string tool;
  std::string task = "AFL";
  std::size_t k = 8;
  std::size_t max_depth = 8;
  std::size_t min_leaf = 1;
  std::size_t min_support = 2;
  double max_support = 1.0;
  std::size_t epochs = 500;
  double step = 0.1;
  double reg = 0.01;
  double train_fraction = 0.7;

  // report
  std::string table = "success";
  std::string cohort = "full";
  std::string metric = "runtime_s";
  bool mean_of_ratios = false;
  bool ratio_of_means = false;
  std::string filter = "exe";
  std::vector<std::string> tools;
};

std::vector<harness::RunRecord> load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw BadInput("cannot open results " + path);
  try {
    return harness::read_results_csv(in);
  } catch (const SchemaError& e) {
    throw BadInput(path + ": " + e.what());
  }
}

// Configuration files missing or malformed are configuration errors.
template <typename F>
auto as_config(F&& load) {
  try {
    return load();
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
}

int cmd_scope(const Options& o, std::ostream& out) {
  const auto models = o.models_dir.empty() ? scope::builtin_models()
                                           : as_config([&] { return scope::load_models(o.models_dir); });
  const auto report = scope::scope_binary(o.path, models);
  out << (o.format == "json" ? scope::to_json(report) + "\n" : scope::to_text(report, o.models_dir.empty()));
  return kOk;
}

int cmd_features(const Options& o, std::ostream& out) {
  const auto fv = features::extract_features(elf::parse_elf_file(o.path));
  if (o.format == "text") {
    for (const auto& [k, v] : fv.values) out << k << '=' << (v ? "true" : "false") << '\n';
  } else {
    out << features::to_json(fv, 2) << '\n';
  }
  return kOk;
}

elf::SizeProfile profile_of(const std::string& path) {
  const auto bytes = elf::read_file(path);
  return elf::size_profile(elf::parse_elf(bytes), bytes.size());
}

int cmd_size(const Options& o, std::ostream& out) {
  const Rounding rounding = parse_rounding(o.rounding);
  const std::string format = o.format.empty() ? "text" : o.format;
  const auto before = profile_of(o.path);
  if (o.path2.empty()) {
    if (format == "json") {
      nlohmann::ordered_json j = nlohmann::ordered_json::object();
      for (const auto& [k, v] : before.buckets) j[k] = v;
      out << j.dump(2) << '\n';
    } else {
      const char sep = format == "csv" ? ',' : '\t';
      out << "bucket" << sep << "bytes\n";
      for (const auto& [k, v] : before.buckets) out << (format == "csv" ? csv::escape(k) : k) << sep << v << '\n';
    }
    return kOk;
  }
  const auto after = profile_of(o.path2);
  std::map<std::pair<std::string, std::string>, std::optional<double>> table;
  for (const auto& [bucket, delta] : elf::size_delta(before, after)) table[{bucket, "delta"}] = delta;
  out << report::render_section_table(table, format, rounding);
  return kOk;
}

std::vector<dtree::Task> parse_tasks(const std::vector<std::string>& names) {
  std::vector<dtree::Task> tasks;
  for (const auto& n : names) {
    try {
      tasks.push_back(dtree::parse_task(n));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  return tasks;
}

int cmd_run(const Options& o, std::ostream& out, std::ostream& err) {
  const auto manifest = as_config([&] { return harness::load_manifest(o.manifest); });
  const auto adapters = as_config([&] { return harness::load_adapters(o.adapters); });
  const auto tasks = parse_tasks(o.tasks);

  harness::CampaignOptions opts;
  opts.parallelism = o.parallelism;
  opts.timeout_seconds = o.timeout_s;
  opts.workroot = o.workdir;
  if (!o.afl_driver.empty()) opts.afl_driver = o.afl_driver;

  std::ofstream stream;
  std::optional<harness::ResultsStore> store;
  if (!o.out_path.empty()) {
    stream.open(o.out_path, std::ios::trunc);
    if (!stream) throw ConfigError("cannot write " + o.out_path);
    store.emplace(stream);
    opts.on_record = [&](const harness::RunRecord& r) { store->append(r); };
  }
  auto records = harness::run_campaign(manifest, adapters, tasks, opts);
  for (const auto& r : records) {
    for (const auto& a : r.annotations) err << r.binary_id << '/' << r.tool_name << '/' << dtree::to_string(r.task) << ": " << a << '\n';
  }

  if (store) {
    // Rows were streamed in completion order; settle on the canonical order.
    store.reset();
    stream.close();
    std::ofstream final_out(o.out_path, std::ios::trunc);
    harness::write_results_csv(final_out, records);
  } else {
    harness::write_results_csv(out, records);
  }
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  if (!(o.max_support >= 0.0 && o.max_support <= 1.0)) throw ConfigError("--max-support must lie in [0, 1]");
  if (!(o.train_fraction > 0.0 && o.train_fraction < 1.0)) throw ConfigError("--train-fraction must lie in (0, 1)");
  const dtree::Task task = parse_tasks({o.task}).front();
  const auto manifest = as_config([&] { return harness::load_manifest(o.manifest); });
  const auto records = load_results(o.results);

  std::map<std::string, Outcome> labels;
  for (const auto& r : records) {
    if (r.tool_name != o.tool || r.task != task) continue;
    labels[r.binary_id] = r.func_ok == harness::Check::Yes ? Outcome::Pass : Outcome::Fail;
  }
  if (labels.empty()) throw BadInput("no " + std::string(dtree::to_string(task)) + " results for tool '" + o.tool + "'");

  std::vector<features::LabeledVector> rows;
  for (const auto& e : manifest) {
    const auto it = labels.find(e.id);
    if (it == labels.end()) continue;
    try {
      rows.push_back({e.id, features::extract_features(elf::parse_elf_file(e.path)), it->second});
    } catch (const Error& ex) {
      err << "skipping " << e.id << ": " << ex.what() << '\n';
    }
  }

  const auto matrix = features::build_matrix(rows, {o.min_support, o.max_support});
  auto [train, test] = dtree::split_train_test(matrix, o.train_fraction, o.seed);
  const auto selected = dtree::select_features(
      train, {.k = o.k, .epochs = o.epochs, .step = o.step, .reg = o.reg, .seed = o.seed});
  train = train.project(selected);
  test = test.project(selected);

  auto model = dtree::train_cart(
      train, {.max_depth = o.max_depth, .min_leaf = o.min_leaf, .seed = o.seed, .tool_name = o.tool, .task = task});
  const auto acc = dtree::accuracy(model, test);
  model.reported_accuracy = acc.percent;

  std::ofstream model_out(o.out_path, std::ios::trunc);
  if (!model_out) throw ConfigError("cannot write " + o.out_path);
  model_out << dtree::serialize_tree(model) << '\n';

  out << "tool " << o.tool << " task " << dtree::to_string(task) << ": " << train.rows.size() << " train / "
      << test.rows.size() << " test rows\n";
  out << "selected features:";
  for (const auto& f : selected) out << ' ' << f;
  out << "\ntest accuracy: " << format_fixed2(acc.percent) << "%\n";
  return kOk;
}

int cmd_report(const Options& o, std::ostream& out, std::ostream& err) {
  const Rounding rounding = parse_rounding(o.rounding);
  const std::string format = o.format.empty() ? "text" : o.format;
  if (format != "csv" && format != "text" && format != "json") throw ConfigError("--format must be csv, text or json");
  const auto records = load_results(o.results);
  std::optional<std::vector<harness::ManifestEntry>> manifest;
  if (!o.manifest.empty()) manifest = as_config([&] { return harness::load_manifest(o.manifest); });

  if (o.table == "success") {
    const auto cohort = manifest ? report::cohort_from_manifest(o.cohort, *manifest)
                                 : report::cohort_from_records(o.cohort, records);
    try {
      out << report::render(report::success_table(records, cohort, o.tools), format, rounding);
    } catch (const UnknownTool& e) {
      throw ConfigError(e.what());
    }
    return kOk;
  }
  if (o.table == "comparative") {
    const report::SuccessFilter filter{parse_tasks({o.task}).front(), o.filter == "func"};
    const auto averaging = o.mean_of_ratios ? report::Averaging::MeanOfRatios : report::Averaging::RatioOfMeans;
    out << report::render(report::comparative_average(records, report::parse_metric(o.metric), filter, averaging),
                          format, rounding);
    return kOk;
  }
  if (!manifest) throw ConfigError("--table " + o.table + " needs --manifest for the original binaries");
  if (o.table == "size") {
    std::map<std::string, std::uint64_t> sizes;
    for (const auto& e : *manifest) {
      std::error_code ec;
      const auto size = fs::file_size(e.path, ec);
      if (!ec) sizes[e.id] = size;
    }
    out << report::render_tool_percentages(report::relative_size(records, sizes), "relative_size", format, rounding);
    return kOk;
  }
  // sections
  std::map<std::string, const harness::ManifestEntry*> by_id;
  for (const auto& e : *manifest) by_id[e.id] = &e;
  std::map<std::string, std::vector<report::ProfilePair>> pairs;
  for (const auto& r : records) {
    if (r.task != dtree::Task::Nop || !r.exe_ok) continue;
    pairs.try_emplace(r.tool_name);
    const auto it = by_id.find(r.binary_id);
    if (it == by_id.end()) continue;
    const fs::path rewritten = harness::run_directory(o.workdir, r.binary_id, r.tool_name, r.task) / harness::kOutputName;
    try {
      pairs[r.tool_name].push_back({profile_of(it->second->path.string()), profile_of(rewritten.string())});
    } catch (const Error& e) {
      err << r.binary_id << '/' << r.tool_name << ": no section profile (" << e.what() << ")\n";
    }
  }
  out << report::render_section_table(report::section_size_table(pairs), format, rounding);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Binary-rewriter scoping and evaluation toolkit", "rwscope"};
  app.require_subcommand(1);
  Options o;

  const auto add_format = [&](CLI::App* sub, std::vector<std::string> choices) {
    sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember(std::move(choices)));
  };
  const auto add_rounding = [&](CLI::App* sub) {
    sub->add_option("--rounding", o.rounding, "Percentage rounding")
        ->check(CLI::IsMember({"truncate", "half-up"}))
        ->capture_default_str();
  };

  auto* scope_cmd = app.add_subcommand("scope", "Predict which rewriters can transform a binary");
  scope_cmd->add_option("path", o.path, "ELF file")->required();
  scope_cmd->add_option("--models", o.models_dir, "Directory of tree JSON files replacing the built-in models");
  add_format(scope_cmd, {"text", "json"});

  auto* features_cmd = app.add_subcommand("features", "Print the boolean feature vector of a binary");
  features_cmd->add_option("path", o.path, "ELF file")->required();
  add_format(features_cmd, {"json", "text"});

  auto* size_cmd = app.add_subcommand("size", "Byte attribution of a binary, or per-bucket change between two");
  size_cmd->add_option("path", o.path, "ELF file")->required();
  size_cmd->add_option("path2", o.path2, "Rewritten ELF file");
  add_format(size_cmd, {"text", "csv", "json"});
  add_rounding(size_cmd);

  auto* run_cmd = app.add_subcommand("run", "Execute a rewriting campaign");
  run_cmd->add_option("--manifest", o.manifest, "Manifest JSON")->required();
  run_cmd->add_option("--adapters", o.adapters, "Adapter JSON")->required();
  run_cmd->add_option("--tasks", o.tasks, "Tasks to run")->delimiter(',')->capture_default_str();
  run_cmd->add_option("--parallelism", o.parallelism, "Concurrent runs")->check(CLI::Range(1, 1024))->capture_default_str();
  run_cmd->add_option("--timeout-s", o.timeout_s, "Per-run timeout in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run_cmd->add_option("--afl-driver", o.afl_driver, "AFL function-test command template using {target}");
  run_cmd->add_option("--workdir", o.workdir, "Root of per-run working directories")->capture_default_str();
  run_cmd->add_option("--out", o.out_path, "Results CSV (stdout when omitted)");
  run_cmd->add_option("--seed", o.seed, "Accepted for uniformity; campaigns use no randomness");

  auto* train_cmd = app.add_subcommand("train", "Train a success-prediction tree from campaign results");
  train_cmd->add_option("--results", o.results, "Results CSV")->required();
  train_cmd->add_option("--manifest", o.manifest, "Manifest JSON")->required();
  train_cmd->add_option("--tool", o.tool, "Tool whose outcomes are the labels")->required();
  train_cmd->add_option("--task", o.task, "Task whose functional test gives the label")
      ->check(CLI::IsMember({"NOP", "AFL"}))
      ->capture_default_str();
  train_cmd->add_option("--seed", o.seed, "Split seed")->capture_default_str();
  train_cmd->add_option("--k", o.k, "Features kept by hinge-loss selection")->check(CLI::Range(1, 1 << 20))->capture_default_str();
  train_cmd->add_option("--out", o.out_path, "Model JSON output")->required();
  train_cmd->add_option("--max-depth", o.max_depth, "Tree depth limit")->check(CLI::Range(1, 64))->capture_default_str();
  train_cmd->add_option("--min-leaf", o.min_leaf, "Minimum rows per leaf")->check(CLI::Range(1, 1 << 30))->capture_default_str();
  train_cmd->add_option("--min-support", o.min_support, "Drop features true in fewer rows")->capture_default_str();
  train_cmd->add_option("--max-support", o.max_support, "Drop features true in at least this fraction of rows")
      ->capture_default_str();
  train_cmd->add_option("--epochs", o.epochs, "Subgradient epochs")->capture_default_str();
  train_cmd->add_option("--step", o.step, "Initial step size")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--reg", o.reg, "L2 regularisation")->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--train-fraction", o.train_fraction, "Training share of rows")->capture_default_str();

  auto* report_cmd = app.add_subcommand("report", "Aggregate campaign results into tables");
  report_cmd->add_option("--results", o.results, "Results CSV")->required();
  report_cmd->add_option("--table", o.table, "Table kind")
      ->check(CLI::IsMember({"success", "comparative", "size", "sections"}))
      ->capture_default_str();
  report_cmd->add_option("--cohort", o.cohort, "Preset (full, pi_symbols, gcc, clang, icx, ollvm) or key=value,...")
      ->capture_default_str();
  report_cmd->add_option("--metric", o.metric, "Comparative metric")
      ->check(CLI::IsMember({"runtime_s", "mem_kb", "out_size_bytes"}))
      ->capture_default_str();
  auto* rom = report_cmd->add_flag("--ratio-of-means", o.ratio_of_means, "Comparative cells as ratio of means (default)");
  auto* mor = report_cmd->add_flag("--mean-of-ratios", o.mean_of_ratios, "Comparative cells as mean of per-binary ratios");
  rom->excludes(mor);
  report_cmd->add_option("--filter", o.filter, "Success filter for comparative tables")
      ->check(CLI::IsMember({"exe", "func"}))
      ->capture_default_str();
  report_cmd->add_option("--task", o.task, "Task for comparative tables")->check(CLI::IsMember({"NOP", "AFL"}));
  report_cmd->add_option("--tools", o.tools, "Row order for the success table")->delimiter(',');
  report_cmd->add_option("--manifest", o.manifest, "Manifest JSON (denominators, original sizes)");
  report_cmd->add_option("--workdir", o.workdir, "Campaign working root holding rewritten outputs")->capture_default_str();
  add_format(report_cmd, {"text", "csv", "json"});
  add_rounding(report_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kBadConfig;
  }

  // Report comparative tables default to NOP unless --task was given.
  if (report_cmd->parsed() && report_cmd->count("--task") == 0) o.task = "NOP";

  try {
    if (scope_cmd->parsed()) return cmd_scope(o, out);
    if (features_cmd->parsed()) return cmd_features(o, out);
    if (size_cmd->parsed()) return cmd_size(o, out);
    if (run_cmd->parsed()) return cmd_run(o, out, err);
    if (train_cmd->parsed()) return cmd_train(o, out, err);
    if (report_cmd->parsed()) return cmd_report(o, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const MalformedElf& e) {
    err << "MalformedElf: " << e.what() << '\n';
    return kBadInput;
  } catch (const Unsupported& e) {
    err << "Unsupported: " << e.what() << '\n';
    return kBadInput;
  } catch (const Error& e) {
    // IoError, EmptyMatrix, DegenerateSplit, SchemaError, BadInput
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace rwscope::cli

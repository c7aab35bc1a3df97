#include "rwscope/scope.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rwscope/elf_model.hpp"
#include "rwscope/errors.hpp"

namespace rwscope::scope {

using dtree::DecisionTreeModel;
using dtree::TreeNode;

namespace {

// Helpers mirroring the listings' "if f: A else: B" and "if not f: A else: B".
TreeNode when(const char* f, TreeNode if_true, TreeNode otherwise) {
  return TreeNode::split(f, std::move(otherwise), std::move(if_true));
}
TreeNode unless(const char* f, TreeNode if_false, TreeNode otherwise) {
  return TreeNode::split(f, std::move(if_false), std::move(otherwise));
}
TreeNode L(double fail, double pass) { return TreeNode::leaf(fail, pass); }

constexpr const char* abi = "note.abi_tag";
constexpr const char* build_id = "note.gnu.build_id";
constexpr const char* got_plt = "got.plt";
constexpr const char* rela_plt = "rela.plt";
constexpr const char* relro = "data.rel.ro";
constexpr const char* interp = "interp";
constexpr const char* pi = "pi";
constexpr const char* strip = "strip";
constexpr const char* symtab = "symtab";

DecisionTreeModel make(std::string tool, std::vector<std::string> params, double acc, TreeNode root) {
  return DecisionTreeModel{std::move(tool), dtree::Task::Afl, std::move(params), std::move(root), acc};
}

DecisionTreeModel ddisasm() {
  return make("ddisasm", {abi, interp, strip, rela_plt, pi}, 81.47,
      unless(abi,
          unless(interp,
              when(strip, when(interp, L(50, 112), L(37, 33)), L(12, 0)),
              when(rela_plt, when(interp, L(47, 910), L(92, 368)), L(10, 0))),
          unless(strip, L(53, 0),
              unless(interp,
                  when(interp, L(64, 11), L(22, 3)),
                  unless(pi, when(interp, L(215, 168), L(82, 38)), L(0, 15))))));
}

DecisionTreeModel e9patch() {
  return make("e9patch", {pi, build_id, got_plt, interp, strip, abi, rela_plt}, 86.06,
      unless(pi,
          when(build_id, L(723, 0),
              when(got_plt,
                  unless(build_id, when(interp, L(3, 0), L(39, 6)), L(13, 0)),
                  unless(build_id, when(interp, L(46, 0), L(160, 7)), L(58, 0)))),
          unless(interp,
              when(interp,
                  when(strip,
                      when(got_plt,
                          unless(build_id, L(2, 3), L(9, 1)),
                          unless(build_id, L(31, 32), L(22, 22))),
                      L(0, 15)),
                  when(abi,
                      when(got_plt, L(23, 1), unless(build_id, L(96, 21), L(6, 2))),
                      L(53, 0))),
              when(got_plt,
                  unless(rela_plt, L(12, 0), when(interp, L(17, 15), L(51, 48))),
                  when(abi,
                      unless(build_id, when(interp, L(0, 47), L(80, 501)), L(35, 132)),
                      L(10, 0))))));
}

DecisionTreeModel mctoll() {
  return make("mctoll", {abi, strip, pi, got_plt, relro, symtab, build_id}, 98.80,
      when(abi, L(1672, 0),
          when(strip,
              when(pi,
                  unless(got_plt,
                      when(relro,
                          unless(symtab, L(5, 6), L(3, 0)),
                          when(symtab, L(21, 4), L(3, 0))),
                      L(17, 0)),
                  when(symtab,
                      when(got_plt, L(21, 0), unless(build_id, L(98, 6), L(80, 3))),
                      L(69, 0))),
              L(334, 0))));
}

DecisionTreeModel retrowrite() {
  return make("retrowrite", {build_id, pi, got_plt, abi, rela_plt, relro, interp}, 93.02,
      when(build_id,
          unless(pi, L(531, 0),
              when(got_plt, L(169, 0),
                  when(abi,
                      unless(abi,
                          when(rela_plt, when(relro, L(36, 50), L(78, 64)), L(8, 0)),
                          unless(relro, L(64, 32), L(11, 0))),
                      when(interp, L(11, 0), unless(rela_plt, L(82, 36), L(4, 0)))))),
          L(1166, 0)));
}

DecisionTreeModel zipr() {
  return make("zipr", {got_plt, interp, pi, rela_plt, build_id, abi, strip}, 79.98,
      unless(got_plt,
          when(got_plt,
              when(interp,
                  unless(interp, L(19, 114), L(17, 113)),
                  unless(pi, L(30, 103), L(26, 108))),
              when(interp,
                  unless(pi, L(10, 26), L(7, 24)),
                  when(pi,
                      when(rela_plt, L(14, 0),
                          unless(build_id, unless(pi, L(29, 5), L(21, 10)), L(13, 0))),
                      L(0, 15)))),
          unless(pi,
              when(interp,
                  when(got_plt,
                      unless(abi,
                          unless(build_id, L(4, 10), L(11, 76)),
                          unless(build_id, L(0, 14), L(7, 29))),
                      L(0, 16)),
                  unless(abi,
                      unless(strip,
                          when(got_plt,
                              unless(build_id, L(41, 133), L(10, 45)),
                              unless(build_id, L(23, 43), L(41, 34))),
                          L(21, 0)),
                      when(got_plt,
                          unless(strip, unless(build_id, L(63, 55), L(31, 27)), L(4, 0)),
                          when(rela_plt, L(6, 0), unless(build_id, L(32, 9), L(30, 6)))))),
              unless(build_id,
                  when(abi, L(30, 0),
                      when(got_plt,
                          unless(abi,
                              when(interp, L(13, 1), L(134, 39)),
                              when(interp, L(8, 3), L(98, 21))),
                          when(interp, L(0, 9), unless(abi, L(40, 22), L(37, 7))))),
                  L(355, 0)))));
}

}  // namespace

std::vector<DecisionTreeModel> builtin_models() {
  return {ddisasm(), e9patch(), mctoll(), retrowrite(), zipr()};
}

const std::vector<std::string>& tools_without_model() {
  static const std::vector<std::string> tools{"egalito", "multiverse", "reopt", "revng", "uroboros"};
  return tools;
}

std::vector<DecisionTreeModel> load_models(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("model directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<DecisionTreeModel> models;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw IoError("cannot open " + f.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      models.push_back(dtree::parse_tree(ss.str()));
    } catch (const SchemaError& e) {
      throw SchemaError(f.string() + ":" + e.path(), e.what());
    }
  }
  return models;
}

ScopeReport scope_features(std::string binary_id, features::FeatureVector fv,
                           const std::vector<DecisionTreeModel>& models) {
  ScopeReport r{std::move(binary_id), std::move(fv), {}};
  for (const auto& m : models) r.predictions[m.tool_name] = dtree::predict(m, r.features);
  return r;
}

ScopeReport scope_binary(const std::filesystem::path& path, const std::vector<DecisionTreeModel>& models) {
  const auto summary = elf::parse_elf_file(path);
  return scope_features(path.string(), features::extract_features(summary), models);
}

std::string to_json(const ScopeReport& report, int indent) {
  nlohmann::ordered_json j;
  j["binary"] = report.binary_id;
  j["features"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.features.values) j["features"][k] = v;
  j["predictions"] = nlohmann::ordered_json::object();
  for (const auto& [tool, p] : report.predictions) {
    j["predictions"][tool] = {
        {"outcome", std::string(to_string(p.outcome))},
        {"confidence", p.confidence},
        {"fail", p.leaf_counts.fail},
        {"pass", p.leaf_counts.pass},
    };
  }
  return j.dump(indent);
}

std::string to_text(const ScopeReport& report, bool list_missing_models) {
  std::ostringstream out;
  out << "binary: " << report.binary_id << '\n';
  out << "pi=" << report.features.get(features::kPi) << " strip=" << report.features.get(features::kStrip)
      << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %-7s %10s %8s %8s\n", "tool", "outcome", "confidence", "fail", "pass");
  out << line;
  for (const auto& [tool, p] : report.predictions) {
    std::snprintf(line, sizeof line, "%-12s %-7s %10.4f %8.0f %8.0f\n", tool.c_str(),
                  std::string(to_string(p.outcome)).c_str(), p.confidence, p.leaf_counts.fail,
                  p.leaf_counts.pass);
    out << line;
  }
  if (list_missing_models) {
    for (const auto& tool : tools_without_model()) {
      if (report.predictions.contains(tool)) continue;
      std::snprintf(line, sizeof line, "%-12s %-7s\n", tool.c_str(), "no model");
      out << line;
    }
  }
  return out.str();
}

}  // namespace rwscope::scope

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "rwscope/dtree.hpp"
#include "rwscope/elf_model.hpp"
#include "rwscope/errors.hpp"
#include "rwscope/features.hpp"
#include "rwscope/scope.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace rwscope;

namespace {

std::map<std::string, bool> features_of(const std::filesystem::path& path) {
  return features::extract_features(elf::parse_elf_file(path)).values;
}

std::map<std::string, std::uint64_t> size_of(const std::filesystem::path& path) {
  const auto bytes = elf::read_file(path);
  return elf::size_profile(elf::parse_elf(bytes), bytes.size()).buckets;
}

py::dict prediction_dict(const dtree::Prediction& p) {
  return py::dict("outcome"_a = std::string(to_string(p.outcome)), "confidence"_a = p.confidence,
                  "fail"_a = p.leaf_counts.fail, "pass"_a = p.leaf_counts.pass);
}

py::dict scope_of(const std::filesystem::path& path, const std::optional<std::filesystem::path>& models) {
  const auto report = scope::scope_binary(path, models ? scope::load_models(*models) : scope::builtin_models());
  py::dict predictions;
  for (const auto& [tool, p] : report.predictions) predictions[py::str(tool)] = prediction_dict(p);
  return py::dict("binary"_a = report.binary_id, "features"_a = report.features.values,
                  "predictions"_a = predictions);
}

py::dict predict_with(const std::string& tree_json, const std::map<std::string, bool>& values) {
  features::FeatureVector fv;
  fv.values = values;
  return prediction_dict(dtree::predict(dtree::parse_tree(tree_json), fv));
}

std::vector<std::string> builtin_tools() {
  std::vector<std::string> out;
  for (const auto& m : scope::builtin_models()) out.push_back(m.tool_name);
  return out;
}

std::map<std::string, std::string> builtin_trees() {
  std::map<std::string, std::string> out;
  for (const auto& m : scope::builtin_models()) out[m.tool_name] = dtree::serialize_tree(m);
  return out;
}

}  // namespace

PYBIND11_MODULE(_rwscope, m) {
  m.doc() = "ELF feature extraction, size profiles and rewriter scope prediction";

  auto base = py::register_exception<Error>(m, "RwscopeError");
  py::register_exception<MalformedElf>(m, "MalformedElf", base);
  py::register_exception<Unsupported>(m, "Unsupported", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<SchemaError>(m, "SchemaError", base);

  m.def("features", &features_of, "path"_a, "Boolean feature vector of an ELF file.");
  m.def("size_profile", &size_of, "path"_a, "Bytes per section bucket; sums to the file size.");
  m.def("scope", &scope_of, "path"_a, "models"_a = py::none(),
        "Predict PASS/FAIL per rewriter with the builtin trees or a directory of tree JSON files.");
  m.def("predict", &predict_with, "tree_json"_a, "features"_a, "Evaluate one serialised tree.");
  m.def("canonicalize", &features::canonicalize, "section_name"_a);
  m.def("builtin_tools", &builtin_tools);
  m.def("builtin_trees", &builtin_trees, "Serialised builtin trees keyed by tool.");
  m.def("tools_without_model", &scope::tools_without_model);
}

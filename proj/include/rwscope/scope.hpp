#pragma once

// "Which rewriters can handle this binary?" using the published AFL-task trees.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rwscope/dtree.hpp"
#include "rwscope/features.hpp"

namespace rwscope::scope {

struct ScopeReport {
  std::string binary_id;
  features::FeatureVector features;
  std::map<std::string, dtree::Prediction> predictions;
};

// ddisasm, e9patch, mctoll, retrowrite and zipr AFL-instrumentation trees.
std::vector<dtree::DecisionTreeModel> builtin_models();

// Rewriters evaluated without a published tree; reported as "no model".
const std::vector<std::string>& tools_without_model();

// Every *.json file in `dir`, sorted by file name.
std::vector<dtree::DecisionTreeModel> load_models(const std::filesystem::path& dir);

ScopeReport scope_features(std::string binary_id, features::FeatureVector fv,
                           const std::vector<dtree::DecisionTreeModel>& models);

// parse_elf -> extract_features -> predict for each model.
ScopeReport scope_binary(const std::filesystem::path& path, const std::vector<dtree::DecisionTreeModel>& models);

std::string to_json(const ScopeReport& report, int indent = 2);
std::string to_text(const ScopeReport& report, bool list_missing_models = true);

}  // namespace rwscope::scope

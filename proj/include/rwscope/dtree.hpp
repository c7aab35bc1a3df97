#pragma once

// Boolean-feature decision trees: inference, CART training, hinge-loss
// feature ranking, train/test splitting and accuracy.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rwscope/features.hpp"

namespace rwscope::dtree {

enum class Task { Nop, Afl };

std::string_view to_string(Task t);
Task parse_task(std::string_view text);  // "NOP" / "AFL"

struct LeafCounts {
  double fail = 0.0;
  double pass = 0.0;

  double total() const { return fail + pass; }
  bool operator==(const LeafCounts&) const = default;
};

// A leaf carries counts; an internal node tests `feature` and has exactly two
// branches, {when_false, when_true}.
struct TreeNode {
  std::string feature;
  std::vector<TreeNode> branches;
  LeafCounts counts;

  static TreeNode leaf(double fail, double pass);
  static TreeNode split(std::string feature, TreeNode when_false, TreeNode when_true);

  bool is_leaf() const { return branches.empty(); }
  const TreeNode& when_false() const { return branches.at(0); }
  const TreeNode& when_true() const { return branches.at(1); }

  std::size_t depth() const;  // a lone leaf has depth 0
  std::size_t leaf_count() const;
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTreeModel {
  std::string tool_name;
  Task task = Task::Afl;
  std::vector<std::string> feature_order;
  TreeNode root;
  std::optional<double> reported_accuracy;

  bool operator==(const DecisionTreeModel&) const = default;
};

struct Prediction {
  Outcome outcome = Outcome::Fail;
  double confidence = 0.0;
  LeafCounts leaf_counts;
};

// Walks from the root; absent features read as false. Ties go to FAIL.
Prediction predict(const DecisionTreeModel& model, const features::FeatureVector& fv);
const TreeNode& route(const TreeNode& root, const features::FeatureVector& fv);

struct CartOptions {
  std::size_t max_depth = 8;
  std::size_t min_leaf = 1;
  std::uint64_t seed = 0;  // CART here is deterministic; kept for a uniform pipeline signature
  std::string tool_name;
  Task task = Task::Afl;
};

/// Greedy CART with Gini impurity over boolean splits.
///
/// At each node the feature with the lowest weighted child Gini wins, ties
/// going to the lexicographically smallest name. A node becomes a leaf when
/// it is pure, sits at max_depth, holds fewer than 2 * min_leaf rows, or has
/// no split leaving at least min_leaf rows on both sides.
DecisionTreeModel train_cart(const features::FeatureMatrix& matrix, const CartOptions& opts);

struct SelectOptions {
  std::size_t k = 8;
  std::size_t epochs = 500;
  double step = 0.1;  // step at epoch t is step / sqrt(t)
  double reg = 0.01;
  std::uint64_t seed = 0;
};

struct LinearModel {
  std::vector<double> weights;  // aligned with the matrix's feature_names
  double bias = 0.0;
};

// Full-batch subgradient descent on the L2-regularised hinge loss, labels in {-1,+1}.
LinearModel fit_linear_svc(const features::FeatureMatrix& matrix, const SelectOptions& opts);

// Top-k features by |weight|, descending, ties broken by name.
std::vector<std::string> select_features(const features::FeatureMatrix& matrix, const SelectOptions& opts);

// Seeded shuffle; the first ceil(n * train_fraction) rows train, the rest test.
std::pair<features::FeatureMatrix, features::FeatureMatrix> split_train_test(
    const features::FeatureMatrix& matrix, double train_fraction, std::uint64_t seed);

struct Accuracy {
  double ratio = 0.0;    // correct / rows
  double percent = 0.0;  // ratio * 100, rounded half-up to 2 decimals
};

Accuracy accuracy(const DecisionTreeModel& model, const features::FeatureMatrix& matrix);

std::string serialize_tree(const DecisionTreeModel& model, int indent = 2);
DecisionTreeModel parse_tree(std::string_view json_text);

// Feature names referenced by internal nodes, in pre-order of first use.
std::vector<std::string> referenced_features(const TreeNode& root);

}  // namespace rwscope::dtree

#include "rwscope/dtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rwscope/errors.hpp"
#include "rwscope/percent.hpp"

namespace rwscope::dtree {

using features::FeatureMatrix;
using features::FeatureVector;

std::string_view to_string(Task t) { return t == Task::Nop ? "NOP" : "AFL"; }

Task parse_task(std::string_view text) {
  if (text == "NOP") return Task::Nop;
  if (text == "AFL") return Task::Afl;
  throw std::invalid_argument("task must be NOP or AFL, got '" + std::string(text) + "'");
}

TreeNode TreeNode::leaf(double fail, double pass) {
  TreeNode n;
  n.counts = {fail, pass};
  return n;
}

TreeNode TreeNode::split(std::string feature, TreeNode when_false, TreeNode when_true) {
  TreeNode n;
  n.feature = std::move(feature);
  n.branches.reserve(2);
  n.branches.push_back(std::move(when_false));
  n.branches.push_back(std::move(when_true));
  return n;
}

std::size_t TreeNode::depth() const {
  if (is_leaf()) return 0;
  return 1 + std::max(when_false().depth(), when_true().depth());
}

std::size_t TreeNode::leaf_count() const {
  if (is_leaf()) return 1;
  return when_false().leaf_count() + when_true().leaf_count();
}

const TreeNode& route(const TreeNode& root, const FeatureVector& fv) {
  const TreeNode* node = &root;
  while (!node->is_leaf()) {
    node = fv.get(node->feature) ? &node->when_true() : &node->when_false();
  }
  return *node;
}

Prediction predict(const DecisionTreeModel& model, const FeatureVector& fv) {
  const TreeNode& leaf = route(model.root, fv);
  Prediction p;
  p.leaf_counts = leaf.counts;
  p.outcome = leaf.counts.pass > leaf.counts.fail ? Outcome::Pass : Outcome::Fail;
  const double total = leaf.counts.total();
  p.confidence = total > 0 ? std::max(leaf.counts.pass, leaf.counts.fail) / total : 0.0;
  return p;
}

std::vector<std::string> referenced_features(const TreeNode& root) {
  std::vector<std::string> out;
  std::vector<const TreeNode*> stack{&root};
  while (!stack.empty()) {
    const TreeNode* n = stack.back();
    stack.pop_back();
    if (n->is_leaf()) continue;
    if (std::find(out.begin(), out.end(), n->feature) == out.end()) out.push_back(n->feature);
    stack.push_back(&n->when_true());
    stack.push_back(&n->when_false());
  }
  return out;
}

// ---------------------------------------------------------------------------
// CART

namespace {

double gini(double fail, double pass) {
  const double n = fail + pass;
  if (n <= 0) return 0.0;
  const double pf = fail / n;
  const double pp = pass / n;
  return 1.0 - pf * pf - pp * pp;
}

class CartBuilder {
 public:
  CartBuilder(const FeatureMatrix& m, const CartOptions& opts) : m_(m), opts_(opts) {
    by_name_.resize(m.feature_names.size());
    std::iota(by_name_.begin(), by_name_.end(), std::size_t{0});
    std::sort(by_name_.begin(), by_name_.end(),
              [&](std::size_t a, std::size_t b) { return m.feature_names[a] < m.feature_names[b]; });
  }

  TreeNode build(const std::vector<std::size_t>& rows, std::size_t depth) const {
    double fail = 0, pass = 0;
    for (const auto r : rows) (m_.rows[r].label == Outcome::Pass ? pass : fail) += 1;
    const double parent = gini(fail, pass);
    if (parent == 0.0 || depth >= opts_.max_depth || rows.size() < 2 * opts_.min_leaf) {
      return TreeNode::leaf(fail, pass);
    }

    constexpr double kTol = 1e-12;
    std::optional<std::size_t> best;
    double best_score = std::numeric_limits<double>::infinity();
    for (const auto col : by_name_) {
      double tf = 0, tp = 0, ff = 0, fp = 0;
      for (const auto r : rows) {
        const bool pass_label = m_.rows[r].label == Outcome::Pass;
        if (m_.rows[r].values[col]) {
          (pass_label ? tp : tf) += 1;
        } else {
          (pass_label ? fp : ff) += 1;
        }
      }
      const double n_true = tf + tp;
      const double n_false = ff + fp;
      if (n_true < static_cast<double>(opts_.min_leaf) || n_false < static_cast<double>(opts_.min_leaf)) continue;
      const double score = (n_false * gini(ff, fp) + n_true * gini(tf, tp)) / static_cast<double>(rows.size());
      if (score < best_score - kTol) {
        best_score = score;
        best = col;
      }
    }
    if (!best || best_score > parent + kTol) return TreeNode::leaf(fail, pass);

    std::vector<std::size_t> on, off;
    for (const auto r : rows) (m_.rows[r].values[*best] ? on : off).push_back(r);
    return TreeNode::split(m_.feature_names[*best], build(off, depth + 1), build(on, depth + 1));
  }

 private:
  const FeatureMatrix& m_;
  const CartOptions& opts_;
  std::vector<std::size_t> by_name_;
};

void require_trainable(const FeatureMatrix& m) {
  if (m.rows.size() < 2) throw EmptyMatrix("training needs at least 2 rows");
  if (m.feature_names.empty()) throw EmptyMatrix("training needs at least 1 feature");
  for (const auto& r : m.rows) {
    if (r.values.size() != m.feature_names.size()) {
      throw std::invalid_argument("row '" + r.binary_id + "' has the wrong number of values");
    }
  }
}

}  // namespace

DecisionTreeModel train_cart(const FeatureMatrix& matrix, const CartOptions& opts) {
  require_trainable(matrix);
  if (opts.max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
  if (opts.min_leaf < 1) throw std::invalid_argument("min_leaf must be >= 1");

  std::vector<std::size_t> all(matrix.rows.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  DecisionTreeModel model;
  model.tool_name = opts.tool_name;
  model.task = opts.task;
  model.feature_order = matrix.feature_names;
  model.root = CartBuilder(matrix, opts).build(all, 0);
  return model;
}

// ---------------------------------------------------------------------------
// Hinge-loss feature ranking

LinearModel fit_linear_svc(const FeatureMatrix& matrix, const SelectOptions& opts) {
  if (matrix.rows.empty()) throw EmptyMatrix("feature selection needs at least one row");
  const std::size_t d = matrix.feature_names.size();
  const double n = static_cast<double>(matrix.rows.size());

  LinearModel lm;
  lm.weights.assign(d, 0.0);
  std::vector<double> grad(d);
  for (std::size_t t = 1; t <= opts.epochs; ++t) {
    for (std::size_t j = 0; j < d; ++j) grad[j] = opts.reg * lm.weights[j];
    double grad_b = 0.0;
    for (const auto& row : matrix.rows) {
      const double y = row.label == Outcome::Pass ? 1.0 : -1.0;
      double margin = lm.bias;
      for (std::size_t j = 0; j < d; ++j) {
        if (row.values[j]) margin += lm.weights[j];
      }
      if (y * margin < 1.0) {
        for (std::size_t j = 0; j < d; ++j) {
          if (row.values[j]) grad[j] -= y / n;
        }
        grad_b -= y / n;
      }
    }
    const double eta = opts.step / std::sqrt(static_cast<double>(t));
    for (std::size_t j = 0; j < d; ++j) lm.weights[j] -= eta * grad[j];
    lm.bias -= eta * grad_b;
  }
  return lm;
}

std::vector<std::string> select_features(const FeatureMatrix& matrix, const SelectOptions& opts) {
  if (opts.k < 1) throw std::invalid_argument("k must be >= 1");
  const LinearModel lm = fit_linear_svc(matrix, opts);
  std::vector<std::size_t> idx(matrix.feature_names.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double wa = std::abs(lm.weights[a]);
    const double wb = std::abs(lm.weights[b]);
    if (wa != wb) return wa > wb;
    return matrix.feature_names[a] < matrix.feature_names[b];
  });
  idx.resize(std::min(idx.size(), opts.k));
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (const auto i : idx) out.push_back(matrix.feature_names[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Split and scoring

std::pair<FeatureMatrix, FeatureMatrix> split_train_test(const FeatureMatrix& matrix,
                                                         double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");
  }
  const std::size_t n = matrix.rows.size();
  const auto n_train = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * train_fraction - 1e-9));
  if (n_train == 0 || n_train >= n) {
    throw DegenerateSplit("a " + std::to_string(n) + "-row matrix cannot be split into two non-empty parts");
  }

  // Fisher-Yates over mt19937_64 with rejection sampling: identical on every platform.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::uint64_t bound = i + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = rng();
    } while (x >= limit);
    std::swap(order[i], order[x % bound]);
  }

  std::pair<FeatureMatrix, FeatureMatrix> out;
  out.first.feature_names = matrix.feature_names;
  out.second.feature_names = matrix.feature_names;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? out.first : out.second).rows.push_back(matrix.rows[order[i]]);
  }
  return out;
}

Accuracy accuracy(const DecisionTreeModel& model, const FeatureMatrix& matrix) {
  if (matrix.rows.empty()) throw EmptyMatrix("accuracy of an empty matrix is undefined");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < matrix.rows.size(); ++i) {
    if (predict(model, matrix.row_vector(i)).outcome == matrix.rows[i].label) ++correct;
  }
  Accuracy a;
  a.ratio = static_cast<double>(correct) / static_cast<double>(matrix.rows.size());
  a.percent = round2(a.ratio * 100.0, Rounding::HalfUp);
  return a;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using ojson = nlohmann::ordered_json;
constexpr std::size_t kMaxDepth = 256;

ojson node_to_json(const TreeNode& n) {
  ojson j;
  if (n.is_leaf()) {
    j["fail"] = n.counts.fail;
    j["pass"] = n.counts.pass;
  } else {
    j["feature"] = n.feature;
    j["false"] = node_to_json(n.when_false());
    j["true"] = node_to_json(n.when_true());
  }
  return j;
}

void require_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (!j.contains(k)) throw SchemaError(path, std::string("missing field \"") + k + "\"");
  }
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* want) { return k == want; })) {
      throw SchemaError(path, "unknown field \"" + k + "\"");
    }
  }
}

double read_count(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "count must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v) || v < 0) throw SchemaError(path, "count must be finite and non-negative");
  return v;
}

TreeNode node_from_json(const nlohmann::json& j, const std::string& path,
                        const std::set<std::string>& declared, std::size_t depth) {
  if (depth > kMaxDepth) throw SchemaError(path, "tree nesting too deep");
  if (!j.is_object()) throw SchemaError(path, "node must be an object");
  if (j.contains("feature")) {
    require_keys(j, path, {"feature", "false", "true"});
    if (!j["feature"].is_string()) throw SchemaError(path + ".feature", "must be a string");
    auto feature = j["feature"].get<std::string>();
    if (!declared.contains(feature)) {
      throw SchemaError(path + ".feature", "\"" + feature + "\" is not listed in \"features\"");
    }
    auto f = node_from_json(j["false"], path + ".false", declared, depth + 1);
    auto t = node_from_json(j["true"], path + ".true", declared, depth + 1);
    return TreeNode::split(std::move(feature), std::move(f), std::move(t));
  }
  if (j.contains("false") || j.contains("true")) throw SchemaError(path, "missing field \"feature\"");
  require_keys(j, path, {"fail", "pass"});
  const double fail = read_count(j["fail"], path + ".fail");
  const double pass = read_count(j["pass"], path + ".pass");
  if (fail + pass <= 0) throw SchemaError(path, "leaf holds no samples");
  return TreeNode::leaf(fail, pass);
}

}  // namespace

std::string serialize_tree(const DecisionTreeModel& model, int indent) {
  ojson j;
  j["tool"] = model.tool_name;
  j["task"] = std::string(to_string(model.task));
  j["features"] = model.feature_order;
  j["accuracy"] = model.reported_accuracy ? ojson(*model.reported_accuracy) : ojson(nullptr);
  j["root"] = node_to_json(model.root);
  return j.dump(indent);
}

DecisionTreeModel parse_tree(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("$", e.what());
  }
  if (!j.is_object()) throw SchemaError("$", "model must be an object");
  require_keys(j, "$", {"tool", "task", "features", "accuracy", "root"});

  DecisionTreeModel m;
  if (!j["tool"].is_string()) throw SchemaError("$.tool", "must be a string");
  m.tool_name = j["tool"].get<std::string>();
  if (!j["task"].is_string()) throw SchemaError("$.task", "must be a string");
  try {
    m.task = parse_task(j["task"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw SchemaError("$.task", e.what());
  }
  if (!j["features"].is_array()) throw SchemaError("$.features", "must be an array");
  for (std::size_t i = 0; i < j["features"].size(); ++i) {
    const auto& f = j["features"][i];
    if (!f.is_string()) throw SchemaError("$.features[" + std::to_string(i) + "]", "must be a string");
    m.feature_order.push_back(f.get<std::string>());
  }
  if (!j["accuracy"].is_null()) {
    if (!j["accuracy"].is_number()) throw SchemaError("$.accuracy", "must be a number or null");
    m.reported_accuracy = j["accuracy"].get<double>();
  }
  const std::set<std::string> declared(m.feature_order.begin(), m.feature_order.end());
  m.root = node_from_json(j["root"], "$.root", declared, 0);
  return m;
}

}  // namespace rwscope::dtree

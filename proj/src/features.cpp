#include "rwscope/features.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rwscope/csv.hpp"
#include "rwscope/errors.hpp"

namespace rwscope {

std::string_view to_string(Outcome o) { return o == Outcome::Pass ? "PASS" : "FAIL"; }

Outcome parse_outcome(std::string_view text) {
  if (text == "PASS") return Outcome::Pass;
  if (text == "FAIL") return Outcome::Fail;
  throw std::invalid_argument("label must be PASS or FAIL, got '" + std::string(text) + "'");
}

namespace features {

std::string canonicalize(std::string_view section_name) {
  const auto first = section_name.find_first_not_of('.');
  if (first == std::string_view::npos) return {};
  std::string out(section_name.substr(first));
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c == '-') c = '_';
  }
  return out;
}

FeatureVector extract_features(const elf::ElfSummary& summary) {
  FeatureVector fv;
  for (const auto& s : summary.sections) {
    if (s.name.empty()) continue;
    const std::string name = canonicalize(s.name);
    if (!name.empty()) fv.set(name, true);
  }
  fv.set(kPi, summary.elf_type == elf::ElfType::Dyn);
  fv.set(kStrip, !summary.has_section(".symtab"));
  return fv;
}

std::string to_json(const FeatureVector& fv, int indent) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : fv.values) j[k] = v;
  return j.dump(indent);
}

FeatureVector feature_vector_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  if (!j.is_object()) throw SchemaError("$", "feature vector must be a JSON object");
  FeatureVector fv;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_boolean()) throw SchemaError("$." + k, "feature values must be booleans");
    fv.set(k, v.get<bool>());
  }
  return fv;
}

std::size_t FeatureMatrix::column(std::string_view name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) throw std::out_of_range("no feature column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - feature_names.begin());
}

FeatureVector FeatureMatrix::row_vector(std::size_t row) const {
  FeatureVector fv;
  const auto& r = rows.at(row);
  for (std::size_t j = 0; j < feature_names.size(); ++j) fv.set(feature_names[j], r.values[j]);
  return fv;
}

FeatureMatrix FeatureMatrix::project(const std::vector<std::string>& names) const {
  std::vector<std::size_t> cols;
  cols.reserve(names.size());
  for (const auto& n : names) cols.push_back(column(n));
  FeatureMatrix out;
  out.feature_names = names;
  out.rows.reserve(rows.size());
  for (const auto& r : rows) {
    MatrixRow nr{r.binary_id, {}, r.label};
    nr.values.reserve(cols.size());
    for (const auto c : cols) nr.values.push_back(r.values[c]);
    out.rows.push_back(std::move(nr));
  }
  return out;
}

FeatureMatrix build_matrix(const std::vector<LabeledVector>& vectors, const MatrixOptions& opts) {
  if (vectors.size() < 2) throw EmptyMatrix("need at least 2 rows to build a feature matrix");
  if (!(opts.max_support_fraction >= 0.0 && opts.max_support_fraction <= 1.0)) {
    throw std::invalid_argument("max_support_fraction must lie in [0, 1]");
  }

  std::set<std::string> ids;
  std::map<std::string, std::size_t> support;
  for (const auto& v : vectors) {
    if (!ids.insert(v.binary_id).second) {
      throw std::invalid_argument("duplicate binary id '" + v.binary_id + "'");
    }
    for (const auto& [k, on] : v.features.values) {
      auto& count = support[k];
      if (on) ++count;
    }
  }
  support.try_emplace(kPi, 0);
  support.try_emplace(kStrip, 0);

  const double n = static_cast<double>(vectors.size());
  FeatureMatrix m;
  for (const auto& [name, count] : support) {  // std::map iterates sorted
    const bool always = name == kPi || name == kStrip;
    const bool too_common = static_cast<double>(count) >= opts.max_support_fraction * n;
    const bool too_rare = count < opts.min_support;
    if (always || (!too_common && !too_rare)) m.feature_names.push_back(name);
  }

  m.rows.reserve(vectors.size());
  for (const auto& v : vectors) {
    MatrixRow row{v.binary_id, {}, v.label};
    row.values.reserve(m.feature_names.size());
    for (const auto& name : m.feature_names) row.values.push_back(v.features.get(name));
    m.rows.push_back(std::move(row));
  }

  if (m.feature_names.size() == 2) {
    const auto constant = [&](std::size_t col) {
      return std::all_of(m.rows.begin(), m.rows.end(),
                         [&](const MatrixRow& r) { return r.values[col] == m.rows.front().values[col]; });
    };
    if (constant(0) && constant(1)) {
      throw EmptyMatrix("no section features survive filtering and pi/strip are constant");
    }
  }
  return m;
}

void write_matrix_csv(std::ostream& out, const FeatureMatrix& m) {
  std::vector<std::string> header{"binary_id"};
  header.insert(header.end(), m.feature_names.begin(), m.feature_names.end());
  header.emplace_back("label");
  csv::write_row(out, header);
  for (const auto& r : m.rows) {
    std::vector<std::string> fields{r.binary_id};
    for (const bool v : r.values) fields.emplace_back(v ? "1" : "0");
    fields.emplace_back(to_string(r.label));
    csv::write_row(out, fields);
  }
}

FeatureMatrix read_matrix_csv(std::istream& in) {
  const auto rows = csv::read_all(in);
  if (rows.empty()) throw SchemaError("line 1", "missing header row");
  const auto& header = rows.front();
  if (header.size() < 2 || header.front() != "binary_id" || header.back() != "label") {
    throw SchemaError("line 1", "header must be binary_id,<features...>,label");
  }
  FeatureMatrix m;
  m.feature_names.assign(header.begin() + 1, header.end() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    const std::string where = "line " + std::to_string(i + 1);
    if (f.size() != header.size()) throw SchemaError(where, "wrong number of fields");
    MatrixRow r{f.front(), {}, Outcome::Fail};
    for (std::size_t j = 1; j + 1 < f.size(); ++j) {
      if (f[j] != "0" && f[j] != "1") throw SchemaError(where, "feature values must be 0 or 1");
      r.values.push_back(f[j] == "1");
    }
    try {
      r.label = parse_outcome(f.back());
    } catch (const std::invalid_argument& e) {
      throw SchemaError(where, e.what());
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

}  // namespace features
}  // namespace rwscope

#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rwscope/elf_model.hpp"

namespace rwscope {

enum class Outcome { Fail, Pass };

std::string_view to_string(Outcome o);
Outcome parse_outcome(std::string_view text);  // "PASS" / "FAIL"

namespace features {

inline constexpr const char* kPi = "pi";
inline constexpr const char* kStrip = "strip";

// Canonical feature name -> present. Absent keys read as false.
struct FeatureVector {
  std::map<std::string, bool> values;

  bool get(const std::string& name) const {
    const auto it = values.find(name);
    return it != values.end() && it->second;
  }
  void set(std::string name, bool v) { values[std::move(name)] = v; }
  bool operator==(const FeatureVector&) const = default;
};

// ".note.ABI-tag" -> "note.abi_tag". Leading dots dropped, ASCII lowercased, '-' -> '_'.
std::string canonicalize(std::string_view section_name);

// pi: ELF type is DYN. strip: no ".symtab". One true flag per section name.
FeatureVector extract_features(const elf::ElfSummary& summary);

std::string to_json(const FeatureVector& fv, int indent = -1);
FeatureVector feature_vector_from_json(std::string_view text);

struct MatrixRow {
  std::string binary_id;
  std::vector<bool> values;
  Outcome label = Outcome::Fail;

  bool operator==(const MatrixRow&) const = default;
};

struct FeatureMatrix {
  std::vector<std::string> feature_names;
  std::vector<MatrixRow> rows;

  std::size_t column(std::string_view name) const;  // throws std::out_of_range
  FeatureVector row_vector(std::size_t row) const;
  // Same rows, only the named columns (in the given order).
  FeatureMatrix project(const std::vector<std::string>& names) const;
  bool operator==(const FeatureMatrix&) const = default;
};

struct LabeledVector {
  std::string binary_id;
  FeatureVector features;
  Outcome label = Outcome::Fail;
};

struct MatrixOptions {
  std::size_t min_support = 2;
  double max_support_fraction = 1.0;
};

/// Build a training matrix from labelled feature vectors.
///
/// Columns are the union of all keys, minus features true in at least
/// `max_support_fraction` of rows and features true in fewer than
/// `min_support` rows. "pi" and "strip" always survive. Columns are sorted.
/// Throws EmptyMatrix when fewer than two rows are given or when the only
/// remaining columns are a constant pi/strip pair; std::invalid_argument on
/// duplicate ids or an out-of-range fraction.
FeatureMatrix build_matrix(const std::vector<LabeledVector>& vectors, const MatrixOptions& opts = {});

void write_matrix_csv(std::ostream& out, const FeatureMatrix& m);
FeatureMatrix read_matrix_csv(std::istream& in);

}  // namespace features
}  // namespace rwscope

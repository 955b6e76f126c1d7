#pragma once

#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

namespace fedrr {

/// One "label idx:val ..." line. Indices are 1-based and strictly increasing.
struct SparseRow {
  double label = 0.0;
  std::vector<std::pair<int, double>> features;
};

struct LibsvmData {
  std::vector<SparseRow> rows;
  /// Largest feature index seen (0 for an empty file).
  int dim = 0;
};

/// Parses LibSVM text. '#' starts a comment; blank lines are skipped.
/// Throws ParseError (with line number) on malformed tokens or indices that
/// are not strictly increasing.
LibsvmData parse_libsvm(std::istream& in);
LibsvmData parse_libsvm(const std::filesystem::path& path);

/// Maps the label set onto {-1, +1}: {-1,+1} as is, {0,1} and {1,2} by
/// order. Throws InputError for any other label set.
std::vector<double> coerce_binary_labels(const std::vector<SparseRow>& rows);

}  // namespace fedrr

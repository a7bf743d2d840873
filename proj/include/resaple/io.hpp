#pragma once

#include "resaple/simkit.hpp"
#include "resaple/weights.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace resaple {

/// Weights file: {"n": n, "normalization": "row"|"raw", "edges": [[i, j, w], ...]}
/// listing the non-zero entries of W.
std::string weights_to_json(const WeightMatrix& w);
WeightMatrix weights_from_json(const std::string& text);
WeightMatrix load_weights(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Header row plus string cells. Quoted fields may contain commas.
class CsvTable {
 public:
  static CsvTable parse(const std::string& text, const std::string& source = "<csv>");
  static CsvTable load(const std::filesystem::path& path);

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return cells_.size(); }
  bool has_column(const std::string& name) const;
  std::size_t column_index(const std::string& name) const;
  /// Numeric column; a missing or unparsable cell is an error naming the
  /// data row (1-based, header excluded).
  std::vector<double> numeric(const std::string& name) const;
  std::vector<std::string> strings(const std::string& name) const;

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> cells_;
};

/// Edge list CSV with columns i, j and optional w (0-based unit indices).
/// `n` defaults to one more than the largest index.
AdjacencyGraph read_edge_csv(const std::filesystem::path& path, bool undirected,
                             std::optional<int> n = std::nullopt,
                             std::optional<std::vector<Point>> coords = std::nullopt);

/// Coordinates from columns `x` and `y`.
std::vector<Point> read_coords_csv(const std::filesystem::path& path,
                                   const std::string& x_col = "x",
                                   const std::string& y_col = "y");

/// Simulation design from JSON. Relative file paths inside the document
/// resolve against `base_dir`.
SimDesign design_from_json(const std::string& text, const std::filesystem::path& base_dir = ".");

}  // namespace resaple

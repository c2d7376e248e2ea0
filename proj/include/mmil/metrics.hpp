#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmil/linalg.hpp"

namespace mmil {

// 0/1 occurrence matrix, rows = regions, columns = items.
struct BinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> data;  // row-major

  std::uint8_t at(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

struct MaskResult {
  BinaryMatrix masked;
  std::vector<std::size_t> skipped_columns;  // columns with no ones
};

// Per column, flips round(P% of its ones) from 1 to 0, chosen uniformly.
// P must be in (0, 100).
MaskResult mask_matrix(const BinaryMatrix& a, double percent,
                       std::uint64_t seed);

enum class MapVariant { kLiteral, kStandard };

// Rank-based precision for the masked entries of one region. Z is the set
// of items masked to 0; Q its truly-occurring subset. Ties in scores break
// by ascending item index. Throws if Q is empty.
//
// The literal variant averages, over t = 1..|Q|, the fraction of relevant
// items in the top t ranks; the standard variant is average precision.
double map_region(const Vec& scores, const std::vector<std::uint8_t>& truth_row,
                  const std::vector<std::uint8_t>& mask_row,
                  MapVariant variant = MapVariant::kLiteral);

struct RegionReport {
  std::size_t region = 0;
  std::size_t z_size = 0;
  std::size_t q_size = 0;
  double map = 0.0;
  bool included = false;
};

double mean_map(const std::vector<double>& per_region_values);

// Whole-matrix evaluation; regions with empty Q are excluded and reported.
std::vector<RegionReport> map_matrix(const std::vector<Vec>& scores,
                                     const BinaryMatrix& truth,
                                     const BinaryMatrix& masked,
                                     MapVariant variant = MapVariant::kLiteral);

BinaryMatrix load_binary_csv(const std::string& path);
void save_binary_csv(const BinaryMatrix& m, const std::string& path);
void save_region_report_csv(const std::vector<RegionReport>& report,
                            const std::string& path);

}  // namespace mmil

#include "mmil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mmil/rng.hpp"

namespace mmil {

MaskResult mask_matrix(const BinaryMatrix& a, double percent,
                       std::uint64_t seed) {
  if (percent <= 0.0 || percent >= 100.0)
    throw std::invalid_argument("mask_matrix: percent must be in (0, 100)");
  MaskResult result;
  result.masked = a;
  Rng rng(Rng::derive(seed, 0x6d61));
  for (std::size_t c = 0; c < a.cols; ++c) {
    std::vector<std::size_t> ones;
    for (std::size_t r = 0; r < a.rows; ++r)
      if (a.at(r, c)) ones.push_back(r);
    if (ones.empty()) {
      result.skipped_columns.push_back(c);
      continue;
    }
    const auto flips = static_cast<std::size_t>(
        std::llround(percent / 100.0 * static_cast<double>(ones.size())));
    rng.shuffle(ones);
    for (std::size_t i = 0; i < flips && i < ones.size(); ++i)
      result.masked.at(ones[i], c) = 0;
  }
  return result;
}

double map_region(const Vec& scores, const std::vector<std::uint8_t>& truth_row,
                  const std::vector<std::uint8_t>& mask_row,
                  MapVariant variant) {
  if (scores.size() != truth_row.size() || scores.size() != mask_row.size())
    throw std::invalid_argument("map_region: row width mismatch");

  // Z: items masked to zero; ranked by descending score, ties by index.
  std::vector<std::size_t> z;
  for (std::size_t j = 0; j < mask_row.size(); ++j)
    if (mask_row[j] == 0) z.push_back(j);
  if (z.empty()) throw std::invalid_argument("map_region: Z is empty");
  std::stable_sort(z.begin(), z.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::size_t q_size = 0;
  for (std::size_t j : z)
    if (truth_row[j]) ++q_size;
  if (q_size == 0)
    throw std::invalid_argument("map_region: Q is empty, mAP undefined");

  double acc = 0.0;
  if (variant == MapVariant::kLiteral) {
    // Mean over t = 1..|Q| of the top-t relevant fraction.
    std::size_t hits = 0;
    for (std::size_t t = 1; t <= q_size; ++t) {
      if (truth_row[z[t - 1]]) ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(t);
    }
  } else {
    // Average precision: precision at each relevant rank.
    std::size_t hits = 0;
    for (std::size_t r = 0; r < z.size(); ++r) {
      if (truth_row[z[r]]) {
        ++hits;
        acc += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
  }
  return acc / static_cast<double>(q_size);
}

double mean_map(const std::vector<double>& per_region_values) {
  if (per_region_values.empty())
    throw std::invalid_argument("mean_map: no regions included");
  double acc = 0.0;
  for (double v : per_region_values) acc += v;
  return acc / static_cast<double>(per_region_values.size());
}

std::vector<RegionReport> map_matrix(const std::vector<Vec>& scores,
                                     const BinaryMatrix& truth,
                                     const BinaryMatrix& masked,
                                     MapVariant variant) {
  if (scores.size() != truth.rows || truth.rows != masked.rows ||
      truth.cols != masked.cols)
    throw std::invalid_argument("map_matrix: shape mismatch");
  std::vector<RegionReport> report;
  for (std::size_t r = 0; r < truth.rows; ++r) {
    RegionReport rr;
    rr.region = r;
    std::vector<std::uint8_t> truth_row(truth.cols), mask_row(truth.cols);
    for (std::size_t c = 0; c < truth.cols; ++c) {
      truth_row[c] = truth.at(r, c);
      mask_row[c] = masked.at(r, c);
      if (mask_row[c] == 0) {
        ++rr.z_size;
        if (truth_row[c]) ++rr.q_size;
      }
    }
    if (rr.q_size > 0) {
      rr.map = map_region(scores[r], truth_row, mask_row, variant);
      rr.included = true;
    }
    report.push_back(rr);
  }
  return report;
}

BinaryMatrix load_binary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  BinaryMatrix m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::uint8_t> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      if (field == "0")
        row.push_back(0);
      else if (field == "1")
        row.push_back(1);
      else
        throw std::runtime_error(path + ": matrix entries must be 0 or 1");
    }
    if (m.cols == 0)
      m.cols = row.size();
    else if (row.size() != m.cols)
      throw std::runtime_error(path + ": ragged rows");
    m.data.insert(m.data.end(), row.begin(), row.end());
    ++m.rows;
  }
  if (m.rows == 0) throw std::runtime_error(path + ": empty matrix");
  return m;
}

void save_binary_csv(const BinaryMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out << ",";
      out << static_cast<int>(m.at(r, c));
    }
    out << "\n";
  }
}

void save_region_report_csv(const std::vector<RegionReport>& report,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "region,z_size,q_size,map\n";
  out.precision(17);
  for (const auto& r : report) {
    out << r.region << "," << r.z_size << "," << r.q_size << ",";
    if (r.included)
      out << r.map;
    else
      out << "nan";
    out << "\n";
  }
}

}  // namespace mmil

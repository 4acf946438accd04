#pragma once

// Matrix Market coordinate format, real symmetric matrices.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bcg/errors.hpp"
#include "bcg/linalg.hpp"

namespace bcg {

namespace detail {

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace detail

/// Parses a coordinate real (or integer) matrix. Symmetric files store one
/// triangle, which is mirrored; general files must be exactly symmetric.
/// Duplicate entries are summed.
inline SparseMatrix parse_matrix_market(std::istream& in, const std::string& origin = "<stream>") {
  auto fail = [&](const std::string& msg) { throw ParseError(origin + ": " + msg); };
  std::string line;
  if (!std::getline(in, line)) fail("empty input");
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket") fail("missing %%MatrixMarket banner");
  object = detail::lowercase(object);
  format = detail::lowercase(format);
  field = detail::lowercase(field);
  symmetry = detail::lowercase(symmetry);
  if (object != "matrix") fail("unsupported object '" + object + "'");
  if (format != "coordinate") fail("only coordinate format is supported");
  if (field != "real" && field != "integer" && field != "double") fail("unsupported field '" + field + "'");
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general") fail("unsupported symmetry '" + symmetry + "'");

  do {
    if (!std::getline(in, line)) fail("missing size line");
  } while (line.empty() || line[0] == '%');
  long long rows = 0, cols = 0, entries = 0;
  {
    std::istringstream size(line);
    if (!(size >> rows >> cols >> entries)) fail("malformed size line");
  }
  if (rows <= 0 || cols <= 0 || entries < 0) fail("invalid dimensions");
  if (rows != cols) fail("matrix is not square");

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(symmetric ? 2 * entries : entries));
  long long read = 0;
  while (read < entries && std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream entry(line);
    long long i = 0, j = 0;
    double v = 0.0;
    if (!(entry >> i >> j >> v)) fail("malformed entry on data line " + std::to_string(read + 1));
    if (i < 1 || i > rows || j < 1 || j > cols) fail("index out of range on data line " + std::to_string(read + 1));
    triplets.emplace_back(static_cast<Index>(i - 1), static_cast<Index>(j - 1), v);
    if (symmetric && i != j) triplets.emplace_back(static_cast<Index>(j - 1), static_cast<Index>(i - 1), v);
    ++read;
  }
  if (read < entries) fail("expected " + std::to_string(entries) + " entries, found " + std::to_string(read));

  SparseMatrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  if (!symmetric) {
    SparseMatrix diff = m - SparseMatrix(m.transpose());
    diff.prune(0.0);
    if (diff.nonZeros() != 0) fail("general matrix is not symmetric");
  }
  return m;
}

inline SparseMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  return parse_matrix_market(in, path);
}

/// Writes the lower triangle of a symmetric matrix with round-trip precision.
inline void write_matrix_market(const std::string& path, const SparseMatrix& m) {
  if (m.rows() != m.cols()) throw InputError("write_matrix_market: matrix must be square");
  std::vector<Eigen::Triplet<double>> lower;
  for (Index i = 0; i < m.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(m, i); it; ++it)
      if (it.row() >= it.col()) lower.emplace_back(it.row(), it.col(), it.value());
  std::sort(lower.begin(), lower.end(), [](const auto& a, const auto& b) {
    return a.col() != b.col() ? a.col() < b.col() : a.row() < b.row();
  });
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(path + ": cannot open for writing");
  std::fprintf(f, "%%%%MatrixMarket matrix coordinate real symmetric\n");
  std::fprintf(f, "%lld %lld %zu\n", static_cast<long long>(m.rows()), static_cast<long long>(m.cols()), lower.size());
  for (const auto& t : lower)
    std::fprintf(f, "%lld %lld %.17g\n", static_cast<long long>(t.row() + 1), static_cast<long long>(t.col() + 1),
                 t.value());
  if (std::fclose(f) != 0) throw Error(path + ": write failed");
}

}  // namespace bcg

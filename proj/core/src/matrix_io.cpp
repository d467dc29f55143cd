#include "gsc/matrix_io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "gsc/errors.hpp"

namespace gsc {

namespace {

// The container is defined little-endian; this code targets little-endian
// hosts and writes raw u32/f64.
static_assert(sizeof(double) == 8, "container assumes 8-byte doubles");

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, std::size_t& offset) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw FormatError("truncated header", offset);
  offset += 4;
  return v;
}

}  // namespace

void write_matrix(const std::string& path, const Eigen::MatrixXd& m,
                  const std::array<char, 4>& magic) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path, 0);
  os.write(magic.data(), 4);
  write_u32(os, static_cast<std::uint32_t>(m.rows()));
  write_u32(os, static_cast<std::uint32_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!os) throw FormatError("write failed: " + path, 0);
}

Eigen::MatrixXd read_matrix(const std::string& path, const std::array<char, 4>& expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path, 0);
  std::size_t offset = 0;
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || magic != expected_magic) throw FormatError("bad magic in " + path, offset);
  offset += 4;
  const std::uint32_t rows = read_u32(is, offset);
  const std::uint32_t cols = read_u32(is, offset);
  Eigen::MatrixXd m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!is) throw FormatError("truncated matrix data in " + path, offset);
  return m;
}

void save_dictionary(const std::string& path, const Dictionary& dict) {
  write_matrix(path, dict.matrix(), kMagicDictionary);
}

Dictionary load_dictionary(const std::string& path) {
  return Dictionary::from_matrix(read_matrix(path, kMagicDictionary));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path, 0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open: " + path, 0);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError("ragged CSV row in " + path, rows.size());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

void save_dictionary_csv(const std::string& path, const Dictionary& dict) {
  write_matrix_csv(path, dict.matrix());
}

Dictionary load_dictionary_csv(const std::string& path) {
  return Dictionary::from_matrix(read_matrix_csv(path));
}

}  // namespace gsc

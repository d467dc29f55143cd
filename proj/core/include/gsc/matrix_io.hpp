#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>

#include "gsc/dictionary.hpp"

namespace gsc {

// Flat binary matrix container: 4-byte magic, u32 rows, u32 cols
// (little-endian), then rows*cols little-endian f64 values, column-major.
// "GBPD" marks dictionaries, "GBPC" classifier weights, "GBPM" plain matrices.

inline constexpr std::array<char, 4> kMagicDictionary = {'G', 'B', 'P', 'D'};
inline constexpr std::array<char, 4> kMagicClassifier = {'G', 'B', 'P', 'C'};
inline constexpr std::array<char, 4> kMagicMatrix = {'G', 'B', 'P', 'M'};

void write_matrix(const std::string& path, const Eigen::MatrixXd& m,
                  const std::array<char, 4>& magic);
Eigen::MatrixXd read_matrix(const std::string& path, const std::array<char, 4>& expected_magic);

void save_dictionary(const std::string& path, const Dictionary& dict);
Dictionary load_dictionary(const std::string& path);

/// CSV alternative for interop: one row per line, comma separated, 17
/// significant digits (round-trips doubles exactly).
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::string& path);

void save_dictionary_csv(const std::string& path, const Dictionary& dict);
Dictionary load_dictionary_csv(const std::string& path);

/// Formats a double so that parsing it back yields the same bits.
std::string format_double(double v);

}  // namespace gsc
